"""Von Mises helpers for orientation streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import i0e

KAPPA_MAX = 1e4


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class VonMisesEstimate:
    mu: float
    kappa: float

    def __post_init__(self):
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not -np.pi < self.mu <= np.pi:
            object.__setattr__(self, "mu", wrap_angle(self.mu))


def kappa_from_resultant(r_bar: float, kappa_max: float = KAPPA_MAX) -> float:
    """Approximate inverse of A(kappa) = I1(kappa)/I0(kappa).

    Piecewise rational form of Best & Fisher, capped at ``kappa_max``.
    """
    r = float(r_bar)
    if r <= 0:
        return 0.0
    if r < 0.53:
        k = 2 * r + r**3 + 5 * r**5 / 6
    elif r < 0.85:
        k = -0.4 + 1.39 * r + 0.43 / (1 - r)
    else:
        denom = r**3 - 4 * r**2 + 3 * r
        k = kappa_max if denom <= 0 else 1.0 / denom
    return float(min(k, kappa_max))


def estimate_from_sums(sum_cos: float, sum_sin: float, count: int,
                       kappa_max: float = KAPPA_MAX) -> VonMisesEstimate:
    """Estimate from running sums of cos/sin; used by the online segmenter."""
    r_len = np.hypot(sum_cos, sum_sin)
    r_bar = r_len / count
    # Antipodal or evenly spread angles cancel up to rounding noise.
    if r_bar < 1e-12:
        return VonMisesEstimate(0.0, 0.0)
    return VonMisesEstimate(wrap_angle(np.arctan2(sum_sin, sum_cos)),
                            kappa_from_resultant(min(r_bar, 1.0), kappa_max))


def estimate_von_mises(angles, kappa_max: float = KAPPA_MAX) -> VonMisesEstimate:
    a = np.asarray(angles, dtype=float)
    if a.size < 2:
        raise ValueError("need at least 2 angles")
    return estimate_from_sums(np.cos(a).sum(), np.sin(a).sum(), a.size, kappa_max)


def von_mises_pdf(theta, est: VonMisesEstimate):
    # exp(k cos d) / (2 pi I0(k)) written with the scaled Bessel function.
    d = np.asarray(theta, dtype=float) - est.mu
    return np.exp(est.kappa * (np.cos(d) - 1.0)) / (2 * np.pi * i0e(est.kappa))


def von_mises_interval_mass(est: VonMisesEstimate, half_width: float) -> float:
    """Probability of ``[mu - half_width, mu + half_width]`` by adaptive quadrature."""
    if not 0 < half_width <= np.pi:
        raise ValueError("half_width must lie in (0, pi]")
    if est.kappa == 0:
        return half_width / np.pi
    centred = VonMisesEstimate(0.0, est.kappa)
    val, _ = integrate.quad(von_mises_pdf, 0.0, half_width, args=(centred,),
                            epsabs=1e-10, epsrel=1e-10, limit=200)
    return float(min(2 * val, 1.0))


def mahalanobis_angle(theta: float, est: VonMisesEstimate) -> float:
    """Wrapped deviation from ``mu`` in units of 1/sqrt(kappa)."""
    if est.kappa == 0:
        return 0.0
    return abs(wrap_angle(theta - est.mu)) * np.sqrt(est.kappa)
