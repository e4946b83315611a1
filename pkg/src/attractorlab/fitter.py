"""Per-segment estimation of a near-range attractive field.

The switch sample of a segment fixes ``beta`` and ``alpha``; the centre
``x0`` and shape ``sigma`` are then fitted by gradient descent on the mean
squared speed residual, once per growing prefix of the near-range samples,
and the resulting estimates are fused with sample-count and error weights.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from numba import njit

from .field import (FarFieldParams, InsufficientDataError, NearFieldParams,
                    classify_phase, fit_far_lognormal)
from .trajectory import ControlSample

log = logging.getLogger(__name__)

_EPS_J = 1e-12


@dataclass(frozen=True)
class FitterConfig:
    learning_rate_x0: float = 0.05
    learning_rate_sigma: float = 0.05
    max_iters: int = 500
    grad_tol: float = 1e-8
    dk_switch: int = 3
    sigma_init: float | None = None
    r0_init: float | None = None
    min_samples: int = 10
    step_growth: float = 1.2

    def __post_init__(self):
        if not (self.learning_rate_x0 > 0 and self.learning_rate_sigma > 0):
            raise ValueError("learning rates must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.min_samples < 3:
            raise ValueError("min_samples must be >= 3")


@dataclass(frozen=True)
class FitIteration:
    q: int
    n_samples: int
    x0_hat: np.ndarray
    sigma_hat: float
    j_value: float
    iters: int = 0
    failed: bool = False


@dataclass(frozen=True)
class SegmentFit:
    """Everything learned from one segment."""

    near: NearFieldParams
    far: FarFieldParams
    r_switch: float
    switch_index: int
    iterations: tuple[FitIteration, ...] = field(repr=False)


def _as_arrays(near_samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(near_samples, tuple) and len(near_samples) == 2 \
            and isinstance(near_samples[0], np.ndarray):
        z, s = near_samples
        return np.atleast_2d(z), np.asarray(s, dtype=float)
    z = np.array([c.z for c in near_samples], dtype=float)
    s = np.array([np.linalg.norm(c.u) for c in near_samples], dtype=float)
    return z, s


def estimate_beta_alpha(speeds: Sequence[float], switch_index: int) -> tuple[float, float]:
    beta = float(speeds[switch_index])
    return beta, beta


def _residuals(sigma, x0, beta, alpha, z, s):
    d = z - x0
    r2 = np.einsum("ij,ij->i", d, d)
    e = np.exp(-r2 / sigma**2)
    res = s - (beta - alpha * e)
    return res, e, d, r2


def objective(params, beta: float, alpha: float, near_samples) -> float:
    """Mean squared gap between observed speeds and the near-range law."""
    sigma, x0 = params
    z, s = _as_arrays(near_samples)
    res, *_ = _residuals(float(sigma), np.asarray(x0, dtype=float), beta, alpha, z, s)
    return float(np.mean(res**2))


def gradient(params, beta: float, alpha: float, near_samples) -> tuple[float, np.ndarray]:
    """Analytic ``(dJ/dsigma, dJ/dx0)`` of :func:`objective`."""
    sigma, x0 = params
    sigma = float(sigma)
    z, s = _as_arrays(near_samples)
    res, e, d, r2 = _residuals(sigma, np.asarray(x0, dtype=float), beta, alpha, z, s)
    n = len(s)
    w = res * alpha * e
    d_sigma = 4.0 / (n * sigma**3) * np.sum(w * r2)
    d_x0 = 4.0 / (n * sigma**2) * (w @ d)
    return float(d_sigma), d_x0


@njit(cache=True)
def _descend(z, s, beta, alpha, log_sigma, x0, lr_s, lr_x, growth, max_iters, grad_tol):
    """Backtracking gradient descent in (log sigma, x0).

    The loss is divided by ``beta**2`` so step sizes do not depend on the
    speed units.  A rejected step (loss went up) halves both step sizes; an
    accepted one grows them by ``growth``.
    """
    n, dim = z.shape
    scale = 1.0 / (beta * beta)
    x = x0.copy()
    x_new = np.empty(dim)
    g_x = np.zeros(dim)
    g_x_new = np.zeros(dim)
    ls = log_sigma

    # Loss and scaled gradient at (ls, x).
    sig2 = np.exp(2.0 * ls)
    j = 0.0
    g_ls = 0.0
    g_x[:] = 0.0
    for i in range(n):
        r2 = 0.0
        for a in range(dim):
            d = z[i, a] - x[a]
            r2 += d * d
        e = np.exp(-r2 / sig2)
        res = s[i] - (beta - alpha * e)
        j += res * res
        w = res * alpha * e
        g_ls += w * r2
        for a in range(dim):
            g_x[a] += w * (z[i, a] - x[a])
    j /= n
    g_ls *= 4.0 / (n * sig2) * scale
    for a in range(dim):
        g_x[a] *= 4.0 / (n * sig2) * scale

    it = 0
    while it < max_iters:
        gn = (g_ls / np.exp(ls)) ** 2
        for a in range(dim):
            gn += g_x[a] * g_x[a]
        # Convergence is judged on the raw gradient in (sigma, x0).
        if np.sqrt(gn) * beta * beta < grad_tol:
            break
        it += 1
        ls_new = ls - lr_s * g_ls
        for a in range(dim):
            x_new[a] = x[a] - lr_x * g_x[a]
        sig2n = np.exp(2.0 * ls_new)
        j_new = 0.0
        g_ls_new = 0.0
        g_x_new[:] = 0.0
        for i in range(n):
            r2 = 0.0
            for a in range(dim):
                d = z[i, a] - x_new[a]
                r2 += d * d
            e = np.exp(-r2 / sig2n)
            res = s[i] - (beta - alpha * e)
            j_new += res * res
            w = res * alpha * e
            g_ls_new += w * r2
            for a in range(dim):
                g_x_new[a] += w * (z[i, a] - x_new[a])
        j_new /= n
        if not np.isfinite(j_new) or j_new > j:
            lr_s *= 0.5
            lr_x *= 0.5
            if lr_s < 1e-14:
                break
            continue
        ls = ls_new
        j = j_new
        g_ls = g_ls_new * 4.0 / (n * sig2n) * scale
        for a in range(dim):
            x[a] = x_new[a]
            g_x[a] = g_x_new[a] * 4.0 / (n * sig2n) * scale
        lr_s *= growth
        lr_x *= growth
    return ls, x, j, it


def fit_segment(near_samples, beta: float, alpha: float,
                cfg: FitterConfig | None = None) -> list[FitIteration]:
    """One gradient-descent estimate per prefix ``N = min_samples..len``.

    Each prefix starts from the previous prefix's solution.  The first one
    starts ahead of the last sample along the mean direction of motion.
    """
    cfg = cfg or FitterConfig()
    if isinstance(near_samples, tuple) and len(near_samples) == 3:
        z, s, u = (np.ascontiguousarray(a, dtype=float) for a in near_samples)
    else:
        z, s = _as_arrays(near_samples)
        u = np.array([c.u for c in near_samples], dtype=float)
    if len(s) < cfg.min_samples:
        raise InsufficientDataError(f"need at least {cfg.min_samples} near-range samples")

    m = cfg.min_samples
    heading = u[:m].mean(axis=0)
    hn = np.linalg.norm(heading)
    heading = heading / hn if hn > 0 else np.eye(z.shape[1])[0]
    covered = float(np.linalg.norm(z[m - 1] - z[0]))
    covered = max(covered, 1e-3)
    r0 = cfg.r0_init if cfg.r0_init is not None else 2.0 * covered
    sigma0 = cfg.sigma_init if cfg.sigma_init is not None else covered
    x0 = z[m - 1] + r0 * heading
    ls = float(np.log(sigma0))

    out = []
    for q, n in enumerate(range(m, len(s) + 1)):
        zn, sn = z[:n], s[:n]
        j_start = objective((np.exp(ls), x0), beta, alpha, (zn, sn))
        ls_new, x_new, j, iters = _descend(
            zn, sn, float(beta), float(alpha), ls, x0, cfg.learning_rate_sigma,
            cfg.learning_rate_x0, cfg.step_growth, cfg.max_iters, cfg.grad_tol)
        failed = (not np.isfinite(j)) or (j > 10 * max(j_start, _EPS_J))
        if not failed:
            ls, x0 = ls_new, x_new
        out.append(FitIteration(q, n, np.array(x_new, copy=True), float(np.exp(ls_new)),
                                float(j), iters, failed))
    return out


def fuse_estimates(iters: Sequence[FitIteration]) -> tuple[np.ndarray, float]:
    """Weighted mean of per-prefix estimates.

    Weights are ``n / max(n)`` times ``min(J) / J``, renormalised to sum to 1.
    """
    good = [it for it in iters if not it.failed]
    if not good:
        raise InsufficientDataError("no successful fit iterations to fuse")
    n = np.array([it.n_samples for it in good], dtype=float)
    j = np.array([max(it.j_value, _EPS_J) for it in good])
    w = (n / n.max()) * (j.min() / j)
    w = w / w.sum()
    x0 = np.einsum("q,qi->i", w, np.array([it.x0_hat for it in good]))
    sigma = float(w @ np.array([it.sigma_hat for it in good]))
    # Keep the convex-hull property exact under rounding.
    lo = np.min([it.x0_hat for it in good], axis=0)
    hi = np.max([it.x0_hat for it in good], axis=0)
    x0 = np.clip(x0, lo, hi)
    sigma = float(np.clip(sigma, min(it.sigma_hat for it in good),
                          max(it.sigma_hat for it in good)))
    return x0, sigma


def write_fit_trace(iters: Sequence[FitIteration], stream: IO[str]) -> None:
    """CSV ``q,n_samples,x0_1..x0_n,sigma,j`` with one row per prefix fit."""
    iters = list(iters)
    dim = len(iters[0].x0_hat) if iters else 0
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["q", "n_samples", *[f"x0_{i + 1}" for i in range(dim)], "sigma", "j"])
    for it in iters:
        w.writerow([it.q, it.n_samples, *[repr(float(v)) for v in it.x0_hat],
                    repr(it.sigma_hat), repr(it.j_value)])


def estimate_segment_field(samples: Sequence[ControlSample],
                           cfg: FitterConfig | None = None) -> SegmentFit | None:
    """Phase split, beta/alpha read-off, near-range fit and fusion for one segment.

    Returns ``None`` when the segment never shows a sustained deceleration
    or has too few near-range samples to fit.
    """
    cfg = cfg or FitterConfig()
    # Distances are measured from where each control acted, not where it
    # was observed.
    z = np.array([c.z_prior for c in samples], dtype=float)
    u = np.array([c.u for c in samples], dtype=float)
    speeds = np.linalg.norm(u, axis=1)
    i_sw = classify_phase(speeds, cfg.dk_switch)
    if i_sw is None or len(speeds) - i_sw < cfg.min_samples:
        return None
    beta, alpha = estimate_beta_alpha(speeds, i_sw)
    if not beta > 0:
        return None
    iters = fit_segment((z[i_sw:], speeds[i_sw:], u[i_sw:]), beta, alpha, cfg)
    try:
        x0, sigma = fuse_estimates(iters)
    except InsufficientDataError:
        return None
    if not (np.all(np.isfinite(x0)) and np.isfinite(sigma) and sigma > 0):
        return None
    far_speeds = speeds[:i_sw]
    if len(far_speeds) >= 2:
        far = fit_far_lognormal(far_speeds)
    else:
        far = FarFieldParams(float(np.log(beta)), 0.0)
    r_switch = float(np.linalg.norm(z[i_sw] - x0))
    if not r_switch > 0:
        r_switch = float(sigma)
    near = NearFieldParams(beta, alpha, x0, sigma)
    return SegmentFit(near, far, r_switch, int(i_sw), tuple(iters))
