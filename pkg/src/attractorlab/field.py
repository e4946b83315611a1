"""Switching attractive velocity field.

Inside ``r_switch`` an agent heading to a centre ``x0`` moves at
``beta - alpha * exp(-r**2 / sigma**2)``; outside it cruises at a speed
drawn from a log-normal law.  Both branches point at ``x0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class NearFieldParams:
    beta: float
    alpha: float
    x0: np.ndarray
    sigma: float

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if not (self.beta > 0 and self.alpha > 0 and self.sigma > 0):
            raise ValueError("beta, alpha and sigma must be > 0")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)

    @property
    def sigma2(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class FarFieldParams:
    mu_log: float
    sigma_far: float = 0.0

    def __post_init__(self):
        if self.sigma_far < 0:
            raise ValueError("sigma_far must be >= 0")

    @property
    def median_speed(self) -> float:
        return float(np.exp(self.mu_log))


@dataclass(frozen=True)
class SwitchingField:
    near: NearFieldParams
    far: FarFieldParams
    r_switch: float

    def __post_init__(self):
        if not self.r_switch > 0:
            raise ValueError("r_switch must be > 0")


def eval_near_speed(p: NearFieldParams, r):
    r = np.asarray(r, dtype=float)
    out = p.beta - p.alpha * np.exp(-(r**2) / p.sigma**2)
    return float(out) if out.ndim == 0 else out


def eval_field(f: SwitchingField, x) -> np.ndarray:
    """Velocity at ``x``: radial toward the centre, zero exactly on it."""
    x = np.asarray(x, dtype=float)
    d = f.near.x0 - x
    r = float(np.linalg.norm(d))
    if r == 0.0:
        return np.zeros_like(x)
    speed = eval_near_speed(f.near, r) if r <= f.r_switch else f.far.median_speed
    return speed * d / r


def fit_far_lognormal(speeds) -> FarFieldParams:
    """Maximum-likelihood log-normal fit (population SD of the log speeds)."""
    s = np.asarray(speeds, dtype=float).reshape(-1)
    if s.size < 2:
        raise InsufficientDataError("need at least 2 far-range speeds")
    logs = np.log(np.maximum(s, 1e-9))
    return FarFieldParams(float(logs.mean()), float(logs.std()))


def classify_phase(speeds, dk_switch: int = 3, rel_tol: float = 1e-3) -> int | None:
    """First index that starts ``dk_switch`` consecutive strict decreases.

    A step counts as a decrease when the next speed is below the current one
    by more than ``rel_tol`` of the current value.
    """
    s = np.asarray(speeds, dtype=float)
    if dk_switch < 1 or s.size < dk_switch + 1:
        return None
    dec = s[1:] < s[:-1] * (1.0 - rel_tol)
    run = 0
    for i, d in enumerate(dec):
        run = run + 1 if d else 0
        if run == dk_switch:
            return i - dk_switch + 1
    return None
