"""Random-walk Kalman filter used to expose control velocities.

State is ``[position; velocity]`` (length ``2n``).  The transition keeps the
position and forgets the velocity, so every departure of the agent from
where it was last seen shows up in the innovation; dividing that innovation
by the sample interval gives the control velocity ``u`` valid at the new
measurement.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .trajectory import ControlSample, Trajectory


class FilterError(ArithmeticError):
    """Numerical breakdown inside a filter step."""


@dataclass(frozen=True)
class FilterConfig:
    n: int = 2
    q_pos: float = 0.01
    q_vel: float = 0.01
    r_meas: float = 1e-4
    p0: float = 1.0
    dk: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        for name in ("q_pos", "q_vel", "r_meas", "p0", "dk"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @cached_property
    def F(self) -> np.ndarray:
        n = self.n
        F = np.zeros((2 * n, 2 * n))
        F[:n, :n] = np.eye(n)
        return F

    @cached_property
    def H(self) -> np.ndarray:
        return np.hstack([np.eye(self.n), np.zeros((self.n, self.n))])

    @cached_property
    def B(self) -> np.ndarray:
        return np.vstack([self.dk * np.eye(self.n), np.eye(self.n)])

    @cached_property
    def Q(self) -> np.ndarray:
        return np.diag([self.q_pos] * self.n + [self.q_vel] * self.n)

    @cached_property
    def R(self) -> np.ndarray:
        return self.r_meas * np.eye(self.n)


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def initial(cls, z, cfg: FilterConfig) -> "FilterState":
        z = np.asarray(z, dtype=float)
        if z.shape != (cfg.n,):
            raise ValueError(f"expected a point of dimension {cfg.n}, got shape {z.shape}")
        return cls(np.concatenate([z, np.zeros(cfg.n)]), cfg.p0 * np.eye(2 * cfg.n))

    @property
    def position(self) -> np.ndarray:
        return self.mean[: len(self.mean) // 2]


@dataclass(frozen=True)
class Innovation:
    y: np.ndarray
    s_cov: np.ndarray
    k: int = 0


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict_rw(state: FilterState, cfg: FilterConfig, control=None) -> FilterState:
    """Propagate ``state`` one step.

    Without ``control`` this is the plain random walk (position persists,
    velocity resets to zero).  A control velocity ``g`` adds ``B @ g``.
    """
    F = cfg.F
    mean = F @ state.mean
    if control is not None:
        mean = mean + cfg.B @ np.asarray(control, dtype=float)
    cov = _symmetrize(F @ state.cov @ F.T + cfg.Q)
    return FilterState(mean, cov)


def innovate(state_pred: FilterState, z, cfg: FilterConfig, k: int = 0) -> Innovation:
    z = np.asarray(z, dtype=float)
    if z.shape != (cfg.n,):
        raise ValueError(f"measurement has shape {z.shape}, filter expects ({cfg.n},)")
    H = cfg.H
    y = z - H @ state_pred.mean
    S = _symmetrize(H @ state_pred.cov @ H.T + cfg.R)
    return Innovation(y, S, k)


def update(state_pred: FilterState, inn: Innovation, cfg: FilterConfig) -> FilterState:
    H = cfg.H
    PHt = state_pred.cov @ H.T
    try:
        K = np.linalg.solve(inn.s_cov, PHt.T).T
    except np.linalg.LinAlgError as exc:
        raise FilterError(f"singular innovation covariance at k={inn.k}: {exc}") from exc
    if not np.all(np.isfinite(K)):
        raise FilterError(f"non-finite Kalman gain at k={inn.k}")
    mean = state_pred.mean + K @ inn.y
    cov = _symmetrize((np.eye(len(mean)) - K @ H) @ state_pred.cov)
    return FilterState(mean, cov)


def extract_control(inn: Innovation, cfg: FilterConfig) -> np.ndarray:
    return inn.y / cfg.dk


def run_rw_pass(t: Trajectory, cfg: FilterConfig | None = None) -> list[ControlSample]:
    """Filter one trajectory and return one control sample per observation
    after the first."""
    if cfg is None:
        cfg = FilterConfig(n=t.dim)
    elif cfg.n != t.dim:
        raise ValueError(f"filter dimension {cfg.n} != trajectory dimension {t.dim}")
    if len(t) < 2:
        raise ValueError("trajectory needs at least 2 points")
    state = FilterState.initial(t.positions[0], cfg)
    out = []
    for k, z in zip(t.k[1:], t.positions[1:]):
        pred = predict_rw(state, cfg)
        inn = innovate(pred, z, cfg, int(k))
        state = update(pred, inn, cfg)
        out.append(ControlSample(z, extract_control(inn, cfg), int(k), pred.position.copy()))
    return out
