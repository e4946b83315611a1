"""Ground-truth scenarios, seeded agent simulation and the normalised error.

Agents enter from a random side of the bounding box and visit one to three
attractors in turn.  Far from the current goal they cruise at its ``beta``;
within ``3 * sigma`` the near-range law takes over, so each agent stops at
its goal.  Every step adds per-axis uniform noise of half-width
``|v| / snr``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .field import FarFieldParams, NearFieldParams, SwitchingField, eval_near_speed
from .trajectory import Trajectory

SIM_SWITCH_SIGMAS = 3.0
MAX_GOALS = 3


@dataclass(frozen=True)
class Scenario:
    attractors: tuple[SwitchingField, ...]
    bounds: np.ndarray
    seed: int = 0

    def __post_init__(self):
        b = np.array(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[0] != 2 or np.any(b[1] <= b[0]):
            raise ValueError("bounds must be [[mins...], [maxs...]] with max > min")
        atts = tuple(self.attractors)
        if not atts:
            raise ValueError("scenario needs at least one attractor")
        for a in atts:
            if a.near.x0.shape != (b.shape[1],):
                raise ValueError("attractor dimension does not match bounds")
            if np.any(a.near.x0 < b[0]) or np.any(a.near.x0 > b[1]):
                raise ValueError(f"attractor centre {a.near.x0} lies outside bounds")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "attractors", atts)

    @property
    def dim(self) -> int:
        return self.bounds.shape[1]


@dataclass(frozen=True)
class SimConfig:
    snr: float = 10.0
    n_trajectories: int = 150
    max_steps: int = 2000
    arrival_radius: float = 0.02

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError("snr must be > 0")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.arrival_radius > 0:
            raise ValueError("arrival_radius must be > 0")


class AgentRun(NamedTuple):
    trajectory: Trajectory
    goals: tuple[int, ...]
    truncated: bool


def ground_truth_attractor(x0, beta: float, sigma2: float) -> SwitchingField:
    sigma = float(np.sqrt(sigma2))
    near = NearFieldParams(beta, beta, np.asarray(x0, dtype=float), sigma)
    return SwitchingField(near, FarFieldParams(float(np.log(beta)), 0.0),
                          SIM_SWITCH_SIGMAS * sigma)


def scenario_from_dict(d: dict) -> Scenario:
    try:
        atts = [ground_truth_attractor(a["x0"], float(a["beta"]), float(a["sigma2"]))
                for a in d["attractors"]]
        return Scenario(tuple(atts), np.array(d["bounds"], dtype=float), int(d["seed"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scenario: {exc!r}") from exc


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "bounds": sc.bounds.tolist(),
        "seed": sc.seed,
        "attractors": [{"x0": a.near.x0.tolist(), "beta": a.near.beta,
                        "sigma2": a.near.sigma2} for a in sc.attractors],
    }


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def default_scenario() -> Scenario:
    """Three attractors in [-1, 1]^2 with the reference ground-truth values."""
    text = resources.files("attractorlab").joinpath("data/default_scenario.json").read_text()
    return scenario_from_dict(json.loads(text))


def _sim_speed(att: SwitchingField, r: float) -> float:
    if r > SIM_SWITCH_SIGMAS * att.near.sigma:
        return att.near.beta
    return eval_near_speed(att.near, r)


def _random_side_point(bounds: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = bounds.shape[1]
    axis = int(rng.integers(n))
    side = int(rng.integers(2))
    p = rng.uniform(bounds[0], bounds[1])
    p[axis] = bounds[side, axis]
    return p


def simulate_agent(scenario: Scenario, goals: Sequence[int], cfg: SimConfig,
                   rng_seed: int, traj_id: str = "agent") -> AgentRun:
    goals = tuple(int(g) for g in goals)
    if not goals:
        raise ValueError("goals must be non-empty")
    if any(g < 0 or g >= len(scenario.attractors) for g in goals):
        raise ValueError(f"goal index out of range: {goals}")
    rng = np.random.default_rng(rng_seed)
    z = _random_side_point(scenario.bounds, rng)
    path = [z]
    steps = 0
    gi = 0
    while gi < len(goals) and steps < cfg.max_steps:
        att = scenario.attractors[goals[gi]]
        d = att.near.x0 - z
        r = float(np.linalg.norm(d))
        if r <= cfg.arrival_radius:
            gi += 1
            continue
        v = _sim_speed(att, r) * d / r
        b = float(np.linalg.norm(v)) / cfg.snr
        z = z + v + rng.uniform(-b, b, size=z.shape)
        path.append(z)
        steps += 1
    if gi < len(goals) and np.linalg.norm(
            scenario.attractors[goals[gi]].near.x0 - z) <= cfg.arrival_radius:
        gi += 1
    truncated = gi < len(goals)
    if len(path) < 2:
        # Spawned inside the arrival radius: record one stationary step.
        path.append(z.copy())
    traj = Trajectory(traj_id, np.arange(len(path)), np.array(path))
    return AgentRun(traj, goals, truncated)


def random_goals(n_attractors: int, rng: np.random.Generator) -> tuple[int, ...]:
    """1..3 goals, no attractor repeated back to back."""
    length = int(rng.integers(1, MAX_GOALS + 1))
    goals = [int(rng.integers(n_attractors))]
    while len(goals) < length:
        if n_attractors == 1:
            break
        g = int(rng.integers(n_attractors - 1))
        goals.append(g if g < goals[-1] else g + 1)
    return tuple(goals)


def simulate_dataset(scenario: Scenario, cfg: SimConfig) -> list[AgentRun]:
    runs = []
    for i in range(cfg.n_trajectories):
        seed = scenario.seed + i
        goals = random_goals(len(scenario.attractors), np.random.default_rng([seed, 1]))
        runs.append(simulate_agent(scenario, goals, cfg, seed, traj_id=f"t{i:04d}"))
    return runs


def generate_dataset(scenario: Scenario, cfg: SimConfig) -> list[Trajectory]:
    return [run.trajectory for run in simulate_dataset(scenario, cfg)]


def xi_vector(near: NearFieldParams) -> np.ndarray:
    """Parameter vector ``[beta, alpha, x0..., sigma]`` used by the error metric."""
    return np.concatenate([[near.beta, near.alpha], near.x0, [near.sigma]])


def normalized_error(ground_truth, estimates_per_snr) -> np.ndarray:
    """Normalised error per noise level.

    ``ground_truth`` is a list of M parameter vectors; ``estimates_per_snr``
    is a T x M table of estimated vectors.  Returns T values in [0, 1].
    """
    gt = [np.asarray(x, dtype=float) for x in ground_truth]
    if not gt or not estimates_per_snr:
        raise ValueError("need at least one attractor and one noise level")
    lam = []
    for tau, row in enumerate(estimates_per_snr):
        if len(row) != len(gt) or any(cell is None for cell in row):
            raise ValueError(f"estimate table row {tau} is missing cells")
        rho = [np.abs(g - np.asarray(e, dtype=float)) for g, e in zip(gt, row)]
        lam.append(float(sum(np.sum(r) for r in rho)))
    lam = np.array(lam)
    gamma = lam.max()
    if gamma == 0:
        return np.zeros_like(lam)
    theta = lam / gamma
    phi = np.array([np.sum(t) for t in theta])
    return phi / phi.max()
