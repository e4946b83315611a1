"""Attractor atlas: merged field letters, their filter bank and raster map."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import silhouette_score

from .field import FarFieldParams, NearFieldParams, SwitchingField, eval_field
from .rwfilter import FilterConfig, FilterState, Innovation, innovate, predict_rw, update
from .trajectory import Trajectory

SILHOUETTE_FLOOR = 0.25
KMEANS_RESTARTS = 20

ATLAS_LETTER_KEYS = ("id", "beta", "alpha", "x0", "sigma", "mu_log", "sigma_far",
                     "r_switch", "support")


@dataclass(frozen=True)
class AttractorLetter:
    m: int
    params: NearFieldParams
    far: FarFieldParams
    r_switch: float
    support: int = 1

    def __post_init__(self):
        if self.support < 1:
            raise ValueError("support must be >= 1")
        if not self.r_switch > 0:
            raise ValueError("r_switch must be > 0")

    @property
    def field(self) -> SwitchingField:
        return SwitchingField(self.params, self.far, self.r_switch)


@dataclass(frozen=True)
class Atlas:
    letters: tuple[AttractorLetter, ...]
    dim: int

    def __post_init__(self):
        letters = tuple(self.letters)
        ids = [l.m for l in letters]
        if len(set(ids)) != len(ids):
            raise ValueError("letter ids must be unique")
        for l in letters:
            if l.params.x0.shape != (self.dim,):
                raise ValueError(f"letter {l.m} has wrong dimension")
        object.__setattr__(self, "letters", letters)

    def __len__(self):
        return len(self.letters)


# -- clustering -------------------------------------------------------------

def _choose_k(X: np.ndarray, k_max: int, seed: int) -> tuple[int, np.ndarray, dict]:
    n = len(X)
    n_unique = len(np.unique(X, axis=0))
    scores = {}
    best = (1, np.zeros(n, dtype=int))
    best_score = -np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for k in range(2, min(k_max, n - 1, n_unique) + 1):
            km = KMeans(n_clusters=k, n_init=KMEANS_RESTARTS, random_state=seed).fit(X)
            if len(np.unique(km.labels_)) < 2:
                continue
            s = float(silhouette_score(X, km.labels_))
            scores[k] = s
            if s > best_score:
                best_score, best = s, (k, km.labels_)
    if best_score < SILHOUETTE_FLOOR:
        return 1, np.zeros(n, dtype=int), scores
    return best[0], best[1], scores


def merge_estimates(members) -> tuple[NearFieldParams, FarFieldParams, float]:
    """Unweighted mean of every parameter over the cluster members."""
    near = [m[0] for m in members]
    far = [m[1] for m in members]
    merged = NearFieldParams(
        float(np.mean([p.beta for p in near])),
        float(np.mean([p.alpha for p in near])),
        np.mean([p.x0 for p in near], axis=0),
        float(np.mean([p.sigma for p in near])),
    )
    merged_far = FarFieldParams(float(np.mean([f.mu_log for f in far])),
                                float(np.mean([f.sigma_far for f in far])))
    return merged, merged_far, float(np.mean([m[2] for m in members]))


def cluster_attractors(estimates: Sequence[tuple[NearFieldParams, FarFieldParams, float]],
                       k_max: int = 10, seed: int = 0) -> Atlas:
    """Group per-segment estimates by centre location and merge each group.

    ``k`` is swept over ``1..min(k_max, len(estimates))`` and the best mean
    silhouette wins; if no split reaches 0.25 everything is one letter.
    Letters are numbered in lexicographic order of their merged centres.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    dim = len(estimates[0][0].x0)
    X = np.array([e[0].x0 for e in estimates])
    _, labels, _ = _choose_k(X, k_max, seed)
    groups = []
    for lab in np.unique(labels):
        members = [estimates[i] for i in np.flatnonzero(labels == lab)]
        groups.append((merge_estimates(members), len(members)))
    groups.sort(key=lambda g: tuple(g[0][0].x0))
    letters = tuple(AttractorLetter(m, near, far, r_sw, support)
                    for m, ((near, far, r_sw), support) in enumerate(groups))
    return Atlas(letters, dim)


def silhouette_sweep(estimates, k_max: int = 10, seed: int = 0) -> tuple[int, dict]:
    """Selected ``k`` and the silhouette score of every tried ``k >= 2``."""
    X = np.array([e[0].x0 for e in estimates])
    k, _, scores = _choose_k(X, k_max, seed)
    return k, scores


# -- filter bank ------------------------------------------------------------

@dataclass(frozen=True)
class BankModel:
    """Random-walk filter with the letter's field as control input."""

    letter_ref: int
    field: SwitchingField
    cfg: FilterConfig

    def predict(self, state: FilterState) -> FilterState:
        g = eval_field(self.field, state.position)
        return predict_rw(state, self.cfg, control=g)

    def run(self, t: Trajectory) -> list[Innovation]:
        if t.dim != self.cfg.n:
            raise ValueError(f"trajectory dimension {t.dim} != model dimension {self.cfg.n}")
        state = FilterState.initial(t.positions[0], self.cfg)
        out = []
        for k, z in zip(t.k[1:], t.positions[1:]):
            pred = self.predict(state)
            inn = innovate(pred, z, self.cfg, int(k))
            state = update(pred, inn, self.cfg)
            out.append(inn)
        return out


def build_filter_bank(atlas: Atlas, cfg: FilterConfig | None = None) -> list[BankModel]:
    if not len(atlas):
        raise ValueError("atlas is empty")
    cfg = cfg or FilterConfig(n=atlas.dim)
    if cfg.n != atlas.dim:
        raise ValueError("filter dimension does not match atlas")
    return [BankModel(l.m, l.field, cfg) for l in atlas.letters]


def augmented_innovation(model: BankModel, t: Trajectory) -> list[Innovation]:
    return model.run(t)


def best_letter(bank: Sequence[BankModel], t: Trajectory) -> int:
    """Letter whose model gives the smallest mean innovation norm on ``t``."""
    scores = [np.mean([np.linalg.norm(i.y) for i in m.run(t)]) for m in bank]
    return bank[int(np.argmin(scores))].letter_ref


# -- raster -----------------------------------------------------------------

def rasterize_field_map(atlas: Atlas, bounds, resolution) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deceleration-term intensity ``sum_m alpha_m exp(-r_m^2 / sigma_m^2)``.

    Returns ``(grid, xs, ys)`` with ``grid[row, col]`` evaluated at
    ``(xs[col], ys[row])``; the nodes include the box corners.
    """
    b = np.asarray(bounds, dtype=float)
    if b.shape != (2, 2) or np.any(b[1] <= b[0]) or not np.all(np.isfinite(b)):
        raise ValueError("bounds must be [[xmin, ymin], [xmax, ymax]] with max > min")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    nx, ny = int(nx), int(ny)
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be >= 2 per axis")
    if len(atlas) and atlas.dim != 2:
        raise ValueError("raster maps are defined for 2-D atlases only")
    xs = np.linspace(b[0, 0], b[1, 0], nx)
    ys = np.linspace(b[0, 1], b[1, 1], ny)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.zeros((ny, nx))
    for l in atlas.letters:
        r2 = (gx - l.params.x0[0]) ** 2 + (gy - l.params.x0[1]) ** 2
        grid += l.params.alpha * np.exp(-r2 / l.params.sigma**2)
    return grid, xs, ys


def write_raster(grid, xs, ys, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["row", "col", "x", "y", "intensity"])
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            w.writerow([i, j, repr(float(x)), repr(float(y)), repr(float(grid[i, j]))])


def raster_sidecar(bounds, resolution) -> dict:
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    return {"bounds": np.asarray(bounds, dtype=float).tolist(),
            "resolution": [int(nx), int(ny)], "layout": "row-major, row=y index, col=x index"}


# -- JSON -------------------------------------------------------------------

def atlas_to_dict(atlas: Atlas) -> dict:
    return {
        "dim": atlas.dim,
        "letters": [
            {"id": l.m, "beta": l.params.beta, "alpha": l.params.alpha,
             "x0": l.params.x0.tolist(), "sigma": l.params.sigma,
             "mu_log": l.far.mu_log, "sigma_far": l.far.sigma_far,
             "r_switch": l.r_switch, "support": l.support}
            for l in atlas.letters
        ],
    }


def atlas_from_dict(d: dict) -> Atlas:
    letters = []
    for item in d["letters"]:
        missing = [k for k in ATLAS_LETTER_KEYS if k not in item]
        if missing:
            raise ValueError(f"atlas letter missing keys {missing}")
        letters.append(AttractorLetter(
            int(item["id"]),
            NearFieldParams(float(item["beta"]), float(item["alpha"]),
                            np.array(item["x0"], dtype=float), float(item["sigma"])),
            FarFieldParams(float(item["mu_log"]), float(item["sigma_far"])),
            float(item["r_switch"]), int(item["support"])))
    return Atlas(tuple(letters), int(d["dim"]))


def save_atlas(atlas: Atlas, stream: IO[str]) -> None:
    json.dump(atlas_to_dict(atlas), stream, indent=2)
    stream.write("\n")


def load_atlas(stream: IO[str]) -> Atlas:
    return atlas_from_dict(json.load(stream))
