"""Trajectories in, attractor atlas out."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence


from .atlas import Atlas, cluster_attractors
from .fitter import FitterConfig, SegmentFit, estimate_segment_field
from .rwfilter import FilterConfig, run_rw_pass
from .segmenter import Segment, Segmenter, SegmenterConfig
from .trajectory import Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearnConfig:
    filter: FilterConfig = field(default_factory=FilterConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    fitter: FitterConfig = field(default_factory=FitterConfig)
    k_max: int = 10
    seed: int = 0


@dataclass
class SegmentRecord:
    traj_id: str
    segment: Segment
    fit: SegmentFit | None


@dataclass
class LearnResult:
    atlas: Atlas
    records: list[SegmentRecord]

    @property
    def fits(self) -> list[SegmentFit]:
        return [r.fit for r in self.records if r.fit is not None]


def segment_trajectory(t: Trajectory, cfg: LearnConfig) -> list[Segment]:
    fcfg = cfg.filter if cfg.filter.n == t.dim else FilterConfig(
        t.dim, cfg.filter.q_pos, cfg.filter.q_vel, cfg.filter.r_meas,
        cfg.filter.p0, cfg.filter.dk)
    seg = Segmenter(cfg.segmenter)
    out = []
    for sample in run_rw_pass(t, fcfg):
        out.extend(seg.push(sample))
    out.extend(seg.finish())
    return out


def learn(trajectories: Sequence[Trajectory], cfg: LearnConfig | None = None) -> LearnResult:
    """Filter, segment and fit every trajectory, then cluster the fits.

    Trajectories are processed in the given order, so results are
    deterministic for a fixed input and seed.
    """
    cfg = cfg or LearnConfig()
    records = []
    dim = trajectories[0].dim if trajectories else cfg.filter.n
    for t in trajectories:
        if t.dim != dim:
            raise ValueError(f"trajectory {t.id!r} has dimension {t.dim}, expected {dim}")
        for s in segment_trajectory(t, cfg):
            records.append(SegmentRecord(t.id, s, estimate_segment_field(s.samples, cfg.fitter)))
    fits = [r.fit for r in records if r.fit is not None]
    log.info("%d trajectories, %d segments, %d fitted", len(trajectories), len(records), len(fits))
    if not fits:
        return LearnResult(Atlas((), dim), records)
    atlas = cluster_attractors([(f.near, f.far, f.r_switch) for f in fits], cfg.k_max, cfg.seed)
    return LearnResult(atlas, records)
