"""Online split of a control-sample stream into quasilinear segments.

A window of ``a`` orientations is fitted with a von Mises law.  When the
probability mass within ``+-theta_dev`` of the fitted mean exceeds
``cdf_threshold`` a segment opens; otherwise the window slides by one.
While a segment is open each new orientation is gated by its angular
Mahalanobis distance, and ``n_theta`` consecutive rejections close it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .circular import (VonMisesEstimate, estimate_from_sums, estimate_von_mises,
                       mahalanobis_angle, von_mises_interval_mass)
from .trajectory import ControlSample


@dataclass(frozen=True)
class SegmenterConfig:
    a: int = 5
    theta_dev: float = 0.26
    d_theta: float = 3.0
    n_theta: int = 4
    cdf_threshold: float = 0.9

    def __post_init__(self):
        if self.a < 3:
            raise ValueError("a must be >= 3")
        if not 0 < self.theta_dev < np.pi:
            raise ValueError("theta_dev must lie in (0, pi)")
        if not self.d_theta > 0:
            raise ValueError("d_theta must be > 0")
        if self.n_theta < 1:
            raise ValueError("n_theta must be >= 1")
        if not 0 < self.cdf_threshold < 1:
            raise ValueError("cdf_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class Segment:
    s: int
    i_start: int
    i_end: int
    samples: tuple[ControlSample, ...]
    direction: VonMisesEstimate

    def __len__(self):
        return len(self.samples)


@dataclass
class _Open:
    samples: list[ControlSample]
    sum_cos: float
    sum_sin: float
    est: VonMisesEstimate


@dataclass
class TraceRow:
    sample_k: int
    angle: float
    mu: float | None
    kappa: float | None
    d_m: float | None
    segment_id: int


class Segmenter:
    """Per-trajectory segmentation state machine.

    Feed samples in index order with :meth:`push`; each call returns the
    segments closed by that sample (usually none).  Call :meth:`finish` at
    the end of the stream to flush an open segment.
    """

    def __init__(self, cfg: SegmenterConfig | None = None, trace: bool = False):
        self.cfg = cfg or SegmenterConfig()
        self._buffer: list[ControlSample] = []
        self._open: _Open | None = None
        self._pending: list[ControlSample] = []
        self._streak = 0
        self._count = 0
        self.trace: list[TraceRow] | None = [] if trace else None

    @property
    def is_open(self) -> bool:
        return self._open is not None

    def push(self, sample: ControlSample) -> list[Segment]:
        emitted: list[Segment] = []
        self._feed(sample, emitted)
        return emitted

    def finish(self) -> list[Segment]:
        emitted = []
        if self._open is not None:
            emitted.append(self._close())
        self._buffer.clear()
        self._pending.clear()
        return emitted

    def _feed(self, sample: ControlSample, emitted: list[Segment]) -> None:
        cfg = self.cfg
        if self._open is None:
            self._buffer.append(sample)
            if len(self._buffer) < cfg.a:
                self._log(sample, None, None)
                return
            est = estimate_von_mises([s.angle for s in self._buffer])
            if von_mises_interval_mass(est, cfg.theta_dev) > cfg.cdf_threshold:
                samples = self._buffer
                self._buffer = []
                ang = np.array([s.angle for s in samples])
                self._open = _Open(samples, float(np.cos(ang).sum()),
                                   float(np.sin(ang).sum()), est)
                self._streak = 0
                self._log(sample, est, None)
            else:
                # Keep the last a-1 values and wait for the next sample.
                self._buffer.pop(0)
                self._log(sample, est, None)
            return

        seg = self._open
        d_m = mahalanobis_angle(sample.angle, seg.est)
        self._log(sample, seg.est, d_m)
        if d_m < cfg.d_theta:
            self._accept(sample)
            self._streak = 0
            pending, self._pending = self._pending, []
            for p in pending:
                if mahalanobis_angle(p.angle, self._open.est) < cfg.d_theta:
                    self._accept(p)
            return

        self._pending.append(sample)
        self._streak += 1
        if self._streak >= cfg.n_theta:
            emitted.append(self._close())
            seeds, self._pending = self._pending, []
            for s in seeds:
                self._feed(s, emitted)

    def _accept(self, sample: ControlSample) -> None:
        seg = self._open
        th = sample.angle
        seg.samples.append(sample)
        seg.sum_cos += np.cos(th)
        seg.sum_sin += np.sin(th)
        seg.est = estimate_from_sums(seg.sum_cos, seg.sum_sin, len(seg.samples))

    def _close(self) -> Segment:
        seg = self._open
        self._open = None
        self._streak = 0
        samples = tuple(sorted(seg.samples, key=lambda s: s.k))
        out = Segment(self._count, samples[0].k, samples[-1].k, samples, seg.est)
        self._count += 1
        return out

    def _log(self, sample, est, d_m):
        if self.trace is None:
            return
        seg_id = self._count if self._open is not None else -1
        self.trace.append(TraceRow(sample.k, sample.angle,
                                   None if est is None else est.mu,
                                   None if est is None else est.kappa,
                                   d_m, seg_id))


def segment_stream(samples: Iterable[ControlSample],
                   cfg: SegmenterConfig | None = None) -> Iterator[Segment]:
    """Lazily segment ``samples``; the open segment is flushed at stream end."""
    seg = Segmenter(cfg)
    for sample in samples:
        yield from seg.push(sample)
    yield from seg.finish()


def write_debug_csv(rows: Iterable[TraceRow], stream: IO[str]) -> None:
    def fmt(x):
        return "" if x is None else repr(float(x))

    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["sample_k", "angle", "mu", "kappa", "d_m", "segment_id"])
    for r in rows:
        w.writerow([r.sample_k, fmt(r.angle), fmt(r.mu), fmt(r.kappa), fmt(r.d_m),
                    r.segment_id])
