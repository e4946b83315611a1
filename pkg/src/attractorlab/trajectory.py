"""Trajectory containers and CSV ingestion.

The only on-disk format is a UTF-8 CSV with header ``traj_id,k,x1,...,xn``
and one observation per row.  Sample spacing is normalised to one step
internally, so every rate in the package is "per sample".
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """A CSV row could not be read."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ValueError):
    """Header or dimensionality does not match what was expected."""


class Observation(NamedTuple):
    k: int
    z: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Ordered, uniformly spaced positions of one agent.

    ``positions`` has shape ``(len, n)``; ``k`` holds the integer sample
    indexes in strictly increasing order with constant spacing.
    """

    id: str
    k: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.int64)
        z = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if z.ndim != 2 or z.shape[1] < 1:
            raise ValueError("positions must be a (len, n) array")
        if len(k) != len(z):
            raise ValueError("k and positions differ in length")
        if len(z) < 2:
            raise ValueError(f"trajectory {self.id!r} needs at least 2 points")
        if not np.all(np.isfinite(z)):
            raise ValueError(f"trajectory {self.id!r} has non-finite coordinates")
        steps = np.diff(k)
        if np.any(steps <= 0) or np.any(steps != steps[0]):
            raise ValueError(f"trajectory {self.id!r} is not uniformly sampled")
        k.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "positions", z)

    def __len__(self) -> int:
        return len(self.k)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def observations(self) -> list[Observation]:
        return [Observation(int(k), z) for k, z in zip(self.k, self.positions)]


@dataclass(frozen=True)
class ControlSample:
    """Position ``z`` paired with the control velocity ``u`` observed there.

    ``z_prior`` is the filter's predicted position just before ``z`` was
    measured, i.e. where the control acted.  It defaults to ``z - u``.
    """

    z: np.ndarray
    u: np.ndarray
    k: int
    z_prior: np.ndarray | None = None

    def __post_init__(self):
        if len(self.u) != len(self.z):
            raise ValueError("u and z must have the same dimension")
        if self.z_prior is None:
            object.__setattr__(self, "z_prior", np.asarray(self.z) - np.asarray(self.u))

    @property
    def angle(self) -> float:
        """Orientation of ``u`` in the (x1, x2) plane; 0 or pi when n == 1."""
        if len(self.u) == 1:
            return 0.0 if self.u[0] >= 0 else float(np.pi)
        return float(np.arctan2(self.u[1], self.u[0]))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.u))


def finite_difference_velocity(t: Trajectory) -> np.ndarray:
    """Per-sample velocities ``z[i+1] - z[i]`` with the step normalised to 1."""
    if len(t) < 2:
        raise ValueError("need at least 2 points")
    return np.diff(t.positions, axis=0)


def _header_dim(header: Sequence[str]) -> int:
    cols = [h.strip() for h in header]
    if len(cols) < 3 or cols[0] != "traj_id" or cols[1] != "k":
        raise SchemaError(f"expected header 'traj_id,k,x1..xn', got {','.join(cols)!r}")
    n = len(cols) - 2
    if cols[2:] != [f"x{i}" for i in range(1, n + 1)]:
        raise SchemaError(f"coordinate columns must be x1..x{n}, got {cols[2:]}")
    return n


def parse_trajectories(source: IO[bytes] | IO[str] | bytes | str,
                       expected_dim: int | None = None) -> list[Trajectory]:
    """Read trajectories from CSV.

    Rows are grouped by ``traj_id`` (first-appearance order) and sorted by
    ``k``.  Trajectories that are not uniformly spaced are rejected whole,
    and ones shorter than two points are dropped; both cases are logged
    rather than raised.

    Raises
    ------
    ParseError
        A row is malformed; the message carries the 1-based line number.
    SchemaError
        The header is wrong or its dimension differs from ``expected_dim``.
    """
    if isinstance(source, bytes):
        text = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        text = io.StringIO(source)
    else:
        raw = source.read()
        text = io.StringIO(raw.decode("utf-8") if isinstance(raw, bytes) else raw)

    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty input: missing header") from None
    n = _header_dim(header)
    if expected_dim is not None and n != expected_dim:
        raise SchemaError(f"file has {n} coordinates, expected {expected_dim}")

    rows: dict[str, list[tuple[int, list[float]]]] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != n + 2:
            raise ParseError(f"expected {n + 2} fields, got {len(row)}", line)
        tid = row[0].strip()
        if not tid:
            raise ParseError("empty traj_id", line)
        try:
            k = int(row[1])
            coords = [float(c) for c in row[2:]]
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        if k < 0:
            raise ParseError(f"negative sample index {k}", line)
        if not all(np.isfinite(coords)):
            raise ParseError("non-finite coordinate", line)
        rows.setdefault(tid, []).append((k, coords))

    out = []
    for tid, items in rows.items():
        items.sort(key=lambda it: it[0])
        if len(items) < 2:
            log.warning("dropping trajectory %r: fewer than 2 points", tid)
            continue
        ks = np.array([it[0] for it in items], dtype=np.int64)
        steps = np.diff(ks)
        if np.any(steps <= 0) or np.any(steps != steps[0]):
            log.warning("rejecting trajectory %r: non-uniform sample spacing", tid)
            continue
        out.append(Trajectory(tid, ks, np.array([it[1] for it in items])))
    return out


def write_trajectories(trajectories: Iterable[Trajectory], stream: IO[str],
                       dim: int | None = None) -> None:
    """Serialise trajectories to the ingestion CSV format.

    Floats are written with ``repr`` so a parse/write/parse cycle is exact.
    """
    trajectories = list(trajectories)
    if dim is None:
        dim = trajectories[0].dim if trajectories else 2
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["traj_id", "k"] + [f"x{i}" for i in range(1, dim + 1)])
    for t in trajectories:
        if t.dim != dim:
            raise SchemaError(f"trajectory {t.id!r} has dim {t.dim}, expected {dim}")
        for k, z in zip(t.k, t.positions):
            writer.writerow([t.id, int(k)] + [repr(float(c)) for c in z])
