"""``attractorlab`` command line: simulate, learn, evaluate, render.

Exit codes: 0 success, 2 bad usage or invalid input, 3 I/O failure,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__  # noqa: F401
from .atlas import (Atlas, load_atlas, raster_sidecar, rasterize_field_map, save_atlas,
                    write_raster)
from .fitter import FitterConfig
from .pipeline import LearnConfig, learn
from .rwfilter import FilterConfig, FilterError
from .segmenter import Segmenter, SegmenterConfig, write_debug_csv
from .synthetic import (SimConfig, default_scenario, generate_dataset, load_scenario,
                        normalized_error, xi_vector)
from .trajectory import ParseError, SchemaError, parse_trajectories, write_trajectories

log = logging.getLogger("attractorlab")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    """Invalid arguments or input content."""


# -- config handling --------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object with per-module sections")
    return cfg


def _build(cls, section: dict | None, **overrides):
    """Instantiate a config dataclass from a JSON section plus CLI overrides."""
    known = {f.name for f in fields(cls)}
    section = dict(section or {})
    unknown = set(section) - known
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    section.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{cls.__name__}: {exc}") from exc


def learn_config_from(cfg: dict, seed: int | None = None) -> LearnConfig:
    learn_sec = dict(cfg.get("learn", {}))
    return LearnConfig(
        filter=_build(FilterConfig, cfg.get("filter")),
        segmenter=_build(SegmenterConfig, cfg.get("segmenter")),
        fitter=_build(FitterConfig, cfg.get("fitter")),
        k_max=int(learn_sec.get("k_max", 10)),
        seed=int(seed if seed is not None else learn_sec.get("seed", 0)),
    )


@contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sc = load_scenario(args.scenario) if args.scenario else default_scenario()
    sc = replace(sc, seed=args.seed)
    sim = _build(SimConfig, cfg.get("sim"), snr=args.snr, n_trajectories=args.n,
                 max_steps=args.max_steps)
    trajs = generate_dataset(sc, sim)
    with _open_out(args.out) as fh:
        write_trajectories(trajs, fh, sc.dim)
    log.info("wrote %d trajectories", len(trajs))
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = _load_config(args.config)
    lcfg = learn_config_from(cfg, args.seed)
    with open(args.trajectories, "rb") as fh:
        data = fh.read()
    trajs = parse_trajectories(data) if data.strip() else []
    if trajs and trajs[0].dim != lcfg.filter.n:
        lcfg = replace(lcfg, filter=replace(lcfg.filter, n=trajs[0].dim))
    result = learn(trajs, lcfg)
    if not len(result.atlas):
        log.warning("no attractors found; writing an empty atlas")
    with _open_out(args.out) as fh:
        save_atlas(result.atlas, fh)
    if args.trace_dir:
        _write_traces(trajs, lcfg, Path(args.trace_dir))
    _print_letters(result.atlas, sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def _write_traces(trajs, lcfg: LearnConfig, out_dir: Path) -> None:
    from .rwfilter import run_rw_pass

    out_dir.mkdir(parents=True, exist_ok=True)
    for t in trajs:
        seg = Segmenter(lcfg.segmenter, trace=True)
        for s in run_rw_pass(t, lcfg.filter):
            seg.push(s)
        seg.finish()
        with open(out_dir / f"{t.id}.csv", "w", encoding="utf-8", newline="") as fh:
            write_debug_csv(seg.trace, fh)


def _print_letters(atlas: Atlas, stream) -> None:
    print(f"{'id':>3} {'support':>7} {'x0':>24} {'beta':>9} {'sigma2':>9}", file=stream)
    for l in atlas.letters:
        x0 = ", ".join(f"{v:.4f}" for v in l.params.x0)
        print(f"{l.m:>3} {l.support:>7} {'(' + x0 + ')':>24} {l.params.beta:>9.4f} "
              f"{l.params.sigma2:>9.4f}", file=stream)


def match_letters(atlas: Atlas, truth) -> list[tuple[int, int]]:
    """One-to-one nearest-centre pairs ``(truth index, letter index)``."""
    if not len(atlas) or not truth:
        return []
    cost = np.array([[np.linalg.norm(l.params.x0 - a.near.x0) for l in atlas.letters]
                     for a in truth])
    rows, cols = linear_sum_assignment(cost)
    return sorted(zip(rows.tolist(), cols.tolist()))


def evaluate_atlas(atlas: Atlas, scenario) -> dict:
    truth = scenario.attractors
    pairs = match_letters(atlas, truth)
    matched_truth = {i for i, _ in pairs}
    matched_letters = {j for _, j in pairs}
    rows = []
    for i, j in pairs:
        gt, est = truth[i].near, atlas.letters[j].params
        rows.append({
            "attractor": i, "letter": atlas.letters[j].m,
            "dx0": (est.x0 - gt.x0).tolist(),
            "abs_dx0": float(np.linalg.norm(est.x0 - gt.x0)),
            "abs_dbeta": abs(est.beta - gt.beta),
            "abs_dsigma2": abs(est.sigma2 - gt.sigma2),
        })
    return {
        "matches": rows,
        "unmatched_attractors": sorted(set(range(len(truth))) - matched_truth),
        "unmatched_letters": [atlas.letters[j].m for j in range(len(atlas))
                              if j not in matched_letters],
        "_pairs": pairs,
    }


def cmd_evaluate(args) -> int:
    sc = load_scenario(args.scenario) if args.scenario else default_scenario()
    atlases = []
    for p in args.atlas:
        with open(p, encoding="utf-8") as fh:
            try:
                atlases.append(load_atlas(fh))
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                raise UsageError(f"atlas {p}: {exc}") from exc
    reports = [evaluate_atlas(a, sc) for a in atlases]

    # One row of estimates per atlas; any unmatched attractor blocks the metric.
    table = []
    for a, rep in zip(atlases, reports):
        row = [None] * len(sc.attractors)
        for i, j in rep.pop("_pairs"):
            row[i] = xi_vector(a.letters[j].params)
        table.append(row)
    if all(c is not None for row in table for c in row):
        eps = normalized_error([xi_vector(a.near) for a in sc.attractors], table).tolist()
    else:
        eps = None
        log.warning("some attractors have no matching letter; epsilon not computed")

    out = {"atlases": [{"path": str(p), **rep} for p, rep in zip(args.atlas, reports)],
           "epsilon": eps}
    for p, rep in zip(args.atlas, reports):
        print(f"# {p}")
        for r in rep["matches"]:
            print(f"attractor {r['attractor']} <- letter {r['letter']}: "
                  f"|dx0|={r['abs_dx0']:.4f} |dbeta|={r['abs_dbeta']:.4f} "
                  f"|dsigma2|={r['abs_dsigma2']:.4f}")
        if rep["unmatched_attractors"]:
            print(f"unmatched attractors: {rep['unmatched_attractors']}")
        if rep["unmatched_letters"]:
            print(f"unmatched letters: {rep['unmatched_letters']}")
    print("epsilon:", "n/a" if eps is None else " ".join(f"{e:.4f}" for e in eps))
    if args.out:
        with _open_out(args.out) as fh:
            json.dump(out, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_render(args) -> int:
    with open(args.atlas, encoding="utf-8") as fh:
        try:
            atlas = load_atlas(fh)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"atlas {args.atlas}: {exc}") from exc
    b = args.bounds
    bounds = [[b[0], b[1]], [b[2], b[3]]]
    try:
        grid, xs, ys = rasterize_field_map(atlas, bounds, args.resolution)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with _open_out(args.out) as fh:
        write_raster(grid, xs, ys, fh)
    if args.out and args.out != "-":
        with open(f"{args.out}.json", "w", encoding="utf-8") as fh:
            json.dump(raster_sidecar(bounds, args.resolution), fh, indent=2)
            fh.write("\n")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with per-module sections")
    common.add_argument("--out", help="output path ('-' or omitted for stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="attractorlab",
                                description="Learn attractive areas from trajectories.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate synthetic trajectories")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--scenario", help="scenario JSON (default: built-in 3-attractor scene)")
    s.add_argument("--n", type=int, help="number of trajectories")
    s.add_argument("--snr", type=float, help="signal-to-noise ratio ('inf' for noiseless)")
    s.add_argument("--max-steps", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("learn", parents=[common], help="learn an atlas from a trajectory CSV")
    s.add_argument("trajectories")
    s.add_argument("--seed", type=int, help="clustering seed (default 0)")
    s.add_argument("--trace-dir", help="write per-trajectory segmenter traces here")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("evaluate", parents=[common], help="compare atlases to ground truth")
    s.add_argument("--atlas", action="append", required=True,
                   help="atlas JSON; repeat once per noise level for epsilon")
    s.add_argument("--scenario", help="ground-truth scenario JSON (default: built-in)")
    s.add_argument("--seed", type=int, help="unused; accepted for symmetry")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("render", parents=[common], help="rasterise an atlas")
    s.add_argument("--atlas", required=True)
    s.add_argument("--bounds", type=float, nargs=4, default=[-1.0, -1.0, 1.0, 1.0],
                   metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    s.add_argument("--resolution", type=int, default=100)
    s.add_argument("--seed", type=int, help="unused; accepted for symmetry")
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ParseError, SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FilterError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
