import io
import json

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from attractorlab.atlas import (ATLAS_LETTER_KEYS, Atlas, AttractorLetter, atlas_from_dict,
                                atlas_to_dict, augmented_innovation, best_letter,
                                build_filter_bank, cluster_attractors, load_atlas,
                                rasterize_field_map, save_atlas, silhouette_sweep, write_raster)
from attractorlab.field import FarFieldParams, NearFieldParams, SwitchingField, eval_field
from attractorlab.trajectory import Trajectory

CENTRES = np.array([[0.0, 0.75], [-0.6, 0.25], [0.55, -0.7]])


def estimate(x0, beta=0.1, sigma=0.3, mu_log=-2.3, r_sw=0.5):
    return (NearFieldParams(beta, beta, np.asarray(x0, dtype=float), sigma),
            FarFieldParams(mu_log, 0.1), r_sw)


def letter(m, x0, beta=0.1, sigma2=0.1, r_sw=1.0):
    return AttractorLetter(m, NearFieldParams(beta, beta, np.asarray(x0, float), np.sqrt(sigma2)),
                           FarFieldParams(np.log(beta)), r_sw)


def grouped_estimates(rng, per=12, spread=0.02):
    out = []
    for c in CENTRES:
        for _ in range(per):
            out.append(estimate(c + rng.normal(0, spread, 2), beta=rng.uniform(0.08, 0.12),
                                sigma=rng.uniform(0.2, 0.5)))
    return out


def roll(field: SwitchingField, z0, n=40):
    z = [np.asarray(z0, dtype=float)]
    for _ in range(n - 1):
        z.append(z[-1] + eval_field(field, z[-1]))
    return Trajectory("roll", np.arange(n), np.array(z))


def test_single_estimate_identity():
    e = estimate([0.1, 0.2])
    atlas = cluster_attractors([e])
    assert len(atlas) == 1
    l = atlas.letters[0]
    np.testing.assert_array_equal(l.params.x0, e[0].x0)
    assert (l.params.sigma, l.far.mu_log, l.r_switch, l.support) == (0.3, -2.3, 0.5, 1)


def test_three_groups(rng):
    ests = grouped_estimates(rng)
    atlas = cluster_attractors(ests)
    assert len(atlas) == 3
    got = np.array(sorted(tuple(l.params.x0) for l in atlas.letters))
    want = np.array(sorted(map(tuple, CENTRES)))
    np.testing.assert_allclose(got, want, atol=0.02)
    assert sorted(l.support for l in atlas.letters) == [12, 12, 12]
    assert [l.m for l in atlas.letters] == [0, 1, 2]


def test_merge_is_unweighted_mean():
    atlas = cluster_attractors([estimate([0, 0], sigma=0.1), estimate([0, 0.001], sigma=0.3)])
    assert len(atlas) == 1
    assert atlas.letters[0].params.sigma == pytest.approx(0.2)


@pytest.mark.parametrize("pts", [
    [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]],
    [[0, 0], [1, 0], [0, 1], [1, 1]],
])
def test_low_silhouette_falls_back_to_one(pts):
    k, scores = silhouette_sweep([estimate(p) for p in pts])
    assert k == 1 and max(scores.values()) < 0.25
    assert len(cluster_attractors([estimate(p) for p in pts])) == 1


def test_two_estimates_are_one_letter():
    assert len(cluster_attractors([estimate([0, 0]), estimate([1, 1])])) == 1


def test_sweep_scores_cover_k_range(rng):
    k, scores = silhouette_sweep(grouped_estimates(rng), k_max=6)
    assert k == 3 and sorted(scores) == [2, 3, 4, 5, 6]


def test_permutation_invariance(rng):
    ests = grouped_estimates(rng)
    a = cluster_attractors(ests)
    b = cluster_attractors([ests[i] for i in rng.permutation(len(ests))])
    key = lambda atl: sorted((round(l.params.x0[0], 12), round(l.params.x0[1], 12), l.support)
                             for l in atl.letters)
    assert key(a) == key(b)


def test_merged_within_member_range(rng):
    ests = grouped_estimates(rng, spread=0.05)
    atlas = cluster_attractors(ests)
    for l in atlas.letters:
        members = [e for e in ests if np.linalg.norm(e[0].x0 - l.params.x0) < 0.3]
        assert len(members) == l.support
        for attr in ("beta", "sigma"):
            vals = [getattr(e[0], attr) for e in members]
            assert min(vals) - 1e-12 <= getattr(l.params, attr) <= max(vals) + 1e-12


def test_bank_size_and_empty_atlas():
    atlas = Atlas(tuple(letter(i, c) for i, c in enumerate(CENTRES)), 2)
    assert len(build_filter_bank(atlas)) == 3
    with pytest.raises(ValueError):
        build_filter_bank(Atlas((), 2))


def test_matched_model_innovation_vanishes():
    l = letter(0, [0.2, 0.1], beta=0.09, sigma2=0.1, r_sw=0.6)
    t = roll(l.field, [0.9, -0.6])
    model = build_filter_bank(Atlas((l,), 2))[0]
    norms = [np.linalg.norm(i.y) for i in augmented_innovation(model, t)]
    assert max(norms[5:]) < 1e-6
    assert max(norms[5:]) < 3 * np.sqrt(model.cfg.r_meas)


def test_displaced_model_fits_worse():
    l = letter(0, [0.2, 0.1], beta=0.09, sigma2=0.1, r_sw=0.6)
    moved = letter(1, [1.2, 0.1], beta=0.09, sigma2=0.1, r_sw=0.6)
    t = roll(l.field, [0.9, -0.6])
    bank = build_filter_bank(Atlas((l, moved), 2))
    m0, m1 = (np.mean([np.linalg.norm(i.y) for i in m.run(t)]) for m in bank)
    assert m1 > m0
    assert best_letter(bank, t) == 0


def test_stationary_agent_sees_predicted_field():
    l = letter(0, [0.0, 0.0], beta=0.1, sigma2=0.1, r_sw=5.0)
    t = Trajectory("still", np.arange(6), np.tile([2.0, 0.0], (6, 1)))
    g = np.linalg.norm(eval_field(l.field, [2.0, 0.0]))
    inns = augmented_innovation(build_filter_bank(Atlas((l,), 2))[0], t)
    for i in inns:
        assert np.linalg.norm(i.y) == pytest.approx(g, rel=1e-2)


def test_two_point_trajectory_one_innovation():
    l = letter(0, [0.0, 0.0])
    t = Trajectory("two", [0, 1], [[1.0, 0.0], [0.9, 0.0]])
    assert len(augmented_innovation(build_filter_bank(Atlas((l,), 2))[0], t)) == 1


@settings(max_examples=25, deadline=None)
@given(st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_best_letter_translation_invariant(shift):
    shift = np.array(shift)
    letters = [letter(i, c, r_sw=1.5) for i, c in enumerate(CENTRES)]
    t = roll(letters[2].field, [0.9, 0.2], n=25)
    moved = [letter(l.m, l.params.x0 + shift, r_sw=1.5) for l in letters]
    t2 = Trajectory("s", t.k, t.positions + shift)
    a = best_letter(build_filter_bank(Atlas(tuple(letters), 2)), t)
    b = best_letter(build_filter_bank(Atlas(tuple(moved), 2)), t2)
    assert a == b == 2


def test_raster_values():
    bounds = [[-1, -1], [1, 1]]
    grid, xs, ys = rasterize_field_map(Atlas((), 2), bounds, 10)
    assert grid.shape == (10, 10) and np.all(grid == 0)
    one = Atlas((letter(0, [0.0, 0.0], sigma2=0.1),), 2)
    grid, xs, ys = rasterize_field_map(one, bounds, 21)
    assert grid[10, 10] == pytest.approx(0.1) and grid.max() == grid[10, 10]
    unit = Atlas((AttractorLetter(0, NearFieldParams(1.0, 1.0, np.zeros(2), np.sqrt(0.1)),
                                  FarFieldParams(0.0), 1.0),), 2)
    grid, xs, ys = rasterize_field_map(unit, [[0, 0], [np.sqrt(0.1), 1]], (2, 2))
    assert grid[0, 1] == pytest.approx(np.exp(-1))


def test_raster_rejects_bad_input():
    with pytest.raises(ValueError):
        rasterize_field_map(Atlas((), 2), [[0, 0], [0, 1]], 10)
    with pytest.raises(ValueError):
        rasterize_field_map(Atlas((), 2), [[0, 0], [1, 1]], 1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9)), min_size=1, max_size=4),
       st.floats(0.0005, 0.01), st.integers(50, 90))
def test_raster_peak_near_a_centre(centres, sigma2, res):
    # Holds for separated letters; overlapping bumps can peak in between.
    c = np.array(centres)
    gaps = [np.linalg.norm(a - b) for i, a in enumerate(c) for b in c[i + 1:]]
    assume(not gaps or min(gaps) > 6 * np.sqrt(sigma2))
    atlas = Atlas(tuple(letter(i, x, sigma2=sigma2) for i, x in enumerate(c)), 2)
    grid, xs, ys = rasterize_field_map(atlas, [[-1, -1], [1, 1]], res)
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    peak = np.array([xs[j], ys[i]])
    diag = np.hypot(xs[1] - xs[0], ys[1] - ys[0])
    assert min(np.linalg.norm(peak - x) for x in c) <= diag


def test_raster_three_letter_peak_adjacent_to_centre():
    atlas = Atlas(tuple(letter(i, c, sigma2=s2)
                        for i, (c, s2) in enumerate(zip(CENTRES, (0.1, 0.2, 0.3)))), 2)
    grid, xs, ys = rasterize_field_map(atlas, [[-1, -1], [1, 1]], 100)
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    # Argmax scan oracle: nearest grid node to each centre.
    nodes = [(np.argmin(np.abs(ys - c[1])), np.argmin(np.abs(xs - c[0]))) for c in CENTRES]
    assert any(abs(i - a) <= 1 and abs(j - b) <= 1 for a, b in nodes)


def test_raster_csv_layout():
    grid, xs, ys = rasterize_field_map(Atlas((), 2), [[0, 0], [1, 2]], (2, 3))
    buf = io.StringIO()
    write_raster(grid, xs, ys, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "row,col,x,y,intensity"
    assert lines[1:3] == ["0,0,0.0,0.0,0.0", "0,1,1.0,0.0,0.0"]
    assert len(lines) == 7


def test_json_roundtrip_and_keys(rng):
    atlas = cluster_attractors(grouped_estimates(rng))
    buf = io.StringIO()
    save_atlas(atlas, buf)
    d = json.loads(buf.getvalue())
    assert all(tuple(l) == ATLAS_LETTER_KEYS for l in d["letters"])
    back = load_atlas(io.StringIO(buf.getvalue()))
    assert atlas_to_dict(back) == d
    del d["letters"][0]["sigma_far"]
    with pytest.raises(ValueError, match="sigma_far"):
        atlas_from_dict(d)


def test_atlas_validation():
    with pytest.raises(ValueError):
        Atlas((letter(0, [0, 0]), letter(0, [1, 1])), 2)
    with pytest.raises(ValueError):
        Atlas((letter(0, [0, 0]),), 3)
    with pytest.raises(ValueError):
        AttractorLetter(0, letter(0, [0, 0]).params, FarFieldParams(0.0), 1.0, support=0)
