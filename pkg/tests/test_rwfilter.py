import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attractorlab.rwfilter import (FilterConfig, FilterState, Innovation, extract_control,
                                   innovate, predict_rw, run_rw_pass, update)
from attractorlab.trajectory import Trajectory

# Steady-state gain of the per-axis recursion P- = P + q, K = P- / (P- + r)
# with q = 0.01, r = 1e-4: root of P-^2 - q P- - q r = 0.
K_STEADY = 0.9901951359278484


def cv_trajectory(v, n=30, z0=(0.0, 0.0)):
    v = np.asarray(v, dtype=float)
    return Trajectory("cv", np.arange(n), np.asarray(z0) + np.arange(n)[:, None] * v)


def test_predict_zeroes_velocity():
    cfg = FilterConfig()
    s = FilterState(np.array([3.0, 4.0, 1.0, 1.0]), np.zeros((4, 4)))
    p = predict_rw(s, cfg)
    np.testing.assert_array_equal(p.mean, [3, 4, 0, 0])
    np.testing.assert_allclose(p.cov, np.diag([0.01, 0.01, 0.01, 0.01]))


def test_predict_from_identity_cov():
    cfg = FilterConfig()
    p = predict_rw(FilterState(np.zeros(4), np.eye(4)), cfg)
    np.testing.assert_allclose(p.cov, np.diag([1.01, 1.01, 0.01, 0.01]))


def test_predict_with_control_adds_b_g():
    cfg = FilterConfig(dk=2.0)
    p = predict_rw(FilterState(np.array([1.0, 1.0, 0, 0]), np.eye(4)), cfg, control=[0.5, -1])
    np.testing.assert_allclose(p.mean, [2.0, -1.0, 0.5, -1.0])


def test_innovate_cases():
    cfg = FilterConfig(r_meas=0.01)
    pred = FilterState(np.zeros(4), np.eye(4))
    inn = innovate(pred, [0.2, 0.0], cfg)
    np.testing.assert_allclose(inn.y, [0.2, 0.0])
    np.testing.assert_allclose(inn.s_cov, 1.01 * np.eye(2))
    assert np.all(innovate(pred, [0.0, 0.0], cfg).y == 0)


def test_update_zero_innovation_keeps_mean():
    cfg = FilterConfig()
    pred = FilterState(np.array([1.0, 2.0, 0, 0]), np.eye(4))
    post = update(pred, innovate(pred, [1.0, 2.0], cfg), cfg)
    np.testing.assert_array_equal(post.mean, pred.mean)


def test_update_ignores_huge_measurement_noise():
    cfg = FilterConfig(r_meas=1e12)
    pred = FilterState(np.zeros(4), np.eye(4))
    post = update(pred, innovate(pred, [5.0, -5.0], cfg), cfg)
    np.testing.assert_allclose(post.mean, 0.0, atol=1e-10)


def test_scalar_update_gain_half():
    cfg = FilterConfig(n=1, r_meas=1.0)
    pred = FilterState(np.array([0.0, 0.0]), np.diag([1.0, 1.0]))
    post = update(pred, innovate(pred, [2.0], cfg), cfg)
    assert post.mean[0] == pytest.approx(1.0)
    assert post.cov[0, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("y, dk, u", [
    ((0, 0), 1.0, (0, 0)),
    ((0.3, -0.1), 1.0, (0.3, -0.1)),
    ((1, 2), 0.5, (2, 4)),
])
def test_extract_control(y, dk, u):
    cfg = FilterConfig(dk=dk)
    np.testing.assert_allclose(extract_control(Innovation(np.array(y, float), np.eye(2)), cfg), u)


def test_stationary_trajectory_gives_zero_controls():
    t = Trajectory("s", np.arange(10), np.tile([0.3, -0.2], (10, 1)))
    us = np.array([c.u for c in run_rw_pass(t)])
    np.testing.assert_allclose(us, 0.0, atol=1e-15)


def test_output_length_and_indexes():
    t = cv_trajectory([1, 0], n=7)
    out = run_rw_pass(t)
    assert len(out) == len(t) - 1
    assert [c.k for c in out] == list(range(1, 7))


def test_constant_velocity_steady_state():
    v = np.array([1.0, 0.0])
    out = run_rw_pass(cv_trajectory(v))
    u = np.array([c.u for c in out])
    # Converges to v / K rather than v exactly; the residual bias is 1 - K.
    np.testing.assert_allclose(u[-1], v / K_STEADY, rtol=1e-9)
    err = np.linalg.norm(u - v, axis=1) / np.linalg.norm(v)
    assert np.all(err[3:] < 0.01)


def test_constant_velocity_converges_monotonically_to_limit():
    v = np.array([0.05, -0.03])
    u = np.array([c.u for c in run_rw_pass(cv_trajectory(v, n=40))])
    gap = np.linalg.norm(u - v / K_STEADY, axis=1)
    assert np.all(np.diff(gap[1:]) <= 1e-15)


def test_wrong_dimension_rejected():
    with pytest.raises(ValueError):
        run_rw_pass(cv_trajectory([1, 0]), FilterConfig(n=3))


def test_config_validation():
    for bad in [dict(q_pos=0), dict(r_meas=-1), dict(dk=0), dict(n=0)]:
        with pytest.raises(ValueError):
            FilterConfig(**bad)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=40))
def test_covariance_stays_symmetric(points):
    cfg = FilterConfig()
    s = FilterState.initial(np.array(points[0]), cfg)
    for z in points[1:]:
        p = predict_rw(s, cfg)
        assert np.max(np.abs(p.cov - p.cov.T)) < 1e-9
        s = update(p, innovate(p, z, cfg), cfg)
        assert np.max(np.abs(s.cov - s.cov.T)) < 1e-9
        assert np.all(np.diag(s.cov) >= 0)


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
       st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
       st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_control_is_affine_in_measurement(z1, z2, x):
    cfg = FilterConfig(dk=0.5)
    pred = FilterState(np.array([*x, 0.0, 0.0]), np.eye(4))
    u1 = extract_control(innovate(pred, z1, cfg), cfg)
    u2 = extract_control(innovate(pred, z2, cfg), cfg)
    um = extract_control(innovate(pred, (np.array(z1) + np.array(z2)) / 2, cfg), cfg)
    np.testing.assert_allclose(um, (u1 + u2) / 2, atol=1e-12)
