import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from aonn.constraints import (BallBound, BoxBounds, Unconstrained, control_step, is_feasible, project,
                              variational_residual)

# XLA flushes subnormals to zero, so they are left out of the generated bounds and values
floats = st.floats(-50, 50, allow_nan=False, allow_subnormal=False)


def _box(lo, width):
    return BoxBounds(lo, lo + width)


@settings(max_examples=1000, deadline=None)
@given(v=arrays(np.float64, 6, elements=floats), w=arrays(np.float64, 6, elements=floats),
       lo=st.floats(-10, 10, allow_subnormal=False), width=st.floats(0, 20, allow_subnormal=False))
def test_box_projection_properties(v, w, lo, width):
    spec = _box(lo, width)
    pv, pw = np.asarray(project(spec, v, None)), np.asarray(project(spec, w, None))
    np.testing.assert_array_equal(np.asarray(project(spec, pv, None)), pv)
    assert np.all(np.abs(pv - pw) <= np.abs(v - w) + 1e-12)
    assert is_feasible(spec, pv, None)


@settings(max_examples=1000, deadline=None)
@given(v=arrays(np.float64, (3, 2), elements=floats), w=arrays(np.float64, (3, 2), elements=floats),
       r=st.floats(0.01, 10, allow_subnormal=False))
def test_ball_projection_properties(v, w, r):
    spec = BallBound(r)
    pv, pw = np.asarray(project(spec, v, None)), np.asarray(project(spec, w, None))
    np.testing.assert_allclose(np.asarray(project(spec, pv, None)), pv, rtol=1e-12, atol=1e-12)
    assert np.all(np.linalg.norm(pv - pw, axis=1) <= np.linalg.norm(v - w, axis=1) * (1 + 1e-12) + 1e-12)
    assert is_feasible(spec, pv, None, atol=1e-12)


def test_box_projection_examples():
    spec = BoxBounds(0.0, 3.0)
    np.testing.assert_array_equal(np.asarray(project(spec, np.array([-1.0, 1.5, 4.0]), None)), [0.0, 1.5, 3.0])


def test_point_dependent_bounds():
    spec = BoxBounds(0.0, lambda pts: pts[:, 2])
    pts = np.array([[0.5, 0.5, 3.0], [0.5, 0.5, 20.0]])
    np.testing.assert_array_equal(np.asarray(project(spec, np.array([10.0, 10.0]), pts)), [3.0, 10.0])


def test_inverted_bounds_rejected():
    with pytest.raises(ValueError):
        project(BoxBounds(1.0, 0.0), np.zeros(3), None)
    with pytest.raises(ValueError):
        BallBound(0.0)


def test_unconstrained_is_identity():
    v = np.array([-1e9, 0.0, 1e9])
    np.testing.assert_array_equal(np.asarray(project(Unconstrained(), v, None)), v)


def test_control_step_and_residual():
    spec = BoxBounds(0.0, 3.0)
    u = np.array([1.0])
    # interior point: residual is linear in c
    for c in (0.1, 1.0, 10.0):
        r = variational_residual(u, np.array([0.05]), c, spec, None)
        assert float(r[0]) == pytest.approx(0.05 * c)
    # active upper bound with a descent direction pointing outward: fixed point
    assert float(variational_residual(np.array([3.0]), np.array([-2.0]), 5.0, spec, None)[0]) == 0.0
    with pytest.raises(ValueError):
        control_step(u, u, -1.0, spec, None)
    with pytest.raises(FloatingPointError):
        control_step(np.array([np.nan]), u, 1.0, spec, None)
