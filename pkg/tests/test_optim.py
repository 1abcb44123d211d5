import math

import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from aonn.jets import DivergenceError
from aonn.optim import DENSE_BFGS_LIMIT, OptimOptions, minimize


def rosenbrock(x):
    return rosen(x), rosen_der(x)


@pytest.mark.parametrize("method", ["lbfgs", "bfgs"])
def test_rosenbrock_converges(method):
    x, stats = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimOptions(method=method, max_iterations=200))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-6)
    assert stats.final_loss < 1e-12


def test_every_accepted_step_satisfies_strong_wolfe():
    opts = OptimOptions(max_iterations=200)
    _, stats = minimize(rosenbrock, np.array([-1.2, 1.0, -0.5, 2.0]), opts)
    assert stats.steps
    for step in stats.steps:
        assert step.sufficient_decrease(opts.c1)
        assert step.curvature(opts.c2)


def test_best_loss_is_monotone():
    _, stats = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimOptions(max_iterations=50))
    assert all(b <= a for a, b in zip(stats.best_loss, stats.best_loss[1:]))


def test_quadratic_solved_quickly():
    a = np.diag(np.arange(1.0, 11.0))
    x, stats = minimize(lambda x: (0.5 * x @ a @ x, a @ x), np.ones(10), OptimOptions(max_iterations=100))
    assert np.max(np.abs(x)) < 1e-8
    assert stats.iterations <= 30


def test_zero_iterations_returns_start():
    x0 = np.array([0.3, 0.2])
    x, stats = minimize(rosenbrock, x0, OptimOptions(max_iterations=0))
    np.testing.assert_array_equal(x, x0)
    assert stats.final_loss == rosen(x0)


def test_dense_bfgs_refused_for_large_problems():
    with pytest.raises(ValueError):
        minimize(lambda x: (0.0, x), np.zeros(DENSE_BFGS_LIMIT + 1), OptimOptions(method="bfgs"))


def test_invalid_options():
    with pytest.raises(ValueError):
        OptimOptions(c1=0.9, c2=0.1)
    with pytest.raises(ValueError):
        OptimOptions(method="newton")


def test_divergent_trial_points_shorten_the_step():
    # the loss blows up beyond |x| > 2; a unit step from x = 1.5 overshoots
    def fun(x):
        if np.any(np.abs(x) > 2):
            raise DivergenceError("outside")
        return float(x @ x), 2 * x

    x, stats = minimize(fun, np.array([1.5]), OptimOptions(max_iterations=20))
    assert abs(x[0]) < 1e-8


def test_non_finite_start_rejected():
    with pytest.raises(DivergenceError):
        minimize(lambda x: (math.inf, x), np.zeros(2))
    with pytest.raises(ValueError):
        minimize(rosenbrock, np.array([np.nan, 0.0]))


def test_adam_decreases_loss():
    x, stats = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimOptions(method="adam", max_iterations=500,
                                                                       adam_rate=1e-2))
    assert stats.final_loss < rosen(np.array([-1.2, 1.0]))
    assert all(b <= a for a, b in zip(stats.best_loss, stats.best_loss[1:]))
