import jax
import jax.numpy as jnp
import numpy as np
import pytest

from aonn.problems import make_problem
from aonn.sampling import sample_domain


def exact_laplacian(fn, points: np.ndarray, spatial_dim: int) -> np.ndarray:
    """Laplacian in the spatial coordinates of a field given as ``fn(points) -> values``."""

    def scalar(x, mu):
        return fn(jnp.concatenate([x, mu])[None, :])[0]

    hess = jax.vmap(jax.hessian(scalar))(jnp.asarray(points[:, :spatial_dim]), jnp.asarray(points[:, spatial_dim:]))
    return np.asarray(jnp.trace(hess, axis1=1, axis2=2))


@pytest.fixture(scope="session")
def test1_problem():
    return make_problem("test1")


@pytest.fixture(scope="session")
def test1_points(test1_problem):
    return sample_domain(test1_problem.domain, 1000).points


# criterion lines reported by the acceptance suite, repeated in the terminal summary
CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
