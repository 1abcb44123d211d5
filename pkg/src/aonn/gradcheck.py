"""Finite-difference checks of the jet derivatives and of the training-loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from .driver import _aonn_losses, _values
from .jets import NetworkSpec, forward_jets, init_network, network_values
from .problems import ansatz_data, make_problem
from .sampling import sample_domain

__all__ = ["CheckRow", "GRAD_TOL", "HESS_TOL", "PARAM_TOL", "jet_check", "loss_check", "run_suite"]

GRAD_TOL = 1e-6
HESS_TOL = 1e-5
PARAM_TOL = 1e-6

# (problem, input dim) pairs covering d = 2, 3, 4
_CASES = (("test1", 2), ("test2", 3), ("test4", 4), ("test5", 3))


@dataclass(frozen=True)
class CheckRow:
    case: int
    problem: str
    input_dim: int
    quantity: str
    max_rel_dev: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(self.max_rel_dev <= self.tolerance)


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(float(np.max(np.abs(b))), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


def jet_check(spec: NetworkSpec, params: np.ndarray, points: np.ndarray, spatial_dim: int,
              h_grad: float = 1e-5, h_hess: float = 1e-4) -> tuple[float, float]:
    """Relative deviation of jet gradients and Hessians from central differences."""
    jets = forward_jets(spec, params, points, spatial_dim)
    fd_grad = np.zeros_like(jets.spatial_grad)
    fd_hess = np.zeros_like(jets.spatial_hess)
    for i in range(spatial_dim):
        step = np.zeros(points.shape[1])
        step[i] = h_grad
        plus = np.asarray(network_values(spec, params, points + step))
        minus = np.asarray(network_values(spec, params, points - step))
        fd_grad[:, :, i] = (plus - minus) / (2 * h_grad)
        step[i] = h_hess
        g_plus = forward_jets(spec, params, points + step, spatial_dim).spatial_grad
        g_minus = forward_jets(spec, params, points - step, spatial_dim).spatial_grad
        fd_hess[:, :, :, i] = (g_plus - g_minus) / (2 * h_hess)
    return _rel(jets.spatial_grad, fd_grad), _rel(jets.spatial_hess, fd_hess)


def loss_check(problem_name: str, specs: dict[str, NetworkSpec], seed: int, n_points: int = 64,
               n_coords: int = 20, h: float = 1e-6) -> dict[str, float]:
    """Relative deviation of L_s, L_a, L_u parameter gradients from central differences.

    The deviation is taken over ``n_coords`` random coordinates and scaled by the
    largest gradient entry among them.
    """
    problem = make_problem(problem_name)
    rng = np.random.default_rng(seed)
    sample = sample_domain(problem.domain, n_points, skip=int(rng.integers(0, 1000)))
    points = jnp.asarray(sample.points)
    ans = tuple(jnp.asarray(a) for a in ansatz_data(problem, sample.points))
    params = {n: init_network(specs[n], seed + k) for k, n in enumerate(("y", "p", "u"))}
    u = np.asarray(_values(specs["u"], jnp.asarray(params["u"]), points))
    y = np.asarray(ans[3] + ans[0] * _values(specs["y"], jnp.asarray(params["y"]), points))
    losses = _aonn_losses(problem, specs)
    cases = {
        "L_s": (losses.state, params["y"], (points, ans, u)),
        "L_a": (losses.adjoint, params["p"], (points, ans, y)),
        "L_u": (losses.control, params["u"], (points, jnp.asarray(rng.normal(size=n_points)))),
    }
    out = {}
    for name, (loss, theta, data) in cases.items():
        _, grad = loss.value_and_grad(theta, data)
        coords = rng.choice(theta.size, size=min(n_coords, theta.size), replace=False)
        fd = np.empty(coords.size)
        for j, i in enumerate(coords):
            e = np.zeros_like(theta)
            e[i] = h
            # reuse the compiled value-and-gradient function; the probes are cheap at this size
            plus, _ = loss.value_and_grad(theta + e, data)
            minus, _ = loss.value_and_grad(theta - e, data)
            fd[j] = (plus - minus) / (2 * h)
        out[name] = _rel(grad[coords], fd)
    return out


def run_suite(n_cases: int = 10, seed: int = 0) -> list[CheckRow]:
    """Random (network, parameters, points) triples cycled over d = 2, 3, 4."""
    rng = np.random.default_rng(seed)
    rows = []
    for case in range(n_cases):
        name, dim = _CASES[case % len(_CASES)]
        offset = tuple(rng.uniform(-1.0, 1.0, size=dim))
        scale = tuple(rng.uniform(0.5, 2.0, size=dim))
        spec = NetworkSpec(dim, 1, int(rng.integers(1, 4)), int(rng.integers(max(dim, 4), 12)), offset, scale)
        params = init_network(spec, seed=1000 + case)
        points = rng.uniform(-1.0, 1.0, size=(8, dim))
        spatial = 2 if dim > 2 else dim
        g_dev, h_dev = jet_check(spec, params, points, spatial)
        rows.append(CheckRow(case, name, dim, "spatial_grad", g_dev, GRAD_TOL))
        rows.append(CheckRow(case, name, dim, "spatial_hess", h_dev, HESS_TOL))
        specs = {n: spec for n in ("y", "p", "u")}
        for loss_name, dev in loss_check(name, specs, seed=2000 + case).items():
            rows.append(CheckRow(case, name, dim, loss_name, dev, PARAM_TOL))
    return rows
