"""Parametric optimal control problem instances.

Each :class:`ProblemDef` bundles the PDE residual forms, objective weights,
desired state, source, boundary ansatz and admissible set.  Points are rows of
``(x0, ..., x_{d-1}, mu_0, ..., mu_{D-1})``.  Field functions accept numpy or jax
arrays and are traceable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .constraints import AdmissibleSpec, BoxBounds, Unconstrained, project
from .jets import JetBatch, NetworkSpec
from .sampling import DomainSpec, SampleSet

__all__ = [
    "ProblemDef",
    "AnsatzData",
    "state_residual",
    "adjoint_residual",
    "total_derivative",
    "objective",
    "ansatz_data",
    "apply_ansatz",
    "analytic_solution",
    "PROBLEMS",
    "make_problem",
]

PI = np.pi


@dataclass(frozen=True)
class ProblemDef:
    name: str
    domain: DomainSpec
    alpha: float
    # "semilinear": -lap y + y^3 = u + f ; "laplace": -lap y = u
    pde: str
    desired_state: Callable
    source: Callable
    # scalar functions of a single point, differentiated with jax for the ansatz
    length_factor: Callable
    boundary_lift: Callable
    admissible: AdmissibleSpec
    # None, a fixed L1 weight, or "mu" when the L1 weight is the (single) parameter
    sparsity: float | str | None = None
    analytic: Callable | None = None
    # the optimal triple no longer changes once mu exceeds the parameter box
    # (e.g. an L1 weight past the value that switches the control off)
    constant_above_box: bool = False

    @property
    def spatial_dim(self) -> int:
        return self.domain.spatial_dim

    @property
    def param_dim(self) -> int:
        return self.domain.param_dim

    @property
    def input_dim(self) -> int:
        return self.domain.dims

    def input_normalization(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Offset and scale that map the parameter box to ``[-1, 1]``; spatial inputs pass through."""
        d = self.spatial_dim
        lo, hi = np.asarray(self.domain.lower[d:]), np.asarray(self.domain.upper[d:])
        offset = (0.0,) * d + tuple(float(v) for v in 0.5 * (lo + hi))
        scale = (1.0,) * d + tuple(float(v) for v in 2.0 / (hi - lo))
        return offset, scale

    def network_spec(self, num_blocks: int = 2, width: int = 15) -> NetworkSpec:
        offset, scale = self.input_normalization()
        if self.param_dim == 0:
            offset = scale = None
        return NetworkSpec(self.input_dim, 1, num_blocks, width, offset, scale)

    def sparsity_weight(self, points):
        if self.sparsity is None:
            return 0.0
        if self.sparsity == "mu":
            return points[:, self.spatial_dim]
        return float(self.sparsity)


def state_residual(problem: ProblemDef, y, lap_y, u, points):
    """Interior residual of the state equation (boundary handled by the ansatz)."""
    if problem.pde == "semilinear":
        return -lap_y + y ** 3 - u - problem.source(points)
    if problem.pde == "laplace":
        return -lap_y - u
    raise ValueError(f"unknown pde form {problem.pde!r}")


def adjoint_residual(problem: ProblemDef, y, p, lap_p, points):
    if problem.pde == "semilinear":
        return -lap_p + 3.0 * p * y ** 2 - (y - problem.desired_state(points))
    if problem.pde == "laplace":
        return -lap_p - (y - problem.desired_state(points))
    raise ValueError(f"unknown pde form {problem.pde!r}")


def total_derivative(problem: ProblemDef, y, p, u, points):
    """``alpha u + p (+ beta sign(u))`` with ``sign(0) = 0``."""
    du_j = problem.alpha * u + p
    if problem.sparsity is not None:
        du_j = du_j + problem.sparsity_weight(points) * jnp.sign(u)
    return du_j


def objective(problem: ProblemDef, y, u, sample: SampleSet) -> float:
    """QMC estimate of ``1/2|y - yd|^2 + alpha/2 |u|^2 + beta |u|_1`` over the sampled region."""
    if len(sample) == 0:
        raise ValueError("empty sample")
    pts = sample.points
    y, u = np.asarray(y), np.asarray(u)
    integrand = (0.5 * (y - np.asarray(problem.desired_state(pts))) ** 2
                 + 0.5 * problem.alpha * u ** 2
                 + np.asarray(problem.sparsity_weight(pts)) * np.abs(u))
    return float(sample.measure * np.mean(integrand))


class AnsatzData(NamedTuple):
    """Length factor and boundary lift with their spatial derivatives at fixed points."""

    ell: np.ndarray       # (n,)
    ell_grad: np.ndarray  # (n, d)
    ell_hess: np.ndarray  # (n, d, d)
    lift: np.ndarray
    lift_grad: np.ndarray
    lift_hess: np.ndarray

    @property
    def ell_lap(self):
        return jnp.trace(self.ell_hess, axis1=1, axis2=2)

    @property
    def lift_lap(self):
        return jnp.trace(self.lift_hess, axis1=1, axis2=2)


def _scalar_jets(fn: Callable, points: np.ndarray, d: int):
    def split(x, mu):
        return fn(jnp.concatenate([x, mu]))

    value = jax.vmap(fn)(points)
    grad = jax.vmap(jax.grad(split), in_axes=(0, 0))(points[:, :d], points[:, d:])
    hess = jax.vmap(jax.hessian(split), in_axes=(0, 0))(points[:, :d], points[:, d:])
    return np.asarray(value), np.asarray(grad), np.asarray(hess)


def ansatz_data(problem: ProblemDef, points) -> AnsatzData:
    points = jnp.asarray(points, dtype=jnp.float64)
    d = problem.spatial_dim
    return AnsatzData(*_scalar_jets(problem.length_factor, points, d),
                      *_scalar_jets(problem.boundary_lift, points, d))


def apply_ansatz(problem: ProblemDef, jets_raw: JetBatch, points) -> JetBatch:
    """Jets of ``lift + ell * raw`` by the product rule (scalar outputs)."""
    a = ansatz_data(problem, points)
    v = jets_raw.values[:, 0]
    g = jets_raw.spatial_grad[:, 0]
    h = jets_raw.spatial_hess[:, 0]
    value = a.lift + a.ell * v
    grad = a.lift_grad + a.ell_grad * v[:, None] + a.ell[:, None] * g
    cross = a.ell_grad[:, :, None] * g[:, None, :] + g[:, :, None] * a.ell_grad[:, None, :]
    hess = a.lift_hess + a.ell_hess * v[:, None, None] + cross + a.ell[:, None, None] * h
    return JetBatch(value[:, None], grad[:, None], hess[:, None])


def analytic_solution(problem: ProblemDef, points):
    """``(y*, u*, p*)`` at ``points`` or ``None`` when the problem has no closed form."""
    if problem.analytic is None:
        return None
    return tuple(np.asarray(f) for f in problem.analytic(jnp.asarray(points)))


# -- built-in instances -------------------------------------------------------


def _zero(points):
    return jnp.zeros(points.shape[0], dtype=points.dtype)


def _semilinear_manufactured(alpha: float, admissible: AdmissibleSpec):
    """Closed-form optimum of the semilinear test family on the unit square."""

    def y_star(points):
        return jnp.sin(PI * points[:, 0]) * jnp.sin(PI * points[:, 1])

    def triple(points):
        y = y_star(points)
        u = project(admissible, 2 * PI ** 2 * y, points)
        p = -2 * alpha * PI ** 2 * y
        return y, u, p

    def source(points):
        y, u, _ = triple(points)
        return 2 * PI ** 2 * y + y ** 3 - u

    def desired(points):
        y, _, p = triple(points)
        return (1 + 4 * PI ** 4 * alpha) * y - 3 * y ** 2 * p

    return triple, source, desired


def _unit_square_ell(point):
    x0, x1 = point[0], point[1]
    return x0 * (1 - x0) * x1 * (1 - x1)


def _zero_lift(point):
    return 0.0 * point[0]


def test1() -> ProblemDef:
    alpha = 0.01
    admissible = BoxBounds(0.0, 3.0)
    triple, source, desired = _semilinear_manufactured(alpha, admissible)
    return ProblemDef(
        name="test1",
        domain=DomainSpec(2, 0, (0.0, 0.0), (1.0, 1.0)),
        alpha=alpha,
        pde="semilinear",
        desired_state=desired,
        source=source,
        length_factor=_unit_square_ell,
        boundary_lift=_zero_lift,
        admissible=admissible,
        analytic=triple,
    )


def _mu_upper(points):
    return points[:, 2]


def test2() -> ProblemDef:
    alpha = 0.01
    admissible = BoxBounds(0.0, _mu_upper)
    triple, source, desired = _semilinear_manufactured(alpha, admissible)
    return ProblemDef(
        name="test2",
        domain=DomainSpec(2, 1, (0.0, 0.0, 3.0), (1.0, 1.0, 20.0)),
        alpha=alpha,
        pde="semilinear",
        desired_state=desired,
        source=source,
        length_factor=_unit_square_ell,
        boundary_lift=_zero_lift,
        admissible=admissible,
        analytic=triple,
    )


def _outside_hole(points, closed):
    r2 = (points[:, 0] - 1.5) ** 2 + (points[:, 1] - 0.5) ** 2
    mu1 = points[:, 2]
    return r2 >= mu1 ** 2 if closed else r2 > mu1 ** 2


def _test4_ell(point):
    x0, x1, mu1 = point[0], point[1], point[2]
    return x0 * (2 - x0) * x1 * (1 - x1) * (mu1 ** 2 - (x0 - 1.5) ** 2 - (x1 - 0.5) ** 2)


def _test4_desired(points):
    return jnp.where(points[:, 0] <= 1.0, 1.0, points[:, 3])


def test4(control_lower: float | None = None, control_upper: float | None = None) -> ProblemDef:
    """Laplace control on a rectangle with a parametric hole; bounds only if supplied."""
    if control_lower is None and control_upper is None:
        admissible = Unconstrained()
    else:
        admissible = BoxBounds(-np.inf if control_lower is None else control_lower,
                               np.inf if control_upper is None else control_upper)
    return ProblemDef(
        name="test4",
        domain=DomainSpec(2, 2, (0.0, 0.0, 0.05, 0.5), (2.0, 1.0, 0.45, 2.5), inside=_outside_hole),
        alpha=0.001,
        pde="laplace",
        desired_state=_test4_desired,
        source=_zero,
        length_factor=_test4_ell,
        boundary_lift=lambda point: 1.0 + 0.0 * point[0],
        admissible=admissible,
    )


def _in_disk(points, closed):
    r2 = points[:, 0] ** 2 + points[:, 1] ** 2
    return r2 <= 1.0 if closed else r2 < 1.0


def _test5_desired(points):
    x0, x1 = points[:, 0], points[:, 1]
    return 4 * jnp.sin(2 * PI * x0) * jnp.sin(PI * x1) * jnp.exp(x0)


MU_MAX_TEST5 = 0.128


def test5() -> ProblemDef:
    return ProblemDef(
        name="test5",
        domain=DomainSpec(2, 1, (-1.0, -1.0, 0.0), (1.0, 1.0, MU_MAX_TEST5), inside=_in_disk,
                          slice_values=((0.0,), (MU_MAX_TEST5,))),
        alpha=0.002,
        pde="semilinear",
        desired_state=_test5_desired,
        source=_zero,
        length_factor=lambda point: 1 - point[0] ** 2 - point[1] ** 2,
        boundary_lift=_zero_lift,
        admissible=BoxBounds(-12.0, 12.0),
        sparsity="mu",
        constant_above_box=True,
    )


PROBLEMS: dict[str, Callable[..., ProblemDef]] = {
    "test1": test1,
    "test2": test2,
    "test4": test4,
    "test5": test5,
}


def make_problem(name: str, **overrides) -> ProblemDef:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**overrides)
