"""Alternating adjoint-oriented training and the joint-residual baselines.

:func:`aonn_solve` runs the direct-adjoint loop with three networks: fit the
state network to the state equation, the adjoint network to the adjoint
equation, then regress the control network onto the projected gradient step.
:func:`pinn_solve` and :func:`pinn_projection_solve` minimize a single penalty
loss over all networks jointly.
"""

from __future__ import annotations

import functools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .constraints import BoxBounds, control_step, project, variational_residual
from .jets import DivergenceError, LossDef, NetworkSpec, init_network, loss_gradient, network_jet, \
    network_values, rms
from .optim import OptimOptions, minimize
from .problems import ProblemDef, adjoint_residual, ansatz_data, state_residual, total_derivative
from .sampling import SampleSet

__all__ = [
    "TrainSchedule",
    "IterationRecord",
    "SolutionBundle",
    "init_bundle",
    "evaluate_fields",
    "aonn_solve",
    "pinn_solve",
    "pinn_projection_solve",
    "verification_loss",
    "SEED_OFFSETS",
]

log = logging.getLogger(__name__)

SEED_OFFSETS = {"y": 0, "p": 1, "u": 2, "lambda_a": 3, "lambda_b": 4}


@dataclass(frozen=True)
class TrainSchedule:
    c0: float = 100.0
    gamma: float = 1.0
    n0: int = 500
    n_aug: int = 0
    aug_period: int = 1
    n_iter: int = 50
    # step size for the verification loss; None means "the current step size"
    verify_c: float | None = None
    # "inside" trains the control network every iteration, "after" once after the loop
    control_training: str = "inside"
    post_epochs: int = 0

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.n0 < 0 or self.n_aug < 0 or self.n_iter < 0 or self.aug_period < 1:
            raise ValueError("epoch counts must be non-negative and aug_period positive")
        if self.control_training not in ("inside", "after"):
            raise ValueError("control_training must be 'inside' or 'after'")

    def step_size(self, k: int) -> float:
        return self.c0 * self.gamma ** k

    def epochs(self, k: int) -> int:
        return self.n0 + self.n_aug * (k // self.aug_period)


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    loss_state: float
    loss_adjoint: float
    loss_control: float
    loss_verify: float
    step_size: float
    epochs: int
    err_l2: float = math.nan
    err_linf: float = math.nan
    wall_seconds: float = math.nan


@dataclass
class SolutionBundle:
    problem: str
    specs: dict[str, NetworkSpec]
    params: dict[str, np.ndarray]
    records: list[IterationRecord] = field(default_factory=list)
    method: str = "aonn"
    seeds: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "SolutionBundle":
        return SolutionBundle(self.problem, dict(self.specs), {k: v.copy() for k, v in self.params.items()},
                              list(self.records), self.method, dict(self.seeds))


def init_bundle(problem: ProblemDef, specs: dict[str, NetworkSpec], seed: int, method: str = "aonn",
                names=("y", "p", "u")) -> SolutionBundle:
    specs = {k: specs[k] for k in names}
    for name, spec in specs.items():
        if spec.input_dim != problem.input_dim:
            raise ValueError(f"network {name!r} expects {spec.input_dim} inputs, problem has {problem.input_dim}")
    seeds = {k: seed + SEED_OFFSETS[k] for k in names}
    params = {k: init_network(specs[k], seeds[k]) for k in names}
    return SolutionBundle(problem.name, specs, params, method=method, seeds=seeds)


# -- field evaluation -----------------------------------------------------------


@functools.partial(jax.jit, static_argnums=0)
def _values(spec, flat, points):
    return network_values(spec, flat, points)[:, 0]


def _ansatz_jet(spec: NetworkSpec, flat, points, d: int, ans, lifted: bool = True):
    """Value and Laplacian of ``lift + ell * net``, or of ``ell * net`` when not ``lifted`` (traceable).

    The state carries the Dirichlet data; the adjoint vanishes on the boundary.
    """
    ell, ell_grad, ell_hess, lift, lift_grad, lift_hess = ans
    jet = network_jet(spec, flat, points, d, "laplacian")
    v, g, lap = jet.value[:, 0], jet.grad[:, :, 0], jet.second[:, 0]
    value = ell * v
    laplacian = jnp.trace(ell_hess, axis1=1, axis2=2) * v + 2.0 * jnp.sum(ell_grad * g, axis=1) + ell * lap
    if lifted:
        value = value + lift
        laplacian = laplacian + jnp.trace(lift_hess, axis1=1, axis2=2)
    return value, laplacian


def evaluate_fields(problem: ProblemDef, bundle: SolutionBundle, points, ans=None) -> dict[str, np.ndarray]:
    """Values of the state, adjoint and control approximations at ``points``."""
    points = jnp.asarray(points, dtype=jnp.float64)
    if ans is None:
        ans = ansatz_data(problem, points)
    out = {}
    raw = _values(bundle.specs["y"], jnp.asarray(bundle.params["y"]), points)
    out["y"] = np.asarray(ans.lift + ans.ell * raw)
    raw = _values(bundle.specs["p"], jnp.asarray(bundle.params["p"]), points)
    out["p"] = np.asarray(ans.ell * raw)
    out["u"] = np.asarray(_values(bundle.specs["u"], jnp.asarray(bundle.params["u"]), points))
    return out


# -- training helpers ---------------------------------------------------------


def _train(loss: LossDef, params: np.ndarray, data, epochs: int, opts: OptimOptions,
           deadline: float | None = None) -> tuple[np.ndarray, float]:
    """Run ``epochs`` optimizer iterations in warm-started chunks of ``opts.max_iterations``."""
    x = params

    def evaluator(theta):
        return loss_gradient(loss, theta, data)

    remaining = epochs
    while remaining > 0:
        if deadline is not None and time.perf_counter() >= deadline:
            break
        chunk = replace(opts, max_iterations=min(opts.max_iterations, remaining))
        x, stats = minimize(evaluator, x, chunk)
        remaining -= chunk.max_iterations
        if stats.iterations == 0:
            break
    return x, loss.value(x, data)


@dataclass
class _AonnLosses:
    state: LossDef
    adjoint: LossDef
    control: LossDef


def _aonn_losses(problem: ProblemDef, specs: dict[str, NetworkSpec]) -> _AonnLosses:
    d = problem.spatial_dim

    def state(theta_y, points, ans, u):
        y, lap_y = _ansatz_jet(specs["y"], theta_y, points, d, ans)
        return state_residual(problem, y, lap_y, u, points)

    def adjoint(theta_p, points, ans, y):
        p, lap_p = _ansatz_jet(specs["p"], theta_p, points, d, ans, lifted=False)
        return adjoint_residual(problem, y, p, lap_p, points)

    def control(theta_u, points, target):
        return network_values(specs["u"], theta_u, points)[:, 0] - target

    return _AonnLosses(LossDef(state, "L_s"), LossDef(adjoint, "L_a"), LossDef(control, "L_u"))


def aonn_solve(problem: ProblemDef, sample: SampleSet, schedule: TrainSchedule,
               specs: dict[str, NetworkSpec], seed: int = 0, opts: OptimOptions | None = None,
               monitor: Callable[[SolutionBundle], tuple[float, float]] | None = None,
               bundle: SolutionBundle | None = None) -> SolutionBundle:
    """Adjoint-oriented alternating training; returns networks plus per-iteration history.

    ``monitor(bundle)`` may return ``(err_l2, err_linf)`` to log against a reference.
    A :class:`DivergenceError` raised mid-run carries ``iteration`` and
    ``bundle`` (the last completed state).
    """
    opts = opts or OptimOptions()
    bundle = bundle.copy() if bundle is not None else init_bundle(problem, specs, seed)
    specs = bundle.specs
    losses = _aonn_losses(problem, specs)
    points = jnp.asarray(sample.points)
    ans = tuple(jnp.asarray(a) for a in ansatz_data(problem, sample.points))
    ans_tuple = ansatz_data(problem, sample.points)
    params = bundle.params
    u_vals = np.asarray(_values(specs["u"], jnp.asarray(params["u"]), points))
    start = time.perf_counter()

    for k in range(schedule.n_iter):
        c_k = schedule.step_size(k)
        n_k = schedule.epochs(k)
        try:
            params["y"], l_s = _train(losses.state, params["y"], (points, ans, u_vals), n_k, opts)
            y_vals = evaluate_fields(problem, bundle, points, ans_tuple)["y"]
            params["p"], l_a = _train(losses.adjoint, params["p"], (points, ans, y_vals), n_k, opts)
            p_vals = evaluate_fields(problem, bundle, points, ans_tuple)["p"]
            du_j = total_derivative(problem, y_vals, p_vals, u_vals, points)
            u_step = np.asarray(control_step(u_vals, du_j, c_k, problem.admissible, points))
            if schedule.control_training == "inside":
                params["u"], l_u = _train(losses.control, params["u"], (points, u_step), n_k, opts)
                u_vals = np.asarray(_values(specs["u"], jnp.asarray(params["u"]), points))
            else:
                u_vals, l_u = u_step, 0.0
            c_v = c_k if schedule.verify_c is None else schedule.verify_c
            du_new = total_derivative(problem, y_vals, p_vals, u_vals, points)
            l_v = float(rms(variational_residual(u_vals, du_new, c_v, problem.admissible, points)))
            if not all(math.isfinite(v) for v in (l_s, l_a, l_u, l_v)):
                raise DivergenceError(f"non-finite loss at iteration {k}", iteration=k)
        except DivergenceError as err:
            err.iteration = k
            err.bundle = bundle.copy()
            raise
        errors = monitor(bundle) if monitor is not None else (math.nan, math.nan)
        record = IterationRecord(k, l_s, l_a, l_u, l_v, c_k, n_k, *errors,
                                 wall_seconds=time.perf_counter() - start)
        bundle.records.append(record)
        log.info("iter %d  L_s=%.3e L_a=%.3e L_u=%.3e L_v=%.3e c=%.3g n=%d err=%.3e", k, l_s, l_a, l_u, l_v,
                 c_k, n_k, errors[0])

    if schedule.control_training == "after" and schedule.n_iter > 0:
        epochs = schedule.epochs(schedule.n_iter - 1)
        params["u"], _ = _train(losses.control, params["u"], (points, u_vals), epochs, opts)
        u_vals = np.asarray(_values(specs["u"], jnp.asarray(params["u"]), points))
    if schedule.post_epochs > 0 and schedule.n_iter > 0:
        params["y"], _ = _train(losses.state, params["y"], (points, ans, u_vals), schedule.post_epochs, opts)
        y_vals = evaluate_fields(problem, bundle, points, ans_tuple)["y"]
        params["p"], _ = _train(losses.adjoint, params["p"], (points, ans, y_vals), schedule.post_epochs, opts)
    return bundle


# -- baselines ----------------------------------------------------------------


def _finite_sides(admissible) -> tuple[bool, bool]:
    if not isinstance(admissible, BoxBounds):
        return False, False

    def finite(b):
        return callable(b) or math.isfinite(b)

    return finite(admissible.lower), finite(admissible.upper)


def _joint_layout(specs: dict[str, NetworkSpec], names) -> list[tuple[str, int, int]]:
    layout, offset = [], 0
    for name in names:
        n = specs[name].num_params
        layout.append((name, offset, offset + n))
        offset += n
    return layout


def _joint_solve(problem: ProblemDef, sample: SampleSet, bundle: SolutionBundle, names, residual,
                 weights, epochs: int | None, opts: OptimOptions, time_budget: float | None,
                 monitor=None) -> SolutionBundle:
    layout = _joint_layout(bundle.specs, names)
    loss = LossDef(residual(layout), bundle.method, weights)
    points = jnp.asarray(sample.points)
    ans = tuple(jnp.asarray(a) for a in ansatz_data(problem, sample.points))
    theta = np.concatenate([bundle.params[n] for n in names])
    start = time.perf_counter()
    deadline = None if time_budget is None else start + time_budget
    if epochs is None:
        if time_budget is None:
            raise ValueError("give epochs, a time budget, or both")
        epochs = 10 ** 9
    groups = jax.jit(lambda th, *data: tuple(rms(r) for r in residual(layout)(th, *data)))
    done = 0
    chunk = max(1, opts.max_iterations)
    while done < epochs:
        if deadline is not None and time.perf_counter() >= deadline:
            break
        n = min(chunk, epochs - done)
        theta, _ = _train(loss, theta, (points, ans), n, opts)
        done += n
        # adjoint, state, then all control-related groups
        g = [float(v) for v in groups(theta, points, ans)]
        for name, a, b in layout:
            bundle.params[name] = theta[a:b]
        errors = monitor(bundle) if monitor is not None else (math.nan, math.nan)
        bundle.records.append(IterationRecord(len(bundle.records), g[1], g[0], float(sum(g[2:])), math.nan,
                                              math.nan, done, *errors, wall_seconds=time.perf_counter() - start))
    for name, a, b in layout:
        bundle.params[name] = theta[a:b]
    return bundle


def _split(theta, layout):
    return {name: theta[a:b] for name, a, b in layout}


def pinn_solve(problem: ProblemDef, sample: SampleSet, specs: dict[str, NetworkSpec], seed: int = 0,
               weights: dict[str, float] | None = None, epochs: int | None = 1000,
               opts: OptimOptions | None = None, time_budget: float | None = None,
               bundle: SolutionBundle | None = None, monitor=None) -> SolutionBundle:
    """Joint minimization of the penalized KKT residuals.

    Residual groups, each entering as ``weight * rms``: ``adjoint``, ``state``,
    ``stationarity`` and, for box constraints, ``complementarity_a/b`` and
    ``feasibility_a/b`` hinge terms.  Multipliers are squared network outputs.
    """
    opts = opts or OptimOptions()
    lower_on, upper_on = _finite_sides(problem.admissible)
    names = ["y", "p", "u"] + (["lambda_a"] if lower_on else []) + (["lambda_b"] if upper_on else [])
    if bundle is None:
        full = dict(specs)
        for m in ("lambda_a", "lambda_b"):
            full.setdefault(m, specs["u"])
        bundle = init_bundle(problem, full, seed, method="pinn", names=names)
    else:
        bundle = bundle.copy()
    groups = ["adjoint", "state", "stationarity"]
    if lower_on:
        groups += ["complementarity_a", "feasibility_a"]
    if upper_on:
        groups += ["complementarity_b", "feasibility_b"]
    weights = weights or {}
    w = [float(weights.get(g, 1.0)) for g in groups]
    s = bundle.specs
    d = problem.spatial_dim

    def residual(layout):
        def fn(theta, points, ans):
            parts = _split(theta, layout)
            y, lap_y = _ansatz_jet(s["y"], parts["y"], points, d, ans)
            p, lap_p = _ansatz_jet(s["p"], parts["p"], points, d, ans, lifted=False)
            u = network_values(s["u"], parts["u"], points)[:, 0]
            stat = total_derivative(problem, y, p, u, points)
            out = [adjoint_residual(problem, y, p, lap_p, points), state_residual(problem, y, lap_y, u, points)]
            extra = []
            lo, hi = problem.admissible.evaluate(points) if lower_on or upper_on else (None, None)
            if lower_on:
                la = network_values(s["lambda_a"], parts["lambda_a"], points)[:, 0] ** 2
                stat = stat - la
                extra += [la * (lo - u), jax.nn.relu(lo - u)]
            if upper_on:
                lb = network_values(s["lambda_b"], parts["lambda_b"], points)[:, 0] ** 2
                stat = stat + lb
                extra += [lb * (hi - u), jax.nn.relu(u - hi)]
            return tuple(out + [stat] + extra)
        return fn

    return _joint_solve(problem, sample, bundle, names, residual, w, epochs, opts, time_budget, monitor)


def pinn_projection_solve(problem: ProblemDef, sample: SampleSet, c: float, specs: dict[str, NetworkSpec],
                          seed: int = 0, epochs: int | None = 1000, opts: OptimOptions | None = None,
                          time_budget: float | None = None, bundle: SolutionBundle | None = None,
                          weights: dict[str, float] | None = None, monitor=None) -> SolutionBundle:
    """Joint minimization of adjoint, state and ``u - P(u - c dJ/du)`` residuals, ``c`` fixed."""
    if not c > 0:
        raise ValueError("c must be positive")
    opts = opts or OptimOptions()
    names = ["y", "p", "u"]
    if bundle is None:
        bundle = init_bundle(problem, specs, seed, method="pinn_projection", names=names)
    else:
        bundle = bundle.copy()
        bundle.method = "pinn_projection"
    weights = weights or {}
    w = [float(weights.get(g, 1.0)) for g in ("adjoint", "state", "variational")]
    s = bundle.specs
    d = problem.spatial_dim

    def residual(layout):
        def fn(theta, points, ans):
            parts = _split(theta, layout)
            y, lap_y = _ansatz_jet(s["y"], parts["y"], points, d, ans)
            p, lap_p = _ansatz_jet(s["p"], parts["p"], points, d, ans, lifted=False)
            u = network_values(s["u"], parts["u"], points)[:, 0]
            du_j = total_derivative(problem, y, p, u, points)
            return (adjoint_residual(problem, y, p, lap_p, points),
                    state_residual(problem, y, lap_y, u, points),
                    u - project(problem.admissible, u - c * du_j, points))
        return fn

    return _joint_solve(problem, sample, bundle, names, residual, w, epochs, opts, time_budget, monitor)


def verification_loss(bundle: SolutionBundle, problem: ProblemDef, sample: SampleSet, c: float) -> float:
    """RMS of the variational residual of the bundle's networks over ``sample``."""
    if c < 0:
        raise ValueError("c must be non-negative")
    f = evaluate_fields(problem, bundle, sample.points)
    du_j = total_derivative(problem, f["y"], f["p"], f["u"], sample.points)
    return float(rms(variational_residual(f["u"], du_j, c, problem.admissible, sample.points)))
