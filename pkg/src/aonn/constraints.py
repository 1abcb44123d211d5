"""Admissible control sets, point-wise projections and the projected gradient step.

Everything here is written with ``jax.numpy`` so the same code runs on concrete
arrays and inside traced losses (the PINN+Projection baseline differentiates
through :func:`project`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import jax
import jax.numpy as jnp
import numpy as np

__all__ = [
    "Unconstrained",
    "BoxBounds",
    "BallBound",
    "AdmissibleSpec",
    "project",
    "control_step",
    "variational_residual",
    "is_feasible",
]

Bound = Union[float, Callable]


@dataclass(frozen=True)
class Unconstrained:
    pass


@dataclass(frozen=True)
class BoxBounds:
    """``lower <= u <= upper``; each bound is a constant or a function of the points."""

    lower: Bound = -np.inf
    upper: Bound = np.inf

    def evaluate(self, points):
        lo = self.lower(points) if callable(self.lower) else self.lower
        hi = self.upper(points) if callable(self.upper) else self.upper
        return lo, hi


@dataclass(frozen=True)
class BallBound:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")


AdmissibleSpec = Union[Unconstrained, BoxBounds, BallBound]


def _concrete(*arrays) -> bool:
    return not any(isinstance(a, jax.core.Tracer) for a in arrays)


def project(spec: AdmissibleSpec, values, points):
    """Point-wise projection of ``values`` onto the admissible set at ``points``.

    Box values are ``(n,)``; ball values are ``(n, k)`` vectors.
    """
    if isinstance(spec, Unconstrained):
        return jnp.asarray(values)
    if isinstance(spec, BoxBounds):
        lo, hi = spec.evaluate(points)
        if _concrete(lo, hi) and np.any(np.asarray(lo) > np.asarray(hi)):
            raise ValueError("lower bound exceeds upper bound")
        return jnp.minimum(jnp.maximum(values, lo), hi)
    if isinstance(spec, BallBound):
        values = jnp.asarray(values)
        norm = jnp.linalg.norm(values, axis=-1, keepdims=True)
        safe = jnp.where(norm > spec.radius, norm, spec.radius)
        return values * (spec.radius / safe)
    raise TypeError(f"unknown admissible set {spec!r}")


def control_step(u, du_j, c: float, spec: AdmissibleSpec, points):
    """Projected gradient target ``P(u - c * dJ/du)``."""
    if c < 0:
        raise ValueError("step size must be non-negative")
    if _concrete(u, du_j) and not (np.all(np.isfinite(u)) and np.all(np.isfinite(du_j))):
        raise FloatingPointError("non-finite control or derivative values")
    return project(spec, u - c * du_j, points)


def variational_residual(u, du_j, c: float, spec: AdmissibleSpec, points):
    """``u - P(u - c * dJ/du)``; zero exactly at an optimal control."""
    return u - control_step(u, du_j, c, spec, points)


def is_feasible(spec: AdmissibleSpec, values, points, atol: float = 0.0) -> bool:
    values = np.asarray(values)
    if isinstance(spec, Unconstrained):
        return True
    if isinstance(spec, BoxBounds):
        lo, hi = spec.evaluate(points)
        return bool(np.all(values >= np.asarray(lo) - atol) and np.all(values <= np.asarray(hi) + atol))
    return bool(np.all(np.linalg.norm(values, axis=-1) <= spec.radius + atol))
