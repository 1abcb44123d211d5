"""Residual sinusoid networks with exact spatial jets.

A network maps the augmented input ``(x, mu)`` to ``output_dim`` values.  An
optional fixed affine map ``(z - input_offset) * input_scale`` is applied to the
input first (used to bring parameter ranges to ``[-1, 1]``; it has no trainable
parameters).  Each
residual block is ``h <- skip(h) + sin(Dense(sin(Dense(h))))``; the first block maps
``input_dim -> width`` directly and its skip zero-pads the input, so the block
stack carries no extra embedding parameters.  A final linear layer produces the
output.

Spatial derivatives (with respect to the first ``d`` input coordinates only) are
pushed forward layer by layer as Taylor jets.  Parameter gradients come from a
reverse sweep over that jet computation (``jax.value_and_grad``).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import jax
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

__all__ = [
    "NetworkSpec",
    "JetBatch",
    "Jet",
    "DivergenceError",
    "LossDef",
    "init_network",
    "unflatten",
    "network_jet",
    "network_values",
    "forward_jets",
    "loss_gradient",
    "rms",
]


class DivergenceError(FloatingPointError):
    """Raised when a loss or residual evaluates to a non-finite number."""

    def __init__(self, message: str, point_index: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.point_index = point_index
        self.iteration = iteration


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    output_dim: int = 1
    num_blocks: int = 2
    width: int = 15
    input_offset: tuple[float, ...] | None = None
    input_scale: tuple[float, ...] | None = None

    def __post_init__(self):
        if min(self.input_dim, self.output_dim, self.num_blocks, self.width) < 1:
            raise ValueError(f"all NetworkSpec fields must be positive: {self}")
        if self.input_dim > self.width:
            raise ValueError("input_dim larger than width cannot use the zero-padded skip")
        for name in ("input_offset", "input_scale"):
            v = getattr(self, name)
            if v is not None and len(v) != self.input_dim:
                raise ValueError(f"{name} needs {self.input_dim} entries")
        if self.input_scale is not None and not all(np.isfinite(self.input_scale)):
            raise ValueError("input_scale must be finite")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.width
        shapes = [(self.input_dim, w)]
        shapes += [(w, w)] * (2 * self.num_blocks - 1)
        shapes.append((w, self.output_dim))
        return shapes

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)


def unflatten(spec: NetworkSpec, flat) -> list[tuple]:
    """Split a flat parameter vector into ``(weight, bias)`` pairs, row-major weights."""
    if flat.shape != (spec.num_params,):
        raise ValueError(f"expected {spec.num_params} parameters, got shape {flat.shape}")
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        n_w = fan_in * fan_out
        weight = flat[offset:offset + n_w].reshape(fan_in, fan_out)
        offset += n_w
        bias = flat[offset:offset + fan_out]
        offset += fan_out
        layers.append((weight, bias))
    return layers


def init_network(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Uniform initialization in +-sqrt(6/fan_in) for weights, +-1/sqrt(fan_in) for biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes:
        limit = np.sqrt(6.0 / fan_in)
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(rng.uniform(-1.0, 1.0, size=fan_out) / np.sqrt(fan_in))
    return np.concatenate(chunks).astype(np.float64)


class Jet(NamedTuple):
    """Value, spatial gradient and second-order part of a batch of vectors.

    ``value`` is ``(n, k)``, ``grad`` is ``(n, d, k)``.  ``second`` is either the
    Laplacian ``(n, k)`` or the full Hessian ``(n, d, d, k)`` depending on mode.
    """

    value: jnp.ndarray
    grad: jnp.ndarray | None
    second: jnp.ndarray | None


def _dense(jet: Jet, weight, bias) -> Jet:
    value = jet.value @ weight + bias
    grad = None if jet.grad is None else jet.grad @ weight
    second = None if jet.second is None else jet.second @ weight
    return Jet(value, grad, second)


def _sin(jet: Jet, hessian: bool) -> Jet:
    s = jnp.sin(jet.value)
    if jet.grad is None:
        return Jet(s, None, None)
    c = jnp.cos(jet.value)
    grad = c[:, None, :] * jet.grad
    if jet.second is None:
        return Jet(s, grad, None)
    if hessian:
        outer = jet.grad[:, :, None, :] * jet.grad[:, None, :, :]
        second = c[:, None, None, :] * jet.second - s[:, None, None, :] * outer
    else:
        second = c * jet.second - s * jnp.sum(jet.grad * jet.grad, axis=1)
    return Jet(s, grad, second)


def _pad(jet: Jet, width: int) -> Jet:
    extra = width - jet.value.shape[-1]
    if extra == 0:
        return jet

    def pad(a):
        return None if a is None else jnp.concatenate(
            [a, jnp.zeros(a.shape[:-1] + (extra,), dtype=a.dtype)], axis=-1)

    return Jet(pad(jet.value), pad(jet.grad), pad(jet.second))


def _add(a: Jet, b: Jet) -> Jet:
    def add(u, v):
        return None if u is None else u + v

    return Jet(a.value + b.value, add(a.grad, b.grad), add(a.second, b.second))


def _input_jet(spec: NetworkSpec, points, spatial_dim: int, order: str) -> Jet:
    n, k = points.shape
    if spec.input_offset is not None:
        points = points - jnp.asarray(spec.input_offset, dtype=points.dtype)
    seed = jnp.eye(spatial_dim, k, dtype=points.dtype)
    if spec.input_scale is not None:
        scale = jnp.asarray(spec.input_scale, dtype=points.dtype)
        points = points * scale
        seed = seed * scale
    if order == "value":
        return Jet(points, None, None)
    grad = jnp.broadcast_to(seed, (n, spatial_dim, k))
    if order == "grad":
        return Jet(points, grad, None)
    if order == "laplacian":
        return Jet(points, grad, jnp.zeros_like(points))
    if order == "hessian":
        return Jet(points, grad, jnp.zeros((n, spatial_dim, spatial_dim, k), points.dtype))
    raise ValueError(f"unknown jet order {order!r}")


def network_jet(spec: NetworkSpec, flat, points, spatial_dim: int, order: str = "laplacian") -> Jet:
    """Push a jet of the requested ``order`` through the network (traceable by jax).

    ``order`` is one of ``"value"``, ``"grad"``, ``"laplacian"``, ``"hessian"``.
    """
    layers = unflatten(spec, flat)
    hessian = order == "hessian"
    h = _input_jet(spec, points, spatial_dim, order)
    for b in range(spec.num_blocks):
        inner = _sin(_dense(h, *layers[2 * b]), hessian)
        branch = _sin(_dense(inner, *layers[2 * b + 1]), hessian)
        h = _add(_pad(h, spec.width) if b == 0 else h, branch)
    return _dense(h, *layers[-1])


def network_values(spec: NetworkSpec, flat, points):
    return network_jet(spec, flat, points, 0, "value").value


@dataclass(frozen=True)
class JetBatch:
    values: np.ndarray        # (n, m)
    spatial_grad: np.ndarray  # (n, m, d)
    spatial_hess: np.ndarray  # (n, m, d, d)

    @property
    def laplacian(self) -> np.ndarray:
        return np.trace(self.spatial_hess, axis1=2, axis2=3)


@functools.partial(jax.jit, static_argnums=(0, 3))
def _hessian_jets(spec, flat, points, spatial_dim):
    return network_jet(spec, flat, points, spatial_dim, "hessian")


def forward_jets(spec: NetworkSpec, params, batch, spatial_dim: int | None = None) -> JetBatch:
    """Exact value, spatial gradient and spatial Hessian of the network at each point.

    ``batch`` is a :class:`~aonn.sampling.SampleSet` or a raw ``(n, input_dim)``
    array, in which case ``spatial_dim`` is required.
    """
    points = getattr(batch, "points", batch)
    if spatial_dim is None:
        spatial_dim = batch.spatial_dim
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != spec.input_dim:
        raise ValueError(f"points of shape {points.shape} do not match input_dim={spec.input_dim}")
    if not 0 < spatial_dim <= spec.input_dim:
        raise ValueError(f"spatial_dim={spatial_dim} outside 1..{spec.input_dim}")
    jet = _hessian_jets(spec, jnp.asarray(params), jnp.asarray(points), spatial_dim)
    return JetBatch(
        values=np.asarray(jet.value),
        spatial_grad=np.moveaxis(np.asarray(jet.grad), 1, 2),
        spatial_hess=np.moveaxis(np.asarray(jet.second), 3, 1),
    )


def rms(r):
    return jnp.sqrt(jnp.mean(r * r))


def _as_groups(r):
    return r if isinstance(r, tuple) else (r,)


class LossDef:
    """Root-mean-square loss of point-wise residuals built from network jets.

    ``residual(params, *data)`` returns a per-point residual vector, or a tuple
    of them; the loss is then ``sum_i weights[i] * rms(group_i)``.  ``params`` is
    the flat vector being trained and ``data`` holds everything treated as
    constant (points, frozen fields of the other networks).  The compiled
    value-and-gradient function is cached on the instance, so reusing one
    ``LossDef`` with fresh ``data`` arrays does not recompile.
    """

    def __init__(self, residual: Callable, name: str = "loss", weights: Sequence[float] | None = None):
        self.residual = residual
        self.name = name
        self.weights = None if weights is None else tuple(float(w) for w in weights)

        def scalar(p, *data):
            groups = _as_groups(residual(p, *data))
            w = self.weights or (1.0,) * len(groups)
            if len(w) != len(groups):
                raise ValueError(f"{len(groups)} residual groups but {len(w)} weights")
            total = 0.0
            for wi, r in zip(w, groups):
                total = total + wi * rms(r)
            return total

        self._scalar = jax.jit(scalar)
        self._value_and_grad = jax.jit(jax.value_and_grad(scalar))
        self._residual = jax.jit(lambda p, *data: jnp.concatenate(
            [jnp.ravel(r) for r in _as_groups(residual(p, *data))]))

    def value(self, params, data: Sequence) -> float:
        return float(self._scalar(params, *data))

    def value_and_grad(self, params, data: Sequence) -> tuple[float, np.ndarray]:
        value, grad = self._value_and_grad(params, *data)
        return float(value), np.asarray(grad)

    def residuals(self, params, data: Sequence) -> np.ndarray:
        """All residual groups concatenated, for diagnostics."""
        return np.asarray(self._residual(params, *data))


def loss_gradient(loss: LossDef, params, data: Sequence) -> tuple[float, np.ndarray]:
    """Loss value and exact parameter gradient; non-finite values raise DivergenceError."""
    value, grad = loss.value_and_grad(params, data)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        r = loss.residuals(params, data)
        bad = np.flatnonzero(~np.isfinite(r))
        index = int(bad[0]) if bad.size else None
        raise DivergenceError(f"{loss.name} is not finite (first bad point: {index})", point_index=index)
    return value, grad
