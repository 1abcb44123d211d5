"""Quasi-Monte-Carlo collocation over joint spatio-parametric domains."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import qmc

__all__ = ["DomainSpec", "SampleSet", "GridSet", "qmc_unit_points", "sample_domain", "eval_grid"]

# scipy's unscrambled Sobol generator supports this many dimensions
MAX_QMC_DIMS = 21201
MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class DomainSpec:
    """Joint domain of ``(x, mu)`` points.

    ``inside(points, closed)`` is the indicator.  With ``closed=False`` spatial
    boundaries are excluded (collocation points); with ``closed=True`` they are
    included (evaluation grids).  Parameter coordinates are always tested against
    the closed parameter box.  ``slice_values`` lists the parameter vectors that
    boundary-slice samples are pinned to.
    """

    spatial_dim: int
    param_dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    inside: Callable[[np.ndarray, bool], np.ndarray] | None = None
    slice_values: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        dims = self.spatial_dim + self.param_dim
        if len(self.lower) != dims or len(self.upper) != dims:
            raise ValueError("bounding box must cover every spatial and parameter axis")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("empty bounding box")

    @property
    def dims(self) -> int:
        return self.spatial_dim + self.param_dim

    @property
    def param_lower(self) -> np.ndarray:
        return np.asarray(self.lower[self.spatial_dim:])

    @property
    def param_upper(self) -> np.ndarray:
        return np.asarray(self.upper[self.spatial_dim:])

    def contains(self, points: np.ndarray, closed: bool = False) -> np.ndarray:
        points = np.atleast_2d(points)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        d = self.spatial_dim
        x, mu = points[:, :d], points[:, d:]
        if closed:
            ok = np.all((x >= lo[:d]) & (x <= hi[:d]), axis=1)
        else:
            ok = np.all((x > lo[:d]) & (x < hi[:d]), axis=1)
        ok &= np.all((mu >= lo[d:]) & (mu <= hi[d:]), axis=1)
        if self.inside is not None:
            ok &= self.inside(points, closed)
        return ok


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    spatial_dim: int
    param_dim: int
    seed: int = 0
    # "interior" or "slice" for each point
    tags: np.ndarray = field(default=None, repr=False)
    # bounding-box volume times acceptance rate: a measure estimate of the sampled region
    measure: float = 1.0

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, :self.spatial_dim]

    @property
    def mu(self) -> np.ndarray:
        return self.points[:, self.spatial_dim:]


@dataclass(frozen=True)
class GridSet:
    resolution: tuple[int, ...]
    mu: np.ndarray
    mask: np.ndarray      # boolean, shape == resolution, indexed [i0, i1, ...]
    points: np.ndarray    # in-domain nodes, (n, d + D), C order over the mask
    axes: tuple[np.ndarray, ...]

    @property
    def spatial_dim(self) -> int:
        return len(self.resolution)

    @property
    def param_dim(self) -> int:
        return self.mu.shape[0]


def qmc_unit_points(n: int, dims: int, skip: int = 0) -> np.ndarray:
    """First ``n`` unscrambled Sobol points after dropping ``skip`` leading points."""
    if n < 1 or dims < 1:
        raise ValueError("n and dims must be positive")
    if dims > MAX_QMC_DIMS:
        raise ValueError(f"Sobol direction numbers only cover {MAX_QMC_DIMS} dimensions")
    engine = qmc.Sobol(dims, scramble=False)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance-property warning for n != 2**k
        return engine.random(n)


def _rejection(n: int, skip: int, dims: int, to_points, accept) -> tuple[np.ndarray, float]:
    """Draw QMC chunks, map them with ``to_points`` and keep accepted rows until ``n`` are found."""
    kept = []
    count = 0
    drawn = 0
    chunk = max(1024, 2 * n)
    while count < n:
        cand = to_points(qmc_unit_points(chunk, dims, skip + drawn), drawn)
        drawn += chunk
        cand = cand[accept(cand)]
        kept.append(cand)
        count += cand.shape[0]
        if count / drawn < MIN_ACCEPTANCE and drawn >= 4 / MIN_ACCEPTANCE:
            raise ValueError(f"acceptance rate {count / drawn:.2e} below {MIN_ACCEPTANCE:g}; "
                             "domain looks degenerate")
    return np.concatenate(kept)[:n], count / drawn


def sample_domain(domain: DomainSpec, n: int, skip: int = 0, boundary_slice_fraction: float = 0.0) -> SampleSet:
    """Collocation points: QMC over the bounding box, rejected against the indicator.

    A ``boundary_slice_fraction`` share of the points gets its parameter vector
    pinned (round robin) to ``domain.slice_values``; their spatial coordinates
    come from a separate ``d``-dimensional Sobol stream.
    """
    if not 0.0 <= boundary_slice_fraction < 1.0:
        raise ValueError("boundary_slice_fraction must lie in [0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    n_slice = int(round(boundary_slice_fraction * n))
    if n_slice and not domain.slice_values:
        raise ValueError("domain defines no parameter slices")
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    d = domain.spatial_dim

    def accept(p):
        return domain.contains(p, closed=False)

    interior, rate = _rejection(n - n_slice, skip, domain.dims, lambda u, _: lo + u * (hi - lo), accept)
    parts = [interior]
    tags = ["interior"] * interior.shape[0]
    if n_slice:
        slices = np.asarray(domain.slice_values, dtype=np.float64)

        def pin(u, offset):
            which = (offset + np.arange(u.shape[0])) % slices.shape[0]
            return np.hstack([lo[:d] + u * (hi[:d] - lo[:d]), slices[which]])

        pinned, _ = _rejection(n_slice, skip, d, pin, accept)
        parts.append(pinned)
        tags += ["slice"] * n_slice
    return SampleSet(points=np.vstack(parts), spatial_dim=d, param_dim=domain.param_dim, seed=skip,
                     tags=np.asarray(tags), measure=float(np.prod(hi - lo) * rate))


def eval_grid(domain: DomainSpec, mu, resolution, extrapolate: bool = False) -> GridSet:
    """Uniform tensor grid with inclusive endpoints at fixed ``mu``; out-of-domain nodes masked.

    ``extrapolate=True`` accepts a ``mu`` outside the parameter box (the spatial
    indicator is then evaluated with the parameter box widened to contain it).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    if mu.shape != (domain.param_dim,):
        raise ValueError(f"mu must have {domain.param_dim} entries")
    outside = np.any(mu < domain.param_lower) or np.any(mu > domain.param_upper)
    if outside and not extrapolate:
        raise ValueError(f"mu={mu} outside the parameter box")
    if outside:
        d = domain.spatial_dim
        domain = replace(domain, lower=domain.lower[:d] + tuple(np.minimum(domain.param_lower, mu)),
                         upper=domain.upper[:d] + tuple(np.maximum(domain.param_upper, mu)))
    resolution = tuple(int(r) for r in np.broadcast_to(resolution, (domain.spatial_dim,)))
    if min(resolution) < 2:
        raise ValueError("need at least two nodes per axis")
    axes = tuple(np.linspace(domain.lower[i], domain.upper[i], r) for i, r in enumerate(resolution))
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([m.ravel() for m in mesh], axis=1)
    full = np.hstack([flat, np.broadcast_to(mu, (flat.shape[0], mu.shape[0]))])
    inside = domain.contains(full, closed=True)
    return GridSet(resolution=resolution, mu=mu, mask=inside.reshape(resolution), points=full[inside], axes=axes)
