"""Error metrics, sparsity profiles and file outputs.

Every number written to disk uses 17 significant digits so 64-bit values
round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import tomli_w

from .driver import IterationRecord, SolutionBundle, evaluate_fields
from .jets import NetworkSpec
from .problems import ProblemDef, analytic_solution
from .sampling import GridSet, eval_grid

__all__ = [
    "LOG_COLUMNS",
    "relative_errors",
    "sparsity_profile",
    "format_number",
    "write_iteration_log",
    "write_field_dump",
    "write_manifest",
    "write_outputs",
    "save_params",
    "load_params",
    "save_bundle",
    "load_bundle_params",
]

LOG_COLUMNS = tuple(f.name for f in fields(IterationRecord))
PARAMS_MAGIC = "aonn-params 1"
DEFAULT_SPARSITY_THRESHOLD = 0.12


def format_number(v: float) -> str:
    return "%.17g" % v


def _grid(problem: ProblemDef, mu, resolution, extrapolate: bool = False) -> GridSet:
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if problem.constant_above_box and mu.size:
        # exact: the solution above the box equals the one on its upper face
        mu = np.minimum(mu, problem.domain.param_upper)
    return eval_grid(problem.domain, mu, resolution, extrapolate)


def relative_errors(bundle: SolutionBundle, problem: ProblemDef, mu=(), resolution: int = 256
                    ) -> dict[str, tuple[float, float]]:
    """``(l2_rel, linf_rel)`` of y, p and u against the closed-form optimum at fixed ``mu``.

    The l2 norm is a plain root-sum-square over the in-domain grid nodes and the
    sup-norm error is normalized by the sup norm of the exact field.
    """
    if problem.analytic is None:
        raise ValueError(f"problem {problem.name!r} has no analytic solution")
    grid = _grid(problem, mu, resolution)
    approx = evaluate_fields(problem, bundle, grid.points)
    y_star, u_star, p_star = analytic_solution(problem, grid.points)
    out = {}
    for name, exact in (("y", y_star), ("p", p_star), ("u", u_star)):
        diff = approx[name] - exact
        out[name] = (float(np.linalg.norm(diff) / np.linalg.norm(exact)),
                     float(np.max(np.abs(diff)) / np.max(np.abs(exact))))
    return out


def sparsity_profile(bundle: SolutionBundle, problem: ProblemDef, mu_list: Iterable,
                     threshold: float = DEFAULT_SPARSITY_THRESHOLD, resolution: int = 256,
                     extrapolate: bool = False) -> list[tuple[float, float]]:
    """Per ``mu``: fraction of in-domain grid nodes with ``|u| > threshold`` and ``max |u|``.

    ``extrapolate`` allows ``mu`` values beyond the trained parameter box.  For
    problems flagged ``constant_above_box`` such values are first clamped to the
    box, which is exact there, so no extrapolation takes place.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    profile = []
    for mu in mu_list:
        grid = _grid(problem, mu, resolution, extrapolate)
        u = evaluate_fields(problem, bundle, grid.points)["u"]
        profile.append((float(np.mean(np.abs(u) > threshold)), float(np.max(np.abs(u)))))
    return profile


# -- text outputs ---------------------------------------------------------------


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err


def write_iteration_log(records: Sequence[IterationRecord], path, wall_clock: bool = False) -> Path:
    """CSV of the iteration history.

    Wall times vary between runs, so unless ``wall_clock`` is set the column is
    written as ``nan`` and the log stays byte-identical across repeated solves.
    """
    lines = [",".join(LOG_COLUMNS)]
    for r in records:
        row = []
        for name in LOG_COLUMNS:
            v = getattr(r, name)
            if name == "wall_seconds" and not wall_clock:
                v = math.nan
            row.append(str(v) if isinstance(v, int) else format_number(v))
        lines.append(",".join(row))
    path = Path(path)
    _write_text(path, "\n".join(lines) + "\n")
    return path


def write_field_dump(bundle: SolutionBundle, problem: ProblemDef, mu, resolution: int, path) -> Path:
    grid = _grid(problem, mu, resolution)
    f = evaluate_fields(problem, bundle, grid.points)
    d, m = problem.spatial_dim, problem.param_dim
    header = [f"x{i}" for i in range(d)] + [f"mu{j}" for j in range(m)] + ["y", "p", "u"]
    table = np.column_stack([grid.points, f["y"], f["p"], f["u"]])
    body = "\n".join(",".join(format_number(v) for v in row) for row in table.tolist())
    path = Path(path)
    _write_text(path, ",".join(header) + "\n" + body + ("\n" if len(table) else ""))
    return path


def write_manifest(manifest: dict[str, Any], path) -> Path:
    path = Path(path)
    _write_text(path, tomli_w.dumps(manifest))
    return path


def _slice_name(mu) -> str:
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.size == 0:
        return "fields.csv"
    return "fields_mu_" + "_".join(format_number(v) for v in mu) + ".csv"


def write_outputs(bundle: SolutionBundle, problem: ProblemDef, out_dir, manifest: dict[str, Any],
                  mu_slices: Sequence = ((),), resolution: int = 256, wall_clock: bool = False) -> list[Path]:
    """Iteration log, one field dump per ``mu`` slice, the manifest and saved parameters."""
    out = Path(out_dir)
    written = [write_iteration_log(bundle.records, out / "iterations.csv", wall_clock)]
    for mu in mu_slices:
        written.append(write_field_dump(bundle, problem, mu, resolution, out / _slice_name(mu)))
    if not wall_clock:
        timings = ["iter,wall_seconds"] + [f"{r.iter},{format_number(r.wall_seconds)}" for r in bundle.records]
        _write_text(out / "timings.csv", "\n".join(timings) + "\n")
    written.append(write_manifest(manifest, out / "manifest.toml"))
    written += save_bundle(bundle, out)
    return written


# -- parameter files -------------------------------------------------------------


def save_params(spec: NetworkSpec, params: np.ndarray, path) -> Path:
    """Text header (spec, element count, byte order) followed by raw little-endian float64 values."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (spec.num_params,):
        raise ValueError(f"expected {spec.num_params} parameters, got {params.shape}")
    header = (f"{PARAMS_MAGIC}\ninput_dim={spec.input_dim}\noutput_dim={spec.output_dim}\n"
              f"num_blocks={spec.num_blocks}\nwidth={spec.width}\n")
    for name in ("input_offset", "input_scale"):
        values = getattr(spec, name)
        if values is not None:
            header += f"{name}={','.join(format_number(v) for v in values)}\n"
    header += f"count={params.size}\ndtype=float64-le\nend\n"
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(params.astype("<f8").tobytes())
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err
    return path


def load_params(path) -> tuple[NetworkSpec, np.ndarray]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise OSError(f"cannot read {path}: {err.strerror or err}") from err
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(PARAMS_MAGIC.encode()) or cut < 0:
        raise ValueError(f"{path} is not a parameter file")
    meta = dict(line.split("=", 1) for line in raw[:cut].decode("ascii").splitlines()[1:])
    def floats(key):
        return tuple(float(v) for v in meta[key].split(",")) if key in meta else None

    spec = NetworkSpec(int(meta["input_dim"]), int(meta["output_dim"]), int(meta["num_blocks"]),
                       int(meta["width"]), floats("input_offset"), floats("input_scale"))
    values = np.frombuffer(raw[cut + len(marker):], dtype="<f8").astype(np.float64)
    if values.size != int(meta["count"]) or values.size != spec.num_params:
        raise ValueError(f"{path}: expected {meta['count']} values, found {values.size}")
    return spec, values


def save_bundle(bundle: SolutionBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    return [save_params(bundle.specs[n], bundle.params[n], out / f"net_{n}.bin") for n in bundle.params]


def load_bundle_params(out_dir, names: Iterable[str] = ("y", "p", "u")
                       ) -> tuple[dict[str, NetworkSpec], dict[str, np.ndarray]]:
    specs, params = {}, {}
    for n in names:
        specs[n], params[n] = load_params(Path(out_dir) / f"net_{n}.bin")
    return specs, params
