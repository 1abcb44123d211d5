"""TOML run configuration: schema, validation and object construction.

Sections and keys (anything else is rejected):

``[problem]``      name, control_lower, control_upper
``[network.y|p|u]`` num_blocks, width
``[schedule]``     c0, gamma, n0, n_aug, aug_period, n_iter, verify_c, control_training, post_epochs
``[sampling]``     n_points, skip, boundary_slice_fraction
``[method]``       name, seed, optimizer, chunk, memory, c1, c2, epochs, time_budget, c, weights
``[output]``       resolution, mu_slices, wall_clock, sweep_mu

A ``[run]`` table is written into manifests for the record and ignored on input.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .driver import TrainSchedule
from .jets import NetworkSpec
from .optim import OptimOptions
from .problems import PROBLEMS, ProblemDef, make_problem

__all__ = ["ConfigError", "DEFAULTS", "load_config", "resolve_config", "build_problem", "build_specs",
           "build_schedule", "build_options", "mu_slices", "manifest_dict"]


class ConfigError(ValueError):
    pass


_NUM = (int, float)
_NETWORK = {"num_blocks": (int, 2), "width": (int, 15)}

# key -> (accepted types, default); a default of None means "unset"
SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {"name": (str, "test1"), "control_lower": (_NUM, None), "control_upper": (_NUM, None)},
    "network.y": _NETWORK,
    "network.p": _NETWORK,
    "network.u": _NETWORK,
    "schedule": {
        "c0": (_NUM, 100.0), "gamma": (_NUM, 1.0), "n0": (int, 500), "n_aug": (int, 0),
        "aug_period": (int, 1), "n_iter": (int, 50), "verify_c": (_NUM, None),
        "control_training": (str, "inside"), "post_epochs": (int, 0),
    },
    "sampling": {"n_points": (int, 4096), "skip": (int, 0), "boundary_slice_fraction": (_NUM, 0.0)},
    "method": {
        "name": (str, "aonn"), "seed": (int, 0), "optimizer": (str, "lbfgs"), "chunk": (int, 100),
        "memory": (int, 20), "c1": (_NUM, 1e-4), "c2": (_NUM, 0.9), "epochs": (int, 1000),
        "time_budget": (_NUM, None), "c": (_NUM, None), "weights": (dict, None),
    },
    "output": {"resolution": (int, 256), "mu_slices": (list, None), "wall_clock": (bool, False),
               "sweep_mu": (list, None)},
}

DEFAULTS = {section: {k: d for k, (_, d) in keys.items() if d is not None} for section, keys in SCHEMA.items()}
METHODS = ("aonn", "pinn", "pinn_projection")


def _flatten(raw: dict[str, Any]) -> dict[str, dict[str, Any]]:
    out = {}
    for section, body in raw.items():
        if section == "run":
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"top-level key {section!r} is not a section")
        if section == "network":
            for name, sub in body.items():
                if not isinstance(sub, dict):
                    raise ConfigError(f"network.{name} must be a table")
                out[f"network.{name}"] = sub
        else:
            out[section] = body
    return out


def resolve_config(raw: dict[str, Any]) -> dict[str, dict[str, Any]]:
    """Validate ``raw`` against the schema and fill defaults (flat ``section -> table`` form)."""
    sections = _flatten(raw)
    resolved = copy.deepcopy(DEFAULTS)
    for section, body in sections.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            types = SCHEMA[section][key][0]
            if isinstance(value, bool) and types is not bool:
                raise ConfigError(f"[{section}] {key} must not be a boolean")
            if not isinstance(value, types):
                raise ConfigError(f"[{section}] {key} has the wrong type ({type(value).__name__})")
            resolved[section][key] = float(value) if types is _NUM else value
    name = resolved["problem"]["name"]
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    if resolved["method"]["name"] not in METHODS:
        raise ConfigError(f"unknown method {resolved['method']['name']!r}; choose from {METHODS}")
    if name != "test4" and {"control_lower", "control_upper"} & resolved["problem"].keys():
        raise ConfigError("control bounds can only be supplied for test4")
    return resolved


def load_config(path) -> dict[str, dict[str, Any]]:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror or err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return resolve_config(raw)


def _wrap(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def build_problem(cfg) -> ProblemDef:
    p = cfg["problem"]
    overrides = {k: p[k] for k in ("control_lower", "control_upper") if k in p}
    return _wrap(make_problem, p["name"], **overrides)


def build_specs(cfg, problem: ProblemDef) -> dict[str, NetworkSpec]:
    return {n: _wrap(problem.network_spec, cfg[f"network.{n}"]["num_blocks"], cfg[f"network.{n}"]["width"])
            for n in ("y", "p", "u")}


def build_schedule(cfg) -> TrainSchedule:
    return _wrap(TrainSchedule, **cfg["schedule"])


def build_options(cfg) -> OptimOptions:
    m = cfg["method"]
    return _wrap(OptimOptions, method=m["optimizer"], max_iterations=m["chunk"],
                 memory=m["memory"], c1=m["c1"], c2=m["c2"])


def mu_slices(cfg, problem: ProblemDef) -> list[list[float]]:
    """Configured output slices, defaulting to the centre of the parameter box."""
    slices = cfg["output"].get("mu_slices")
    if slices is None:
        d = problem.domain
        return [[0.5 * (lo + hi) for lo, hi in zip(d.param_lower, d.param_upper)]]
    out = []
    for mu in slices:
        mu = [mu] if isinstance(mu, _NUM) else list(mu)
        if len(mu) != problem.param_dim or not all(isinstance(v, _NUM) and math.isfinite(v) for v in mu):
            raise ConfigError(f"mu slice {mu!r} needs {problem.param_dim} finite numbers")
        out.append([float(v) for v in mu])
    return out


def manifest_dict(cfg, seeds: dict[str, int], extra: dict[str, Any] | None = None) -> dict[str, Any]:
    """Nested TOML-ready form of a resolved config, plus a ``[run]`` table of derived seeds."""
    nested: dict[str, Any] = {}
    for section, body in cfg.items():
        if section.startswith("network."):
            nested.setdefault("network", {})[section.split(".", 1)[1]] = dict(body)
        else:
            nested[section] = dict(body)
    nested["run"] = {"seeds": dict(seeds), **(extra or {})}
    return nested
