"""Adjoint-oriented neural networks for parametric PDE-constrained optimal control."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

from .constraints import BallBound, BoxBounds, Unconstrained, control_step, project, variational_residual
from .driver import SolutionBundle, TrainSchedule, aonn_solve, pinn_projection_solve, pinn_solve, verification_loss
from .jets import NetworkSpec, forward_jets, init_network
from .optim import OptimOptions, minimize
from .problems import make_problem
from .report import relative_errors, sparsity_profile, write_outputs
from .sampling import DomainSpec, eval_grid, sample_domain

__all__ = [
    "BallBound", "BoxBounds", "Unconstrained", "control_step", "project", "variational_residual",
    "SolutionBundle", "TrainSchedule", "aonn_solve", "pinn_projection_solve", "pinn_solve", "verification_loss",
    "NetworkSpec", "forward_jets", "init_network", "OptimOptions", "minimize", "make_problem",
    "relative_errors", "sparsity_profile", "write_outputs", "DomainSpec", "eval_grid", "sample_domain",
]
