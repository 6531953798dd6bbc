"""Piecewise-constant ("stepwise") optimal control with derivative-free
optimizers, plus a forward-backward sweep baseline."""

__version__ = "0.1.0"

from .ode import IntegrationDiverged, TimeGrid, Trajectory, integrate  # noqa: E402
from .schedule import ControlSchedule, decode, encode  # noqa: E402
from .problems import (OcpProblem, StepwiseObjective, builtin,  # noqa: E402
                       evaluate_cost, to_minimized)
from .pmp import fbs  # noqa: E402
from .optim import OptimizerConfig, grid_oracle, multi_restart  # noqa: E402

__all__ = [
    "ControlSchedule", "IntegrationDiverged", "OcpProblem", "OptimizerConfig",
    "StepwiseObjective", "TimeGrid", "Trajectory", "builtin", "decode", "encode",
    "evaluate_cost", "fbs", "grid_oracle", "integrate", "multi_restart",
    "to_minimized",
]
