"""Greedy server on the real line: potential engine, point-field oracle,
block diagnostics and ensemble experiments."""

__version__ = "0.1.0"

from .potential import BaselineSpec, Potential, center, make_initial, translate  # noqa: E402
from .dynamics import (  # noqa: E402
    DriveStream,
    DriveTriple,
    SimConfig,
    StepOutcome,
    Trajectory,
    Walker,
    run_walk,
    shift_window,
    step_general,
    step_unit,
)

__all__ = [
    "BaselineSpec", "Potential", "center", "make_initial", "translate",
    "DriveStream", "DriveTriple", "SimConfig", "StepOutcome", "Trajectory",
    "Walker", "run_walk", "shift_window", "step_general", "step_unit",
]
