"""Extremum-seeking calibration of a simulated trapped-ion two-qubit gate."""

__version__ = "0.1.0"

from .drb import DrbDesign, DrbEstimate, drb_runtime, run_drb, sample_drb_circuit
from .esc import DEFAULT_KNOBS, TABLE_I_KNOBS, EscKnob, EscSchedule, EscState, esc_iteration, run_esc
from .ion import ControlState, DriftConfig, DriftParam, DriftTrajectory, IonPlant, PhysicalState
from .loop import LoopConfig, grid_search, run_closed_loop, run_offset_demo, suppression_ratio, table_ii_config

__all__ = [
    "ControlState", "DEFAULT_KNOBS", "DriftConfig", "DriftParam", "DriftTrajectory", "DrbDesign",
    "DrbEstimate", "EscKnob", "EscSchedule", "EscState", "IonPlant", "LoopConfig", "PhysicalState",
    "TABLE_I_KNOBS", "drb_runtime", "esc_iteration", "grid_search", "run_closed_loop", "run_drb",
    "run_esc", "run_offset_demo", "sample_drb_circuit", "suppression_ratio", "table_ii_config",
]
