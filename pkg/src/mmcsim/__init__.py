"""Simulation and adaptive control of a single-phase modular multilevel converter leg."""

from .controller import (AdaptiveController, ControllerGains, ReferenceMode,
                         ReferenceSchedule)
from .exceptions import (ConfigurationError, DivergedSimulationError,
                         InfeasibleOperatingPointError, InvalidInputError, MMCError,
                         ZeroResistanceError)
from .params import (AverageState, ConverterParams, FullState, SwitchCommand,
                     table1_params, table2_params)
from .simulation import (Scenario, Trace, run_closed_loop, run_open_loop, run_oracle,
                         seeded_gate_sequence)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveController", "AverageState", "ConfigurationError", "ControllerGains",
    "ConverterParams", "DivergedSimulationError", "FullState", "InfeasibleOperatingPointError",
    "InvalidInputError", "MMCError", "ReferenceMode", "ReferenceSchedule", "Scenario",
    "SwitchCommand", "Trace", "ZeroResistanceError", "run_closed_loop", "run_open_loop",
    "run_oracle", "seeded_gate_sequence", "table1_params", "table2_params",
]
