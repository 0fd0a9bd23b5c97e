"""Deterministic miniature ICS testbed.

A simulated low-cost plant: conveyor and punch process, two remote IOs, a
soft PLC, HMI and SCADA layers, all talking real Modbus/TCP bytes over a
simulated switched network, plus a scripted attack toolkit and analytics.
"""
from .kernel import EventLog, Kernel
from .scenario import (
    ScenarioConfig,
    Testbed,
    bundled_scenario_path,
    bundled_scenarios,
    load_config,
    run_scenario,
    verify_log,
)

__version__ = "0.1.0"

__all__ = [
    "EventLog",
    "Kernel",
    "ScenarioConfig",
    "Testbed",
    "bundled_scenario_path",
    "bundled_scenarios",
    "load_config",
    "run_scenario",
    "verify_log",
    "__version__",
]
