"""Conveyor + punching machine physics.

Kinematic motion in abstract position units: a workpiece travels along the
conveyor between two light barriers while the punch moves vertically between
two limit switches. Driving the punch into the floor latches the damage flag
and freezes all motion until an explicit reset.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

STOP = "stop"
FWD = "fwd"
REV = "rev"
DOWN = "down"
UP = "up"


@dataclass(frozen=True)
class ProcessConfig:
    conveyor_length: float = 100.0
    belt_speed: float = 20.0  # units/s
    barrier_a_pos: float = 5.0  # origin end
    barrier_b_pos: float = 95.0  # punch end
    barrier_window: float = 2.0
    punch_travel: float = 100.0
    punch_speed: float = 50.0  # units/s
    upper_switch_at: float = 95.0  # limit_upper true when z >= this
    lower_switch_at: float = 5.0  # limit_lower true when z <= this
    tick_us: int = 10_000

    def validate(self):
        if not 0 <= self.barrier_a_pos <= self.conveyor_length:
            raise ValueError("barrier_a_pos outside conveyor")
        if not 0 <= self.barrier_b_pos <= self.conveyor_length:
            raise ValueError("barrier_b_pos outside conveyor")
        if self.belt_speed <= 0 or self.punch_speed <= 0:
            raise ValueError("speeds must be positive")
        if self.tick_us <= 0:
            raise ValueError("tick must be positive")


@dataclass
class ProcessState:
    x: float = 5.0  # workpiece position
    z: float = 100.0  # punch position, 0 = floor
    conveyor_cmd: str = STOP
    punch_cmd: str = STOP
    workpiece_present: bool = True
    damaged: bool = False
    damage_reason: str = ""
    # sensor overrides: name -> (forced value, expiry in us)
    forced_sensors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SensorReadout:
    barrier_a: bool
    barrier_b: bool
    limit_upper: bool
    limit_lower: bool


def step(state: ProcessState, config: ProcessConfig, dt_us: int) -> ProcessState:
    """Advance the process by dt. Commands are ignored once damaged."""
    if dt_us <= 0:
        raise ValueError("dt must be positive")
    state = replace(state)
    if state.damaged:
        return state
    # multiply before dividing so motion on the tick grid stays exact
    dx = config.belt_speed * dt_us / 1_000_000.0
    dz = config.punch_speed * dt_us / 1_000_000.0
    if state.conveyor_cmd == FWD:
        state.x += dx
    elif state.conveyor_cmd == REV:
        state.x -= dx
    state.x = min(max(state.x, 0.0), config.conveyor_length)

    if state.punch_cmd == DOWN:
        z = state.z - dz
        if z < 0.0:
            state.z = 0.0
            state.damaged = True
            state.damage_reason = "punch crash"
        else:
            state.z = z
    elif state.punch_cmd == UP:
        state.z = min(state.z + dz, config.punch_travel)
    return state


def read_sensors(
    state: ProcessState, config: ProcessConfig, now_us: int = 0
) -> SensorReadout:
    """Pure sensor readout; honours force_sensor overrides until they expire."""
    values = {
        "barrier_a": state.workpiece_present
        and abs(state.x - config.barrier_a_pos) <= config.barrier_window,
        "barrier_b": state.workpiece_present
        and abs(state.x - config.barrier_b_pos) <= config.barrier_window,
        "limit_upper": state.z >= config.upper_switch_at,
        "limit_lower": state.z <= config.lower_switch_at,
    }
    for name, (forced, until_us) in state.forced_sensors.items():
        if now_us < until_us:
            values[name] = forced
    return SensorReadout(**values)


COMPONENTS = ("conveyor", "punch", "workpiece")
SENSORS = ("barrier_a", "barrier_b", "limit_upper", "limit_lower")


def inject_physical(
    state: ProcessState, action: str, now_us: int = 0, **kwargs
) -> ProcessState:
    """Apply a physical-world intervention (the level-0 attack surface)."""
    state = replace(state)
    if action == "remove_workpiece":
        state.workpiece_present = False
    elif action == "place_workpiece":
        state.workpiece_present = True
        state.x = kwargs.get("x", 5.0)
    elif action == "force_sensor":
        sensor = kwargs["sensor"]
        if sensor not in SENSORS:
            raise ValueError(f"unknown sensor {sensor!r}")
        duration_us = int(kwargs["duration_us"])
        state.forced_sensors = dict(state.forced_sensors)
        state.forced_sensors[sensor] = (bool(kwargs["value"]), now_us + duration_us)
    elif action == "destroy":
        component = kwargs["component"]
        if component not in COMPONENTS:
            raise ValueError(f"unknown component {component!r}")
        state.damaged = True
        state.damage_reason = f"destroyed: {component}"
    else:
        raise ValueError(f"unknown physical action {action!r}")
    return state


def reset_process(state: ProcessState) -> ProcessState:
    """Clear the damage latch and restore the rest position."""
    return ProcessState(workpiece_present=state.workpiece_present)
