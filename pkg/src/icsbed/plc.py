"""Virtual PLC: 100 ms IO poll loop, six-state program, Modbus server, watchdog.

The program drives one workpiece cycle: wait for an order, convey the piece
to the punch, punch down to the lower limit, back up to the upper limit,
convey home. Any stage timeout, watchdog trip or emergency stop lands in the
error state, which only an operator reset leaves.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import modbus
from .devices import IO1_IP, IO2_IP
from .kernel import MS, SECOND, SleepUntil
from .netfabric import Fabric, Host
from .process import SensorReadout

PLC_IP = "192.168.0.30"

# program states
INITIALIZE = 1
GOODS_TO_PUNCH = 2
PUNCH_DOWN = 3
PUNCH_UP = 4
GOODS_TO_ORIGIN = 5
ERROR = 6

STATE_NAMES = {
    INITIALIZE: "Initialize",
    GOODS_TO_PUNCH: "Goods to punching machine",
    PUNCH_DOWN: "Punching machine down",
    PUNCH_UP: "Punching machine up",
    GOODS_TO_ORIGIN: "Goods to origin position",
    ERROR: "Error state",
}

# the only legal transitions (self-loops implied)
STATE_GRAPH = {
    (INITIALIZE, GOODS_TO_PUNCH),
    (GOODS_TO_PUNCH, PUNCH_DOWN),
    (PUNCH_DOWN, PUNCH_UP),
    (PUNCH_UP, GOODS_TO_ORIGIN),
    (GOODS_TO_ORIGIN, INITIALIZE),
    (INITIALIZE, ERROR),
    (GOODS_TO_PUNCH, ERROR),
    (PUNCH_DOWN, ERROR),
    (PUNCH_UP, ERROR),
    (GOODS_TO_ORIGIN, ERROR),
    (ERROR, INITIALIZE),
}

# error codes in holding register 3
ERR_NONE = 0
ERR_IO_TIMEOUT = 1
ERR_ESTOP = 2
ERR_STAGE_TIMEOUT = 3

# coil layout
COIL_START_ORDER = 0
COIL_RESET = 1
COIL_ESTOP = 2
COIL_MANUAL = 3
COIL_MAN_CONV_FWD = 4
COIL_MAN_CONV_REV = 5
COIL_MAN_PUNCH_DOWN = 6
COIL_MAN_PUNCH_UP = 7

# holding register layout
REG_STATE = 0
REG_ORDER_COUNT = 1
REG_CYCLE_COUNT = 2
REG_ERROR_CODE = 3
REG_DAMAGED = 4


@dataclass(frozen=True)
class TimingConfig:
    io_poll_us: int = 100 * MS
    hmi_poll_us: int = 500 * MS
    scada_poll_us: int = 1000 * MS
    stage_timeout_us: int = 10 * SECOND
    watchdog_misses: int = 3
    response_timeout_us: int = 250 * MS

    def validate(self):
        for name in ("io_poll_us", "hmi_poll_us", "scada_poll_us",
                     "stage_timeout_us", "response_timeout_us"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.watchdog_misses <= 0:
            raise ValueError("watchdog_misses must be positive")
        if self.stage_timeout_us <= self.io_poll_us:
            raise ValueError("stage_timeout must exceed io_poll period")


@dataclass(frozen=True)
class CommandCoils:
    start_order: bool = False
    reset: bool = False
    estop: bool = False
    manual_mode: bool = False


def state_transition(current: int, sensors: SensorReadout, commands: CommandCoils,
                     stage_timed_out: bool = False) -> int:
    """Pure transition function of the six-state program."""
    if commands.estop and current != ERROR:
        return ERROR
    if current == ERROR:
        return INITIALIZE if commands.reset else ERROR
    if stage_timed_out and current in (GOODS_TO_PUNCH, PUNCH_DOWN, PUNCH_UP,
                                       GOODS_TO_ORIGIN):
        return ERROR
    if commands.manual_mode:
        return current  # manual mode suspends automatic transitions
    if current == INITIALIZE:
        if commands.start_order and sensors.barrier_a and sensors.limit_upper:
            return GOODS_TO_PUNCH
        return current
    if current == GOODS_TO_PUNCH:
        return PUNCH_DOWN if sensors.barrier_b else current
    if current == PUNCH_DOWN:
        return PUNCH_UP if sensors.limit_lower else current
    if current == PUNCH_UP:
        return GOODS_TO_ORIGIN if sensors.limit_upper else current
    if current == GOODS_TO_ORIGIN:
        return INITIALIZE if sensors.barrier_a else current
    return current


def actuator_pattern(state: int, coils) -> tuple:
    """(io1 fwd, io1 rev, io2 down, io2 up) written every poll."""
    if coils[COIL_MANUAL] and state != ERROR:
        return (coils[COIL_MAN_CONV_FWD], coils[COIL_MAN_CONV_REV],
                coils[COIL_MAN_PUNCH_DOWN], coils[COIL_MAN_PUNCH_UP])
    return {
        GOODS_TO_PUNCH: (True, False, False, False),
        GOODS_TO_ORIGIN: (False, True, False, False),
        PUNCH_DOWN: (False, False, True, False),
        PUNCH_UP: (False, False, False, True),
    }.get(state, (False, False, False, False))


class PlcRuntime:
    def __init__(self, fabric: Fabric, timing: TimingConfig | None = None,
                 start_offset_us: int = 10 * MS):
        self.timing = timing or TimingConfig()
        self.timing.validate()
        self.fabric = fabric
        self.kernel = fabric.kernel
        self.start_offset_us = start_offset_us
        self.host = Host(fabric, "plc", PLC_IP, "plc")
        self.bank = modbus.RegisterBank(
            coils=8,
            discrete_inputs=4,
            holding_registers=5,
            identity=modbus.DeviceIdentity("icsbed", "soft-plc", "1.0"),
            # status registers are read-only from the network
            supported_functions={
                modbus.READ_COILS,
                modbus.READ_DISCRETE_INPUTS,
                modbus.READ_HOLDING_REGISTERS,
                modbus.WRITE_SINGLE_COIL,
                modbus.WRITE_MULTIPLE_COILS,
                modbus.ENCAP_INTERFACE_TRANSPORT,
            },
        )
        self.host.server_banks[1] = self.bank
        self.host.server_handler = self.serve_request
        fabric.attach(self.host)

        self.state = INITIALIZE
        self.state_entered_us = 0
        self.order_count = 0
        self.cycle_count = 0
        self.error_code = ERR_NONE
        self.sensors = SensorReadout(False, False, False, False)
        self.damaged = False
        self.misses = {IO1_IP: 0, IO2_IP: 0}
        self.state_sequence = [INITIALIZE]
        self._sync_registers()

    def start(self):
        self.kernel.spawn(self._loop())

    def serve_request(self, pdu):
        return modbus.execute_request(self.bank, pdu)

    # -- poll loop -----------------------------------------------------------

    def _loop(self):
        next_at = self.start_offset_us
        while True:
            yield SleepUntil(next_at)
            yield from self.plc_cycle()
            next_at += self.timing.io_poll_us

    def plc_cycle(self):
        timeout = self.timing.response_timeout_us
        r1 = yield self.host.transact(
            IO1_IP, modbus.ReadRequest(modbus.READ_DISCRETE_INPUTS, 0, 2), timeout
        )
        r2 = yield self.host.transact(
            IO2_IP, modbus.ReadRequest(modbus.READ_DISCRETE_INPUTS, 0, 3), timeout
        )
        self._note_result(IO1_IP, r1)
        self._note_result(IO2_IP, r2)
        if r1.ok and isinstance(r1.pdu, modbus.ReadBitsResponse):
            bits = r1.pdu.bits
            self.sensors = SensorReadout(
                bits[0], bits[1], self.sensors.limit_upper, self.sensors.limit_lower
            )
        if r2.ok and isinstance(r2.pdu, modbus.ReadBitsResponse):
            bits = r2.pdu.bits
            self.sensors = SensorReadout(
                self.sensors.barrier_a, self.sensors.barrier_b, bits[0], bits[1]
            )
            self.damaged = bits[2]

        self._evaluate()

        io1_fwd, io1_rev, io2_down, io2_up = actuator_pattern(self.state, self.bank.coils)
        w1 = yield self.host.transact(
            IO1_IP, modbus.WriteMultipleCoils(0, (io1_fwd, io1_rev)), timeout
        )
        w2 = yield self.host.transact(
            IO2_IP, modbus.WriteMultipleCoils(0, (io2_down, io2_up)), timeout
        )
        self._note_result(IO1_IP, w1)
        self._note_result(IO2_IP, w2)
        self._sync_registers()

    def _note_result(self, ip, result):
        if result.ok:
            self.misses[ip] = 0
        else:
            self.misses[ip] += 1
            if (self.misses[ip] >= self.timing.watchdog_misses
                    and self.state != ERROR):
                self._enter(ERROR, ERR_IO_TIMEOUT)

    def _evaluate(self):
        coils = self.bank.coils
        commands = CommandCoils(
            start_order=coils[COIL_START_ORDER],
            reset=coils[COIL_RESET],
            estop=coils[COIL_ESTOP],
            manual_mode=coils[COIL_MANUAL],
        )
        timed_out = (
            self.state in (GOODS_TO_PUNCH, PUNCH_DOWN, PUNCH_UP, GOODS_TO_ORIGIN)
            and self.kernel.now_us - self.state_entered_us > self.timing.stage_timeout_us
        )
        new = state_transition(self.state, self.sensors, commands, timed_out)
        if new != self.state:
            if new == ERROR:
                code = ERR_ESTOP if commands.estop else ERR_STAGE_TIMEOUT
                self._enter(ERROR, code)
                coils[COIL_ESTOP] = False  # momentary button
            else:
                if self.state == INITIALIZE and new == GOODS_TO_PUNCH:
                    self.order_count += 1
                    coils[COIL_START_ORDER] = False
                if self.state == GOODS_TO_ORIGIN and new == INITIALIZE:
                    self.cycle_count += 1
                if self.state == ERROR and new == INITIALIZE:
                    coils[COIL_RESET] = False
                    self.error_code = ERR_NONE
                self._enter(new)

    def _enter(self, state: int, error_code: int | None = None):
        self.kernel.log.append(
            self.kernel.now_us, "state",
            {"dev": "plc", "from": self.state, "to": state,
             "name": STATE_NAMES[state]},
        )
        self.state = state
        self.state_entered_us = self.kernel.now_us
        self.state_sequence.append(state)
        if error_code is not None:
            self.error_code = error_code

    def _sync_registers(self):
        self.bank.holding_registers[REG_STATE] = self.state
        self.bank.holding_registers[REG_ORDER_COUNT] = self.order_count
        self.bank.holding_registers[REG_CYCLE_COUNT] = self.cycle_count
        self.bank.holding_registers[REG_ERROR_CODE] = self.error_code
        self.bank.holding_registers[REG_DAMAGED] = int(self.damaged)
        s = self.sensors
        self.bank.discrete_inputs[0] = s.barrier_a
        self.bank.discrete_inputs[1] = s.barrier_b
        self.bank.discrete_inputs[2] = s.limit_upper
        self.bank.discrete_inputs[3] = s.limit_lower
