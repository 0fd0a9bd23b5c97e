"""Virtual remote IO devices and the plant tick coordinator.

IO1 (192.168.0.51) owns the conveyor: barrier sensors in, motor coils out.
IO2 (192.168.0.52) owns the punch: limit switches (plus the damage flag) in,
punch motor coils out. Each serves Modbus/TCP on its virtual IP and keeps a
small status display.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import modbus, process
from .kernel import Kernel
from .netfabric import Fabric, Host

IO1_IP = "192.168.0.51"
IO2_IP = "192.168.0.52"

# discrete input layout
IO1_INPUT_NAMES = ("barrier_a", "barrier_b")
IO2_INPUT_NAMES = ("limit_upper", "limit_lower", "damaged")
# coil layout
IO1_COIL_NAMES = ("conveyor_fwd", "conveyor_rev")
IO2_COIL_NAMES = ("punch_down", "punch_up")


class Plant:
    """Owns the continuous process state; stepped once per kernel tick."""

    def __init__(self, kernel: Kernel, config: process.ProcessConfig | None = None,
                 trace: bool = False):
        self.kernel = kernel
        self.config = config or process.ProcessConfig()
        self.config.validate()
        self.state = process.ProcessState()
        self.trace = [] if trace else None
        self._damage_logged = False

    def sensors(self) -> process.SensorReadout:
        return process.read_sensors(self.state, self.config, self.kernel.now_us)

    def step(self):
        self.state = process.step(self.state, self.config, self.config.tick_us)
        if self.state.damaged and not self._damage_logged:
            self._damage_logged = True
            self.kernel.log.append(
                self.kernel.now_us, "state",
                {"event": "damaged", "reason": self.state.damage_reason},
            )
        if self.trace is not None:
            s = self.sensors()
            self.trace.append(
                (self.kernel.now_us, round(self.state.x, 6), round(self.state.z, 6),
                 int(s.barrier_a), int(s.barrier_b), int(s.limit_upper),
                 int(s.limit_lower), int(self.state.damaged))
            )

    def inject(self, action: str, **kwargs):
        self.state = process.inject_physical(
            self.state, action, self.kernel.now_us, **kwargs
        )

    def export_trace_csv(self, path):
        if self.trace is None:
            raise ValueError("trace recording was not enabled")
        with open(path, "w") as fh:
            fh.write("t_us,x,z,barrier_a,barrier_b,limit_upper,limit_lower,damaged\n")
            for row in self.trace:
                fh.write(",".join(str(v) for v in row) + "\n")


@dataclass
class DisplayState:
    name: str
    ip: str
    inputs: str  # e.g. "10"
    coils: str
    requests_served: int

    def lines(self):
        return [
            f"{self.name}  {self.ip}",
            f"inputs {self.inputs}  coils {self.coils}",
            f"served {self.requests_served}",
        ]


class RemoteIO:
    """Maps process sensors to discrete inputs and coils to motor commands."""

    def __init__(self, fabric: Fabric, plant: Plant, which: int):
        assert which in (1, 2)
        self.which = which
        self.plant = plant
        name, ip = ("io1", IO1_IP) if which == 1 else ("io2", IO2_IP)
        self.input_names = IO1_INPUT_NAMES if which == 1 else IO2_INPUT_NAMES
        self.coil_names = IO1_COIL_NAMES if which == 1 else IO2_COIL_NAMES
        self.host = Host(fabric, name, ip, "io")
        self.host.server_banks[1] = modbus.RegisterBank(
            coils=len(self.coil_names),
            discrete_inputs=len(self.input_names),
            identity=modbus.DeviceIdentity("icsbed", f"remote-io-{which}", "1.0"),
            supported_functions={
                modbus.READ_COILS,
                modbus.READ_DISCRETE_INPUTS,
                modbus.WRITE_SINGLE_COIL,
                modbus.WRITE_MULTIPLE_COILS,
                modbus.ENCAP_INTERFACE_TRANSPORT,
            },
        )
        self.bank = self.host.server_banks[1]
        self.host.server_handler = lambda pdu: modbus.execute_request(self.bank, pdu)
        fabric.attach(self.host)
        self._warned_exclusive = False

    def io_cycle(self):
        """Copy sensors in, apply coils out. Runs once per tick, before step."""
        sensors = self.plant.sensors()
        for i, name in enumerate(self.input_names):
            if name == "damaged":
                self.bank.discrete_inputs[i] = self.plant.state.damaged
            else:
                self.bank.discrete_inputs[i] = getattr(sensors, name)
        a, b = self.bank.coils[0], self.bank.coils[1]
        if a and b:
            cmd = process.STOP
            if not self._warned_exclusive:
                self._warned_exclusive = True
                self.plant.kernel.log.append(
                    self.plant.kernel.now_us, "command",
                    {"dev": self.host.name, "warning": "exclusive coils both set"},
                )
        elif self.which == 1:
            cmd = process.FWD if a else process.REV if b else process.STOP
        else:
            cmd = process.DOWN if a else process.UP if b else process.STOP
        if not (a and b):
            self._warned_exclusive = False
        if self.which == 1:
            self.plant.state.conveyor_cmd = cmd
        else:
            self.plant.state.punch_cmd = cmd

    def render_display(self) -> DisplayState:
        return DisplayState(
            name=self.host.name,
            ip=self.host.ip,
            inputs="".join(str(int(b)) for b in self.bank.discrete_inputs),
            coils="".join(str(int(b)) for b in self.bank.coils),
            requests_served=self.host.requests_served,
        )


def start_tick_loop(kernel: Kernel, plant: Plant, ios):
    """IO cycles run first, then physics, every process tick."""

    def tick():
        for io in ios:
            io.io_cycle()
        plant.step()
        kernel.after(plant.config.tick_us, tick)

    kernel.after(plant.config.tick_us, tick)
