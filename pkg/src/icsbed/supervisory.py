"""HMI backend and SCADA/historian.

The HMI backend polls the PLC every 500 ms and turns operator actions into
Modbus coil writes; the SCADA service polls five points once a second into an
append-only in-memory historian. The historian's rewrite entry point is
deliberately unauthenticated: it is the teaching surface for the
"attack the supervisory layer" scenario, and every use is logged as a tamper
event in the ground-truth log.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

from . import modbus, plc
from .kernel import MS, SleepUntil
from .netfabric import Fabric, Host

HMI_IP = "192.168.0.10"
SCADA_IP = "192.168.0.20"

HISTORIAN_POINTS = ("state", "order_count", "cycle_count", "error_code", "damaged")


class ModeError(Exception):
    """Manual motor command while the PLC is in automatic mode."""


class QueryError(Exception):
    pass


@dataclass
class HmiSnapshot:
    plc_state: int = 0
    sensors: dict | None = None
    coils: list | None = None
    order_count: int = 0
    cycle_count: int = 0
    error_code: int = 0
    manual_mode: bool = False
    damaged: bool = False
    last_update_us: int = -1


class HmiBackend:
    def __init__(self, fabric: Fabric, timing: plc.TimingConfig,
                 start_offset_us: int = 30 * MS):
        self.fabric = fabric
        self.kernel = fabric.kernel
        self.timing = timing
        self.start_offset_us = start_offset_us
        self.host = Host(fabric, "hmi", HMI_IP, "hmi")
        fabric.attach(self.host)
        self.snapshot = HmiSnapshot()
        self.events = []  # consumed by the UI bridge (snapshots, alarms)
        self._last_alarm_state = None

    def start(self):
        self.kernel.spawn(self._poll_loop())

    @property
    def stale(self) -> bool:
        age = self.kernel.now_us - self.snapshot.last_update_us
        return self.snapshot.last_update_us < 0 or age > 2 * self.timing.hmi_poll_us

    def snapshot_dict(self) -> dict:
        d = asdict(self.snapshot)
        d["stale"] = self.stale
        d["state_name"] = plc.STATE_NAMES.get(self.snapshot.plc_state, "unknown")
        d["t_us"] = self.kernel.now_us
        return d

    # -- polling ---------------------------------------------------------------

    def _poll_loop(self):
        next_at = self.start_offset_us
        while True:
            yield SleepUntil(next_at)
            yield from self.hmi_poll()
            next_at += self.timing.hmi_poll_us

    def hmi_poll(self):
        timeout = self.timing.response_timeout_us
        regs = yield self.host.transact(
            plc.PLC_IP, modbus.ReadRequest(modbus.READ_HOLDING_REGISTERS, 0, 5), timeout
        )
        coils = yield self.host.transact(
            plc.PLC_IP, modbus.ReadRequest(modbus.READ_COILS, 0, 8), timeout
        )
        inputs = yield self.host.transact(
            plc.PLC_IP, modbus.ReadRequest(modbus.READ_DISCRETE_INPUTS, 0, 4), timeout
        )
        if not (regs.ok and coils.ok and inputs.ok):
            self._push_event("alarm", {"alarm": "plc unreachable"})
            return
        words = regs.pdu.words
        bits = inputs.pdu.bits
        self.snapshot = HmiSnapshot(
            plc_state=words[plc.REG_STATE],
            sensors={
                "barrier_a": bits[0], "barrier_b": bits[1],
                "limit_upper": bits[2], "limit_lower": bits[3],
            },
            coils=[bool(b) for b in coils.pdu.bits[:8]],
            order_count=words[plc.REG_ORDER_COUNT],
            cycle_count=words[plc.REG_CYCLE_COUNT],
            error_code=words[plc.REG_ERROR_CODE],
            manual_mode=bool(coils.pdu.bits[plc.COIL_MANUAL]),
            damaged=bool(words[plc.REG_DAMAGED]),
            last_update_us=self.kernel.now_us,
        )
        self._push_event("snapshot", self.snapshot_dict())
        if self.snapshot.plc_state == plc.ERROR and self._last_alarm_state != plc.ERROR:
            self._push_event("alarm", {"alarm": "plc in error state"})
        self._last_alarm_state = self.snapshot.plc_state

    def _push_event(self, kind, payload):
        self.events.append({"kind": kind, "t_us": self.kernel.now_us, **payload})

    # -- operator commands -------------------------------------------------------

    def hmi_command(self, cmd: str, **kwargs):
        """Translate a UI action into PLC coil writes (spawned as a task)."""
        writes = None
        if cmd == "place_order":
            writes = [(plc.COIL_START_ORDER, True)]
        elif cmd == "reset":
            writes = [(plc.COIL_RESET, True)]
        elif cmd == "estop":
            writes = [(plc.COIL_ESTOP, True)]
        elif cmd == "set_manual":
            writes = [(plc.COIL_MANUAL, bool(kwargs["manual"]))]
        elif cmd == "manual_motor":
            if not self.snapshot.manual_mode:
                raise ModeError("manual motor command requires manual mode")
            motor = kwargs["motor"]
            direction = kwargs["direction"]
            if motor == "conveyor":
                base, on = plc.COIL_MAN_CONV_FWD, ("fwd", "rev")
            elif motor == "punch":
                base, on = plc.COIL_MAN_PUNCH_DOWN, ("down", "up")
            else:
                raise ValueError(f"unknown motor {motor!r}")
            if direction not in on and direction != "stop":
                raise ValueError(f"invalid direction {direction!r} for {motor}")
            writes = [(base, direction == on[0]), (base + 1, direction == on[1])]
        else:
            raise ValueError(f"unknown command {cmd!r}")

        self.kernel.log.append(
            self.kernel.now_us, "command", {"dev": "hmi", "cmd": cmd, **kwargs}
        )

        def task():
            for address, value in writes:
                yield self.host.transact(
                    plc.PLC_IP,
                    modbus.WriteSingleCoil(address, modbus.coil_value(value)),
                    self.timing.response_timeout_us,
                )

        self.kernel.spawn(task())


@dataclass(frozen=True)
class HistorianRecord:
    t_us: int
    point: str
    value: int | None
    quality: str  # "good" | "bad"


class Scada:
    def __init__(self, fabric: Fabric, timing: plc.TimingConfig,
                 start_offset_us: int = 70 * MS):
        self.fabric = fabric
        self.kernel = fabric.kernel
        self.timing = timing
        self.start_offset_us = start_offset_us
        self.host = Host(fabric, "scada", SCADA_IP, "scada")
        fabric.attach(self.host)
        self.records = {point: [] for point in HISTORIAN_POINTS}
        self.tampered = False

    def start(self):
        self.kernel.spawn(self._poll_loop())

    def _poll_loop(self):
        next_at = self.start_offset_us
        while True:
            yield SleepUntil(next_at)
            yield from self.scada_poll_and_append()
            next_at += self.timing.scada_poll_us

    def scada_poll_and_append(self):
        for address, point in enumerate(HISTORIAN_POINTS):
            r = yield self.host.transact(
                plc.PLC_IP,
                modbus.ReadRequest(modbus.READ_HOLDING_REGISTERS, address, 1),
                self.timing.response_timeout_us,
            )
            if r.ok and isinstance(r.pdu, modbus.ReadWordsResponse):
                rec = HistorianRecord(self.kernel.now_us, point, r.pdu.words[0], "good")
            else:
                rec = HistorianRecord(self.kernel.now_us, point, None, "bad")
            self.records[point].append(rec)

    def historian_query(self, point: str, t0_us: int = 0, t1_us: int | None = None):
        if point not in self.records:
            raise QueryError(f"unknown point {point!r}")
        t1_us = t1_us if t1_us is not None else 2**63
        return [r for r in self.records[point] if t0_us <= r.t_us <= t1_us]

    def rewrite(self, point: str, value: int, t0_us: int = 0, t1_us: int | None = None):
        """Unauthenticated admin rewrite: the supervisory-layer attack surface."""
        if point not in self.records:
            raise QueryError(f"unknown point {point!r}")
        t1_us = t1_us if t1_us is not None else 2**63
        changed = 0
        rows = self.records[point]
        for i, r in enumerate(rows):
            if t0_us <= r.t_us <= t1_us and r.value != value:
                rows[i] = HistorianRecord(r.t_us, r.point, value, r.quality)
                changed += 1
        self.tampered = True
        self.kernel.log.append(
            self.kernel.now_us, "tamper",
            {"type": "historian_rewrite", "point": point, "value": value,
             "records_changed": changed},
        )
        return changed

    def export_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t_us,point,value,quality\n")
            for point in HISTORIAN_POINTS:
                for r in self.records[point]:
                    value = "" if r.value is None else r.value
                    fh.write(f"{r.t_us},{r.point},{value},{r.quality}\n")
