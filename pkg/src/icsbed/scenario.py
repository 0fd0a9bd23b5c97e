"""Scenario configs, the testbed builder, and deterministic runs.

A scenario is a JSON document: seed, virtual duration, optional timing and
process overrides, scheduled operator commands, and scheduled attacks. The
same config and seed always produce the same event log digest; that is the
reproducibility contract the whole package is built around.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields
from importlib import resources

from . import attacks as atk
from . import plc as plcmod
from . import process as procmod
from .devices import IO1_IP, IO2_IP, Plant, RemoteIO, start_tick_loop
from .kernel import EventLog, Kernel, SECOND
from .netfabric import CapabilityError, Fabric, Host, RemoteNode, Router, SUBNET_PREFIX
from .supervisory import HmiBackend, Scada

KNOWN_ATTACK_OPS = (
    "flood", "mitm_spoof", "sniff", "discover", "unauthorized_write",
    "tamper_historian", "physical", "hmi_physical",
)

KNOWN_COMMANDS = ("place_order", "reset", "estop", "set_manual", "manual_motor")

# the fixed bench topology; configs may restate it but not rewire it
DEFAULT_TOPOLOGY = {
    "plc": plcmod.PLC_IP,
    "io1": IO1_IP,
    "io2": IO2_IP,
    "hmi": "192.168.0.10",
    "scada": "192.168.0.20",
    "router": "192.168.0.254",
}


class ValidationError(Exception):
    """Config rejected; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ReplayParseError(Exception):
    def __init__(self, offset: int, message: str):
        self.offset = offset  # 1-based line number
        super().__init__(f"line {offset}: {message}")


@dataclass
class ScheduledCommand:
    t_s: float
    cmd: str
    kwargs: dict = field(default_factory=dict)


@dataclass
class ScheduledAttack:
    t_s: float
    op: str
    profile: str = "local"
    params: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration_s: float = 60.0
    stop_on_damage: bool = True
    timing: plcmod.TimingConfig = field(default_factory=plcmod.TimingConfig)
    process: procmod.ProcessConfig = field(default_factory=procmod.ProcessConfig)
    operator: list = field(default_factory=list)  # ScheduledCommand
    attacks: list = field(default_factory=list)  # ScheduledAttack
    outputs: dict = field(default_factory=dict)  # {"log": path, "pcap": path}

    @property
    def duration_us(self) -> int:
        return int(self.duration_s * SECOND)


def _require(cond, path, message):
    if not cond:
        raise ValidationError(path, message)


def parse_config(doc: dict, name_hint: str = "scenario") -> ScenarioConfig:
    """Build a validated ScenarioConfig from a parsed JSON document."""
    _require(isinstance(doc, dict), "$", "config must be a JSON object")
    known = {"name", "seed", "duration_s", "stop_on_damage", "timing",
             "process", "topology", "operator", "attacks", "outputs"}
    for key in doc:
        _require(key in known, key, "unknown field")

    cfg = ScenarioConfig(name=doc.get("name", name_hint))
    _require(isinstance(cfg.name, str) and cfg.name, "name", "must be a non-empty string")

    seed = doc.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool), "seed", "must be an integer")
    _require(0 <= seed < 2**64, "seed", "must fit in 64 bits")
    cfg.seed = seed

    duration = doc.get("duration_s", 60)
    _require(isinstance(duration, (int, float)) and not isinstance(duration, bool),
             "duration_s", "must be a number")
    _require(duration > 0, "duration_s", "must be positive")
    cfg.duration_s = float(duration)

    stop = doc.get("stop_on_damage", True)
    _require(isinstance(stop, bool), "stop_on_damage", "must be a boolean")
    cfg.stop_on_damage = stop

    cfg.timing = _parse_overrides(doc.get("timing", {}), plcmod.TimingConfig, "timing")
    try:
        cfg.timing.validate()
    except ValueError as exc:
        raise ValidationError("timing", str(exc)) from exc
    cfg.process = _parse_overrides(doc.get("process", {}), procmod.ProcessConfig, "process")
    try:
        cfg.process.validate()
    except ValueError as exc:
        raise ValidationError("process", str(exc)) from exc

    _validate_topology(doc.get("topology", {}))

    for i, entry in enumerate(doc.get("operator", [])):
        path = f"operator[{i}]"
        _require(isinstance(entry, dict), path, "must be an object")
        t_s = entry.get("t_s")
        _require(isinstance(t_s, (int, float)) and not isinstance(t_s, bool),
                 f"{path}.t_s", "must be a number")
        _require(0 <= t_s <= cfg.duration_s, f"{path}.t_s", "must lie within the duration")
        cmd = entry.get("cmd")
        _require(cmd in KNOWN_COMMANDS, f"{path}.cmd",
                 f"must be one of {', '.join(KNOWN_COMMANDS)}")
        kwargs = entry.get("kwargs", {})
        _require(isinstance(kwargs, dict), f"{path}.kwargs", "must be an object")
        cfg.operator.append(ScheduledCommand(float(t_s), cmd, kwargs))

    for i, entry in enumerate(doc.get("attacks", [])):
        path = f"attacks[{i}]"
        _require(isinstance(entry, dict), path, "must be an object")
        t_s = entry.get("t_s")
        _require(isinstance(t_s, (int, float)) and not isinstance(t_s, bool),
                 f"{path}.t_s", "must be a number")
        _require(0 <= t_s <= cfg.duration_s, f"{path}.t_s", "must lie within the duration")
        op = entry.get("op")
        _require(op in KNOWN_ATTACK_OPS, f"{path}.op",
                 f"must be one of {', '.join(KNOWN_ATTACK_OPS)}")
        profile = entry.get("profile", "local")
        _require(profile in ("local", "remote"), f"{path}.profile",
                 "must be 'local' or 'remote'")
        params = entry.get("params", {})
        _require(isinstance(params, dict), f"{path}.params", "must be an object")
        cfg.attacks.append(ScheduledAttack(float(t_s), op, profile, params))
    cfg.attacks.sort(key=lambda a: a.t_s)

    outputs = doc.get("outputs", {})
    _require(isinstance(outputs, dict), "outputs", "must be an object")
    for key, value in outputs.items():
        _require(key in ("log", "pcap", "trace"), f"outputs.{key}", "unknown output kind")
        _require(isinstance(value, str) and value, f"outputs.{key}", "must be a path string")
    cfg.outputs = dict(outputs)
    return cfg


def _parse_overrides(doc, cls, path):
    _require(isinstance(doc, dict), path, "must be an object")
    names = {f.name for f in dc_fields(cls)}
    values = {}
    for key, value in doc.items():
        _require(key in names, f"{path}.{key}", "unknown field")
        _require(isinstance(value, (int, float)) and not isinstance(value, bool),
                 f"{path}.{key}", "must be a number")
        values[key] = value
    return cls(**values)


def _validate_topology(doc):
    _require(isinstance(doc, dict), "topology", "must be an object")
    seen = {}
    for name, ip in doc.items():
        path = f"topology.{name}"
        _require(name in DEFAULT_TOPOLOGY, path, "unknown device")
        _require(isinstance(ip, str), path, "must be an IP string")
        _require(ip.startswith(SUBNET_PREFIX), path,
                 f"must be inside {SUBNET_PREFIX}0/24")
        _require(ip not in seen, path, f"duplicate IP, also used by {seen.get(ip)}")
        seen[ip] = name
        _require(ip == DEFAULT_TOPOLOGY[name], path,
                 f"the bench topology is fixed; expected {DEFAULT_TOPOLOGY[name]}")


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError("$", f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError("$", f"invalid JSON: {exc}") from exc
    name_hint = path.rsplit("/", 1)[-1].removesuffix(".json")
    return parse_config(doc, name_hint)


class Testbed:
    """One fully wired bench: switch, router, PLC, IOs, HMI, SCADA, process."""

    __test__ = False  # keep pytest collection away

    def __init__(self, config: ScenarioConfig | None = None, trace: bool = False):
        self.config = config or ScenarioConfig()
        self.kernel = Kernel(seed=self.config.seed)
        self.fabric = Fabric(self.kernel)
        self.plant = Plant(self.kernel, self.config.process, trace=trace)
        self.io1 = RemoteIO(self.fabric, self.plant, 1)
        self.io2 = RemoteIO(self.fabric, self.plant, 2)
        self.plc = plcmod.PlcRuntime(self.fabric, self.config.timing)
        self.hmi = HmiBackend(self.fabric, self.config.timing)
        self.scada = Scada(self.fabric, self.config.timing)
        self.router = Router(self.fabric)
        self.fabric.attach(self.router)
        self._local_attacker = None
        self._remote_attacker = None
        self._started = False
        self.attack_reports = []

    def start(self):
        if self._started:
            return
        self._started = True
        start_tick_loop(self.kernel, self.plant, (self.io1, self.io2))
        self.plc.start()
        self.hmi.start()
        self.scada.start()

    # attach points handed to the attack toolkit on demand

    def ensure_local_attacker(self) -> Host:
        if self._local_attacker is None:
            self._local_attacker = Host(
                self.fabric, "attacker", atk.ATTACKER_LOCAL_IP, "attacker"
            )
            self.fabric.attach(self._local_attacker)
        return self._local_attacker

    def ensure_remote_attacker(self) -> RemoteNode:
        if self._remote_attacker is None:
            self._remote_attacker = RemoteNode(
                self.fabric, "remote-attacker", atk.ATTACKER_REMOTE_IP
            )
            self.fabric.attach_remote(self._remote_attacker)
        return self._remote_attacker

    def run(self, duration_us: int | None = None, stop_on_damage: bool | None = None):
        """Advance virtual time to the duration, or stop early on damage."""
        self.start()
        duration_us = duration_us if duration_us is not None else self.config.duration_us
        if stop_on_damage is None:
            stop_on_damage = self.config.stop_on_damage
        chunk = SECOND // 2
        while self.kernel.now_us < duration_us:
            step_to = min(self.kernel.now_us + chunk, duration_us)
            self.kernel.run_until(step_to)
            if stop_on_damage and self.plant.state.damaged:
                break

    def summary(self) -> dict:
        return {
            "final_state": self.plc.state,
            "state_name": plcmod.STATE_NAMES[self.plc.state],
            "state_sequence": list(self.plc.state_sequence),
            "order_count": self.plc.order_count,
            "cycle_count": self.plc.cycle_count,
            "error_code": self.plc.error_code,
            "damaged": self.plant.state.damaged,
            "damage_reason": self.plant.state.damage_reason,
            "duration_virtual_s": self.kernel.now_us / SECOND,
            "attack_reports": [r.to_dict() if hasattr(r, "to_dict") else r
                               for r in self.attack_reports],
            "digest": self.kernel.log.digest(),
        }


def _attack_generator(toolkit: atk.AttackToolkit, spec: ScheduledAttack, testbed: Testbed):
    p = spec.params
    if spec.op == "flood":
        return toolkit.flood(
            p["target"], int(p.get("rate_pps", 4000)),
            int(float(p.get("duration_s", 10)) * SECOND),
        )
    if spec.op == "mitm_spoof":
        rules = [atk.SpoofRule(**r) for r in p.get("rules", [])]
        return toolkit.mitm_spoof(
            p["a"], p["b"], rules, int(float(p.get("duration_s", 10)) * SECOND)
        )
    if spec.op == "sniff":
        return toolkit.sniff(
            int(float(p.get("duration_s", 5)) * SECOND),
            p.get("mode", "mirror"), p.get("a"), p.get("b"),
        )
    if spec.op == "discover":
        ips = p.get("ips") or sorted(testbed.fabric.hosts)
        return toolkit.discover(ips)
    if spec.op == "unauthorized_write":
        return toolkit.unauthorized_write(
            p["target"], p.get("kind", "coil"), int(p["address"]), p["value"]
        )
    raise ValueError(f"{spec.op} is not a task-style attack")


def _dispatch_attack(testbed: Testbed, spec: ScheduledAttack):
    try:
        toolkit = atk.AttackToolkit(testbed, atk.AttackerProfile(spec.profile))
        if spec.op == "tamper_historian":
            report = toolkit.tamper_historian(
                testbed.scada, spec.params["point"], spec.params["value"]
            )
            testbed.attack_reports.append(report)
        elif spec.op == "physical":
            report = toolkit.physical_attack(
                spec.params["action"],
                **{k: v for k, v in spec.params.items() if k != "action"},
            )
            testbed.attack_reports.append(report)
        elif spec.op == "hmi_physical":
            report = toolkit.hmi_physical(
                spec.params["command"],
                **{k: v for k, v in spec.params.items() if k != "command"},
            )
            testbed.attack_reports.append(report)
        else:
            gen = _attack_generator(toolkit, spec, testbed)
            testbed.kernel.spawn(gen, testbed.attack_reports.append)
    except CapabilityError as exc:
        testbed.attack_reports.append(
            {"op": spec.op, "profile": spec.profile, "error": str(exc)}
        )


def run_scenario(config: ScenarioConfig, trace: bool = False):
    """Execute one scenario; returns (EventLog, summary dict)."""
    testbed = Testbed(config, trace=trace)
    testbed.start()
    for cmd in config.operator:
        testbed.kernel.at(
            int(cmd.t_s * SECOND),
            lambda c=cmd: testbed.hmi.hmi_command(c.cmd, **c.kwargs),
        )
    for spec in config.attacks:
        testbed.kernel.at(
            int(spec.t_s * SECOND),
            lambda s=spec: _dispatch_attack(testbed, s),
        )
    testbed.run()

    log = testbed.kernel.log
    summary = testbed.summary()
    outputs = config.outputs
    if "log" in outputs:
        with open(outputs["log"], "w") as fh:
            fh.write(log.serialize())
    if "pcap" in outputs:
        testbed.fabric.export_pcap(outputs["pcap"])
    if "trace" in outputs and trace:
        testbed.plant.export_trace_csv(outputs["trace"])
    return log, summary, testbed


def parse_log_text(text: str) -> list:
    """Parse an LDJSON event log; raises ReplayParseError with a line offset."""
    records = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            raise ReplayParseError(i, "blank line inside log")
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayParseError(i, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(rec, dict) or "t_us" not in rec or "cat" not in rec:
            raise ReplayParseError(i, "record missing t_us/cat")
        records.append(rec)
    return records


def render_record(rec: dict) -> str:
    t = rec["t_us"] / SECOND
    rest = {k: v for k, v in rec.items() if k not in ("t_us", "cat")}
    if rec["cat"] == "state" and "from" in rest:
        detail = f"{rest['dev']} {rest['from']}->{rest['to']} {rest['name']}"
    else:
        detail = " ".join(f"{k}={v}" for k, v in sorted(rest.items()))
    return f"{t:12.6f}  {rec['cat']:<8}{detail}"


def replay(text: str, category: str | None = None) -> list:
    """Render a stored log as aligned timeline lines, optionally filtered."""
    records = parse_log_text(text)
    if category is not None:
        records = [r for r in records if r["cat"] == category]
    return [render_record(r) for r in records]


def verify_log(text: str, expected_digest: str) -> bool:
    return EventLog.digest_of_text(text) == expected_digest.strip().lower()


def bundled_scenarios() -> list:
    base = resources.files(__package__) / "scenarios"
    return sorted(p.name.removesuffix(".json") for p in base.iterdir()
                  if p.name.endswith(".json"))


def bundled_scenario_path(name: str) -> str:
    path = resources.files(__package__) / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ValidationError("$", f"no bundled scenario named {name!r}")
    return str(path)
