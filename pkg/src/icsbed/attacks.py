"""Attack toolkit: scripted equivalents of the classic ICS attack set.

Each operation is gated by the attacker profile. A remote attacker reaches
the plant only through the router, so anything that needs layer-2 presence
(ARP poisoning, sniffing, man-in-the-middle, physical interference) raises
CapabilityError for the remote profile. The permission matrix below is the
single source of truth; the ops consult it and the acceptance suite checks
it row for row.

Every attack logs at least one ground-truth event; network attacks also show
up in packet accounting and captures. Nothing here is invisible to a perfect
defender.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import modbus, pcap
from .kernel import MS, SECOND, Sleep
from .netfabric import (
    CapabilityError,
    Frame,
    Host,
    MODBUS_PORT,
    RemoteNode,
    TransactResult,
)

ATTACKER_LOCAL_IP = "192.168.0.66"
ATTACKER_REMOTE_IP = "10.0.0.100"


@dataclass(frozen=True)
class AttackerProfile:
    kind: str  # "remote" | "local"

    @property
    def layer2(self) -> bool:
        return self.kind == "local"


@dataclass(frozen=True)
class AttackRow:
    """One row of the attack evaluation table."""

    name: str
    level: int
    cia: str
    stride: str
    remote: bool
    local: bool
    tool: str
    skill: str
    impact: str
    detection: str


ATTACK_MATRIX = [
    AttackRow("manipulate_process", 0, "A", "TD", False, True, "-", "low", "high", "easy"),
    AttackRow("physical_damage", 0, "A", "TD", False, True, "-", "low", "high", "easy"),
    AttackRow("dos_sensor", 1, "A", "D", True, True, "hping3", "low", "high", "easy"),
    AttackRow("disconnect_io", 1, "A", "TD", False, True, "-", "low", "high", "easy"),
    AttackRow("manipulate_io_physical", 1, "A", "TD", False, True, "-", "low", "high", "easy"),
    AttackRow("mitm_io_plc", 1, "CIA", "STRIDE", False, True, "script", "high", "high", "medium"),
    AttackRow("dos_plc", 1, "A", "D", True, True, "hping3", "low", "high", "easy"),
    AttackRow("dos_hmi", 1, "A", "D", True, True, "hping3", "low", "medium", "easy"),
    AttackRow("sniff_control", 1, "C", "I", False, True, "tcpdump", "low", "low", "difficult"),
    AttackRow("mitm_hmi_plc", 1, "CIA", "STRIDE", False, True, "script", "high", "high", "medium"),
    AttackRow("hmi_physical", 1, "CIA", "STRIDE", False, True, "-", "low", "low", "medium"),
    AttackRow("dos_scada", 2, "A", "D", True, True, "hping3", "high", "low", "easy"),
    AttackRow("sniff_process_control", 2, "C", "I", False, True, "tcpdump", "low", "low", "difficult"),
    AttackRow("mitm_scada_plc", 2, "CIA", "STRIDE", False, True, "script", "high", "high", "medium"),
    AttackRow("attack_scada", 2, "CIA", "STRIDE", True, True, "script", "medium", "high", "medium"),
]

ROWS_BY_NAME = {row.name: row for row in ATTACK_MATRIX}


def permitted(row_name: str, profile: AttackerProfile) -> bool:
    row = ROWS_BY_NAME[row_name]
    return row.remote if profile.kind == "remote" else row.local


@dataclass
class SpoofRule:
    """First-match rewrite rule applied to relayed Modbus traffic."""

    direction: str = "response"  # "request" | "response"
    src_ip: str | None = None
    dst_ip: str | None = None
    function_code: int | None = None
    address: int | None = None  # data-model address of the bit/word to touch
    set_value: int | bool | None = None
    action: str = "set"  # "set" | "drop" | "delay"
    delay_ms: int = 0

    def matches(self, direction, src_ip, dst_ip, function_code) -> bool:
        return (
            self.direction == direction
            and (self.src_ip is None or self.src_ip == src_ip)
            and (self.dst_ip is None or self.dst_ip == dst_ip)
            and (self.function_code is None or self.function_code == function_code)
        )


@dataclass
class AttackReport:
    op: str
    profile: str
    target: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"op": self.op, "profile": self.profile, "target": self.target,
                **self.details}


class AttackToolkit:
    """Binds an attacker profile to its attach point in a running testbed."""

    def __init__(self, testbed, profile: AttackerProfile):
        self.testbed = testbed
        self.profile = profile
        self.fabric = testbed.fabric
        self.kernel = testbed.kernel
        if profile.layer2:
            self.node = testbed.ensure_local_attacker()
        else:
            self.node = testbed.ensure_remote_attacker()

    # -- gating helpers -------------------------------------------------------

    def _gate(self, row_name: str):
        if not permitted(row_name, self.profile):
            raise CapabilityError(
                f"{row_name} not available to the {self.profile.kind} attacker"
            )

    def _log(self, op: str, **payload):
        self.kernel.log.append(
            self.kernel.now_us, "attack",
            {"op": op, "profile": self.profile.kind, **payload},
        )

    # -- reconnaissance ---------------------------------------------------------

    def discover(self, subnet_ips, probe_timeout_us=60 * MS):
        """Probe port 502 across the subnet; returns Modbus responders."""
        subnet_ips = list(subnet_ips)
        self._log("discover", subnet=len(subnet_ips))
        found = []
        for ip in subnet_ips:
            r = yield self.node.transact(ip, modbus.DeviceIdRequest(), probe_timeout_us)
            if r.ok and isinstance(r.pdu, modbus.DeviceIdResponse):
                found.append((ip, 1, dict(r.pdu.objects)))
                continue
            if r.ok:  # answered 502 but no identity support: coil probe fallback
                r2 = yield self.node.transact(
                    ip, modbus.ReadRequest(modbus.READ_COILS, 0, 1), probe_timeout_us
                )
                if r2.ok:
                    found.append((ip, 1, {}))
        return found

    # -- sniffing ------------------------------------------------------------------

    def sniff(self, duration_us, mode="mirror", a_ip=None, b_ip=None):
        """Capture traffic passively (mirror port) or via ARP MitM relay."""
        self._gate("sniff_control")
        self._log("sniff", mode=mode)
        start = len(self.node.capture)
        if mode == "mirror":
            switch = self.fabric.switch
            sources = {
                p for p in range(switch.nports)
                if switch.owners[p] is not None and p != self.node.port
            }
            switch.set_mirror(sources, self.node.port)
            yield Sleep(duration_us)
            switch.mirror_port = None
            switch.mirror_sources = set()
        elif mode == "arp_mitm":
            if a_ip is None or b_ip is None:
                raise ValueError("arp_mitm sniffing needs the two endpoints")
            yield from self._run_mitm(a_ip, b_ip, [], duration_us, row="sniff_control")
        else:
            raise ValueError(f"unknown sniff mode {mode!r}")
        return self.node.capture[start:]

    # -- denial of service -------------------------------------------------------------

    def flood(self, target_ip, rate_pps, duration_us):
        """Saturate the target's ingress queue with minimal SYN frames."""
        if rate_pps <= 0:
            raise ValueError("flood rate must be positive")
        row = {
            "192.168.0.30": "dos_plc",
            "192.168.0.10": "dos_hmi",
            "192.168.0.20": "dos_scada",
        }.get(target_ip, "dos_sensor")
        self._gate(row)
        self._log("flood", target=target_ip, rate_pps=rate_pps,
                  duration_us=duration_us)
        interval = max(SECOND // rate_pps, 1)
        sent = 0
        deadline = self.kernel.now_us + duration_us
        while self.kernel.now_us < deadline:
            self.node.send_flood_packet(target_ip)
            sent += 1
            yield Sleep(interval)
        return AttackReport(
            row, self.profile.kind, target_ip,
            {"sent": sent, "rate_pps": rate_pps,
             "duration_s": duration_us / SECOND},
        )

    # -- man in the middle ------------------------------------------------------------

    def mitm_spoof(self, a_ip, b_ip, rules, duration_us):
        """Poison both directions of a↔b and rewrite matching PDUs in flight."""
        pair = {a_ip, b_ip}
        if "192.168.0.30" in pair and ("192.168.0.51" in pair or "192.168.0.52" in pair):
            row = "mitm_io_plc"
        elif "192.168.0.10" in pair:
            row = "mitm_hmi_plc"
        else:
            row = "mitm_scada_plc"
        self._gate(row)
        self._log("mitm_spoof", a=a_ip, b=b_ip, rules=len(rules))
        rewrites = yield from self._run_mitm(a_ip, b_ip, rules, duration_us, row)
        return AttackReport(row, self.profile.kind, f"{a_ip}<->{b_ip}",
                            {"rewrites": rewrites})

    def _run_mitm(self, a_ip, b_ip, rules, duration_us, row):
        attacker: Host = self.node
        real_mac = {}
        tid_map = {}
        rewrites = []

        # learn the genuine MACs before poisoning anything
        for ip in (a_ip, b_ip):
            done = {}
            attacker.resolve(ip, lambda mac, d=done: d.setdefault("mac", mac))
            yield Sleep(5 * MS)
            if "mac" not in done:
                raise ValueError(f"cannot resolve {ip}")
            real_mac[ip] = done["mac"]

        def relay(frame: Frame):
            if frame.dst_ip not in (a_ip, b_ip):
                return False
            direction = "request" if frame.dst_port == MODBUS_PORT else "response"
            adu = frame.adu
            if adu:
                try:
                    header, pdu = modbus.decode_adu(adu, direction)
                except modbus.ModbusError:
                    header = pdu = None
                if pdu is not None:
                    if direction == "request" and isinstance(pdu, modbus.ReadRequest):
                        tid_map[header.transaction_id] = pdu
                    rule = next(
                        (r for r in rules
                         if r.matches(direction, frame.src_ip, frame.dst_ip,
                                      getattr(pdu, "function_code", None))),
                        None,
                    )
                    if rule is not None:
                        if rule.action == "drop":
                            self.kernel.log.append(
                                self.kernel.now_us, "tamper",
                                {"type": "mitm_drop", "src_ip": frame.src_ip,
                                 "dst_ip": frame.dst_ip},
                            )
                            return True
                        new_pdu = _apply_rule(pdu, rule, tid_map.get(header.transaction_id))
                        if new_pdu is not pdu:
                            adu = modbus.encode_adu(
                                modbus.MbapHeader(header.transaction_id), new_pdu
                            )
                            rewrites.append(header.transaction_id)
                            self.kernel.log.append(
                                self.kernel.now_us, "tamper",
                                {"type": "mitm_rewrite", "src_ip": frame.src_ip,
                                 "dst_ip": frame.dst_ip, "direction": direction,
                                 "tid": header.transaction_id},
                            )
                        delay = rule.delay_ms * MS if rule.action == "delay" else 0
                        if delay:
                            self.kernel.after(
                                delay,
                                lambda a=adu, f=frame: _forward(a, f),
                            )
                            return True
            _forward(adu, frame)
            return True

        def _forward(adu, frame: Frame):
            dst_mac = real_mac[frame.dst_ip]
            if adu:
                packet = pcap.ipv4_tcp_packet(
                    frame.src_ip, frame.dst_ip, frame.src_port, frame.dst_port,
                    0, 0, pcap.TCP_PSH | pcap.TCP_ACK, adu,
                )
                data = pcap.ethernet_frame(attacker.mac, dst_mac,
                                           pcap.ETHERTYPE_IPV4, packet)
            else:
                data = pcap.ethernet_frame(attacker.mac, dst_mac,
                                           pcap.ETHERTYPE_IPV4, frame.data[14:])
            attacker.capture.append((self.kernel.now_us, frame.data))
            attacker._emit(
                Frame(self.kernel.now_us, attacker.mac, dst_mac, frame.ethertype,
                      data, frame.kind, frame.src_ip, frame.dst_ip,
                      frame.src_port, frame.dst_port, adu)
            )

        attacker.relay_handler = relay
        deadline = self.kernel.now_us + duration_us
        while self.kernel.now_us < deadline:
            attacker.poison_arp(a_ip, b_ip)
            attacker.poison_arp(b_ip, a_ip)
            self.kernel.log.append(
                self.kernel.now_us, "tamper",
                {"type": "arp_poison", "victims": [a_ip, b_ip]},
            )
            yield Sleep(min(10 * SECOND, deadline - self.kernel.now_us))
        attacker.relay_handler = None
        # undo the poisoning so traffic flows normally again
        a, b = self.fabric.host_by_ip(a_ip), self.fabric.host_by_ip(b_ip)
        if a:
            a.learn_arp(b_ip, real_mac[b_ip])
        if b:
            b.learn_arp(a_ip, real_mac[a_ip])
        return len(rewrites)

    # -- direct manipulation ----------------------------------------------------------

    def unauthorized_write(self, target_ip, kind, address, value):
        """Single unauthenticated Modbus write straight at a device."""
        self._gate("attack_scada")
        self._log("unauthorized_write", target=target_ip, kind=kind,
                  address=address, value=value)
        if kind == "coil":
            pdu = modbus.WriteSingleCoil(address, modbus.coil_value(bool(value)))
        elif kind == "register":
            pdu = modbus.WriteSingleRegister(address, int(value))
        else:
            raise ValueError(f"unknown write kind {kind!r}")
        r: TransactResult = yield self.node.transact(target_ip, pdu)
        details = {"ok": r.ok}
        if r.ok and isinstance(r.pdu, modbus.ExceptionResponse):
            details["exception_code"] = r.pdu.exception_code
        if not r.ok:
            details["error"] = r.error
        return AttackReport("attack_scada", self.profile.kind, target_ip, details)

    def tamper_historian(self, scada, point, value):
        """Rewrite historian records through the unauthenticated admin path."""
        self._gate("attack_scada")
        self._log("tamper_historian", point=point, value=value)
        changed = scada.rewrite(point, value)
        return AttackReport("attack_scada", self.profile.kind, point,
                            {"records_changed": changed})

    # -- physical access ------------------------------------------------------------------

    def physical_attack(self, action, **kwargs):
        """Level-0 interference: needs to be standing next to the machine."""
        row = {
            "remove_workpiece": "manipulate_process",
            "place_workpiece": "manipulate_process",
            "force_sensor": "manipulate_io_physical",
            "destroy": "physical_damage",
            "disconnect_io": "disconnect_io",
        }.get(action)
        if row is None:
            raise ValueError(f"unknown physical action {action!r}")
        self._gate(row)
        self._log(action, **{k: v for k, v in kwargs.items() if k != "plant"})
        if action == "disconnect_io":
            self.fabric.set_link_up(kwargs["ip"], kwargs.get("up", False))
        else:
            self.testbed.plant.inject(action, **kwargs)
        impact = ROWS_BY_NAME[row]
        return AttackReport(row, self.profile.kind, kwargs.get("ip", "process"),
                            {"impact": impact.impact, "detection": impact.detection})

    def hmi_physical(self, command, **kwargs):
        """Walk up to the panel and press buttons."""
        self._gate("hmi_physical")
        self._log("hmi_physical", cmd=command)
        self.testbed.hmi.hmi_command(command, **kwargs)
        return AttackReport("hmi_physical", self.profile.kind, "hmi", {"cmd": command})


def _apply_rule(pdu, rule: SpoofRule, request: modbus.ReadRequest | None):
    """Rewrite one PDU according to a matching rule; returns pdu if no-op."""
    if rule.action not in ("set", "delay") or rule.set_value is None:
        return pdu
    if isinstance(pdu, modbus.ReadBitsResponse):
        if request is None or rule.address is None:
            return pdu
        index = rule.address - request.address
        if not 0 <= index < len(pdu.bits):
            return pdu
        bits = list(pdu.bits)
        if bits[index] == bool(rule.set_value):
            return pdu
        bits[index] = bool(rule.set_value)
        return modbus.ReadBitsResponse(pdu.function_code, bits)
    if isinstance(pdu, modbus.ReadWordsResponse):
        if request is None or rule.address is None:
            return pdu
        index = rule.address - request.address
        if not 0 <= index < len(pdu.words):
            return pdu
        words = list(pdu.words)
        if words[index] == int(rule.set_value):
            return pdu
        words[index] = int(rule.set_value)
        return modbus.ReadWordsResponse(pdu.function_code, words)
    if isinstance(pdu, modbus.WriteSingleCoil) and rule.direction == "request":
        return modbus.WriteSingleCoil(
            pdu.address if rule.address is None else rule.address,
            modbus.coil_value(bool(rule.set_value)),
        )
    if isinstance(pdu, modbus.WriteMultipleCoils) and rule.direction == "request":
        if rule.address is None or not pdu.address <= rule.address < pdu.address + len(pdu.bits):
            return pdu
        bits = list(pdu.bits)
        bits[rule.address - pdu.address] = bool(rule.set_value)
        return modbus.WriteMultipleCoils(pdu.address, bits)
    return pdu
