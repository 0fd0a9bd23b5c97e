"""Simulated Ethernet/IP fabric.

One learning switch with an optional mirror port carries all field traffic.
Every host keeps its own (poisonable) ARP table. A router hangs off one
switch port and is the only path for layer-3-attached nodes, which can never
emit raw frames or ARP. Each device services incoming packets at a fixed
capacity with a bounded tail-drop queue; that queue is the DoS model.

TCP is modeled at transaction granularity: every Modbus transaction puts
exactly four packets on the wire (request, ack, response, ack), plus a
three-packet handshake the first time a client talks to a server.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import modbus, pcap
from .kernel import MS, SECOND, Kernel

SUBNET_PREFIX = "192.168.0."
GATEWAY_IP = "192.168.0.254"
MODBUS_PORT = 502

ARP_TTL_US = 60 * SECOND
DEFAULT_LINK_LATENCY_US = 200
DEFAULT_TIMEOUT_US = 250 * MS
SERVER_PROC_US = 100
QUEUE_LIMIT = 500

DEFAULT_CAPACITY_PPS = {
    "plc": 2000,
    "io": 1500,
    "hmi": 1000,
    "scada": 1000,
    "router": 100_000,
    "attacker": 100_000,
}


class ConfigurationError(Exception):
    pass


class CapabilityError(Exception):
    """Operation not available from this attach point."""


@dataclass
class Frame:
    t_us: int
    src_mac: str
    dst_mac: str
    ethertype: int
    data: bytes
    kind: str  # request | response | ack | connect | flood | arp
    src_ip: str = ""
    dst_ip: str = ""
    src_port: int = 0
    dst_port: int = 0
    adu: bytes = b""


@dataclass
class TransactResult:
    ok: bool
    pdu: object = None
    error: str = ""
    latency_us: int = 0


def mac_for(ip: str) -> str:
    a, b, c, d = (int(p) for p in ip.split("."))
    return f"02:4c:53:{b:02x}:{c:02x}:{d:02x}"


class Switch:
    """Learning switch with per-port links and an optional mirror port."""

    def __init__(self, fabric, nports: int = 8):
        self.fabric = fabric
        self.nports = nports
        self.owners = [None] * nports  # Host per port
        self.latency_us = [DEFAULT_LINK_LATENCY_US] * nports
        self.up = [True] * nports
        self.mac_table = {}
        self.mirror_port = None
        self.mirror_sources = set()

    def free_port(self):
        for i, owner in enumerate(self.owners):
            if owner is None:
                return i
        return None

    def set_mirror(self, sources, mirror_port: int):
        if mirror_port in sources:
            raise ConfigurationError("mirror port cannot be its own source")
        if self.owners[mirror_port] is None:
            raise ConfigurationError("mirror port has no device attached")
        self.mirror_port = mirror_port
        self.mirror_sources = set(sources)

    def transmit(self, in_port: int, frame: Frame):
        kernel = self.fabric.kernel
        if not self.up[in_port]:
            self.fabric._drop(frame, "link_down")
            return
        self.mac_table[frame.src_mac] = in_port
        if frame.dst_mac == pcap.BROADCAST_MAC:
            out_ports = [p for p in range(self.nports) if p != in_port and self.owners[p]]
        else:
            learned = self.mac_table.get(frame.dst_mac)
            if learned is not None and learned != in_port:
                out_ports = [learned]
            elif learned == in_port:
                out_ports = []
            else:  # unknown unicast floods
                out_ports = [
                    p for p in range(self.nports) if p != in_port and self.owners[p]
                ]
        if self.mirror_port is not None and in_port in self.mirror_sources:
            # duplicated with the original bytes and timestamp; not accounted
            self.owners[self.mirror_port].capture.append((frame.t_us, frame.data))
        delivered_to_someone = False
        for p in out_ports:
            if not self.up[p]:
                continue
            owner = self.owners[p]
            delivered_to_someone = True
            self.fabric.stats["enqueued"] += 1
            kernel.after(self.latency_us[p], lambda o=owner: self.fabric._arrive(o, frame))
        if not delivered_to_someone:
            self.fabric._drop(frame, "no_egress" if not out_ports else "link_down")


class Host:
    """A layer-2 attached device stack: ARP, capacity queue, Modbus client/server."""

    def __init__(self, fabric, name, ip, role, capacity_pps=None):
        self.fabric = fabric
        self.kernel: Kernel = fabric.kernel
        self.name = name
        self.ip = ip
        self.mac = mac_for(ip)
        self.role = role
        self.capacity_pps = capacity_pps or DEFAULT_CAPACITY_PPS.get(role, 1000)
        self.port = None  # switch port index
        self.arp_table = {}  # ip -> (mac, expires_us)
        self._arp_waiters = {}  # ip -> [callbacks]
        self.server_banks = {}  # unit id -> RegisterBank (unit 1 only in practice)
        self.server_handler = None  # fn(pdu) -> response pdu
        self.requests_served = 0
        self._pending = {}  # tid -> dict
        self._next_tid = 0
        self._connections = set()
        self._eph_ports = {}
        self._seq = 1000
        self._ip_id = 0
        self.capture = []  # (t_us, bytes) seen via mirror
        self.relay_handler = None  # MitM hook: fn(frame) -> bool handled
        self._busy_until_us = 0
        self._queue_depth = 0

    # -- frame emission ----------------------------------------------------

    def _emit(self, frame: Frame):
        self.fabric.send(self, frame)

    def _emit_arp(self, op, dst_mac, sender_ip, target_ip, target_mac="00:00:00:00:00:00"):
        payload = pcap.arp_packet(op, self.mac, sender_ip, target_mac, target_ip)
        data = pcap.ethernet_frame(self.mac, dst_mac, pcap.ETHERTYPE_ARP, payload)
        self._emit(
            Frame(
                self.kernel.now_us, self.mac, dst_mac, pcap.ETHERTYPE_ARP, data,
                "arp", sender_ip, target_ip,
            )
        )

    def _emit_tcp(self, dst_mac, dst_ip, src_port, dst_port, flags, payload, kind,
                  src_ip=None):
        src_ip = src_ip or self.ip
        self._ip_id = (self._ip_id + 1) & 0xFFFF
        self._seq += max(len(payload), 1)
        packet = pcap.ipv4_tcp_packet(
            src_ip, dst_ip, src_port, dst_port, self._seq, 0, flags, payload,
            self._ip_id,
        )
        data = pcap.ethernet_frame(self.mac, dst_mac, pcap.ETHERTYPE_IPV4, packet)
        self._emit(
            Frame(
                self.kernel.now_us, self.mac, dst_mac, pcap.ETHERTYPE_IPV4, data,
                kind, src_ip, dst_ip, src_port, dst_port, payload,
            )
        )

    # -- ARP ----------------------------------------------------------------

    def resolve(self, dst_ip, cont):
        if not dst_ip.startswith(SUBNET_PREFIX) and self.ip.startswith(SUBNET_PREFIX):
            dst_ip = GATEWAY_IP  # off-subnet goes to the gateway
        entry = self.arp_table.get(dst_ip)
        if entry and entry[1] > self.kernel.now_us:
            cont(entry[0])
            return
        self._arp_waiters.setdefault(dst_ip, []).append(cont)
        if len(self._arp_waiters[dst_ip]) == 1:
            self._emit_arp(1, pcap.BROADCAST_MAC, self.ip, dst_ip)

    def learn_arp(self, ip, mac, ttl_us=ARP_TTL_US):
        self.arp_table[ip] = (mac, self.kernel.now_us + ttl_us)
        for cont in self._arp_waiters.pop(ip, []):
            cont(mac)

    # -- Modbus client -------------------------------------------------------

    def transact(self, dst_ip, pdu, timeout_us=DEFAULT_TIMEOUT_US):
        """Returns a starter suitable for `yield` inside a kernel task."""
        return lambda done: self._start_transact(dst_ip, pdu, timeout_us, done)

    def _eph_port(self, dst_ip):
        if dst_ip not in self._eph_ports:
            self._eph_ports[dst_ip] = 49152 + len(self._eph_ports)
        return self._eph_ports[dst_ip]

    def _start_transact(self, dst_ip, pdu, timeout_us, done):
        self._next_tid = (self._next_tid + 1) & 0xFFFF
        tid = self._next_tid
        t0 = self.kernel.now_us

        def finish(result: TransactResult):
            self.kernel.log.append(
                self.kernel.now_us, "txn",
                {"src_ip": self.ip, "dst_ip": dst_ip, "ok": result.ok,
                 "latency_us": result.latency_us if result.ok else None},
            )
            done(result)

        entry = {"done": finish, "dst_ip": dst_ip, "t0": t0, "timed_out": False}
        self._pending[tid] = entry

        def on_timeout():
            if tid in self._pending and not self._pending[tid].get("completed"):
                stale = self._pending.pop(tid)
                stale["done"](TransactResult(False, error="timeout"))

        entry["timeout_handle"] = self.kernel.after(timeout_us, on_timeout)

        def send(dst_mac):
            sport = self._eph_port(dst_ip)
            if dst_ip not in self._connections:
                self._connections.add(dst_ip)
                self._emit_tcp(dst_mac, dst_ip, sport, MODBUS_PORT, pcap.TCP_SYN, b"", "connect")
                self._emit_tcp(dst_mac, dst_ip, sport, MODBUS_PORT, pcap.TCP_ACK, b"", "connect")
            adu = modbus.encode_adu(modbus.MbapHeader(tid), pdu)
            self._emit_tcp(
                dst_mac, dst_ip, sport, MODBUS_PORT, pcap.TCP_PSH | pcap.TCP_ACK,
                adu, "request",
            )

        self.resolve(dst_ip, send)

    # -- frame reception -----------------------------------------------------

    def on_frame(self, frame: Frame):
        if frame.ethertype == pcap.ETHERTYPE_ARP:
            self._on_arp(frame)
            return
        if frame.dst_ip != self.ip:
            if self.relay_handler and self.relay_handler(frame):
                return
            if self.role == "router":
                self.forward(frame)
            return
        if frame.kind == "flood":
            return  # capacity cost already paid; nothing to answer
        if frame.kind == "connect" and frame.dst_port == MODBUS_PORT:
            # server half of the handshake, once per client
            if not self._seen_syn(frame.src_ip):
                self.resolve(
                    frame.src_ip,
                    lambda mac, f=frame: self._emit_tcp(
                        mac, f.src_ip, MODBUS_PORT, f.src_port,
                        pcap.TCP_SYN | pcap.TCP_ACK, b"", "connect",
                    ),
                )
            return
        if not frame.adu:
            return  # bare ack
        if frame.dst_port == MODBUS_PORT:
            self._on_modbus_request(frame)
        else:
            self._on_modbus_response(frame)

    def _seen_syn(self, ip):
        seen = getattr(self, "_syn_seen", set())
        if ip in seen:
            return True
        seen.add(ip)
        self._syn_seen = seen
        return False

    def _on_arp(self, frame: Frame):
        data = frame.data[14:42]
        op = int.from_bytes(data[6:8], "big")
        sender_mac = ":".join(f"{b:02x}" for b in data[8:14])
        sender_ip = ".".join(str(b) for b in data[14:18])
        target_ip = ".".join(str(b) for b in data[24:28])
        # trusting cache update: this is what makes ARP poisoning work
        self.learn_arp(sender_ip, sender_mac)
        if op == 1 and target_ip == self.ip:
            self._emit_arp(2, sender_mac, self.ip, sender_ip, target_mac=sender_mac)

    def _on_modbus_request(self, frame: Frame):
        try:
            header, pdu = modbus.decode_adu(frame.adu, "request")
        except modbus.ModbusError:
            return
        if self.server_handler is None:
            return  # port closed; client will time out

        def answer(mac):
            self._emit_tcp(
                mac, frame.src_ip, MODBUS_PORT, frame.src_port, pcap.TCP_ACK, b"", "ack"
            )
            response = self.server_handler(pdu)
            self.requests_served += 1
            adu = modbus.encode_adu(modbus.MbapHeader(header.transaction_id), response)
            proc = SERVER_PROC_US + self.kernel.rng.randrange(0, 50)
            self.kernel.after(
                proc,
                lambda: self._emit_tcp(
                    mac, frame.src_ip, MODBUS_PORT, frame.src_port,
                    pcap.TCP_PSH | pcap.TCP_ACK, adu, "response",
                ),
            )

        self.resolve(frame.src_ip, answer)

    def _on_modbus_response(self, frame: Frame):
        try:
            header, pdu = modbus.decode_adu(frame.adu, "response")
        except modbus.ModbusError:
            return
        self.resolve(
            frame.src_ip,
            lambda mac: self._emit_tcp(
                mac, frame.src_ip, frame.dst_port, frame.src_port, pcap.TCP_ACK, b"", "ack"
            ),
        )
        entry = self._pending.pop(header.transaction_id, None)
        if entry is None:
            return  # late or mismatched transaction id
        self.kernel.cancel(entry["timeout_handle"])
        entry["completed"] = True
        entry["done"](
            TransactResult(True, pdu, latency_us=self.kernel.now_us - entry["t0"])
        )

    # -- attack primitives (layer 2 only) -------------------------------------

    def poison_arp(self, victim_ip, claimed_ip):
        """Gratuitous ARP: victim maps claimed_ip to this host's MAC."""
        victim = self.fabric.host_by_ip(victim_ip)
        if victim is None:
            raise ConfigurationError(f"no host at {victim_ip}")
        self.resolve(
            victim_ip,
            lambda mac: self._emit_arp(2, mac, claimed_ip, victim_ip, target_mac=mac),
        )

    def send_flood_packet(self, dst_ip):
        def send(dst_mac):
            self._ip_id = (self._ip_id + 1) & 0xFFFF
            packet = pcap.ipv4_tcp_packet(
                self.ip, dst_ip, 40000 + self._ip_id % 1000, MODBUS_PORT,
                self._ip_id, 0, pcap.TCP_SYN, b"", self._ip_id,
            )
            data = pcap.ethernet_frame(self.mac, dst_mac, pcap.ETHERTYPE_IPV4, packet)
            self._emit(
                Frame(
                    self.kernel.now_us, self.mac, dst_mac, pcap.ETHERTYPE_IPV4,
                    data, "flood", self.ip, dst_ip, 40000, MODBUS_PORT,
                )
            )

        self.resolve(dst_ip, send)

    def forward(self, frame: Frame):
        raise NotImplementedError


class Router(Host):
    """Boundary between the LAN and layer-3-attached nodes."""

    def __init__(self, fabric):
        super().__init__(fabric, "router", GATEWAY_IP, "router")
        self.uplink = None  # RemoteNode
        self.uplink_latency_us = 1000

    def forward(self, frame: Frame):
        if frame.ethertype != pcap.ETHERTYPE_IPV4:
            return
        if frame.dst_ip.startswith(SUBNET_PREFIX):
            # from uplink side onto the LAN
            def send(mac):
                data = pcap.ethernet_frame(self.mac, mac, pcap.ETHERTYPE_IPV4, frame.data[14:])
                self._emit(
                    Frame(
                        self.kernel.now_us, self.mac, mac, frame.ethertype, data,
                        frame.kind, frame.src_ip, frame.dst_ip,
                        frame.src_port, frame.dst_port, frame.adu,
                    )
                )

            self.resolve(frame.dst_ip, send)
        elif self.uplink is not None and frame.dst_ip == self.uplink.ip:
            self.fabric.stats["enqueued"] += 1
            self.kernel.after(
                self.uplink_latency_us, lambda: self.fabric._arrive(self.uplink, frame)
            )

    def inject_from_uplink(self, frame: Frame):
        self.kernel.after(self.uplink_latency_us, lambda: self.forward(frame))


class RemoteNode(Host):
    """Layer-3 attach point: IP through the router only; no raw frames, no ARP."""

    def __init__(self, fabric, name, ip="10.0.0.100"):
        super().__init__(fabric, name, ip, "attacker")

    def _emit(self, frame: Frame):
        if frame.ethertype == pcap.ETHERTYPE_ARP:
            raise CapabilityError("layer-3 attach point cannot emit ARP")
        self.fabric.log_packet(self, frame)
        self.fabric.stats["sent"] += 1
        self.fabric.frames.append((frame.t_us, frame.data))
        self.fabric.router.inject_from_uplink(frame)

    def resolve(self, dst_ip, cont):
        cont(self.fabric.router.mac)  # everything goes via the router

    def poison_arp(self, victim_ip, claimed_ip):
        raise CapabilityError("ARP poisoning requires a layer-2 attach point")


class Fabric:
    """Topology container: switch, hosts, router, accounting, captures."""

    def __init__(self, kernel: Kernel, nports: int = 8):
        self.kernel = kernel
        self.switch = Switch(self, nports)
        self.hosts = {}
        self.router = None
        self.remote = None
        self.stats = {"sent": 0, "enqueued": 0, "delivered": 0, "dropped": 0}
        self.frames = []  # (t_us, bytes) of every transmitted frame

    def host_by_ip(self, ip):
        if self.remote is not None and self.remote.ip == ip:
            return self.remote
        return self.hosts.get(ip)

    def attach(self, host: Host):
        if host.ip in self.hosts:
            raise ConfigurationError(f"duplicate IP {host.ip}")
        port = self.switch.free_port()
        if port is None:
            raise ConfigurationError("no free switch port")
        host.port = port
        self.switch.owners[port] = host
        self.hosts[host.ip] = host
        if isinstance(host, Router):
            self.router = host
        return port

    def attach_remote(self, node: RemoteNode):
        if self.router is None:
            raise ConfigurationError("no router to attach through")
        self.router.uplink = node
        self.remote = node
        return node

    def set_link_up(self, ip, up: bool):
        host = self.hosts[ip]
        self.switch.up[host.port] = up

    def send(self, host: Host, frame: Frame):
        self.stats["sent"] += 1
        self.log_packet(host, frame)
        self.frames.append((frame.t_us, frame.data))
        self.switch.transmit(host.port, frame)

    def log_packet(self, host: Host, frame: Frame):
        self.kernel.log.append(
            frame.t_us,
            "packet",
            {
                "dev": host.name,
                "src_ip": frame.src_ip,
                "dst_ip": frame.dst_ip,
                "kind": frame.kind,
                "len": len(frame.data),
            },
        )

    def _drop(self, frame: Frame, reason: str):
        self.stats["dropped"] += 1
        self.kernel.log.append(
            self.kernel.now_us,
            "drop",
            {"src_ip": frame.src_ip, "dst_ip": frame.dst_ip, "kind": frame.kind,
             "reason": reason},
        )

    def _arrive(self, host: Host, frame: Frame):
        """Capacity queue: fixed service rate, bounded backlog, tail drop."""
        now = self.kernel.now_us
        if host._queue_depth >= QUEUE_LIMIT:
            self._drop(frame, "queue_full")
            return
        service_us = SECOND // host.capacity_pps
        start = max(now, host._busy_until_us)
        done_at = start + service_us
        host._busy_until_us = done_at
        host._queue_depth += 1

        def handle():
            host._queue_depth -= 1
            self.stats["delivered"] += 1
            host.on_frame(frame)

        self.kernel.at(done_at, handle)

    def export_pcap(self, path, frames=None):
        pcap.write_pcap(path, frames if frames is not None else self.frames)
