"""Frame byte rendering and pcap export.

Simulated traffic is modeled at transaction granularity, but every frame is
rendered as genuine Ethernet/ARP or Ethernet/IPv4/TCP bytes (checksums
included) so exported captures open in standard dissectors with Modbus/TCP
recognized on port 502.
"""
from __future__ import annotations

import struct

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
BROADCAST_MAC = "ff:ff:ff:ff:ff:ff"

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1

TCP_SYN = 0x02
TCP_ACK = 0x10
TCP_PSH = 0x08


def mac_bytes(mac: str) -> bytes:
    return bytes(int(p, 16) for p in mac.split(":"))


def ip_bytes(ip: str) -> bytes:
    return bytes(int(p) for p in ip.split("."))


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(">%dH" % (len(data) // 2), data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ethernet_frame(src_mac: str, dst_mac: str, ethertype: int, payload: bytes) -> bytes:
    frame = mac_bytes(dst_mac) + mac_bytes(src_mac) + struct.pack(">H", ethertype)
    frame += payload
    if len(frame) < 60:  # minimum Ethernet frame size, without FCS
        frame += b"\x00" * (60 - len(frame))
    return frame


def arp_packet(
    op: int, sender_mac: str, sender_ip: str, target_mac: str, target_ip: str
) -> bytes:
    return (
        struct.pack(">HHBBH", 1, ETHERTYPE_IPV4, 6, 4, op)
        + mac_bytes(sender_mac)
        + ip_bytes(sender_ip)
        + mac_bytes(target_mac if target_mac != BROADCAST_MAC else "00:00:00:00:00:00")
        + ip_bytes(target_ip)
    )


def ipv4_tcp_packet(
    src_ip: str,
    dst_ip: str,
    src_port: int,
    dst_port: int,
    seq: int,
    ack: int,
    flags: int,
    payload: bytes = b"",
    ip_id: int = 0,
) -> bytes:
    tcp = struct.pack(
        ">HHIIBBHHH",
        src_port,
        dst_port,
        seq & 0xFFFFFFFF,
        ack & 0xFFFFFFFF,
        5 << 4,  # data offset
        flags,
        8192,  # window
        0,  # checksum placeholder
        0,  # urgent pointer
    )
    pseudo = (
        ip_bytes(src_ip) + ip_bytes(dst_ip) + struct.pack(">BBH", 0, 6, len(tcp) + len(payload))
    )
    csum = _checksum(pseudo + tcp + payload)
    tcp = tcp[:16] + struct.pack(">H", csum) + tcp[18:]

    total_len = 20 + len(tcp) + len(payload)
    ip = struct.pack(
        ">BBHHHBBH",
        0x45,
        0,
        total_len,
        ip_id & 0xFFFF,
        0,
        64,
        6,
        0,  # checksum placeholder
    ) + ip_bytes(src_ip) + ip_bytes(dst_ip)
    ip = ip[:10] + struct.pack(">H", _checksum(ip)) + ip[12:]
    return ip + tcp + payload


def write_pcap(path, frames):
    """Write (timestamp_us, frame_bytes) pairs as a classic pcap file."""
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET
            )
        )
        for t_us, data in frames:
            fh.write(
                struct.pack("<IIII", t_us // 1_000_000, t_us % 1_000_000, len(data), len(data))
            )
            fh.write(data)
