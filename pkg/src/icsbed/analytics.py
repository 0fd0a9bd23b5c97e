"""Post-run traffic and impact analytics.

Everything here is pure post-processing over the immutable event log:
per-device outgoing packet rates (the traffic-density evaluation), Modbus
response-latency statistics, and a coarse attack-impact classification with
the CIA/STRIDE labels of the attack table.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import ROWS_BY_NAME
from .kernel import SECOND


@dataclass
class RateSeries:
    device: str
    window_s: float
    samples: list  # packets per window over the run

    @property
    def total(self) -> int:
        return int(sum(self.samples))

    @property
    def mode(self) -> float:
        if not self.samples:
            return 0.0
        values, counts = np.unique(np.asarray(self.samples), return_counts=True)
        return float(values[np.argmax(counts)])  # ties resolve to the smallest

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples)) if self.samples else 0.0


def packet_rate_density(records, window_s: float = 1.0, bandwidth: float = 2.0):
    """Per-device outgoing packet-rate series plus a smoothed density summary.

    Counts every logged packet by its sending device (mirror duplicates are
    never logged; keepalives are not modeled, hence trivially excluded).
    """
    packets = [r for r in records if r["cat"] == "packet"]
    if not packets:
        return {}
    t_end = max(r["t_us"] for r in packets)
    window_us = int(window_s * SECOND)
    nwindows = t_end // window_us + 1
    by_dev = {}
    for r in packets:
        dev = r["dev"]
        if dev not in by_dev:
            by_dev[dev] = [0] * nwindows
        by_dev[dev][r["t_us"] // window_us] += 1
    out = {}
    for dev, samples in by_dev.items():
        series = RateSeries(dev, window_s, samples)
        grid = np.arange(0, max(samples) + 4 * bandwidth + 1.0)
        density = np.zeros_like(grid, dtype=float)
        for s in samples:
            density += np.exp(-0.5 * ((grid - s) / bandwidth) ** 2)
        density /= density.sum() if density.sum() else 1.0
        out[dev] = {
            "series": series,
            "mode": series.mode,
            "mean": series.mean,
            "density_grid": grid,
            "density": density,
        }
    return out


@dataclass
class LatencyStats:
    count: int = 0
    p50_us: float = 0.0
    p95_us: float = 0.0
    max_us: float = 0.0
    timeouts: int = 0


def latency_stats(records, pair) -> LatencyStats:
    """Response-latency percentiles for transactions src->dst."""
    src, dst = pair
    txns = [
        r for r in records
        if r["cat"] == "txn" and r["src_ip"] == src and r["dst_ip"] == dst
    ]
    lat = [r["latency_us"] for r in txns if r["ok"]]
    stats = LatencyStats(timeouts=sum(1 for r in txns if not r["ok"]))
    if not lat:
        return stats
    arr = np.asarray(lat, dtype=float)
    stats.count = len(lat)
    stats.p50_us = float(np.percentile(arr, 50))
    stats.p95_us = float(np.percentile(arr, 95))
    stats.max_us = float(arr.max())
    return stats


@dataclass
class ImpactReport:
    classification: str  # normal | halted | damaged | blinded | tampered
    attacks: list = field(default_factory=list)  # table rows for ops seen
    cia: str = ""
    stride: str = ""
    detection_artifacts: list = field(default_factory=list)

    def to_dict(self):
        return {
            "classification": self.classification,
            "attacks": self.attacks,
            "cia": self.cia,
            "stride": self.stride,
            "detection_artifacts": self.detection_artifacts,
        }


def _row_for_attack_record(r) -> str | None:
    """Map one logged attack record back to its attack-table row."""
    op = r.get("op")
    if op in ROWS_BY_NAME:  # disconnect_io, hmi_physical, ...
        return op
    if op == "flood":
        return {
            "192.168.0.30": "dos_plc",
            "192.168.0.10": "dos_hmi",
            "192.168.0.20": "dos_scada",
        }.get(r.get("target"), "dos_sensor")
    if op == "mitm_spoof":
        pair = {r.get("a"), r.get("b")}
        if "192.168.0.51" in pair or "192.168.0.52" in pair:
            return "mitm_io_plc"
        if "192.168.0.10" in pair:
            return "mitm_hmi_plc"
        return "mitm_scada_plc"
    return {
        "sniff": "sniff_control",
        "unauthorized_write": "attack_scada",
        "tamper_historian": "attack_scada",
        "remove_workpiece": "manipulate_process",
        "place_workpiece": "manipulate_process",
        "force_sensor": "manipulate_io_physical",
        "destroy": "physical_damage",
    }.get(op)


def impact_report(records, summary) -> ImpactReport:
    """Classify a finished run from its ground-truth log."""
    tampers = [r for r in records if r["cat"] == "tamper"]
    attacks = [r for r in records if r["cat"] == "attack"]
    damaged = summary.get("damaged", False)

    if damaged:
        classification = "damaged"
    elif summary.get("final_state") == 6:
        classification = "halted"
    elif any(r["type"] == "historian_rewrite" for r in tampers):
        classification = "tampered"
    elif any(r["type"] == "mitm_rewrite" for r in tampers):
        classification = "blinded"
    else:
        classification = "normal"

    artifacts = []
    if any(r["type"] == "arp_poison" for r in tampers):
        artifacts.append("arp_anomaly")
    if any(r["type"] == "mitm_rewrite" for r in tampers):
        artifacts.append("value_discontinuity")
    if any(r["type"] == "historian_rewrite" for r in tampers):
        artifacts.append("historian_rewrite")
    if any(r["cat"] == "packet" and r["kind"] == "flood" for r in records):
        artifacts.append("flood_traffic")
    if any(r["cat"] == "drop" and r.get("reason") == "queue_full" for r in records):
        artifacts.append("queue_drops")
    if any(r.get("op") in ("force_sensor", "remove_workpiece", "destroy")
           for r in attacks):
        artifacts.append("physical_interference")

    rows = []
    cia = set()
    stride = set()
    seen = set()
    for r in attacks:
        name = _row_for_attack_record(r)
        if name is None or name in seen:
            continue
        row = ROWS_BY_NAME[name]
        seen.add(name)
        rows.append({
            "attack": row.name, "level": row.level, "cia": row.cia,
            "stride": row.stride, "tool": row.tool, "skill": row.skill,
            "impact": row.impact, "detection": row.detection,
        })
        cia.update(row.cia)
        stride.update(row.stride)

    order = "CIA"
    sorder = "STRIDE"
    return ImpactReport(
        classification=classification,
        attacks=rows,
        cia="".join(c for c in order if c in cia),
        stride="".join(s for s in sorder if s in stride),
        detection_artifacts=artifacts,
    )


def export_rates_csv(path, density):
    with open(path, "w") as fh:
        fh.write("window,device,pps\n")
        for dev, info in sorted(density.items()):
            for i, pps in enumerate(info["series"].samples):
                fh.write(f"{i},{dev},{pps}\n")
