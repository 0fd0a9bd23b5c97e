"""Report figures. Headless matplotlib only; every function writes a file."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_rate_density(density: dict, path: str, title: str = "Outgoing packet rate"):
    """Smoothed per-device packet-rate density, one curve per device."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for dev in sorted(density):
        info = density[dev]
        ax.plot(info["density_grid"], info["density"],
                label=f"{dev} (mode {info['mode']:.0f} pkt/s)")
    ax.set_xlabel("packets per second")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_rate_timeline(density: dict, path: str, title: str = "Packet rate over time"):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for dev in sorted(density):
        series = density[dev]["series"]
        ax.plot(range(len(series.samples)), series.samples, label=dev, linewidth=1)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("packets per second")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
