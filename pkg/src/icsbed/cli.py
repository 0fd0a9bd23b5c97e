"""Command-line entry point.

Exit codes: 0 success, 2 validation problem (bad config, bad log file),
3 runtime failure. The default output directory comes from ICSBED_OUT_DIR
and falls back to the working directory.
"""
from __future__ import annotations

import json
import os
import sys
import urllib.error
import urllib.request

import click

from . import analytics, plotting, scenario
from .kernel import SECOND

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _out_dir() -> str:
    path = os.environ.get("ICSBED_OUT_DIR", ".")
    os.makedirs(path, exist_ok=True)
    return path


def _resolve_config(ref: str) -> scenario.ScenarioConfig:
    """Accept a config path or the bare name of a bundled scenario."""
    if not os.path.exists(ref) and "/" not in ref:
        try:
            ref = scenario.bundled_scenario_path(ref.removesuffix(".json"))
        except scenario.ValidationError:
            pass
    return scenario.load_config(ref)


@click.group()
def main():
    """Deterministic miniature ICS testbed: process, PLC, network, attacks."""


@main.command()
@click.argument("config_ref")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--bridge-http", type=int, default=None, metavar="PORT",
              help="Serve the operator HTTP API, paced 1:1 with wall time.")
@click.option("--pcap", "pcap_path", type=click.Path(), default=None,
              help="Also write the full traffic capture here.")
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Event log path (default <outdir>/<name>.log.jsonl).")
def run(config_ref, seed, bridge_http, pcap_path, log_path):
    """Run a scenario (a config path or a bundled name like 'baseline')."""
    try:
        config = _resolve_config(config_ref)
    except scenario.ValidationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    if seed is not None:
        config.seed = seed
    if log_path is None:
        log_path = os.path.join(_out_dir(), f"{config.name}.log.jsonl")
    config.outputs.setdefault("log", log_path)
    if pcap_path is not None:
        config.outputs["pcap"] = pcap_path

    if bridge_http is not None:
        from . import httpbridge

        click.echo(f"serving operator API on http://127.0.0.1:{bridge_http}")
        try:
            httpbridge.serve(config, bridge_http)
        except Exception as exc:  # noqa: BLE001 - boundary
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
        return

    try:
        _, summary, _ = scenario.run_scenario(config)
    except OSError as exc:
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command()
@click.argument("log_file", type=click.Path(exists=True))
@click.option("--filter", "category", default=None,
              help="Only show records of this category (e.g. state, attack).")
def replay(log_file, category):
    """Render a stored event log as an aligned timeline."""
    with open(log_file) as fh:
        text = fh.read()
    try:
        lines = scenario.replay(text, category)
    except scenario.ReplayParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    for line in lines:
        click.echo(line)


@main.command()
@click.argument("log_file", type=click.Path(exists=True))
@click.argument("digest")
def verify(log_file, digest):
    """Recompute the log digest and compare against the expected value."""
    with open(log_file) as fh:
        text = fh.read()
    if scenario.verify_log(text, digest):
        click.echo("pass")
    else:
        click.echo("fail")
        sys.exit(1)


@main.command()
@click.argument("name")
@click.option("--url", default="http://127.0.0.1:8000",
              help="Base URL of a running bridged instance.")
@click.option("--target", default=None, help="Target IP where applicable.")
@click.option("--profile", type=click.Choice(["local", "remote"]), default="local")
@click.option("--param", "params", multiple=True, metavar="KEY=VALUE",
              help="Extra attack parameter; repeatable. Values parse as JSON.")
def attack(name, url, target, profile, params):
    """Launch one ad-hoc attack against a running bridged instance."""
    body = {"op": name, "profile": profile, "params": {}}
    if target is not None:
        body["params"]["target"] = target
    for item in params:
        if "=" not in item:
            click.echo(f"bad --param {item!r}, expected KEY=VALUE", err=True)
            sys.exit(EXIT_VALIDATION)
        key, _, raw = item.partition("=")
        try:
            body["params"][key] = json.loads(raw)
        except json.JSONDecodeError:
            body["params"][key] = raw
    req = urllib.request.Request(
        url.rstrip("/") + "/api/attack",
        data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            click.echo(resp.read().decode())
    except urllib.error.HTTPError as exc:
        click.echo(f"rejected: {exc.read().decode()}", err=True)
        sys.exit(EXIT_VALIDATION)
    except urllib.error.URLError as exc:
        click.echo(f"cannot reach bridge: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command()
@click.argument("log_file", type=click.Path(exists=True))
@click.option("--out-dir", default=None, help="Where to write report artifacts.")
def report(log_file, out_dir):
    """Analytics over a stored log: rates CSV, impact JSON, figures."""
    out_dir = out_dir or _out_dir()
    os.makedirs(out_dir, exist_ok=True)
    with open(log_file) as fh:
        text = fh.read()
    try:
        records = scenario.parse_log_text(text)
    except scenario.ReplayParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)

    base = os.path.join(out_dir, os.path.basename(log_file).split(".")[0])
    density = analytics.packet_rate_density(records)
    summary = _summary_from_log(records)
    impact = analytics.impact_report(records, summary)

    rates_csv = f"{base}.rates.csv"
    analytics.export_rates_csv(rates_csv, density)
    report_json = f"{base}.report.json"
    with open(report_json, "w") as fh:
        json.dump(
            {
                "summary": summary,
                "impact": impact.to_dict(),
                "rates": {
                    dev: {"mode_pps": info["mode"], "mean_pps": info["mean"]}
                    for dev, info in sorted(density.items())
                },
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    artifacts = [rates_csv, report_json]
    if density:
        artifacts.append(plotting.plot_rate_density(density, f"{base}.density.png"))
        artifacts.append(plotting.plot_rate_timeline(density, f"{base}.timeline.png"))
    for path in artifacts:
        click.echo(path)


def _summary_from_log(records) -> dict:
    """Reconstruct the run outcome from log records alone."""
    state = 1
    damaged = False
    reason = ""
    for r in records:
        if r["cat"] != "state":
            continue
        if r.get("event") == "damaged":
            damaged = True
            reason = r.get("reason", "")
        elif "to" in r:
            state = r["to"]
    t_end = records[-1]["t_us"] if records else 0
    return {
        "final_state": state,
        "damaged": damaged,
        "damage_reason": reason,
        "duration_virtual_s": t_end / SECOND,
    }


if __name__ == "__main__":
    main()
