"""Config validation, bundled scenario outcomes, replay and verification."""
import json

import pytest

from icsbed import scenario
from icsbed.scenario import (
    ReplayParseError,
    ValidationError,
    bundled_scenario_path,
    bundled_scenarios,
    load_config,
    parse_config,
    replay,
    run_scenario,
    verify_log,
)


def test_bundled_scenarios_present():
    names = bundled_scenarios()
    assert {"baseline", "mitm-crash", "dos-plc", "dos-hmi"} <= set(names)


def baseline_config(**overrides):
    cfg = load_config(bundled_scenario_path("baseline"))
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


# -- validation --------------------------------------------------------------

def err_path(doc):
    with pytest.raises(ValidationError) as exc:
        parse_config(doc)
    return exc.value.path


def test_unknown_top_level_field():
    assert err_path({"bogus": 1}) == "bogus"


def test_bad_seed():
    assert err_path({"seed": "x"}) == "seed"
    assert err_path({"seed": -1}) == "seed"
    assert err_path({"seed": 2**64}) == "seed"


def test_bad_duration():
    assert err_path({"duration_s": 0}) == "duration_s"
    assert err_path({"duration_s": "long"}) == "duration_s"


def test_attack_time_outside_duration():
    doc = {"duration_s": 10,
           "attacks": [{"t_s": 11, "op": "flood", "params": {}}]}
    assert err_path(doc) == "attacks[0].t_s"


def test_unknown_attack_op():
    doc = {"attacks": [{"t_s": 1, "op": "teleport"}]}
    assert err_path(doc) == "attacks[0].op"


def test_bad_profile():
    doc = {"attacks": [{"t_s": 1, "op": "flood", "profile": "alien"}]}
    assert err_path(doc) == "attacks[0].profile"


def test_unknown_operator_command():
    doc = {"operator": [{"t_s": 1, "cmd": "make_coffee"}]}
    assert err_path(doc) == "operator[0].cmd"


def test_bad_timing_override():
    assert err_path({"timing": {"warp": 1}}) == "timing.warp"
    assert err_path({"timing": {"io_poll_us": 0}}) == "timing"


def test_topology_must_stay_in_subnet():
    assert err_path({"topology": {"plc": "10.0.0.5"}}) == "topology.plc"
    assert err_path({"topology": {"nas": "192.168.0.40"}}) == "topology.nas"


def test_missing_config_file():
    with pytest.raises(ValidationError):
        load_config("/nonexistent/path.json")


def test_bundled_configs_all_validate():
    for name in bundled_scenarios():
        cfg = load_config(bundled_scenario_path(name))
        assert cfg.duration_s > 0


# -- runs ---------------------------------------------------------------------

def test_baseline_outcome():
    log, summary, _ = run_scenario(baseline_config(duration_s=20.0))
    assert summary["state_sequence"] == [1, 2, 3, 4, 5, 1]
    assert summary["cycle_count"] == 1
    assert summary["damaged"] is False


def test_mitm_crash_outcome():
    _, summary, _ = run_scenario(load_config(bundled_scenario_path("mitm-crash")))
    assert summary["damaged"] is True
    assert summary["damage_reason"] == "punch crash"


def test_dos_plc_ends_in_error_state():
    _, summary, _ = run_scenario(load_config(bundled_scenario_path("dos-plc")))
    assert summary["final_state"] == 6
    assert summary["error_code"] == 1  # watchdog tripped on IO timeouts


def test_dos_hmi_stalls_snapshot_but_process_completes():
    cfg = load_config(bundled_scenario_path("dos-hmi"))
    testbed = scenario.Testbed(cfg)
    testbed.start()
    for spec in cfg.attacks:
        testbed.kernel.at(int(spec.t_s * 1_000_000),
                          lambda s=spec: scenario._dispatch_attack(testbed, s))
    for cmd in cfg.operator:
        testbed.kernel.at(int(cmd.t_s * 1_000_000),
                          lambda c=cmd: testbed.hmi.hmi_command(c.cmd, **c.kwargs))
    stale_seen = False
    while testbed.kernel.now_us < cfg.duration_us:
        testbed.kernel.run_until(testbed.kernel.now_us + 500_000)
        if 4_000_000 < testbed.kernel.now_us < 12_000_000 and testbed.hmi.stale:
            stale_seen = True
    assert stale_seen
    assert testbed.plc.cycle_count == 1
    assert not testbed.plant.state.damaged


def test_outputs_written(tmp_path):
    cfg = baseline_config(duration_s=5.0)
    cfg.outputs = {"log": str(tmp_path / "run.jsonl"),
                   "pcap": str(tmp_path / "run.pcap")}
    log, summary, _ = run_scenario(cfg)
    text = (tmp_path / "run.jsonl").read_text()
    assert verify_log(text, summary["digest"])
    assert (tmp_path / "run.pcap").read_bytes()[:4] == b"\xd4\xc3\xb2\xa1"


# -- determinism ---------------------------------------------------------------

def test_same_seed_same_digest():
    for name in bundled_scenarios():
        cfg1 = load_config(bundled_scenario_path(name))
        cfg2 = load_config(bundled_scenario_path(name))
        if name == "baseline":
            cfg1.duration_s = cfg2.duration_s = 15.0
        _, s1, _ = run_scenario(cfg1)
        _, s2, _ = run_scenario(cfg2)
        assert s1["digest"] == s2["digest"], name


def test_seed_changes_digest_not_behaviour():
    a = run_scenario(baseline_config(duration_s=20.0, seed=1))[1]
    b = run_scenario(baseline_config(duration_s=20.0, seed=99))[1]
    assert a["digest"] != b["digest"]
    assert a["state_sequence"] == b["state_sequence"] == [1, 2, 3, 4, 5, 1]
    assert a["cycle_count"] == b["cycle_count"] == 1


# -- replay / verify -------------------------------------------------------------

def test_replay_state_lines():
    log, _, _ = run_scenario(baseline_config(duration_s=20.0))
    lines = replay(log.serialize(), "state")
    plc_lines = [ln for ln in lines if "plc" in ln]
    assert len(plc_lines) == 5  # 1->2->3->4->5->1
    assert "Goods to punching machine" in plc_lines[0]


def test_replay_attack_filter_empty_on_clean_run():
    log, _, _ = run_scenario(baseline_config(duration_s=5.0))
    assert replay(log.serialize(), "attack") == []


def test_replay_truncated_log_fails_with_offset():
    log, _, _ = run_scenario(baseline_config(duration_s=2.0))
    text = log.serialize()
    broken = text[: len(text) - 10]
    with pytest.raises(ReplayParseError) as exc:
        replay(broken)
    assert exc.value.offset == len(broken.splitlines())


def test_replay_rejects_non_record_json():
    with pytest.raises(ReplayParseError):
        replay(json.dumps({"no": "time"}) + "\n")


def test_verify_detects_single_byte_flip():
    log, summary, _ = run_scenario(baseline_config(duration_s=2.0))
    text = log.serialize()
    assert verify_log(text, summary["digest"])
    flipped = text.replace("packet", "p4cket", 1)
    assert not verify_log(flipped, summary["digest"])


def test_verify_empty_log_digest_is_stable():
    from icsbed.kernel import EventLog
    assert verify_log("", EventLog().digest())
