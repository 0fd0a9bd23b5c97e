"""Attack toolkit: permission gating, discovery, MitM rewriting, floods."""
import pytest

from icsbed import attacks, modbus, plc
from icsbed.attacks import (
    ATTACK_MATRIX,
    AttackerProfile,
    AttackToolkit,
    SpoofRule,
    permitted,
)
from icsbed.kernel import SECOND
from icsbed.netfabric import CapabilityError
from icsbed.scenario import ScenarioConfig, Testbed


@pytest.fixture
def bench():
    tb = Testbed(ScenarioConfig(seed=9, duration_s=120))
    tb.start()
    tb.kernel.run_until(SECOND)
    return tb


def run_op(tb, gen):
    out = []
    tb.kernel.spawn(gen, out.append)
    tb.kernel.run_until(tb.kernel.now_us + 60 * SECOND)
    assert out, "attack op never finished"
    return out[0]


def test_matrix_has_15_rows():
    assert len(ATTACK_MATRIX) == 15
    assert len({r.name for r in ATTACK_MATRIX}) == 15


def test_remote_permissions_match_matrix():
    remote = AttackerProfile("remote")
    local = AttackerProfile("local")
    allowed_remote = {r.name for r in ATTACK_MATRIX if r.remote}
    assert allowed_remote == {"dos_sensor", "dos_plc", "dos_hmi", "dos_scada",
                              "attack_scada"}
    for row in ATTACK_MATRIX:
        assert permitted(row.name, remote) == row.remote
        assert permitted(row.name, local) is True


def test_remote_sniff_and_mitm_rejected(bench):
    kit = AttackToolkit(bench, AttackerProfile("remote"))
    with pytest.raises(CapabilityError):
        next(kit.sniff(SECOND))
    with pytest.raises(CapabilityError):
        next(kit.mitm_spoof("192.168.0.52", "192.168.0.30", [], SECOND))
    with pytest.raises(CapabilityError):
        kit.physical_attack("remove_workpiece")
    with pytest.raises(CapabilityError):
        kit.hmi_physical("estop")


def test_remote_flood_allowed(bench):
    kit = AttackToolkit(bench, AttackerProfile("remote"))
    report = run_op(bench, kit.flood("192.168.0.30", 1000, SECOND))
    assert report.op == "dos_plc"
    assert report.details["sent"] >= 900


def test_discovery_finds_the_modbus_servers(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    found = run_op(bench, kit.discover(sorted(bench.fabric.hosts)))
    ips = {ip for ip, _, _ in found}
    assert ips == {"192.168.0.30", "192.168.0.51", "192.168.0.52"}
    identities = {ip: objs for ip, _, objs in found}
    assert identities["192.168.0.30"][1] == "soft-plc"


def test_mirror_sniff_captures_modbus(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    captured = run_op(bench, kit.sniff(2 * SECOND, mode="mirror"))
    assert len(captured) > 50  # plenty of poll traffic in two seconds
    assert kit.node.port not in bench.fabric.switch.mirror_sources


def test_unauthorized_coil_write_works(bench):
    kit = AttackToolkit(bench, AttackerProfile("remote"))
    report = run_op(bench, kit.unauthorized_write(
        "192.168.0.30", "coil", plc.COIL_ESTOP, True,
    ))
    assert report.details["ok"]
    bench.kernel.run_until(bench.kernel.now_us + SECOND)
    assert bench.plc.state == plc.ERROR  # nothing authenticated that write


def test_register_write_hits_readonly_space(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    report = run_op(bench, kit.unauthorized_write(
        "192.168.0.51", "register", 0, 99,
    ))
    assert report.details["ok"]
    assert report.details["exception_code"] == modbus.EXC_ILLEGAL_FUNCTION


def test_mitm_rewrites_limit_switch(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    rule = SpoofRule(direction="response", src_ip="192.168.0.52",
                     dst_ip="192.168.0.30", function_code=modbus.READ_DISCRETE_INPUTS,
                     address=1, set_value=0)
    bench.hmi.hmi_command("place_order")
    report = run_op(bench, kit.mitm_spoof(
        "192.168.0.52", "192.168.0.30", [rule], 12 * SECOND,
    ))
    assert report.details["rewrites"] > 0
    assert bench.plant.state.damaged
    assert bench.plant.state.damage_reason == "punch crash"
    tampers = bench.kernel.log.by_category("tamper")
    assert any(t["type"] == "arp_poison" for t in tampers)
    assert any(t["type"] == "mitm_rewrite" for t in tampers)


def test_mitm_without_rules_is_transparent(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    bench.hmi.hmi_command("place_order")
    run_op(bench, kit.mitm_spoof("192.168.0.51", "192.168.0.30", [], 15 * SECOND))
    assert bench.plc.cycle_count == 1
    assert not bench.plant.state.damaged


def test_traffic_restored_after_mitm(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    run_op(bench, kit.mitm_spoof("192.168.0.51", "192.168.0.30", [], 3 * SECOND))
    assert bench.plc.state != plc.ERROR
    bench.hmi.hmi_command("place_order")
    bench.kernel.run_until(bench.kernel.now_us + 15 * SECOND)
    assert bench.plc.cycle_count == 1


def test_physical_disconnect_io(bench):
    kit = AttackToolkit(bench, AttackerProfile("local"))
    report = kit.physical_attack("disconnect_io", ip="192.168.0.52")
    assert report.op == "disconnect_io"
    bench.kernel.run_until(bench.kernel.now_us + 2 * SECOND)
    assert bench.plc.state == plc.ERROR
    assert bench.plc.error_code == plc.ERR_IO_TIMEOUT


def test_tamper_historian_logged(bench):
    bench.kernel.run_until(bench.kernel.now_us + 3 * SECOND)
    kit = AttackToolkit(bench, AttackerProfile("remote"))
    report = kit.tamper_historian(bench.scada, "state", 1)
    assert report.op == "attack_scada"
    assert any(t["type"] == "historian_rewrite"
               for t in bench.kernel.log.by_category("tamper"))


def test_spoof_rule_matching():
    rule = SpoofRule(direction="response", src_ip="a", function_code=2)
    assert rule.matches("response", "a", "b", 2)
    assert not rule.matches("request", "a", "b", 2)
    assert not rule.matches("response", "x", "b", 2)
    assert not rule.matches("response", "a", "b", 3)


def test_apply_rule_rewrites_by_data_address():
    request = modbus.ReadRequest(modbus.READ_DISCRETE_INPUTS, 0, 3)
    response = modbus.ReadBitsResponse(modbus.READ_DISCRETE_INPUTS,
                                       (False, True, False))
    rule = SpoofRule(address=1, set_value=0)
    out = attacks._apply_rule(response, rule, request)
    assert out.bits[1] is False
    # already at the target value: identity, no tamper
    assert attacks._apply_rule(out, rule, request) is out
