"""Physics properties: boundedness, damage latching, step refinement."""
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsbed import process
from icsbed.process import (
    DOWN, FWD, REV, STOP, UP, ProcessConfig, ProcessState,
    inject_physical, read_sensors, reset_process, step,
)

CONV_CMDS = (STOP, FWD, REV)
PUNCH_CMDS = (STOP, DOWN, UP)


def test_initial_sensors():
    cfg = ProcessConfig()
    s = read_sensors(ProcessState(), cfg)
    assert s.barrier_a and not s.barrier_b
    assert s.limit_upper and not s.limit_lower


def test_tick_motion_is_exact():
    cfg = ProcessConfig()
    st_ = ProcessState(conveyor_cmd=FWD, punch_cmd=DOWN)
    st_ = step(st_, cfg, cfg.tick_us)
    assert st_.x == 5.2  # 20 units/s * 10 ms, on the exact grid
    assert st_.z == 99.5  # 50 units/s * 10 ms


def test_punch_stops_exactly_at_floor():
    cfg = ProcessConfig()
    st_ = ProcessState(z=0.5, punch_cmd=DOWN)
    st_ = step(st_, cfg, cfg.tick_us)
    assert st_.z == 0.0
    assert not st_.damaged


def test_punch_crash_below_floor():
    cfg = ProcessConfig()
    st_ = ProcessState(z=0.0, punch_cmd=DOWN)
    st_ = step(st_, cfg, cfg.tick_us)
    assert st_.damaged
    assert st_.damage_reason == "punch crash"
    assert st_.z == 0.0


def test_damage_freezes_motion_until_reset():
    cfg = ProcessConfig()
    st_ = ProcessState(z=0.0, punch_cmd=DOWN, conveyor_cmd=FWD)
    st_ = step(st_, cfg, cfg.tick_us)
    assert st_.damaged
    x, z = st_.x, st_.z
    st_ = step(st_, cfg, cfg.tick_us)
    assert (st_.x, st_.z) == (x, z) and st_.damaged
    st_ = reset_process(st_)
    assert not st_.damaged and st_.z == 100.0


def test_zero_dt_rejected():
    with pytest.raises(ValueError):
        step(ProcessState(), ProcessConfig(), 0)


def test_forced_sensor_expires():
    cfg = ProcessConfig()
    st_ = inject_physical(ProcessState(), "force_sensor", now_us=0,
                          sensor="limit_lower", value=True, duration_us=1000)
    assert read_sensors(st_, cfg, 500).limit_lower
    assert not read_sensors(st_, cfg, 1000).limit_lower


def test_remove_workpiece_clears_barriers():
    cfg = ProcessConfig()
    st_ = inject_physical(ProcessState(), "remove_workpiece")
    s = read_sensors(st_, cfg)
    assert not s.barrier_a and not s.barrier_b


def test_destroy_latches_damage():
    st_ = inject_physical(ProcessState(), "destroy", component="punch")
    assert st_.damaged
    assert st_.damage_reason == "destroyed: punch"


def test_unknown_injections_rejected():
    with pytest.raises(ValueError):
        inject_physical(ProcessState(), "teleport")
    with pytest.raises(ValueError):
        inject_physical(ProcessState(), "force_sensor", sensor="nope",
                        value=True, duration_us=1)
    with pytest.raises(ValueError):
        inject_physical(ProcessState(), "destroy", component="nope")


def test_config_validation():
    with pytest.raises(ValueError):
        ProcessConfig(belt_speed=0).validate()
    with pytest.raises(ValueError):
        ProcessConfig(barrier_b_pos=200).validate()
    with pytest.raises(ValueError):
        ProcessConfig(tick_us=0).validate()


def test_bulk_random_walk_10k_steps():
    """Bounds and the damage latch hold over >=10^4 random steps."""
    cfg = ProcessConfig()
    rng = random.Random(777)
    st_ = ProcessState()
    was_damaged = False
    for _ in range(10_000):
        st_.conveyor_cmd = rng.choice(CONV_CMDS)
        st_.punch_cmd = rng.choice(PUNCH_CMDS)
        st_ = step(st_, cfg, cfg.tick_us)
        assert 0.0 <= st_.x <= cfg.conveyor_length
        assert 0.0 <= st_.z <= cfg.punch_travel
        if was_damaged:
            assert st_.damaged  # latched
        was_damaged = st_.damaged


@given(
    cmds=st.lists(
        st.tuples(st.sampled_from(CONV_CMDS), st.sampled_from(PUNCH_CMDS)),
        min_size=1, max_size=200,
    ),
    dt_ms=st.integers(1, 50),
)
@settings(max_examples=200)
def test_prop_bounds_hold(cmds, dt_ms):
    cfg = ProcessConfig()
    st_ = ProcessState()
    for conv, punch in cmds:
        st_.conveyor_cmd = conv
        st_.punch_cmd = punch
        st_ = step(st_, cfg, dt_ms * 1000)
        assert 0.0 <= st_.x <= cfg.conveyor_length
        assert 0.0 <= st_.z <= cfg.punch_travel


@given(
    cmds=st.lists(
        st.tuples(st.sampled_from(CONV_CMDS), st.sampled_from(PUNCH_CMDS)),
        min_size=1, max_size=100,
    ),
)
@settings(max_examples=200)
def test_prop_refinement(cmds):
    """Halving the time step keeps trajectories together.

    The damage flag may only disagree right at the floor, where one grid
    lands exactly on zero and the other crosses it.
    """
    cfg = ProcessConfig()
    dt = cfg.tick_us
    coarse = ProcessState()
    fine = ProcessState()
    for conv, punch in cmds:
        coarse.conveyor_cmd = fine.conveyor_cmd = conv
        coarse.punch_cmd = fine.punch_cmd = punch
        coarse = step(coarse, cfg, dt)
        fine = step(step(fine, cfg, dt // 2), cfg, dt // 2)
        if coarse.damaged != fine.damaged:
            dz = cfg.punch_speed * dt / 1_000_000.0
            assert min(coarse.z, fine.z) <= dz
            return
        assert abs(coarse.x - fine.x) < 1e-6
        assert abs(coarse.z - fine.z) < 1e-6
