import math

import numpy as np
import pytest

from c3net.network import (BASE_STATION, ChannelConfig, ResourceAllocation,
                           ScenarioConfig, USER, build_vr_scenario, capacities,
                           d2d_rate, neighbors_in_range, step_mobility)


def small_scenario(num_users=5, seed=0, **kw):
    cfg = ScenarioConfig(num_users=num_users, **kw)
    return build_vr_scenario(cfg, seed)


def test_build_vr_scenario_layout():
    state = small_scenario(num_users=10)
    assert state.num_nodes == 11
    assert state.bs_id == 10
    assert state.nodes[-1].kind == BASE_STATION
    assert tuple(state.positions[10]) == (50.0, 50.0)
    assert all(n.kind == USER for n in state.nodes[:-1])
    assert np.all(state.positions >= 0.0) and np.all(state.positions <= 100.0)
    assert state.nodes[-1].storage_fraction == 1.0


def test_build_vr_scenario_deterministic():
    a = small_scenario(seed=3)
    b = small_scenario(seed=3)
    assert np.array_equal(a.positions, b.positions)
    c = small_scenario(seed=4)
    assert not np.array_equal(a.positions, c.positions)


def test_step_mobility_respects_speed_and_arena():
    state = small_scenario(num_users=50)
    dt = 1e-3
    vmax = state.config.speed_max
    for _ in range(2000):
        before = state.positions[:50].copy()
        step_mobility(state, dt)
        moved = np.hypot(*(state.positions[:50] - before).T)
        # a user that reaches its waypoint inside the slot moves less
        assert np.all(moved <= vmax * dt + 1e-12)
        assert np.all(state.positions >= 0.0)
        assert np.all(state.positions <= state.config.arena_size)
    assert state.slot == 2000


def test_step_mobility_matches_scalar_reference():
    # one user followed for many slots against an independent scalar
    # re-implementation of waypoint kinematics driven by the same rng
    state = small_scenario(num_users=1, seed=9)
    ref = state.copy()
    pos = ref.positions[0].copy()
    target = ref._targets[0].copy()
    speed = float(ref._speeds[0])
    rng = ref.rng_stream
    dt = 0.25
    for _ in range(5000):
        step_mobility(state, dt)
        d = math.hypot(target[0] - pos[0], target[1] - pos[1])
        step = speed * dt
        if d > step:
            pos = pos + (target - pos) * (step / d)
        else:
            pos = target.copy()
            target = rng.uniform(0.0, ref.config.arena_size, size=(1, 2))[0]
            speed = float(rng.uniform(ref.config.speed_min,
                                      ref.config.speed_max, size=1)[0])
        assert np.allclose(state.positions[0], pos, atol=1e-9)


def test_step_mobility_no_users():
    state = small_scenario(num_users=0)
    step_mobility(state, 1e-3)
    assert state.slot == 1


def test_d2d_rate_reference_value():
    chan = ChannelConfig()
    # independent hand evaluation at 10 m: 70 dB pathloss, 1 W transmit,
    # thermal noise over 20 MHz
    prx = 10.0 ** (-70.0 / 10.0)
    noise = 10.0 ** ((-174.0 - 30.0) / 10.0) * 20e6
    expected = 20e6 * math.log2(1.0 + prx / noise)
    got = d2d_rate((0.0, 0.0), (10.0, 0.0), chan)
    assert abs(got - expected) <= 1e-9 * expected


def test_d2d_rate_range_and_clamp():
    chan = ChannelConfig()
    assert d2d_rate((0, 0), (20.01, 0), chan) == 0.0
    at_1m = d2d_rate((0, 0), (1.0, 0), chan)
    assert d2d_rate((0, 0), (0.2, 0), chan) == at_1m
    assert d2d_rate((0, 0), (0, 0), chan) == at_1m
    r5 = d2d_rate((0, 0), (5.0, 0), chan)
    r15 = d2d_rate((0, 0), (15.0, 0), chan)
    assert at_1m > r5 > r15 > 0.0


def test_d2d_rate_bandwidth_scaling():
    full = d2d_rate((0, 0), (10, 0), ChannelConfig())
    half = d2d_rate((0, 0), (10, 0), ChannelConfig(bw_scale=0.5))
    # halving bandwidth more than halves noise-limited capacity loss:
    # the rate drops, but by less than a factor of two (higher SNR)
    assert half < full
    assert half > full / 2.0


def test_neighbors_in_range():
    state = small_scenario(num_users=4)
    state.positions[:5] = [(0, 0), (5, 0), (30, 0), (0, 19.9), (50, 50)]
    assert neighbors_in_range(state, 0) == {1, 3}
    assert neighbors_in_range(state, 2) == set()
    with pytest.raises(KeyError):
        neighbors_in_range(state, 99)


def test_capacities_matching_and_fanout():
    state = small_scenario(num_users=6, bs_fanout=2)
    state.positions[:7] = [(0, 0), (5, 0), (10, 0), (40, 40), (60, 60),
                           (80, 80), (50, 50)]
    dt = 1e-3
    caps = capacities(state, ResourceAllocation(d2d_pairs=((0, 1),),
                                                bs_schedule=(3, 4)), dt)
    rate = d2d_rate(state.positions[0], state.positions[1],
                    state.config.channel)
    assert caps.link_bits[(0, 1)] == rate * dt
    assert caps.link_bits[(6, 3)] == 200e6 * dt
    assert caps.link_bits[(6, 4)] == 200e6 * dt

    with pytest.raises(ValueError):
        capacities(state, ResourceAllocation(d2d_pairs=((0, 1), (1, 2))), dt)
    with pytest.raises(ValueError):
        capacities(state, ResourceAllocation(bs_schedule=(0, 1, 2)), dt)
    with pytest.raises(ValueError):
        capacities(state, ResourceAllocation(bs_schedule=(0, 0)), dt)


def test_capacities_processor_scaling():
    state = small_scenario(num_users=2, proc_scale=0.4)
    caps = capacities(state, ResourceAllocation(), 1e-3)
    assert caps.proc_cycles[0] == pytest.approx(0.4 * 3e9 * 1e-3)
    assert caps.proc_cycles[2] == pytest.approx(10 * 3e9 * 1e-3)  # BS unscaled
    off = capacities(state, ResourceAllocation(proc_on=frozenset({0})), 1e-3)
    assert set(off.proc_cycles) == {0}


def test_copy_is_independent():
    state = small_scenario(num_users=3)
    clone = state.copy()
    step_mobility(state, 1.0)
    assert clone.slot == 0
    assert not np.array_equal(clone.positions[:3], state.positions[:3])


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(arena_size=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(proc_scale=1.5)
    with pytest.raises(ValueError):
        ChannelConfig(bw_scale=0.0)
    with pytest.raises(ValueError):
        ChannelConfig(coop_range=-1.0)
