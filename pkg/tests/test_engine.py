import dataclasses

import numpy as np
import pytest

from c3net.engine import (Metrics, SimConfig, attained_performance,
                          is_feasible, run)
from c3net.queueing import DeliveryRecord
from c3net.service import Request

SMALL = SimConfig(horizon_slots=1200, warmup_slots=300, lambda_fps=20.0,
                  num_users=20, seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(warmup_slots=100, horizon_slots=100)
    with pytest.raises(ValueError):
        SimConfig(beta1=1.5)
    with pytest.raises(ValueError):
        SimConfig(policy="nope")
    assert SimConfig(scaling_factor=2.0, object_bits=3e6).output_bits == 6e6


def test_zero_load_run():
    m = run(dataclasses.replace(SMALL, lambda_fps=0.0))
    assert m.issued_total == 0
    assert m.deliveries == []
    assert m.in_flight_end == 0
    assert m.violations == []
    assert float(m.queue_traj.max()) == 0.0


def test_run_is_deterministic():
    a = run(SMALL)
    b = run(SMALL)
    assert a.deliveries == b.deliveries
    assert np.array_equal(a.queue_traj, b.queue_traj)
    c = run(dataclasses.replace(SMALL, seed=1))
    assert c.deliveries != a.deliveries


def test_run_basic_accounting():
    m = run(SMALL)
    assert m.violations == []
    assert m.stage1_bits_created == 2.0 * m.processed_input_bits
    ids = [d.request_id for d in m.deliveries]
    assert len(ids) == len(set(ids))
    for d in m.deliveries:
        assert d.completion_slot > d.arrival_slot          # causality
        assert d.arrival_slot >= SMALL.warmup_slots        # warmup filter
        assert d.delay_s == pytest.approx(
            (d.completion_slot - d.arrival_slot) * SMALL.slot_duration)
    assert m.completed_post_warmup >= len(m.deliveries)
    # everything issued is either delivered, censored, or completed pre-warmup
    assert len(m.deliveries) + m.in_flight_end <= m.issued_total
    assert 0.0 <= m.utilization["bs_downlink"] <= 1.0
    assert 0.0 <= m.utilization["processors"] <= 1.0


def test_run_replays_external_trace():
    trace = [Request(0, 0, 3, 350), Request(1, 5, 0, 400), Request(2, 9, 1, 400)]
    a = run(SMALL, requests=trace)
    b = run(SMALL, requests=trace)
    assert a.issued_total == 3
    assert a.deliveries == b.deliveries
    assert len(a.deliveries) == 3


def test_queue_trajectory_and_export():
    m = run(dataclasses.replace(SMALL, queue_export_every=200))
    assert m.queue_traj.shape == (SMALL.horizon_slots,)
    assert np.all(m.queue_traj >= 0.0)
    assert m.queue_rows
    slots = {r[0] for r in m.queue_rows}
    assert slots <= set(range(0, SMALL.horizon_slots, 200))


def test_mec_uses_only_the_bs():
    m = run(dataclasses.replace(SMALL, policy="mec", lambda_fps=5.0))
    assert m.utilization["d2d_bits"] == 0.0
    assert m.utilization["d2d_matched_fraction"] == 0.0
    assert m.utilization["bs_downlink"] > 0.0
    assert len(m.deliveries) > 0


def test_dcnc_runs_and_delivers():
    m = run(dataclasses.replace(SMALL, policy="dcnc", lambda_fps=5.0,
                                num_users=10))
    assert m.violations == []
    assert len(m.deliveries) > 0


def test_attained_performance_arithmetic():
    cfg = SMALL
    m = Metrics(config=cfg, completed_post_warmup=90)
    m.deliveries = [DeliveryRecord(i, 0, 0, 300, 310, 0.01) for i in range(90)]
    thr, delay = attained_performance(m, horizon_s=0.9, users=20)
    assert thr == pytest.approx(90 / (0.9 * 20))
    assert delay == pytest.approx(0.01)
    thr, delay = attained_performance(Metrics(config=cfg), 1.0, 20)
    assert thr == 0.0 and delay is None
    with pytest.raises(ValueError):
        attained_performance(m, 0.0, 20)


def test_is_feasible_thresholds():
    m = run(SMALL)
    assert is_feasible(SMALL, delay_req_s=10.0, metrics=m)
    assert not is_feasible(SMALL, delay_req_s=1e-9, metrics=m)
