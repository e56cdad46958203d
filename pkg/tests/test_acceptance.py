"""End-to-end acceptance gate.

Each test prints one `criterion N (...): PASS/FAIL` line (run pytest with -s
to see them inline). The heavy simulations are shared through module-scoped
fixtures. Criterion 8's sampling check is known to fail at the demanded
tolerance; see the accompanying notes for the analysis.
"""

import dataclasses
import json
import time

import numpy as np
import pytest

from c3net.cli import main
from c3net.engine import SimConfig, attained_performance, is_feasible, run
from c3net.oracle import oracle_check
from c3net.service import zipf_pmf


def report(num, desc, ok, extra=""):
    status = "PASS" if ok else "FAIL"
    line = f"criterion {num} ({desc}): {status}"
    if extra:
        line += f"  [{extra}]"
    print(line, flush=True)
    return ok


# --- shared heavy runs ------------------------------------------------------

@pytest.fixture(scope="module")
def default_run():
    cfg = SimConfig()                      # 100 users, 60 fps, 30 s
    t0 = time.time()
    m = run(cfg)
    return cfg, m, time.time() - t0


@pytest.fixture(scope="module")
def sweep_runs():
    """(policy, lambda, gamma_cache) -> (throughput_fps, mean_delay_s)."""
    base = SimConfig(horizon_slots=6000, warmup_slots=1200, seed=0)
    points = [("centralized", lam, g) for lam in (30.0, 60.0, 90.0)
              for g in (1.0, 0.2)]
    points += [("mec", lam, 1.0) for lam in (30.0, 60.0, 90.0)]
    out = {}
    for policy, lam, g in points:
        cfg = dataclasses.replace(base, policy=policy, lambda_fps=lam,
                                  gamma_cache=g)
        m = run(cfg)
        post = (cfg.horizon_slots - cfg.warmup_slots) * cfg.slot_duration
        out[(policy, lam, g)] = attained_performance(m, post, cfg.num_users)
    return out


# --- criteria ---------------------------------------------------------------

def test_criterion_1_invariants(default_run):
    cfg, m, elapsed = default_run
    ok = (m.violations == []
          and float(m.queue_traj.min()) >= 0.0
          and m.stage1_bits_created == 2.0 * m.processed_input_bits
          and all(d.completion_slot > d.arrival_slot for d in m.deliveries)
          and elapsed < 120.0)
    assert report(1, "full-run invariant suite", ok,
                  f"{len(m.violations)} violations, {elapsed:.1f}s"), m.violations


def test_criterion_2_oracle():
    t0 = time.time()
    ok, counter = oracle_check(trials=1000, max_nodes=5, seed=0)
    elapsed = time.time() - t0
    ok = ok and elapsed < 60.0
    assert report(2, "route selector vs brute force", ok,
                  f"1000 trials, {elapsed:.1f}s"), counter


def test_criterion_3_determinism(tmp_path):
    doc = {"sim": {"horizon_slots": 2500, "warmup_slots": 500}}
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    for d in ("a", "b"):
        rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / d),
                   "--seed", "0"])
        assert rc == 0
    a = (tmp_path / "a" / "deliveries.csv").read_bytes()
    b = (tmp_path / "b" / "deliveries.csv").read_bytes()
    ok = a == b and len(a) > 0
    assert report(3, "byte-identical delivery logs", ok, f"{len(a)} bytes")


def test_criterion_4_stability():
    cfg = SimConfig(lambda_fps=10.0, beta3=0.3, policy="centralized", seed=0)
    m = run(cfg)
    n = cfg.horizon_slots
    mid = float(m.queue_traj[n // 3: 2 * n // 3].mean())
    last = float(m.queue_traj[2 * n // 3:].mean())
    ok = last < 1.1 * mid
    assert report(4, "bounded queues at light load", ok,
                  f"middle {mid / 1e6:.2f} Mb, last {last / 1e6:.2f} Mb")


def test_criterion_5_beats_mec(sweep_runs):
    strict = False
    ok = True
    frontier = []
    for lam in (30.0, 60.0, 90.0):
        thr_c, delay_c = sweep_runs[("centralized", lam, 1.0)]
        thr_m, _ = sweep_runs[("mec", lam, 1.0)]
        frontier.append((lam, thr_c, delay_c, thr_m))
        ok = ok and thr_c >= thr_m - 1e-9
        strict = strict or thr_c > thr_m + 1e-9
    ok = ok and strict
    for lam, thr_c, delay_c, thr_m in frontier:
        d_ms = "n/a" if delay_c is None else f"{delay_c * 1e3:.1f}"
        print(f"  frontier lambda={lam:g}: integrated {thr_c:.1f} fps @ "
              f"{d_ms} ms, bs-only {thr_m:.1f} fps", flush=True)
    assert report(5, "integrated control beats bs-only offloading", ok)


def test_criterion_6_caching_skew(sweep_runs):
    ok = True
    deltas = []
    for lam in (30.0, 60.0, 90.0):
        _, d_skew = sweep_runs[("centralized", lam, 1.0)]
        _, d_flat = sweep_runs[("centralized", lam, 0.2)]
        ok = ok and d_skew is not None and d_flat is not None \
            and d_skew <= d_flat
        deltas.append(f"{lam:g}: {d_skew * 1e3:.1f} vs {d_flat * 1e3:.1f} ms")
    assert report(6, "popularity-aligned caching lowers delay", ok,
                  "; ".join(deltas))


def region_feasible(beta3_grid, b12_points, lam=60.0, delay_req=0.02):
    base = SimConfig(horizon_slots=1600, warmup_slots=320, lambda_fps=lam,
                     policy="centralized", seed=0)
    feas = {}
    for b3 in beta3_grid:
        for b1, b2 in b12_points:
            cfg = dataclasses.replace(base, beta1=b1, beta2=b2, beta3=b3)
            feas[(b3, b1, b2)] = is_feasible(cfg, delay_req)
    return feas


def test_criterion_7_region_monotonicity():
    beta3s = (0.2, 0.5, 0.8)
    coarse = [round(i / 3, 6) for i in range(4)]
    grid = [(a, b) for a in coarse for b in coarse]
    line = [round(0.1 * i, 6) for i in range(11)]
    points = set(grid) | {(b, b) for b in line} | {(1.0, b) for b in line}
    feas = region_feasible(beta3s, sorted(points))

    nested = True
    for lo, hi in ((0.2, 0.5), (0.5, 0.8)):
        for b1, b2 in points:
            if feas[(lo, b1, b2)] and not feas[(hi, b1, b2)]:
                nested = False
                print(f"  nesting violated at beta1={b1} beta2={b2}: "
                      f"feasible at beta3={lo} but not {hi}", flush=True)

    diag_saving = {}
    edge_saving = {}
    for b3 in beta3s:
        d = [b for b in line if feas[(b3, b, b)]]
        e = [b for b in line if feas[(b3, 1.0, b)]]
        diag_saving[b3] = None if not d else 1.0 - min(d)
        edge_saving[b3] = None if not e else 1.0 - min(e)
    def non_decreasing(s):
        vals = [-1.0 if s[b] is None else s[b] for b in beta3s]
        return all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
    monotone = non_decreasing(diag_saving) and non_decreasing(edge_saving)

    fmt = lambda s: {k: (None if v is None else round(v, 2))
                     for k, v in s.items()}
    print(f"  diagonal savings {fmt(diag_saving)} "
          f"(reference endpoints 0.26 -> 0.34, soft +-15pp)", flush=True)
    print(f"  edge savings {fmt(edge_saving)} "
          f"(reference endpoints 0.32 -> 0.55, soft +-15pp)", flush=True)
    assert report(7, "cache size grows the feasible region", nested and monotone)


def test_criterion_8_distributions():
    sums_ok = all(
        abs(zipf_pmf(g, n).sum() - 1.0) <= 1e-12
        for g in (0.0, 0.2, 1.0, 2.0) for n in (2, 10_000))
    p = zipf_pmf(1.0, 10_000)
    rng = np.random.default_rng(0)
    draws = rng.choice(10_000, size=1_000_000, p=p)
    emp = np.bincount(draws, minlength=10_000) / 1_000_000
    tv = 0.5 * float(np.abs(emp - p).sum())
    tv_ok = tv < 0.01
    assert report(8, "popularity sampling matches its law", sums_ok and tv_ok,
                  f"pmf sums exact; TV={tv:.4f} vs bound 0.0100")
