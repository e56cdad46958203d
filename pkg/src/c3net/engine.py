"""Discrete-time loop binding mobility, arrivals, policies, flows and metrics.

One engine owns one run; nothing is shared between runs, so parameter
sweeps can execute many engines concurrently. All randomness flows through
substreams of the configured seed, making runs bit-reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .network import (ChannelConfig, ScenarioConfig, build_vr_scenario,
                      capacities, ResourceAllocation, step_mobility)
from .policies import (Action, PolicyContext, bs_schedule, centralized_route,
                       dcnc_decide, mec_baseline)
from .queueing import (FlowDecision, QueueTable, ServiceContext,
                       apply_flows, record_completion)
from .service import (Commodity, Request, cache_placement, make_catalog,
                      sample_requests, VR_SCALING_FACTOR,
                      VR_WORKLOAD_CYCLES_PER_BIT)

__all__ = ["SimConfig", "Metrics", "run", "attained_performance", "is_feasible"]

POLICIES = ("centralized", "mec", "dcnc")


@dataclass(frozen=True)
class SimConfig:
    """Full resolved configuration of one run (scenario + control knobs)."""

    horizon_slots: int = 30_000
    warmup_slots: int = 6_000
    slot_duration: float = 1e-3
    lambda_fps: float = 60.0
    beta1: float = 1.0             # user processing fraction
    beta2: float = 1.0             # user D2D bandwidth fraction
    beta3: float = 0.3             # user storage fraction
    gamma_pop: float = 1.0
    gamma_cache: float = 1.0
    policy: str = "centralized"
    v_param: float = 0.0
    seed: int = 0
    # scenario constants
    num_users: int = 100
    arena_size: float = 100.0
    catalog_size: int = 10_000
    object_bits: float = 3e6
    workload_cpb: float = VR_WORKLOAD_CYCLES_PER_BIT
    scaling_factor: float = VR_SCALING_FACTOR
    user_proc_hz: float = 3e9
    user_num_processors: int = 1
    bs_proc_hz: float = 3e9
    bs_num_processors: int = 10
    bs_rate: float = 200e6
    bs_fanout: int = 20
    tx_power: float = 1.0
    bandwidth: float = 20e6
    coop_range: float = 20.0
    pathloss_exponent: float = 3.0
    ref_loss_db: float = 40.0
    noise_psd_dbm_hz: float = -174.0
    speed_min: float = 0.5
    speed_max: float = 1.5
    # bookkeeping
    audit: bool = True
    ledger_audit_every: int = 1000
    queue_export_every: int = 0    # 0 = no per-commodity trajectory export

    def __post_init__(self):
        if not (0 <= self.warmup_slots < self.horizon_slots):
            raise ValueError("need 0 <= warmup < horizon")
        for name in ("beta1", "beta2", "beta3"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")

    @property
    def output_bits(self) -> float:
        return self.scaling_factor * self.object_bits

    def scenario(self) -> ScenarioConfig:
        chan = ChannelConfig(
            tx_power=self.tx_power, bandwidth=self.bandwidth,
            coop_range=self.coop_range, pathloss_exponent=self.pathloss_exponent,
            ref_loss_db=self.ref_loss_db, noise_psd_dbm_hz=self.noise_psd_dbm_hz,
            bw_scale=max(self.beta2, 1e-12))
        return ScenarioConfig(
            arena_size=self.arena_size, num_users=self.num_users,
            user_proc_hz=self.user_proc_hz,
            user_num_processors=self.user_num_processors,
            bs_proc_hz=self.bs_proc_hz, bs_num_processors=self.bs_num_processors,
            bs_rate=self.bs_rate, bs_fanout=self.bs_fanout,
            speed_min=self.speed_min, speed_max=self.speed_max,
            channel=chan, proc_scale=self.beta1)


@dataclass
class Metrics:
    """Everything a run reports; deliveries cover post-warmup arrivals."""

    config: SimConfig
    deliveries: list = field(default_factory=list)
    issued: int = 0                    # post-warmup request count
    issued_total: int = 0
    completed_post_warmup: int = 0     # completions in the measurement window
    in_flight_end: int = 0             # censored frames still in flight at horizon
    queue_traj: np.ndarray = None      # total backlog bits per slot
    utilization: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    processed_input_bits: float = 0.0
    stage1_bits_created: float = 0.0
    queue_rows: list = field(default_factory=list)  # (slot, node, service, stage, bits)


class _Job:
    """One admitted request moving through its planned hops."""

    __slots__ = ("req", "hops", "hop_idx", "remaining", "seq", "ready_slot")

    def __init__(self, req, hops, seq, ready_slot):
        self.req = req
        self.hops = hops                # ("tx", i, j, stage, bits) | ("proc", p, input_bits)
        self.hop_idx = 0
        self.remaining = hops[0][-1] if hops else 0.0
        self.seq = seq
        self.ready_slot = ready_slot


def _resource_of(hop, bs_id):
    if hop[0] == "proc":
        return ("procq", hop[1])
    _, i, j, _stage, _bits = hop
    if i == bs_id:
        return ("bsdl", j)
    return ("d2dq", i, j)


def _load_key(hop, bs_id):
    if hop[0] == "proc":
        return ("proc", hop[1])
    _, i, j, _stage, _bits = hop
    if i == bs_id:
        return ("bs",)
    return ("d2d", i, j)


def _plan_hops(assignment, cfg: SimConfig):
    s0, s1 = cfg.object_bits, cfg.output_bits
    hops = []
    path = assignment.static_path
    for a, b in zip(path, path[1:]):
        hops.append(("tx", a, b, 0, s0))
    hops.append(("proc", assignment.proc_node, s0))
    path = assignment.delivery_path
    for a, b in zip(path, path[1:]):
        hops.append(("tx", a, b, 1, s1))
    return hops


def run(config: SimConfig, requests: list = None) -> Metrics:
    """Execute the configured horizon and return collected metrics.

    `requests` replays an imported request trace instead of sampling one
    (reproducibility hook). Raises ValueError if a policy emits a
    capacity-violating decision (a policy bug, deliberately fatal).
    """
    cfg = config
    dt = cfg.slot_duration
    ss = np.random.SeedSequence(cfg.seed)
    seed_cache, seed_req = ss.spawn(2)

    catalog = make_catalog(cfg.catalog_size, cfg.object_bits, cfg.gamma_pop)
    caches = cache_placement(catalog, cfg.beta3, cfg.gamma_cache,
                             np.random.default_rng(seed_cache), cfg.num_users)
    state = build_vr_scenario(cfg.scenario(), cfg.seed, caches=caches,
                              storage_fraction=cfg.beta3)
    bs = state.bs_id
    svc = ServiceContext(workload=cfg.workload_cpb,
                         scaling_factor=cfg.scaling_factor,
                         object_bits=cfg.object_bits,
                         output_bits=cfg.output_bits,
                         bs_id=bs, caches=tuple(caches))

    if requests is None:
        requests = sample_requests(cfg.num_users, cfg.lambda_fps, dt,
                                   cfg.horizon_slots, catalog,
                                   np.random.default_rng(seed_req))
    by_slot = {}
    for r in requests:
        by_slot.setdefault(r.arrival_slot, []).append(r)

    q = QueueTable(slot=0)
    metrics = Metrics(config=cfg, issued_total=len(requests))
    metrics.issued = sum(1 for r in requests if r.arrival_slot >= cfg.warmup_slots)
    traj = np.zeros(cfg.horizon_slots)

    routed = cfg.policy in ("centralized", "mec")
    load = {}                      # committed outstanding work per resource
    queues = {}                    # resource -> deque of _Job
    res_total = {}                 # resource -> total remaining bits/cycles queued
    req_by_id = {r.id: r for r in requests}
    deferred = []
    in_flight = {}                 # request_id -> _Job (routed) or True (dcnc)
    uninjected = {}                # Commodity -> list of [req_id, bits] (dcnc)
    seq_counter = 0
    completed_pre_warmup = 0
    util = {"d2d_bits": 0.0, "bs_bits": 0.0, "proc_cycles": 0.0,
            "matched_user_slots": 0, "proc_capacity_cycles": 0.0}
    proc_cap_per_slot = sum(
        n.num_processors * n.proc_capacity * (cfg.beta1 if n.kind == "user" else 1.0)
        for n in state.nodes) * dt

    def commit(job):
        for hop in job.hops:
            key = _load_key(hop, bs)
            amt = hop[-1] * (cfg.workload_cpb if hop[0] == "proc" else 1.0)
            load[key] = load.get(key, 0.0) + amt

    for slot in range(cfg.horizon_slots):
        step_mobility(state, dt)
        arrivals = by_slot.pop(slot, [])
        if deferred:
            arrivals = deferred + arrivals
            deferred = []

        ctx = PolicyContext(network=state, queues=q, svc=svc, slot_duration=dt,
                            pending_requests=arrivals, load=load,
                            uninjected=uninjected if not routed else None)

        flows = FlowDecision()
        pairs = []
        sched = []

        if routed:
            assign = centralized_route if cfg.policy == "centralized" else mec_baseline
            for r in arrivals:
                a = assign(ctx, r)
                if a is None:
                    deferred.append(r)
                    continue
                hops = _plan_hops(a, cfg)
                job = _Job(r, hops, seq_counter, slot + 1)
                seq_counter += 1
                commit(job)
                in_flight[r.id] = job
                c0 = Commodity(r.user, r.object, 0)
                flows.replicate.setdefault((a.cache_node, c0), []).append(
                    (r.id, cfg.object_bits))
                res = _resource_of(hops[0], bs)
                queues.setdefault(res, deque()).append(job)
                res_total[res] = res_total.get(res, 0.0) + job.remaining

            # --- D2D matching, FIFO by oldest admitted job ---
            d2d_ready = []
            for res, dq in queues.items():
                if res[0] != "d2dq" or not dq:
                    continue
                head = dq[0]
                if head.ready_slot <= slot:
                    d2d_ready.append((head.seq, res))
            d2d_ready.sort()
            busy = set()
            for _seq, res in d2d_ready:
                _kind, i, j = res
                if i in busy or j in busy:
                    continue
                cap = ctx.rate(i, j) * dt
                if cap <= 0.0:
                    continue
                busy.add(i)
                busy.add(j)
                pairs.append((i, j))
                util["matched_user_slots"] += 2
                _serve_queue(res, cap, slot, queues, res_total, flows, load,
                             util, cfg, bs)

            # --- BS downlink schedule ---
            bs_pending = {}
            for res, dq in queues.items():
                if res[0] != "bsdl" or not dq:
                    continue
                # jobs join in ready-slot order, so only the tail can be
                # not-yet-ready; subtract it from the maintained total
                pend = res_total.get(res, 0.0)
                for j2 in reversed(dq):
                    if j2.ready_slot <= slot:
                        break
                    pend -= j2.remaining
                if pend > 1e-9:
                    bs_pending[res[1]] = pend
            ctx.bs_pending = bs_pending
            sched = bs_schedule(ctx)
            for u in sched:
                _serve_queue(("bsdl", u), cfg.bs_rate * dt, slot, queues,
                             res_total, flows, load, util, cfg, bs)

            # --- processors ---
            for res in [r2 for r2, dq in queues.items()
                        if r2[0] == "procq" and dq]:
                node = res[1]
                cyc = ctx.proc_rate(node) * dt
                if cyc > 0.0:
                    _serve_queue(res, cyc, slot, queues, res_total, flows,
                                 load, util, cfg, bs)

            alloc = ResourceAllocation(d2d_pairs=tuple(pairs),
                                       bs_schedule=tuple(sched))
        else:
            for r in arrivals:
                c0 = Commodity(r.user, r.object, 0)
                uninjected.setdefault(c0, []).append([r.id, cfg.object_bits])
                in_flight[r.id] = True
            action = dcnc_decide(ctx, cfg.v_param)
            flows = action.flows
            alloc = action.alloc
            for (node, c), parts in flows.replicate.items():
                fifo = uninjected.get(c)
                for req_id, bits in parts:
                    if fifo and fifo[0][0] == req_id:
                        fifo.pop(0)
                if fifo is not None and not fifo:
                    del uninjected[c]
            for (link, _c), bits in flows.transmit.items():
                if link[0] == bs:
                    util["bs_bits"] += bits
                else:
                    util["d2d_bits"] += bits
            util["matched_user_slots"] += 2 * len(alloc.d2d_pairs)
            for (_node, _skey), bits in flows.process.items():
                util["proc_cycles"] += bits * cfg.workload_cpb

        caps = capacities(state, alloc, dt)
        apply_flows(q, flows, caps, svc)

        if q.arrived_sink:
            for rid in dict.fromkeys(q.arrived_sink):
                r = req_by_id[rid]
                rec = record_completion(q, r, q.slot, dt, cfg.output_bits)
                if rec is None:
                    continue
                in_flight.pop(rid, None)
                if cfg.audit and rec.completion_slot <= r.arrival_slot:
                    metrics.violations.append(
                        f"causality: request {rid} completed in arrival slot")
                if rec.completion_slot >= cfg.warmup_slots:
                    metrics.completed_post_warmup += 1
                if r.arrival_slot >= cfg.warmup_slots:
                    metrics.deliveries.append(rec)
                else:
                    completed_pre_warmup += 1
            q.arrived_sink.clear()

        traj[slot] = q.total_bits
        util["proc_capacity_cycles"] += proc_cap_per_slot

        if cfg.queue_export_every and slot % cfg.queue_export_every == 0:
            for (node, c), bits in sorted(q._totals.items()):
                metrics.queue_rows.append(
                    (slot, node, f"vr-u{c.user}-o{c.obj}", c.stage, bits))

        if cfg.audit and cfg.ledger_audit_every and \
                slot % cfg.ledger_audit_every == 0:
            metrics.violations.extend(q.audit_ledger())
            for key, bits in q._totals.items():
                if bits < -1e-6:
                    metrics.violations.append(f"negative backlog at {key}: {bits}")

    # end of horizon
    metrics.in_flight_end = len(in_flight) + len(deferred)
    metrics.queue_traj = traj
    metrics.processed_input_bits = q.processed_input_bits
    metrics.stage1_bits_created = q.stage1_bits_created
    if cfg.audit:
        if q.stage1_bits_created != cfg.scaling_factor * q.processed_input_bits:
            metrics.violations.append(
                "chaining: stage-1 bits != scaling_factor x processed stage-0 bits")
        delivered_bits = (len(metrics.deliveries) + completed_pre_warmup) \
            * cfg.output_bits
        if delivered_bits > q.stage1_bits_created + 1e-3:
            metrics.violations.append("work conservation: delivered more than produced")
        metrics.violations.extend(q.audit_ledger())

    horizon_slots = cfg.horizon_slots
    denom = cfg.bs_rate * cfg.bs_fanout * dt * horizon_slots
    metrics.utilization = {
        "bs_downlink": util["bs_bits"] / denom if denom > 0 else 0.0,
        "processors": util["proc_cycles"] / util["proc_capacity_cycles"]
        if util["proc_capacity_cycles"] > 0 else 0.0,
        "d2d_matched_fraction": util["matched_user_slots"]
        / (max(cfg.num_users, 1) * horizon_slots),
        "d2d_bits": util["d2d_bits"],
    }
    return metrics


def _serve_queue(res, cap, slot, queues, res_total, flows, load, util, cfg, bs):
    """Serve one resource FIFO for one slot; advances completed jobs."""
    dq = queues.get(res)
    if not dq:
        return
    left = cap
    while dq and left > 1e-9:
        job = dq[0]
        if job.ready_slot > slot:
            break
        hop = job.hops[job.hop_idx]
        if hop[0] == "proc":
            amount = min(job.remaining, left / cfg.workload_cpb)
            key = (hop[1], (job.req.user, job.req.object))
            flows.process[key] = flows.process.get(key, 0.0) + amount
            used = amount * cfg.workload_cpb
            util["proc_cycles"] += used
            left -= used
        else:
            _, i, j, _stage, _bits = hop
            amount = min(job.remaining, left)
            c = Commodity(job.req.user, job.req.object, hop[3])
            key = ((i, j), c)
            flows.transmit[key] = flows.transmit.get(key, 0.0) + amount
            if i == bs:
                util["bs_bits"] += amount
            else:
                util["d2d_bits"] += amount
            left -= amount
        job.remaining -= amount
        res_total[res] = res_total.get(res, 0.0) - amount
        lkey = _load_key(hop, bs)
        dec = amount * (cfg.workload_cpb if hop[0] == "proc" else 1.0)
        load[lkey] = load.get(lkey, 0.0) - dec
        if load[lkey] <= 1e-9:
            del load[lkey]
        if job.remaining <= 1e-9:
            dq.popleft()
            job.hop_idx += 1
            if job.hop_idx < len(job.hops):
                nxt = job.hops[job.hop_idx]
                job.remaining = nxt[-1]
                job.ready_slot = slot + 1
                nres = _resource_of(nxt, bs)
                queues.setdefault(nres, deque()).append(job)
                res_total[nres] = res_total.get(nres, 0.0) + job.remaining
    if not dq:
        queues.pop(res, None)
        res_total.pop(res, None)


def attained_performance(m: Metrics, horizon_s: float, users: int):
    """(throughput_fps, mean_delay_s) per user over the measurement window.

    Throughput counts every frame completed inside the window (so a
    saturated system reports its service rate, not zero); delay averages
    only frames whose request also arrived inside the window, which keeps
    warm-up transients out of the delay statistic. Delay is None when no
    such frame completed.
    """
    if horizon_s <= 0:
        raise ValueError("horizon_s must be > 0")
    n = len(m.deliveries)
    throughput = m.completed_post_warmup / (horizon_s * max(users, 1))
    if n == 0:
        return throughput, None
    mean_delay = sum(d.delay_s for d in m.deliveries) / n
    return throughput, mean_delay


def is_feasible(config: SimConfig, delay_req_s: float,
                metrics: Metrics = None) -> bool:
    """Delay requirement fulfilled: mean delay within the requirement AND the
    system keeps up with at least 99% of the offered load, both measured
    over post-warmup arrivals."""
    m = metrics if metrics is not None else run(config)
    post_s = (config.horizon_slots - config.warmup_slots) * config.slot_duration
    throughput, mean_delay = attained_performance(m, post_s, config.num_users)
    if mean_delay is None:
        return config.lambda_fps == 0.0
    return mean_delay <= delay_req_s and throughput >= 0.99 * config.lambda_fps
