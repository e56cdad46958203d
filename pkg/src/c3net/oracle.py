"""Brute-force verification of the centralized route selector.

Enumerates every (cache, processor, simple path) assignment on small random
networks and checks that the Dijkstra-based selector attains the exhaustive
minimum of the identical congestion metric.
"""

from __future__ import annotations

import json

import numpy as np

from .network import ChannelConfig, ScenarioConfig, build_vr_scenario
from .policies import PolicyContext, RouteAssignment, centralized_route, route_cost
from .queueing import QueueTable, ServiceContext
from .service import Request

__all__ = ["random_small_context", "brute_force_route", "oracle_check"]


def random_small_context(rng: np.random.Generator, num_nodes: int):
    """A random tiny scenario: num_nodes-1 users plus a BS, random caches,
    random outstanding loads. Returns (ctx, request)."""
    assert 1 <= num_nodes <= 6
    num_users = num_nodes - 1
    arena = 30.0
    chan = ChannelConfig(coop_range=float(rng.uniform(10.0, 35.0)))
    cfg = ScenarioConfig(arena_size=arena, num_users=num_users,
                         bs_num_processors=2, bs_fanout=max(1, num_users),
                         channel=chan,
                         proc_scale=float(rng.choice([0.0, 0.5, 1.0])))
    n_objects = 5
    caches = [frozenset(int(o) for o in rng.choice(n_objects,
                                                   size=rng.integers(0, 4),
                                                   replace=False))
              for _ in range(num_users)]
    state = build_vr_scenario(cfg, int(rng.integers(0, 2**31)), caches=caches,
                              storage_fraction=1.0)
    state.positions[:num_users] = rng.uniform(0, arena, size=(num_users, 2))

    svc = ServiceContext(workload=10.0, scaling_factor=2.0,
                         object_bits=3e6, output_bits=6e6,
                         bs_id=state.bs_id, caches=tuple(caches))
    load = {}
    for i in range(num_users):
        for j in range(num_users):
            if i != j and rng.random() < 0.5:
                load[("d2d", i, j)] = float(rng.exponential(5e6))
        if rng.random() < 0.5:
            load[("proc", i)] = float(rng.exponential(5e7))
    if rng.random() < 0.5:
        load[("bs",)] = float(rng.exponential(2e7))
    if rng.random() < 0.5:
        load[("proc", state.bs_id)] = float(rng.exponential(5e7))

    ctx = PolicyContext(network=state, queues=QueueTable(), svc=svc,
                        slot_duration=1e-3, load=load)
    user = int(rng.integers(0, num_users)) if num_users else 0
    req = Request(0, user, int(rng.integers(0, n_objects)), 0)
    return ctx, req


def _adjacency(ctx: PolicyContext):
    """Directed links of the layered graph's node layer: D2D both ways within
    range, BS downlink to every user."""
    n = ctx.network.config.num_users
    bs = ctx.network.bs_id
    out = {i: [] for i in range(n)}
    out[bs] = []
    for i in range(n):
        for j in ctx.neighbors(i):
            out[i].append(int(j))
        out[bs].append(i)
    return out


def _simple_paths(adj, src, dst, limit_len):
    """All simple paths src -> dst (inclusive) up to limit_len nodes."""
    paths = []
    stack = [(src, (src,))]
    while stack:
        node, path = stack.pop()
        if node == dst:
            paths.append(path)
            continue
        if len(path) >= limit_len:
            continue
        for nxt in adj[node]:
            if nxt not in path:
                stack.append((nxt, path + (nxt,)))
    return paths


def brute_force_route(ctx: PolicyContext, req: Request, metric=route_cost):
    """Exhaustive argmin over (cache, proc, static path, delivery path)."""
    svc = ctx.svc
    net = ctx.network
    bs = net.bs_id
    adj = _adjacency(ctx)
    nodes = list(range(net.config.num_users)) + [bs]
    holders = [x for x in nodes if svc.has_object(x, req.object)]
    procs = [x for x in nodes if ctx.proc_rate(x) > 0.0]
    limit = len(nodes)

    best = None
    best_cost = np.inf
    for c in holders:
        for p in procs:
            for sp in _simple_paths(adj, c, p, limit):
                for dp in _simple_paths(adj, p, req.user, limit):
                    a = RouteAssignment(req.id, c, p, sp, dp)
                    cost = metric(ctx, a, req.object)
                    if cost < best_cost:
                        best_cost = cost
                        best = a
    return best, best_cost


def oracle_check(trials: int = 1000, max_nodes: int = 5, seed: int = 0,
                 perturb_metric: bool = False, tol: float = 1e-9):
    """Compare centralized_route against the brute force on random states.

    Returns (ok, counterexample_json_or_None). perturb_metric is a test
    hook that biases the brute-force metric so a mismatch must be found
    (negative control).
    """
    rng = np.random.default_rng(seed)

    def metric(ctx, a, obj):
        cost = route_cost(ctx, a, obj)
        if perturb_metric and a.proc_node == ctx.network.bs_id:
            cost *= 0.5
        return cost

    for t in range(trials):
        n = int(rng.integers(3, max_nodes + 1))
        ctx, req = random_small_context(rng, n)
        alg = centralized_route(ctx, req)
        brute, brute_cost = brute_force_route(ctx, req, metric=metric)
        alg_cost = np.inf if alg is None else metric(ctx, alg, req.object)
        if brute is None and alg is None:
            continue
        rel = max(abs(brute_cost), 1.0)
        if brute is None or alg is None or alg_cost - brute_cost > tol * rel:
            counter = {
                "trial": t,
                "num_nodes": n,
                "request": {"user": req.user, "object": req.object},
                "positions": ctx.network.positions.tolist(),
                "caches": [sorted(c) for c in ctx.svc.caches],
                "load": {str(k): v for k, v in ctx.load.items()},
                "algorithm": None if alg is None else {
                    "cache": alg.cache_node, "proc": alg.proc_node,
                    "static_path": list(alg.static_path),
                    "delivery_path": list(alg.delivery_path),
                    "cost": alg_cost},
                "brute_force": None if brute is None else {
                    "cache": brute.cache_node, "proc": brute.proc_node,
                    "static_path": list(brute.static_path),
                    "delivery_path": list(brute.delivery_path),
                    "cost": brute_cost},
            }
            return False, json.dumps(counter, indent=2)
    return True, None
