"""Control policies: state (queues + channel) in, actions (allocations + flows) out.

Three policies ship:

* a distributed differential-backlog policy (max-weight on local queue
  differences, greedy D2D matching),
* a centralized per-request route selector that jointly picks cache,
  processor and paths by minimizing a queue-aware congestion metric on a
  two-layer graph (layer 0 carries pre-processing bits, layer 1 processed
  bits), and
* the MEC baseline where every request is served entirely by the base
  station.

All policies are pure functions of the per-slot PolicyContext.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkState, ResourceAllocation, d2d_rate
from .queueing import FlowDecision, QueueTable, ServiceContext, processing_utility
from .service import Commodity, Request

__all__ = [
    "PolicyContext",
    "RouteAssignment",
    "Action",
    "centralized_route",
    "mec_baseline",
    "dcnc_decide",
    "bs_schedule",
    "route_cost",
]


@dataclass
class PolicyContext:
    """Consistent snapshot of one slot: s(t) = (channel/positions, queues).

    `load` carries per-resource outstanding committed work (bits for links,
    cycles for processors, with a single shared entry for the BS downlink
    pool), so that route selection sees both current backlog and work
    committed earlier in the same slot.
    """

    network: NetworkState
    queues: QueueTable
    svc: ServiceContext
    slot_duration: float
    pending_requests: list = field(default_factory=list)
    load: dict = field(default_factory=dict)
    bs_pending: dict = None        # user -> bits awaiting the BS downlink (routed engine)
    uninjected: dict = None        # Commodity -> bits not yet replicated (distributed engine)
    _rate_cache: dict = field(default_factory=dict)
    _nbr_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        self._bs = self.network.bs_id

    # -- channel helpers -----------------------------------------------------

    def rate(self, i: int, j: int) -> float:
        """Link rate in bits/s; BS downlink uses the cellular rate."""
        if i == self._bs:
            return self.network.config.bs_rate
        key = (i, j) if i < j else (j, i)
        r = self._rate_cache.get(key)
        if r is None:
            r = d2d_rate(self.network.positions[i], self.network.positions[j],
                         self.network.config.channel)
            self._rate_cache[key] = r
        return r

    def neighbors(self, x: int):
        """User ids within D2D range of node x (x itself excluded)."""
        nbr = self._nbr_cache.get(x)
        if nbr is None:
            n = self.network.config.num_users
            pos = self.network.positions
            d = np.hypot(pos[:n, 0] - pos[x, 0], pos[:n, 1] - pos[x, 1])
            mask = d <= self.network.config.channel.coop_range
            if x < n:
                mask[x] = False
            nbr = tuple(int(v) for v in np.nonzero(mask)[0])
            self._nbr_cache[x] = nbr
        return nbr

    def proc_rate(self, x: int) -> float:
        """Cycles per second at node x after the beta1 scaling."""
        node = self.network.nodes[x]
        scale = self.network.config.proc_scale if node.kind == "user" else 1.0
        return node.num_processors * node.proc_capacity * scale

    # -- congestion metric terms --------------------------------------------

    def tx_weight(self, i: int, j: int, bits: float) -> float:
        """Estimated seconds to push `bits` through link (i, j) behind the
        outstanding load; the BS downlink is a shared fanout-wide pool."""
        if i == self._bs:
            pool = self.network.config.bs_rate * self.network.config.bs_fanout
            return (self.load.get(("bs",), 0.0) + bits) / pool
        r = self.rate(i, j)
        if r <= 0.0:
            return math.inf
        return (self.load.get(("d2d", i, j), 0.0) + bits) / r

    def proc_weight(self, x: int, cycles: float) -> float:
        r = self.proc_rate(x)
        if r <= 0.0:
            return math.inf
        return (self.load.get(("proc", x), 0.0) + cycles) / r


@dataclass(frozen=True)
class RouteAssignment:
    """Joint (cache, processor, paths) decision for one request."""

    request_id: int
    cache_node: int
    proc_node: int
    static_path: tuple       # node sequence cache -> proc (inclusive)
    delivery_path: tuple     # node sequence proc -> user (inclusive)


@dataclass(frozen=True)
class Action:
    alloc: ResourceAllocation
    flows: FlowDecision


def route_cost(ctx: PolicyContext, a: RouteAssignment, obj: int) -> float:
    """Congestion metric of an assignment; the quantity centralized_route
    minimizes. Also the oracle's scoring function."""
    svc = ctx.svc
    cost = 0.0
    for i, j in zip(a.static_path, a.static_path[1:]):
        cost += ctx.tx_weight(i, j, svc.object_bits)
    cost += ctx.proc_weight(a.proc_node, svc.workload * svc.object_bits)
    for i, j in zip(a.delivery_path, a.delivery_path[1:]):
        cost += ctx.tx_weight(i, j, svc.output_bits)
    return cost


def centralized_route(ctx: PolicyContext, req: Request):
    """Minimize the congestion metric over {cache} x {processor} x paths.

    Runs a single-target Dijkstra backwards from the requesting user on the
    two-layer graph and stops at the first cache holding the object, which
    is exactly the argmin because replication is free and edge weights are
    nonnegative. Returns None when no assignment is reachable (the engine
    defers the request one slot).
    """
    svc = ctx.svc
    obj = req.object
    u = req.user
    bs = ctx.network.bs_id
    s0 = svc.object_bits
    s1 = svc.output_bits
    cycles = svc.workload * s0
    load = ctx.load
    rate = ctx.rate
    bs_pool = ctx.network.config.bs_rate * ctx.network.config.bs_fanout
    bs_load = load.get(("bs",), 0.0)

    # dist[(x, layer)] = metric cost of the forward path (x, layer) -> (u, 1)
    dist = {}
    succ = {}
    heap = [(0.0, u, 1)]
    dist[(u, 1)] = 0.0
    best = None
    while heap:
        d, x, layer = heapq.heappop(heap)
        if d > dist.get((x, layer), math.inf):
            continue
        if layer == 0 and svc.has_object(x, obj):
            best = (x, d)
            break
        if layer == 1:
            # processing at x feeds (x, 1)
            w = ctx.proc_weight(x, cycles)
            if w < math.inf:
                nd = d + w
                if nd < dist.get((x, 0), math.inf):
                    dist[(x, 0)] = nd
                    succ[(x, 0)] = (x, 1)
                    heapq.heappush(heap, (nd, x, 0))
        bits = s1 if layer == 1 else s0
        if x != bs:
            for y in ctx.neighbors(x):
                r = rate(y, x)
                if r <= 0.0:
                    continue
                nd = d + (load.get(("d2d", y, x), 0.0) + bits) / r
                if nd < dist.get((y, layer), math.inf):
                    dist[(y, layer)] = nd
                    succ[(y, layer)] = (x, layer)
                    heapq.heappush(heap, (nd, y, layer))
            # BS downlink feeds any user at either layer
            nd = d + (bs_load + bits) / bs_pool
            if nd < dist.get((bs, layer), math.inf):
                dist[(bs, layer)] = nd
                succ[(bs, layer)] = (x, layer)
                heapq.heappush(heap, (nd, bs, layer))
    if best is None:
        return None

    cache_node = best[0]
    static_path = [cache_node]
    cur = (cache_node, 0)
    while succ.get(cur) is not None and cur[1] == 0:
        nxt = succ[cur]
        if nxt[1] == 0:
            static_path.append(nxt[0])
        cur = nxt
    proc_node = static_path[-1]
    delivery_path = [proc_node]
    while cur != (u, 1):
        nxt = succ[cur]
        delivery_path.append(nxt[0])
        cur = nxt
    return RouteAssignment(req.id, cache_node, proc_node,
                           tuple(static_path), tuple(delivery_path))


def mec_baseline(ctx: PolicyContext, req: Request) -> RouteAssignment:
    """Offload everything: cache and processing at the BS, delivery over the
    BS downlink. No D2D, no user caching, no user processing."""
    bs = ctx.network.bs_id
    return RouteAssignment(req.id, bs, bs, (bs,), (bs, req.user))


def bs_schedule(ctx: PolicyContext, fanout: int = None) -> list:
    """Up to bs_fanout users with the largest BS-resident backlog headed
    their way; ties broken by lowest node id."""
    if fanout is None:
        fanout = ctx.network.config.bs_fanout
    if ctx.bs_pending is not None:
        pending = ctx.bs_pending
    else:
        bs = ctx.network.bs_id
        pending = {}
        for (node, c), bits in ctx.queues._totals.items():
            if node == bs and bits > 0.0:
                pending[c.user] = pending.get(c.user, 0.0) + bits
    users = [u for u, b in pending.items() if b > 0.0]
    users.sort(key=lambda u: (-pending[u], u))
    return users[:fanout]


def dcnc_decide(ctx: PolicyContext, v_param: float = 0.0) -> Action:
    """Distributed differential-backlog policy.

    Per feasible link, ship the commodity with the largest positive
    differential backlog at full capacity; per node, run the service with
    positive processing differential at full cycle capacity; inject a
    pending frame from a cache when the post-injection differential toward
    some neighbor would be positive and the local stage-0 backlog is
    exhausted. v_param is an LDP cost weight charged per shipped bit;
    0 means pure stability.
    """
    q = ctx.queues
    net = ctx.network
    svc = ctx.svc
    bs = net.bs_id
    dt = ctx.slot_duration

    by_node = {}
    for (node, c), bits in q._totals.items():
        if bits > 0.0:
            by_node.setdefault(node, []).append(c)

    # candidate D2D links: (weight, i, j, commodity, capacity_bits)
    candidates = []
    for i, coms in by_node.items():
        if i == bs:
            continue
        for y in ctx.neighbors(i):
            j = int(y)
            cap = ctx.rate(i, j) * dt
            if cap <= 0.0:
                continue
            best_c = None
            best_diff = 0.0
            for c in sorted(coms):
                diff = q.backlog(i, c) - q.backlog(j, c)
                if c.stage == 1 and j == c.user:
                    diff = q.backlog(i, c)      # the sink absorbs, its queue is 0
                if diff - v_param > best_diff:
                    best_diff = diff - v_param
                    best_c = c
            if best_c is not None:
                candidates.append((best_diff * cap, i, j, best_c, cap))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))

    busy = set()
    transmit = {}
    pairs = []
    for _w, i, j, c, cap in candidates:
        if i in busy or j in busy:
            continue
        amount = min(q.backlog(i, c), cap)
        if amount <= 0.0:
            continue
        busy.add(i)
        busy.add(j)
        pairs.append((i, j))
        transmit[((i, j), c)] = amount

    # BS downlink: serve scheduled users, largest-backlog first
    sched = bs_schedule(ctx)
    for u in sched:
        coms = [c for c in by_node.get(bs, []) if c.user == u]
        best_c = None
        best_diff = 0.0
        for c in sorted(coms):
            diff = q.backlog(bs, c) - q.backlog(u, c)
            if c.stage == 1 and c.user == u:
                diff = q.backlog(bs, c)
            if diff - v_param > best_diff:
                best_diff = diff - v_param
                best_c = c
        if best_c is not None:
            cap = net.config.bs_rate * dt
            amount = min(q.backlog(bs, best_c), cap)
            if amount > 0.0:
                transmit[((bs, u), best_c)] = amount

    # processing: per node, the service with the best positive utility
    process = {}
    for i, coms in by_node.items():
        services = {(c.user, c.obj) for c in coms if c.stage == 0}
        cyc = ctx.proc_rate(i) * dt
        if cyc <= 0.0 or not services:
            continue
        best_s = None
        best_u = 0.0
        for s in sorted(services):
            util = processing_utility(q, i, s, svc.scaling_factor)
            if util > best_u:
                best_u = util
                best_s = s
        if best_s is not None:
            c_in = Commodity(best_s[0], best_s[1], 0)
            amount = min(q.backlog(i, c_in), cyc / svc.workload)
            if amount > 0.0:
                process[(i, best_s)] = amount

    # replication: pull the oldest pending frame of each commodity out of a
    # cache once the previous copy has drained out of it
    replicate = {}
    if ctx.uninjected:
        for c in sorted(ctx.uninjected):
            queue_of_reqs = ctx.uninjected[c]
            if not queue_of_reqs or c.stage != 0:
                continue
            req_id, bits = queue_of_reqs[0]
            # preference: the requesting user, its caching neighbors, the BS
            cands = []
            if svc.has_object(c.user, c.obj):
                cands.append(c.user)
            cands.extend(sorted(int(y) for y in ctx.neighbors(c.user)
                                if svc.has_object(int(y), c.obj)))
            cands.append(bs)
            for n in cands:
                if q.backlog(n, c) > 0.0:
                    continue                     # not exhausted yet
                nbrs = [c.user] if n == bs else [int(y) for y in ctx.neighbors(n)]
                if any(bits - q.backlog(j, c) > 0.0 for j in nbrs):
                    replicate.setdefault((n, c), []).append((req_id, bits))
                    break

    alloc = ResourceAllocation(d2d_pairs=tuple(pairs), bs_schedule=tuple(sched))
    return Action(alloc, FlowDecision(transmit=transmit, process=process,
                                      replicate=replicate))
