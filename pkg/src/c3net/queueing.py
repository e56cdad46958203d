"""Per-node per-commodity backlogs with per-request FIFO bookkeeping.

Queues hold fluid bits; a frame is a bookkeeping unit layered on top via
per-request segments, so end-to-end delays stay measurable while flows move
fractional amounts. Stage-1 bits arriving at the commodity's user are
absorbed into a delivery ledger instead of queuing (the sink consumes them).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .service import Commodity, Request

__all__ = [
    "ServiceContext",
    "QueueTable",
    "FlowDecision",
    "DeliveryRecord",
    "apply_flows",
    "differential_backlog",
    "processing_utility",
    "record_completion",
]

_EPS = 1e-6


@dataclass(frozen=True)
class ServiceContext:
    """Shared service parameters needed to execute flows."""

    workload: float            # cycles per stage-0 input bit
    scaling_factor: float      # stage-1 bits per stage-0 bit
    object_bits: float         # stage-0 frame size
    output_bits: float         # stage-1 frame size
    bs_id: int
    caches: tuple              # per-user frozensets of cached object ids

    def has_object(self, node: int, obj: int) -> bool:
        if node == self.bs_id:
            return True        # the BS stores the entire library
        return obj in self.caches[node]


@dataclass
class FlowDecision:
    """One slot of flow actions; all amounts are nonnegative bits."""

    transmit: dict = field(default_factory=dict)   # ((i, j), Commodity) -> bits
    process: dict = field(default_factory=dict)    # (node, (user, obj)) -> stage-0 input bits
    replicate: dict = field(default_factory=dict)  # (node, Commodity) -> list of (request_id, bits)


@dataclass(frozen=True)
class DeliveryRecord:
    request_id: int
    user: int
    object: int
    arrival_slot: int
    completion_slot: int
    delay_s: float


class QueueTable:
    """Backlog map plus the per-request frame ledger.

    Segments at each (node, commodity) key form a FIFO of (request_id,
    bits); fluid flows are attributed to the oldest unfinished request
    first, which matches per-resource FIFO execution.
    """

    def __init__(self, slot: int = 0):
        self.slot = slot
        self._segments = {}            # (node, Commodity) -> deque([req_id, bits])
        self._totals = {}              # (node, Commodity) -> float
        self.delivered = {}            # request_id -> stage-1 bits absorbed at sink
        self.arrived_sink = []         # request ids touched by absorption since last drain
        self._completed = set()
        self.total_bits = 0.0
        # audit counters (chaining exactness is checked on these)
        self.processed_input_bits = 0.0
        self.stage1_bits_created = 0.0
        self.violations = []

    # -- reads ---------------------------------------------------------------

    def backlog(self, node: int, c: Commodity) -> float:
        return self._totals.get((node, c), 0.0)

    def keys(self):
        return self._totals.keys()

    def node_commodities(self, node: int):
        # linear scan; callers on hot paths keep their own indexes
        return [k[1] for k in self._totals if k[0] == node]

    def segments(self, node: int, c: Commodity):
        return self._segments.get((node, c), ())

    def audit_ledger(self) -> list:
        """Recompute totals from segments; returns mismatch descriptions."""
        bad = []
        for key, segs in self._segments.items():
            s = sum(b for _, b in segs)
            if abs(s - self._totals.get(key, 0.0)) > _EPS:
                bad.append(f"{key}: segments {s} != total {self._totals.get(key, 0.0)}")
        return bad

    # -- mutations (used by apply_flows) -------------------------------------

    def _push(self, node: int, c: Commodity, req_id: int, bits: float):
        if bits <= 0.0:
            return
        key = (node, c)
        dq = self._segments.get(key)
        if dq is None:
            dq = deque()
            self._segments[key] = dq
            self._totals[key] = 0.0
        if dq and dq[-1][0] == req_id:
            dq[-1][1] += bits
        else:
            dq.append([req_id, bits])
        self._totals[key] += bits
        self.total_bits += bits

    def _seize(self, node: int, c: Commodity, bits: float) -> list:
        """Remove up to `bits` FIFO from (node, c); returns (req_id, bits) parts."""
        key = (node, c)
        dq = self._segments.get(key)
        if dq is None or bits <= 0.0:
            return []
        taken = []
        left = bits
        while dq and left > _EPS:
            head = dq[0]
            take = head[1] if head[1] <= left else left
            head[1] -= take
            left -= take
            taken.append((head[0], take))
            if head[1] <= _EPS:
                dq.popleft()
        moved = bits - left
        self._totals[key] -= moved
        self.total_bits -= moved
        if not dq:
            del self._segments[key]
            del self._totals[key]
        return taken


def differential_backlog(q: QueueTable, i: int, j: int, c: Commodity) -> float:
    """Q_i(c) - Q_j(c); absent keys read as 0."""
    return q.backlog(i, c) - q.backlog(j, c)


def processing_utility(q: QueueTable, i: int, service, scaling_factor: float = 2.0) -> float:
    """Max-weight processing differential: Q_i(stage 0) - xi * Q_i(stage 1)."""
    user, obj = service
    return (q.backlog(i, Commodity(user, obj, 0))
            - scaling_factor * q.backlog(i, Commodity(user, obj, 1)))


def apply_flows(q: QueueTable, d: FlowDecision, caps, svc: ServiceContext) -> QueueTable:
    """Apply one slot of flows; outflows are bounded by start-of-slot backlog.

    Raises ValueError on capacity violations and on replication at a node
    not caching the object (both are policy bugs, not recoverable states).
    All removals are computed against start-of-slot availability, then the
    arrivals land, so bits received in a slot move on the next slot at the
    earliest (store-and-forward at slot granularity).
    """
    arrivals = []          # (node, Commodity, req_id, bits) landing at slot end

    # capacity validation
    link_load = {}
    for (link, c), bits in d.transmit.items():
        if bits < 0:
            raise ValueError("negative transmit amount")
        link_load[link] = link_load.get(link, 0.0) + bits
    for link, load in link_load.items():
        cap = caps.link_bits.get(link)
        if cap is None:
            raise ValueError(f"transmit on unallocated link {link}")
        if load > cap + _EPS:
            raise ValueError(f"link {link} over capacity: {load} > {cap}")
    proc_load = {}
    for (node, _svc_key), bits in d.process.items():
        if bits < 0:
            raise ValueError("negative process amount")
        proc_load[node] = proc_load.get(node, 0.0) + bits * svc.workload
    for node, cycles in proc_load.items():
        cap = caps.proc_cycles.get(node)
        if cap is None:
            raise ValueError(f"processing at node {node} with no enabled processor")
        if cycles > cap + max(_EPS, 1e-9 * cap):
            raise ValueError(f"processor {node} over capacity: {cycles} > {cap}")

    # transmissions: seize FIFO at the tail, land at the head at slot end
    for (link, c), bits in d.transmit.items():
        i, j = link
        for req_id, part in q._seize(i, c, bits):
            arrivals.append((j, c, req_id, part))

    # processing: consume stage-0, create scaling_factor x stage-1 in place
    for (node, svc_key), bits in d.process.items():
        user, obj = svc_key
        c_in = Commodity(user, obj, 0)
        c_out = Commodity(user, obj, 1)
        for req_id, part in q._seize(node, c_in, bits):
            out = svc.scaling_factor * part
            q.processed_input_bits += part
            q.stage1_bits_created += out
            arrivals.append((node, c_out, req_id, out))

    # replication: inject stage-0 bits from a local cache copy
    for (node, c), parts in d.replicate.items():
        if c.stage != 0:
            raise ValueError("replication creates stage-0 bits only")
        if not svc.has_object(node, c.obj):
            raise ValueError(f"replication of object {c.obj} at non-caching node {node}")
        for req_id, bits in parts:
            if bits < 0:
                raise ValueError("negative replication amount")
            arrivals.append((node, c, req_id, bits))

    for node, c, req_id, bits in arrivals:
        if c.stage == 1 and node == c.user:
            # sink absorption
            q.delivered[req_id] = q.delivered.get(req_id, 0.0) + bits
            q.arrived_sink.append(req_id)
        else:
            q._push(node, c, req_id, bits)

    q.slot += 1
    return q


def record_completion(q: QueueTable, request: Request, slot: int,
                      slot_duration: float, output_bits: float):
    """DeliveryRecord once all stage-1 bits of the request reached the sink,
    else None. Completing the same request twice is an internal error."""
    got = q.delivered.get(request.id, 0.0)
    if got < output_bits - _EPS:
        return None
    if request.id in q._completed:
        raise RuntimeError(f"request {request.id} completed twice")
    q._completed.add(request.id)
    del q.delivered[request.id]
    delay = (slot - request.arrival_slot) * slot_duration
    return DeliveryRecord(request.id, request.user, request.object,
                          request.arrival_slot, slot, delay)
