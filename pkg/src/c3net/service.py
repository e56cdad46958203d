"""Service DAGs, object catalogs, popularity/caching distributions and request generation.

This is the demand side of the simulator: what users ask for, how large the
payloads are, how much compute a frame needs, and where static objects can be
found (user caches and the base station library).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "StreamSpec",
    "ServiceFunction",
    "ServiceDag",
    "Catalog",
    "Request",
    "Commodity",
    "zipf_pmf",
    "vr_service",
    "cache_placement",
    "sample_requests",
    "validate_dag",
]


class Commodity(NamedTuple):
    """A (user, object, stage) class of data sharing one queue per node.

    Stage 0 is the pre-processing input (the 2D image), stage 1 the processed
    output (the 3D FOV) headed for the requesting user.
    """

    user: int
    obj: int
    stage: int


@dataclass(frozen=True)
class StreamSpec:
    kind: str                  # "live" | "static"
    source_set: object         # live: origin node id; static: object id (any cache holding it)
    unit_size: float           # bits per frame

    def __post_init__(self):
        if self.kind not in ("live", "static"):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.unit_size < 0:
            raise ValueError("unit_size must be >= 0")


@dataclass(frozen=True)
class ServiceFunction:
    id: str
    inputs: tuple              # tuple of StreamSpec
    merging_ratio: tuple       # per-input relative stream size, normalized to reference input
    workload: float            # cycles per input bit (of the reference input)
    scaling_factor: float      # output bits per input bit

    def __post_init__(self):
        if self.workload < 0:
            raise ValueError("workload must be >= 0")
        if self.scaling_factor <= 0:
            raise ValueError("scaling_factor must be > 0")
        if len(self.merging_ratio) != len(self.inputs):
            raise ValueError("merging_ratio must have one entry per input")


@dataclass(frozen=True)
class ServiceDag:
    functions: tuple           # tuple of ServiceFunction
    edges: tuple               # (producer_fn_id, consumer_fn_id) stage wiring
    sink: int                  # destination user node id


@dataclass(frozen=True)
class Catalog:
    num_objects: int
    object_size: float         # bits
    popularity: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.object_size <= 0:
            raise ValueError("object_size must be > 0")
        if abs(float(np.sum(self.popularity)) - 1.0) > 1e-12:
            raise ValueError("popularity must sum to 1")


@dataclass(frozen=True)
class Request:
    id: int
    user: int
    object: int
    arrival_slot: int

    def __post_init__(self):
        if self.arrival_slot < 0:
            raise ValueError("arrival_slot must be >= 0")


def zipf_pmf(gamma: float, n: int) -> np.ndarray:
    """Rank-ordered Zipf pmf: p(r) = r^-gamma / sum_s s^-gamma."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    ranks = np.arange(1, n + 1, dtype=float)
    w = ranks ** (-gamma)
    return w / w.sum()


def make_catalog(num_objects: int, object_size: float, gamma_pop: float) -> Catalog:
    return Catalog(num_objects, object_size, zipf_pmf(gamma_pop, num_objects))


# VR pipeline constants: a 3 Mb 2D image is turned into a 6 Mb 3D FOV using
# 3e7 cycles, i.e. 10 cycles per input bit and a scaling factor of 2.
VR_WORKLOAD_CYCLES_PER_BIT = 10.0
VR_SCALING_FACTOR = 2.0


def vr_service(catalog: Catalog, user: int, obj: int) -> ServiceDag:
    """One-function DAG for the mobile VR application.

    Static input: the 2D image. Live input: the user's tracking signal,
    modeled as zero-size control information carried with the request.
    """
    if not (0 <= obj < catalog.num_objects):
        raise ValueError(f"object {obj} not in catalog")
    fn = ServiceFunction(
        id="fov-render",
        inputs=(
            StreamSpec("static", obj, catalog.object_size),
            StreamSpec("live", user, 0.0),
        ),
        merging_ratio=(1.0, 0.0),
        workload=VR_WORKLOAD_CYCLES_PER_BIT,
        scaling_factor=VR_SCALING_FACTOR,
    )
    return ServiceDag(functions=(fn,), edges=(), sink=user)


def cache_placement(catalog: Catalog, beta3: float, gamma_cache: float,
                    rng: np.random.Generator, num_users: int) -> list:
    """Per-user cache sets: floor(beta3 * n) distinct objects each.

    Objects are drawn without replacement with inclusion probability
    proportional to a Zipf(gamma_cache) weight, via the Gumbel-max trick
    (top-m of weight-perturbed keys is exactly weighted sampling without
    replacement). Taking a prefix of the sampled ranking means cache sets
    are nested across beta3 values for a fixed rng stream, which keeps
    coverage monotone in beta3 in parameter sweeps.
    """
    if not (0.0 <= beta3 <= 1.0):
        raise ValueError("beta3 must be in [0, 1]")
    n = catalog.num_objects
    m = int(np.floor(beta3 * n))
    caches = []
    logw = -gamma_cache * np.log(np.arange(1, n + 1, dtype=float))
    for _ in range(num_users):
        keys = logw + rng.gumbel(size=n)
        if m == 0:
            caches.append(frozenset())
            continue
        order = np.argpartition(-keys, m - 1)[:m] if m < n else np.arange(n)
        caches.append(frozenset(int(o) for o in order))
    return caches


def sample_requests(num_users: int, lambda_fps: float, slot_duration: float,
                    horizon_slots: int, catalog: Catalog,
                    rng: np.random.Generator, first_id: int = 0) -> list:
    """Deterministic periodic arrivals with a per-user random phase.

    The k-th request of a user lands in slot floor((k + phase) / lambda /
    slot_duration) with phase uniform in [0, 1), so the per-user rate is
    exactly lambda even when the frame period is not a whole number of
    slots. The requested object is drawn from the catalog popularity.
    """
    if lambda_fps < 0:
        raise ValueError("lambda_fps must be >= 0")
    if lambda_fps == 0:
        return []
    if lambda_fps * slot_duration > 1.0:
        raise ValueError("more than one request per slot per user is unsupported")
    period_slots = 1.0 / (lambda_fps * slot_duration)
    requests = []
    rid = first_id
    for u in range(num_users):
        phase = float(rng.random())
        nmax = int(np.ceil(horizon_slots / period_slots)) + 1
        slots = np.floor((np.arange(nmax) + phase) * period_slots).astype(int)
        slots = slots[slots < horizon_slots]
        objs = rng.choice(catalog.num_objects, size=len(slots), p=catalog.popularity)
        for s, o in zip(slots, objs):
            requests.append(Request(rid, u, int(o), int(s)))
            rid += 1
    requests.sort(key=lambda r: (r.arrival_slot, r.id))
    return requests


def validate_dag(dag: ServiceDag, caches=None, bs_catalog: bool = True) -> list:
    """Structural checks; returns a list of violation strings (empty = ok).

    caches: optional per-user cache sets used for the static source
    availability check; the BS is assumed to hold the full catalog unless
    bs_catalog is False.
    """
    violations = []
    ids = [f.id for f in dag.functions]
    if len(set(ids)) != len(ids):
        violations.append("duplicate function ids")
    known = set(ids)
    for a, b in dag.edges:
        if a not in known or b not in known:
            violations.append(f"edge ({a}, {b}) references unknown function")

    # acyclicity via Kahn's algorithm on the stage wiring
    indeg = {i: 0 for i in known}
    succ = {i: [] for i in known}
    for a, b in dag.edges:
        if a in known and b in known:
            indeg[b] += 1
            succ[a].append(b)
    frontier = [i for i, d in indeg.items() if d == 0]
    seen = 0
    while frontier:
        node = frontier.pop()
        seen += 1
        for nxt in succ[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                frontier.append(nxt)
    if seen != len(known):
        violations.append("cycle detected in service DAG")

    # single sink: exactly one function with no outgoing edge
    producers = {a for a, _ in dag.edges}
    terminal = [i for i in known if i not in producers]
    if len(known) and len(terminal) != 1:
        violations.append(f"expected a single terminal function, found {len(terminal)}")

    for fn in dag.functions:
        if fn.workload < 0 or fn.scaling_factor <= 0:
            violations.append(f"function {fn.id} has non-positive parameters")
        for spec in fn.inputs:
            if spec.kind == "static" and not bs_catalog:
                obj = spec.source_set
                if caches is None or not any(obj in c for c in caches):
                    violations.append(f"static object {obj} has no available source")
    return violations
