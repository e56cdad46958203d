"""Network substrate: node capabilities, random-waypoint mobility, wireless links.

Nodes are 100 pedestrian users plus one base station in a square arena.
D2D link rates follow Shannon capacity with log-distance pathloss; the BS
serves a bounded number of users per slot at a fixed downlink rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NodeSpec",
    "ChannelConfig",
    "ScenarioConfig",
    "NetworkState",
    "ResourceAllocation",
    "CapacitySnapshot",
    "build_vr_scenario",
    "step_mobility",
    "d2d_rate",
    "neighbors_in_range",
    "capacities",
]

USER = "user"
BASE_STATION = "base-station"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    kind: str                      # "user" | "base-station"
    position: tuple                # meters (x, y) at construction time
    proc_capacity: float           # cycles per second, per processor
    num_processors: int
    storage_fraction: float        # fraction of catalog cacheable
    cache_set: frozenset           # object ids held locally

    def __post_init__(self):
        if self.proc_capacity < 0:
            raise ValueError("proc_capacity must be >= 0")
        if not (0.0 <= self.storage_fraction <= 1.0):
            raise ValueError("storage_fraction must be in [0, 1]")


@dataclass(frozen=True)
class ChannelConfig:
    tx_power: float = 1.0              # watts
    bandwidth: float = 20e6            # hertz
    coop_range: float = 20.0           # meters
    pathloss_exponent: float = 3.0
    ref_loss_db: float = 40.0          # dB at 1 m
    noise_psd_dbm_hz: float = -174.0
    bw_scale: float = 1.0              # beta2, applied to user D2D bandwidth

    def __post_init__(self):
        if self.tx_power <= 0 or self.bandwidth <= 0 or self.coop_range <= 0:
            raise ValueError("tx_power, bandwidth and coop_range must be > 0")
        if not (0.0 < self.bw_scale <= 1.0):
            raise ValueError("bw_scale must be in (0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    """Static scenario constants (everything in the experiment setup)."""

    arena_size: float = 100.0
    num_users: int = 100
    user_proc_hz: float = 3e9
    user_num_processors: int = 1
    bs_proc_hz: float = 3e9            # per BS processor; unstated in the setup, configurable
    bs_num_processors: int = 10
    bs_rate: float = 200e6             # bits/s per scheduled downlink user
    bs_fanout: int = 20
    speed_min: float = 0.5             # m/s, random-waypoint
    speed_max: float = 1.5
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    proc_scale: float = 1.0            # beta1, applied to user processors only

    def __post_init__(self):
        if self.arena_size <= 0:
            raise ValueError("arena_size must be > 0")
        if self.num_users < 0:
            raise ValueError("num_users must be >= 0")
        if not (0.0 <= self.proc_scale <= 1.0):
            raise ValueError("proc_scale must be in [0, 1]")


@dataclass
class NetworkState:
    """Per-slot uncontrollable state: who is where, with what resources."""

    slot: int
    config: ScenarioConfig
    nodes: list                      # list of NodeSpec; BS last
    positions: np.ndarray            # (n, 2) meters, row per node
    rng_stream: np.random.Generator
    # random-waypoint internals (users only)
    _targets: np.ndarray = None
    _speeds: np.ndarray = None

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def bs_id(self) -> int:
        return len(self.nodes) - 1

    @property
    def user_ids(self) -> range:
        return range(len(self.nodes) - 1)

    def copy(self):
        return NetworkState(
            slot=self.slot,
            config=self.config,
            nodes=list(self.nodes),
            positions=self.positions.copy(),
            rng_stream=self._clone_rng(),
            _targets=None if self._targets is None else self._targets.copy(),
            _speeds=None if self._speeds is None else self._speeds.copy(),
        )

    def _clone_rng(self):
        g = np.random.default_rng()
        g.bit_generator.state = self.rng_stream.bit_generator.state
        return g


def build_vr_scenario(config: ScenarioConfig, seed: int, caches=None,
                      storage_fraction: float = 0.0) -> NetworkState:
    """Users uniformly placed in the arena, BS at the center.

    caches: optional per-user cache sets (from cache_placement); the BS
    cache is the full catalog and is represented by catalog membership at
    lookup time, so its cache_set holds a sentinel understood by callers.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC3]))
    n = config.num_users
    pos = rng.uniform(0.0, config.arena_size, size=(n + 1, 2))
    center = config.arena_size / 2.0
    pos[n] = (center, center)

    nodes = []
    for u in range(n):
        cache = frozenset() if caches is None else frozenset(caches[u])
        nodes.append(NodeSpec(
            id=u, kind=USER, position=(float(pos[u, 0]), float(pos[u, 1])),
            proc_capacity=config.user_proc_hz,
            num_processors=config.user_num_processors,
            storage_fraction=storage_fraction,
            cache_set=cache,
        ))
    nodes.append(NodeSpec(
        id=n, kind=BASE_STATION, position=(center, center),
        proc_capacity=config.bs_proc_hz,
        num_processors=config.bs_num_processors,
        storage_fraction=1.0,
        cache_set=frozenset(),  # full catalog; membership handled by bs_id check
    ))

    state = NetworkState(slot=0, config=config, nodes=nodes, positions=pos, rng_stream=rng)
    if n > 0:
        state._targets = rng.uniform(0.0, config.arena_size, size=(n, 2))
        state._speeds = rng.uniform(config.speed_min, config.speed_max, size=n)
    return state


def step_mobility(state: NetworkState, slot_duration: float) -> NetworkState:
    """Advance users by one random-waypoint step (in place); BS stays put.

    On reaching the waypoint a new target and speed are drawn immediately
    (zero pause time). Positions never leave the arena because targets are
    sampled inside it.
    """
    n = state.config.num_users
    if n == 0:
        state.slot += 1
        return state
    pos = state.positions[:n]
    delta = state._targets - pos
    dist = np.hypot(delta[:, 0], delta[:, 1])
    step = state._speeds * slot_duration
    moving = dist > step
    scale = np.zeros_like(dist)
    np.divide(step, dist, out=scale, where=moving)
    pos[moving] += delta[moving] * scale[moving, None]
    arrived = ~moving
    if arrived.any():
        pos[arrived] = state._targets[arrived]
        k = int(arrived.sum())
        state._targets[arrived] = state.rng_stream.uniform(
            0.0, state.config.arena_size, size=(k, 2))
        state._speeds[arrived] = state.rng_stream.uniform(
            state.config.speed_min, state.config.speed_max, size=k)
    state.slot += 1
    return state


def d2d_rate(tx, rx, chan: ChannelConfig) -> float:
    """Shannon rate of a D2D link in bits/s; 0 beyond the cooperation range.

    Bandwidth is scaled by bw_scale (beta2) and the noise floor is taken
    over the scaled bandwidth. Coincident positions are clamped to the 1 m
    reference distance.
    """
    dx = tx[0] - rx[0]
    dy = tx[1] - rx[1]
    d = math.hypot(dx, dy)
    if d > chan.coop_range:
        return 0.0
    d = max(d, 1.0)
    bw = chan.bw_scale * chan.bandwidth
    pl_db = chan.ref_loss_db + 10.0 * chan.pathloss_exponent * math.log10(d)
    prx_w = chan.tx_power * 10.0 ** (-pl_db / 10.0)
    noise_w = 10.0 ** ((chan.noise_psd_dbm_hz - 30.0) / 10.0) * bw
    snr = prx_w / noise_w
    return bw * math.log2(1.0 + snr)


def neighbors_in_range(state: NetworkState, node: int) -> set:
    """User ids within coop_range of the node (the BS is reachable via
    cellular and deliberately not listed here)."""
    if not (0 <= node < state.num_nodes):
        raise KeyError(f"unknown node id {node}")
    n = state.config.num_users
    pos = state.positions[:n]
    me = state.positions[node]
    d = np.hypot(pos[:, 0] - me[0], pos[:, 1] - me[1])
    within = np.nonzero(d <= state.config.channel.coop_range)[0]
    return {int(u) for u in within if u != node}


@dataclass(frozen=True)
class ResourceAllocation:
    """Physical-layer allocation for one slot."""

    d2d_pairs: tuple = ()          # directed (tx, rx) active D2D links; a matching over users
    bs_schedule: tuple = ()        # users scheduled on the BS downlink this slot
    proc_on: frozenset = None      # nodes with processors enabled; None = all


@dataclass
class CapacitySnapshot:
    """Per-slot capacities in bits (links) and cycles (processors)."""

    slot: int
    slot_duration: float
    link_bits: dict                # (tx, rx) -> bits this slot (D2D and BS downlink)
    proc_cycles: dict              # node -> cycles this slot


def capacities(state: NetworkState, alloc: ResourceAllocation,
               slot_duration: float) -> CapacitySnapshot:
    """Evaluate C(t) for an allocation: D2D rates, BS downlinks, processors.

    Raises ValueError if the allocation violates the per-slot matching
    constraints (each user on at most one D2D link, half duplex; the BS
    serving at most bs_fanout users).
    """
    cfg = state.config
    seen = set()
    link_bits = {}
    for tx, rx in alloc.d2d_pairs:
        if tx in seen or rx in seen:
            raise ValueError(f"D2D allocation is not a matching at ({tx}, {rx})")
        seen.add(tx)
        seen.add(rx)
        rate = d2d_rate(state.positions[tx], state.positions[rx], cfg.channel)
        link_bits[(tx, rx)] = rate * slot_duration
    if len(alloc.bs_schedule) > cfg.bs_fanout:
        raise ValueError("BS schedule exceeds fanout")
    if len(set(alloc.bs_schedule)) != len(alloc.bs_schedule):
        raise ValueError("duplicate user in BS schedule")
    for u in alloc.bs_schedule:
        link_bits[(state.bs_id, u)] = cfg.bs_rate * slot_duration

    proc_cycles = {}
    for node in state.nodes:
        if alloc.proc_on is not None and node.id not in alloc.proc_on:
            continue
        scale = cfg.proc_scale if node.kind == USER else 1.0
        proc_cycles[node.id] = (node.num_processors * node.proc_capacity
                                * scale * slot_duration)
    return CapacitySnapshot(state.slot, slot_duration, link_bits, proc_cycles)
