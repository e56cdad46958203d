"""Discrete-time simulator and control policies for networks that jointly
allocate computation, caching and communication resources."""

from .engine import Metrics, SimConfig, attained_performance, is_feasible, run
from .network import (ChannelConfig, NetworkState, ScenarioConfig,
                      build_vr_scenario, d2d_rate)
from .policies import PolicyContext, RouteAssignment, centralized_route
from .queueing import Commodity, DeliveryRecord, QueueTable, ServiceContext
from .service import Catalog, Request, make_catalog, sample_requests, zipf_pmf

__version__ = "0.1.0"

__all__ = [
    "Catalog", "ChannelConfig", "Commodity", "DeliveryRecord", "Metrics",
    "NetworkState", "PolicyContext", "QueueTable", "Request",
    "RouteAssignment", "ScenarioConfig", "ServiceContext", "SimConfig",
    "attained_performance", "build_vr_scenario", "centralized_route",
    "d2d_rate", "is_feasible", "make_catalog", "run", "sample_requests",
    "zipf_pmf",
]
