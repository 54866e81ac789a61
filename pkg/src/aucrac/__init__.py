"""Auction-based task offloading with resource-aware container placement.

A manager node auctions each arriving task to worker nodes; the winning
worker runs it in a best-fit container slice. Everything is deterministic
in (config, seed).
"""

from .core import (AuctionOutcome, Bid, BidDistribution, Container,
                   MetricsRecord, ResourceWeights, SimConfig, Task, WorkerNode,
                   config_from_json, config_to_json, default_config,
                   generate_workload)
from .rng import Rng, new_rng
from .sim import SimResult, run

__version__ = "0.1.0"

__all__ = [
    "AuctionOutcome", "Bid", "BidDistribution", "Container", "MetricsRecord",
    "ResourceWeights", "Rng", "SimConfig", "SimResult", "Task", "WorkerNode",
    "config_from_json", "config_to_json", "default_config", "generate_workload",
    "new_rng", "run", "__version__",
]
