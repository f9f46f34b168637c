"""Stable throughput analysis and simulation of cooperative cognitive radio networks."""

from .model import (
    ChannelProfile,
    Protocol,
    Sensing,
    SystemConfig,
    ThroughputReport,
    db_to_linear,
    default_config,
    linear_to_db,
)
from .performance import analyze, optimal_q, pu_delay, stable_region, su_throughput_bound
from .protocols import BranchGains, branch_gains, pu_throughput
from .simcore import SimConfig, SimReport, simulate

__all__ = [
    "BranchGains",
    "ChannelProfile",
    "Protocol",
    "Sensing",
    "SimConfig",
    "SimReport",
    "SystemConfig",
    "ThroughputReport",
    "analyze",
    "branch_gains",
    "db_to_linear",
    "default_config",
    "linear_to_db",
    "optimal_q",
    "pu_delay",
    "pu_throughput",
    "simulate",
    "stable_region",
    "su_throughput_bound",
]
