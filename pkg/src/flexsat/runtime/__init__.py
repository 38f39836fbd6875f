"""Cluster runtime: PE actors, message transport, run orchestration."""
from __future__ import annotations

from .transport import Envelope
from .cluster import ClusterConfig, Cluster, run_cluster, mono_mode

__all__ = ["Envelope", "ClusterConfig", "Cluster", "run_cluster", "mono_mode"]
