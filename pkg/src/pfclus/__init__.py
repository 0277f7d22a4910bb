"""Personalized federated clustering (p-FClus) with k-FED, MFC and centralized baselines."""

from pfclus.core import (
    MetricsRow,
    assign_nearest,
    compute_metrics,
    distance,
    local_objective_cost,
)
from pfclus.local_solver import SolverConfig, kmeans_pp_init, kmedoids, lloyd_kmeans
from pfclus.fed_pfclus import (
    PersonalizationConfig,
    client_initialization,
    personalization_gradient,
    personalize_client,
    run_pfclus,
    server_aggregate,
)

__version__ = "0.1.0"

__all__ = [
    "MetricsRow",
    "PersonalizationConfig",
    "SolverConfig",
    "assign_nearest",
    "client_initialization",
    "compute_metrics",
    "distance",
    "kmeans_pp_init",
    "kmedoids",
    "lloyd_kmeans",
    "local_objective_cost",
    "personalization_gradient",
    "personalize_client",
    "run_pfclus",
    "server_aggregate",
]
