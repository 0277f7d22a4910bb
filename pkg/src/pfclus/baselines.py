"""Reference methods: centralized clustering, k-FED and MFC.

All three return a single center set shared by every client; the per-client
metrics use nearest-center assignment against it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from pfclus.comm import CommLog
from pfclus.core import MalformedInputError, as_points, assign_nearest, evaluate_centers
from pfclus.fed_pfclus import (
    DegeneratePoolError,
    FederatedResult,
    client_seed,
    map_clients,
    solver_config,
)
from pfclus.local_solver import InsufficientPointsError, SolverConfig, lloyd_kmeans, solve

logger = logging.getLogger(__name__)

# restarts for the centralized reference so it is not judged on one bad seed
CENTCLUS_N_INIT = 10


@dataclass(frozen=True)
class MfcConfig:
    max_rounds: int = 20
    tol: float = 1e-4

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")


def _require_l2(l: float, method: str) -> None:
    if l != 2:
        raise MalformedInputError(f"{method} is defined for the k-means objective (l=2) only")


def centclus(all_points, k: int, l: float = 2, rng_seed: int = 0,
             solver: SolverConfig | None = None, n_init: int = CENTCLUS_N_INIT) -> np.ndarray:
    """(k, l)-clustering of the pooled data of every client, best of ``n_init`` restarts."""
    cfg = replace(solver_config(k, l, rng_seed, solver), n_init=n_init)
    centers, _ = solve(as_points(all_points), cfg)
    return centers


def run_centclus(clients: Sequence, k: int, l: float = 2, rng_seed: int = 0,
                 solver: SolverConfig | None = None, n_init: int = CENTCLUS_N_INIT,
                 **identity) -> FederatedResult:
    clients = [as_points(X) for X in clients]
    C = centclus(np.vstack(clients), k, l, rng_seed, solver, n_init)
    identity.setdefault("method", "centclus")
    return _shared_result(clients, C, l, k, CommLog(), 0, identity)


def farthest_first(pool, k: int) -> np.ndarray:
    """Indices of k pooled centers chosen by farthest-first traversal.

    The first pick is ``pool[0]``; each further pick maximizes the Euclidean
    distance to its nearest already-picked center (lowest index on ties).
    """
    pool = as_points(pool)
    if len(pool) < k:
        raise DegeneratePoolError(f"pool holds {len(pool)} centers, need k={k}")
    picked = [0]
    dist = np.sqrt(np.sum((pool - pool[0]) ** 2, axis=1))
    while len(picked) < k:
        nxt = int(np.argmax(dist))
        if dist[nxt] == 0:
            raise DegeneratePoolError(f"degenerate pool: fewer than k={k} distinct centers")
        picked.append(nxt)
        dist = np.minimum(dist, np.sqrt(np.sum((pool - pool[nxt]) ** 2, axis=1)))
    return np.array(picked)


def _kfed_handshake(clients, k, k_prime, rng_seed, solver, comm, workers):
    k_prime = k if k_prime is None else k_prime
    for z, X in enumerate(clients):
        if len(X) < k_prime:
            raise InsufficientPointsError(f"client {z} holds {len(X)} points, needs k'={k_prime}")

    def local(z, X):
        centers, _ = lloyd_kmeans(X, solver_config(k_prime, 2, client_seed(rng_seed, z), solver))
        return centers

    local_sets = map_clients(local, list(enumerate(clients)), workers)
    for z, C_z in enumerate(local_sets):
        comm.upload(z, C_z, round=0)
    pool = np.vstack(local_sets)
    C_g = pool[farthest_first(pool, k)].copy()
    for z in range(len(clients)):
        comm.download(z, C_g, round=0)
    return C_g


def kfed(clients: Sequence, k: int, k_prime: int | None = None, l: float = 2,
         rng_seed: int = 0, solver: SolverConfig | None = None,
         comm: CommLog | None = None, workers: int = 1) -> np.ndarray:
    """One-shot k-FED: local Lloyd with k' centers, server farthest-first to k.

    Local clustering uses Lloyd with k-means++ seeding as a stand-in for the
    separation-based local k-means of the original method.
    """
    _require_l2(l, "k-FED")
    clients = [as_points(X) for X in clients]
    return _kfed_handshake(clients, k, k_prime, rng_seed, solver,
                           CommLog() if comm is None else comm, workers)


def run_kfed(clients: Sequence, k: int, k_prime: int | None = None, l: float = 2,
             rng_seed: int = 0, solver: SolverConfig | None = None, workers: int = 1,
             **identity) -> FederatedResult:
    clients = [as_points(X) for X in clients]
    comm = CommLog()
    C = kfed(clients, k, k_prime, l, rng_seed, solver, comm, workers)
    identity.setdefault("method", "kfed")
    return _shared_result(clients, C, l, k, comm, 1, identity)


def max_cost_center(X, global_centers) -> np.ndarray:
    """Client step of an MFC round: re-assign to the global centers, take the
    local mean of every non-empty cluster and return the one whose cluster
    has the largest squared-error cost."""
    labels = assign_nearest(X, global_centers, 2)
    best, best_cost = None, -1.0
    for j in range(len(global_centers)):
        members = X[labels == j]
        if len(members) == 0:
            continue
        mean = members.mean(axis=0)
        cost = float(np.sum((members - mean) ** 2))
        if cost > best_cost:
            best, best_cost = mean, cost
    return best


def mfc(clients: Sequence, k: int, l: float = 2, cfg: MfcConfig | None = None,
        rng_seed: int = 0, solver: SolverConfig | None = None, k_prime: int | None = None,
        workers: int = 1, **identity) -> FederatedResult:
    """Multi-round MFC.

    Round 0 is the k-FED handshake. Each later round every client uploads its
    single max-cost local center and the server re-runs Lloyd, warm-started
    from the current global centers, on those k centers plus the Z uploads.
    Stops once no global center moves by ``cfg.tol`` or after
    ``cfg.max_rounds`` extra rounds.
    """
    _require_l2(l, "MFC")
    cfg = MfcConfig() if cfg is None else cfg
    clients = [as_points(X) for X in clients]
    comm = CommLog()
    C_g = _kfed_handshake(clients, k, k_prime, rng_seed, solver, comm, workers)
    server_cfg = solver_config(k, 2, rng_seed, solver)
    trace: list[float] = []
    rounds = 0
    for r in range(1, cfg.max_rounds + 1):
        sent = map_clients(lambda X: max_cost_center(X, C_g), [(X,) for X in clients], workers)
        for z, c in enumerate(sent):
            comm.upload(z, c, round=r, kind="max_cost_center")
        pool = np.vstack([C_g, np.vstack(sent)])
        new, _ = lloyd_kmeans(pool, server_cfg, init=C_g)
        moved = float(np.max(np.sqrt(np.sum((new - C_g) ** 2, axis=1))))
        C_g = new
        for z in range(len(clients)):
            comm.download(z, C_g, round=r)
        trace.append(moved)
        rounds = r
        logger.info("MFC round %d: max global-center movement %.6g", r, moved)
        if moved < cfg.tol:
            break
    identity.setdefault("method", "mfc")
    result = _shared_result(clients, C_g, l, k, comm, rounds, identity)
    result.trace = trace
    return result


def _shared_result(clients, C, l, k, comm, rounds, identity) -> FederatedResult:
    identity.setdefault("k", k)
    metrics = evaluate_centers(clients, C, l, **identity)
    phis = [assign_nearest(X, C, l) for X in clients]
    return FederatedResult(C, [C] * len(clients), phis, metrics, comm, rounds=rounds)
