"""p-FClus: one-shot federated clustering with per-client personalization.

Three phases, one communication round:

1. every client clusters its own data and uploads its k local centers;
2. the server pools the Z*k centers and clusters them into k global centers;
3. every client fine-tunes its copy of the global centers with per-point SGD
   on ``0.5 * ||c_g - x|| + lam * ||c_g - c_z||^2`` where ``c_z`` is the
   nearest local center, using step size ``1 / visits(c_g)``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from pfclus.comm import CommLog
from pfclus.core import (
    MalformedInputError,
    MetricsRow,
    as_points,
    assign_nearest,
    check_norm,
    compute_metrics,
    pairwise_distances,
    row_norms,
)
from pfclus.local_solver import InsufficientPointsError, SolverConfig, solve

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("literal", "subgradient")
STEP_MODES = ("count", "assigned")


class DegeneratePoolError(MalformedInputError):
    pass


@dataclass(frozen=True)
class PersonalizationConfig:
    lam: float = 0.01
    t: int = 10
    l: float = 2
    tol: float = 1e-4
    medoid_snap: bool = True
    # "literal": the l=1 gradient uses the constant 1/2 on every coordinate;
    # "subgradient": 1/2 * sign(c_g - x) instead
    gradient: str = "literal"
    shuffle: bool = False
    shuffle_seed: int = 0
    # "count": eta = 1 / running visit count of the center (persists across passes);
    # "assigned": eta = 1 / number of client points currently nearest to the center
    step_size: str = "count"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if self.gradient not in GRADIENT_MODES:
            raise ValueError(f"gradient must be one of {GRADIENT_MODES}")
        if self.step_size not in STEP_MODES:
            raise ValueError(f"step_size must be one of {STEP_MODES}")
        check_norm(self.l)


@dataclass
class ClientState:
    X: np.ndarray
    local_centers: np.ndarray
    personalized: np.ndarray | None = None
    counts: np.ndarray | None = None
    assignment: np.ndarray | None = None
    passes: int = 0
    movement: list[float] = field(default_factory=list)


@dataclass
class FederatedResult:
    """Outcome of one federated run, shared by p-FClus and the baselines."""

    global_centers: np.ndarray
    client_centers: list[np.ndarray]
    assignments: list[np.ndarray]
    metrics: MetricsRow
    comm: CommLog
    rounds: int = 1
    trace: list[float] = field(default_factory=list)


def client_seed(seed: int, z: int) -> int:
    """Private, order-independent RNG seed for client ``z``."""
    return int(np.random.SeedSequence([int(seed) & (2**63 - 1), int(z)]).generate_state(1)[0])


def solver_config(k: int, l: float, rng_seed: int, base: SolverConfig | None) -> SolverConfig:
    if base is None:
        return SolverConfig(k=k, l=l, rng_seed=rng_seed)
    return replace(base, k=k, l=l, rng_seed=rng_seed)


def client_initialization(X, k: int, l: float = 2, rng_seed: int = 0,
                          solver: SolverConfig | None = None) -> np.ndarray:
    """Local (k, l)-clustering of one client's data."""
    X = as_points(X)
    if len(X) < k:
        raise InsufficientPointsError(f"client holds {len(X)} points, needs at least k={k}")
    centers, _ = solve(X, solver_config(k, l, rng_seed, solver))
    return centers


def server_aggregate(local_sets: Sequence, k: int, l: float = 2, rng_seed: int = 0,
                     solver: SolverConfig | None = None) -> np.ndarray:
    """Cluster the pooled local centers (duplicates kept) into k global centers."""
    if len(local_sets) == 0:
        raise MalformedInputError("no local center sets received")
    pool = np.vstack([as_points(c) for c in local_sets])
    if len(np.unique(pool, axis=0)) < k:
        raise DegeneratePoolError(f"degenerate pool: fewer than k={k} distinct centers")
    centers, _ = solve(pool, solver_config(k, l, rng_seed, solver))
    return centers


def personalization_gradient(x, c_g, c_z, lam: float, l: float = 2,
                             mode: str = "literal") -> np.ndarray:
    """Gradient of the personalization objective with respect to ``c_g``.

    l=2: ``(c_g - x) + 2 lam (c_g - c_z)``.
    l=1: ``1/2 + 2 lam (c_g - c_z)`` with the 1/2 on every coordinate, or
    ``1/2 sign(c_g - x) + 2 lam (c_g - c_z)`` in ``"subgradient"`` mode.
    """
    x = np.asarray(x, dtype=np.float64)
    c_g = np.asarray(c_g, dtype=np.float64)
    c_z = np.asarray(c_z, dtype=np.float64)
    if not (x.shape == c_g.shape == c_z.shape):
        raise MalformedInputError("dimension mismatch in personalization_gradient")
    pull = 2.0 * lam * (c_g - c_z)
    if l == 2:
        return (c_g - x) + pull
    if l == 1:
        if mode == "subgradient":
            return 0.5 * np.sign(c_g - x) + pull
        return 0.5 + pull
    raise MalformedInputError(f"personalization is defined for l in {{1, 2}}, got {l}")


def personalize_client(state: ClientState, global_centers, cfg: PersonalizationConfig,
                       lam: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fine-tune a copy of the global centers on the client's data.

    With the default ``step_size="count"`` the visit counters persist across
    passes, so the step size ``1 / count`` decays over the whole run. With
    ``"assigned"`` the step is one over the number of client points whose
    nearest personalized center is currently that center. Stops after ``cfg.t`` passes or once a full
    pass moves no center by ``cfg.tol`` or more. The returned assignment is
    a clean nearest-center assignment against the final centers.
    """
    lam = cfg.lam if lam is None else lam
    l = cfg.l
    X = as_points(state.X)
    C_z = as_points(state.local_centers)
    C = np.array(global_centers, dtype=np.float64)
    if C.shape[1] != X.shape[1] or C_z.shape[1] != X.shape[1]:
        raise MalformedInputError("center dimension does not match client data")
    counts = np.zeros(len(C), dtype=np.int64)
    # local centers never move, so the nearest one per point is fixed
    nearest_local = C_z[assign_nearest(X, C_z, l)]
    by_assignment = cfg.step_size == "assigned"
    if by_assignment:
        owner = assign_nearest(X, C, l)
        members = np.bincount(owner, minlength=len(C))
    order = np.arange(len(X))
    rng = np.random.default_rng(cfg.shuffle_seed) if cfg.shuffle else None
    state.movement = []
    passes = 0
    for _ in range(cfg.t):
        if rng is not None:
            order = rng.permutation(len(X))
        start = C.copy()
        for i in order:
            x = X[i]
            j = int(np.argmin(row_norms(C - x, l)))
            counts[j] += 1
            if by_assignment:
                members[owner[i]] -= 1
                members[j] += 1
                owner[i] = j
                eta = 1.0 / members[j]
            else:
                eta = 1.0 / counts[j]
            C[j] -= eta * personalization_gradient(x, C[j], nearest_local[i], lam, l, cfg.gradient)
        passes += 1
        moved = float(np.max(np.sqrt(np.sum((C - start) ** 2, axis=1))))
        state.movement.append(moved)
        if moved < cfg.tol:
            break
    if l == 1 and cfg.medoid_snap:
        C = X[np.argmin(pairwise_distances(C, X, l), axis=1)].copy()
    phi = assign_nearest(X, C, l)
    state.personalized, state.counts, state.assignment, state.passes = C, counts, phi, passes
    return C, phi


def map_clients(fn, items, workers: int):
    if workers <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def run_pfclus(clients: Sequence, k: int, l: float = 2,
               cfg: PersonalizationConfig | None = None, rng_seed: int = 0,
               solver: SolverConfig | None = None, lambdas: Sequence[float] | None = None,
               workers: int = 1, **identity) -> FederatedResult:
    """Run the full protocol over ``clients`` (a list of (n_z, h) arrays)."""
    cfg = PersonalizationConfig(l=l) if cfg is None else replace(cfg, l=l)
    clients = [as_points(X) for X in clients]
    for z, X in enumerate(clients):
        if len(X) < k:
            raise InsufficientPointsError(f"client {z} holds {len(X)} points, needs at least k={k}")
    if lambdas is not None and len(lambdas) != len(clients):
        raise MalformedInputError("need one lambda per client")
    comm = CommLog()

    local = map_clients(
        lambda z, X: client_initialization(X, k, l, client_seed(rng_seed, z), solver),
        list(enumerate(clients)), workers,
    )
    for z, C_z in enumerate(local):
        comm.upload(z, C_z)

    C_g = server_aggregate(local, k, l, rng_seed, solver)
    for z in range(len(clients)):
        comm.download(z, C_g)

    states = [ClientState(X, C_z) for X, C_z in zip(clients, local)]

    def personalize(z, state):
        lam = None if lambdas is None else lambdas[z]
        # a shuffled visiting order gets its own per-client stream
        own = replace(cfg, shuffle_seed=client_seed(rng_seed + cfg.shuffle_seed, z)) if cfg.shuffle else cfg
        return personalize_client(state, C_g, own, lam)

    out = map_clients(personalize, list(enumerate(states)), workers)
    centers = [c for c, _ in out]
    phis = [phi for _, phi in out]
    identity.setdefault("method", "pfclus")
    identity.setdefault("k", k)
    metrics = compute_metrics(list(zip(clients, centers, phis)), l, **identity)
    logger.debug("p-FClus: Z=%d mu=%.4f sigma=%.4f", len(clients), metrics.mu, metrics.sigma)
    return FederatedResult(C_g, centers, phis, metrics, comm, rounds=1)
