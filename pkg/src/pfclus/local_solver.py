"""Centralized (k, l)-clustering: Lloyd's k-means for l=2 and alternating
(Voronoi-iteration) k-medoids with swap polishing for l=1, both seeded with
k-means++."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from pfclus.core import (
    MalformedInputError,
    as_points,
    assign_nearest,
    check_norm,
    local_objective_cost,
    pairwise_distances,
)


class InsufficientPointsError(MalformedInputError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    k: int
    l: float = 2
    max_iters: int = 100
    tol: float = 1e-4
    rng_seed: int = 0
    n_init: int | None = None  # restarts; None -> 1 for k-means, 10 for k-medoids

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_init is not None and self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        check_norm(self.l)

    def with_seed(self, seed: int) -> "SolverConfig":
        return replace(self, rng_seed=seed)


def _require_points(X: np.ndarray, k: int) -> None:
    if len(X) < k:
        raise InsufficientPointsError(f"insufficient points: {len(X)} < k={k}")
    if len(np.unique(X, axis=0)) < k:
        raise InsufficientPointsError(f"insufficient distinct points for k={k}")


def kmeans_pp_init(X, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ (D^2) seeding. Returns k distinct rows of ``X``."""
    X = as_points(X)
    _require_points(X, k)
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # all-zero weights cannot happen while distinct points remain
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def _repair_empty(X: np.ndarray, centers: np.ndarray, empty: list[int], l: float) -> None:
    # move each orphaned center onto the point farthest from its nearest surviving center
    alive = np.ones(len(centers), dtype=bool)
    alive[empty] = False
    for j in empty:
        d = pairwise_distances(X, centers[alive], l).min(axis=1)
        centers[j] = X[int(np.argmax(d))]
        alive[j] = True


def _mean(members: np.ndarray, l: float) -> np.ndarray:
    return members.mean(axis=0)


def _medoid(members: np.ndarray, l: float) -> np.ndarray:
    cost = np.sum(pairwise_distances(members, members, l) ** l, axis=1)
    return members[int(np.argmin(cost))]


def _alternate(X, cfg: SolverConfig, update, init, history) -> tuple[np.ndarray, np.ndarray]:
    X = as_points(X)
    _require_points(X, cfg.k)
    l = check_norm(cfg.l)
    if init is None:
        centers = kmeans_pp_init(X, cfg.k, np.random.default_rng(cfg.rng_seed))
    else:
        centers = np.array(init, dtype=np.float64)
        if centers.shape != (cfg.k, X.shape[1]):
            raise MalformedInputError(f"init centers have shape {centers.shape}")
    labels = assign_nearest(X, centers, l)
    if history is not None:
        history.append(local_objective_cost(X, centers, labels, l))
    for _ in range(cfg.max_iters):
        new = centers.copy()
        empty = []
        for j in range(cfg.k):
            members = X[labels == j]
            if len(members) == 0:
                empty.append(j)
            else:
                new[j] = update(members, l)
        if empty:
            _repair_empty(X, new, empty, l)
        shift = float(np.max(np.sqrt(np.sum((new - centers) ** 2, axis=1))))
        centers = new
        new_labels = assign_nearest(X, centers, l)
        if history is not None:
            history.append(local_objective_cost(X, centers, new_labels, l))
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if shift < cfg.tol or (stable and not empty):
            break
    return centers, labels


def lloyd_kmeans(X, cfg: SolverConfig, init=None, history: list | None = None):
    """Lloyd's algorithm. Returns ``(centers, labels)``.

    ``init`` overrides k-means++ seeding (warm start). If ``history`` is a
    list, the objective after seeding and after every iteration is appended.
    """
    n_init = 1 if init is not None else (cfg.n_init or 1)
    if n_init == 1:
        return _alternate(X, cfg, _mean, init, history)
    X = as_points(X)
    best = None
    for seed in np.random.SeedSequence(cfg.rng_seed).generate_state(n_init):
        centers, labels = _alternate(X, replace(cfg, rng_seed=int(seed)), _mean, None, None)
        cost = local_objective_cost(X, centers, labels, cfg.l)
        if best is None or cost < best[0]:
            best = (cost, centers, labels)
    return best[1], best[2]


def _swap_refine(X: np.ndarray, medoids: list[int], l: float, chunk_cells: int = 4_000_000):
    # best-improvement single medoid/point swaps until no swap lowers the cost
    n, k = len(X), len(medoids)
    block = max(1, chunk_cells // n)
    while True:
        dm = pairwise_distances(X, X[medoids], l) ** l
        current = float(dm.min(axis=1).sum())
        bases = []
        for j in range(k):
            others = np.delete(dm, j, axis=1)
            bases.append(others.min(axis=1) if k > 1 else np.full(n, np.inf))
        best_gain, best_swap = 0.0, None
        for start in range(0, n, block):
            dc = pairwise_distances(X, X[start:start + block], l) ** l
            for j in range(k):
                totals = np.minimum(dc, bases[j][:, None]).sum(axis=0)
                p = int(np.argmin(totals))
                gain = current - float(totals[p])
                if gain > best_gain and gain > 1e-12 * max(current, 1.0):
                    best_gain, best_swap = gain, (j, start + p)
        if best_swap is None:
            return medoids
        j, p = best_swap
        medoids[j] = p


def _row_index(X: np.ndarray, row: np.ndarray) -> int:
    return int(np.flatnonzero(np.all(X == row, axis=1))[0])


def kmedoids(X, cfg: SolverConfig, init=None, history: list | None = None):
    """k-medoids for the l=1 objective; every returned center is a row of ``X``.

    Each restart runs the alternating (Voronoi) iteration from a k-means++
    seed and then polishes the medoids with single-swap refinement. The
    cheapest restart wins (first one on ties).
    """
    X = as_points(X)
    l = check_norm(cfg.l)
    n_init = 1 if init is not None else (cfg.n_init or 10)
    seeds = np.random.SeedSequence(cfg.rng_seed).generate_state(n_init)
    best = None
    for r in range(n_init):
        run_cfg = replace(cfg, rng_seed=int(seeds[r])) if n_init > 1 else cfg
        centers, _ = _alternate(X, run_cfg, _medoid, init, history if r == 0 else None)
        medoids = _swap_refine(X, [_row_index(X, c) for c in centers], l)
        centers = X[medoids].copy()
        labels = assign_nearest(X, centers, l)
        cost = local_objective_cost(X, centers, labels, l)
        if best is None or cost < best[0]:
            best = (cost, centers, labels)
    return best[1], best[2]


def solve(X, cfg: SolverConfig, init=None):
    """Dispatch to the solver matching ``cfg.l`` (2 -> k-means, 1 -> k-medoids)."""
    if cfg.l == 2:
        return lloyd_kmeans(X, cfg, init)
    if cfg.l == 1:
        return kmedoids(X, cfg, init)
    raise MalformedInputError(f"no solver ships for l={cfg.l}; supported: 1, 2")
