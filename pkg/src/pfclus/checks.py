"""Invariant checks runnable without a full experiment (``pfclus validate``)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pfclus.config import ExperimentConfig
from pfclus.core import metrics_from_costs
from pfclus.datagen import FederatedSplit, SplitSpec, partition
from pfclus.fed_pfclus import personalization_gradient
from pfclus.local_solver import SolverConfig, kmedoids, lloyd_kmeans


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f" ({self.detail})" if self.detail else "")


def personalization_objective(x, c_g, c_z, lam: float) -> float:
    """0.5 * ||c_g - x||^2 + lam * ||c_g - c_z||^2."""
    return 0.5 * float(np.sum((c_g - x) ** 2)) + lam * float(np.sum((c_g - c_z) ** 2))


def gradient_check(draws: int = 100, seed: int = 0, rel_tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        h = int(rng.integers(1, 6))
        x, c_g, c_z = (rng.normal(scale=5.0, size=h) for _ in range(3))
        lam = float(rng.uniform(0, 2))
        g = personalization_gradient(x, c_g, c_z, lam, 2)
        fd = np.empty(h)
        for j in range(h):
            step = 1e-5 * max(1.0, abs(c_g[j]))
            e = np.zeros(h)
            e[j] = step
            fd[j] = (personalization_objective(x, c_g + e, c_z, lam)
                     - personalization_objective(x, c_g - e, c_z, lam)) / (2 * step)
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(err))
    return CheckResult("gradient_l2_finite_difference", worst <= rel_tol, f"max rel err {worst:.2e}")


def lloyd_monotone_check(instances: int = 50, seed: int = 0, atol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for i in range(instances):
        n = int(rng.integers(5, 80))
        k = int(rng.integers(1, min(6, n) + 1))
        X = rng.normal(size=(n, int(rng.integers(1, 4)))) * rng.uniform(0.1, 20)
        hist: list[float] = []
        lloyd_kmeans(X, SolverConfig(k=k, rng_seed=i), history=hist)
        if len(hist) > 1:
            worst = max(worst, float(np.max(np.diff(hist))))
    return CheckResult("lloyd_objective_nonincreasing", worst <= atol, f"max increase {worst:.2e}")


def kmedoids_membership_check(instances: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    for i in range(instances):
        n = int(rng.integers(3, 40))
        X = rng.normal(size=(n, 2)) * 10
        k = int(rng.integers(1, min(4, n) + 1))
        C, _ = kmedoids(X, SolverConfig(k=k, l=1, rng_seed=i))
        for c in C:
            if not np.any(np.all(X == c, axis=1)):
                return CheckResult("kmedoids_centers_in_data", False, f"instance {i}")
    return CheckResult("kmedoids_centers_in_data", True)


def metrics_oracle_check(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    costs = rng.gamma(2.0, 3.0, size=int(rng.integers(1, 60))).tolist()
    row = metrics_from_costs(costs)
    total = 0.0
    for c in costs:
        total += c
    mu = total / len(costs)
    sq = 0.0
    for c in costs:
        sq += (c - mu) ** 2
    ok = row.mu == mu and abs(row.sigma - math.sqrt(sq / len(costs))) <= 1e-12 and row.max == max(costs)
    return CheckResult("metrics_oracle", ok)


def split_checks(split: FederatedSplit, spec: SplitSpec, k: int, label: str) -> list[CheckResult]:
    n = len(split.dataset)
    allidx = np.sort(np.concatenate(split.client_indices))
    out = [CheckResult(f"{label}: conservation", np.array_equal(allidx, np.arange(n)))]
    sizes = [len(s) for s in split.label_sets()]
    out.append(CheckResult(f"{label}: label sets <= H", max(sizes) <= spec.H,
                           f"max {max(sizes)}"))
    out.append(CheckResult(f"{label}: clients hold >= k points", int(split.sizes().min()) >= k,
                           f"min {int(split.sizes().min())}"))
    if spec.mode == "balanced":
        n_dist = len(np.unique(split.dataset.labels))
        if (spec.Z * spec.H) % n_dist == 0:
            spread = int(split.sizes().max() - split.sizes().min())
            out.append(CheckResult(f"{label}: balanced spread <= H", spread <= spec.H,
                                   f"spread {spread}"))
    return out


def validate(cfg: ExperimentConfig) -> list[CheckResult]:
    from pfclus.harness import _load_dataset

    results = [gradient_check(), lloyd_monotone_check(), kmedoids_membership_check(),
               metrics_oracle_check()]
    seed = cfg.seeds[0]
    for mode, Z, H in cfg.cells():
        label = f"{mode}/Z={Z}/H={H}/seed={seed}"
        try:
            data = _load_dataset(cfg, seed)
            spec = SplitSpec(mode, Z, H, seed, cfg.split.skew, cfg.split.min_points, cfg.k)
            split = partition(data, spec)
        except Exception as exc:  # noqa: BLE001
            results.append(CheckResult(f"{label}: split", False, f"{type(exc).__name__}: {exc}"))
            continue
        results.extend(split_checks(split, spec, cfg.k, label))
    return results
