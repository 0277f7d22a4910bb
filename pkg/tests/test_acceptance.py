"""Acceptance criteria 1-10, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before
asserting. Tolerances are fixed here and never tuned to the outcome.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from pfclus.baselines import mfc, run_centclus, run_kfed
from pfclus.core import assign_nearest, local_objective_cost, metrics_from_costs
from pfclus.datagen import SplitSpec, SynSpec, generate_synthetic, partition
from pfclus.fed_pfclus import (
    client_initialization,
    client_seed,
    personalization_gradient,
    run_pfclus,
    server_aggregate,
)
from pfclus.local_solver import SolverConfig, kmedoids, lloyd_kmeans

SEEDS = (0, 300, 600, 900, 1200)
Z, K = 50, 10
POINTS_PER_CLUSTER = 500  # 5000 points, 100 per client in the balanced split


def syn_clients(kind, H, seed, mode="balanced"):
    data = generate_synthetic(SynSpec(kind, points_per_cluster=POINTS_PER_CLUSTER, rng_seed=seed))
    return partition(data, SplitSpec(mode, Z, H, seed, k=K)).clients


@pytest.fixture(scope="module")
def syn_no_runs():
    """p-FClus, k-FED and centralized Lloyd on every (H, seed) of the Syn-NO cells."""
    start = time.perf_counter()
    out = {}
    for H in (2, 10):
        for seed in SEEDS:
            clients = syn_clients("NO", H, seed)
            out[H, seed] = {
                "pfclus": run_pfclus(clients, K, 2, rng_seed=seed).metrics,
                "kfed": run_kfed(clients, K, rng_seed=seed).metrics,
                "centclus": run_centclus(clients, K, 2, rng_seed=seed).metrics,
            }
    return out, time.perf_counter() - start


def test_criterion_01_cost_ordering(syn_no_runs, criterion):
    runs, elapsed = syn_no_runs
    parts, ok = [], elapsed < 60.0
    for H in (2, 10):
        mu = {m: float(np.mean([runs[H, s][m].mu for s in SEEDS])) for m in ("pfclus", "kfed", "centclus")}
        ratio_cent = mu["pfclus"] / mu["centclus"]
        ok &= ratio_cent <= 1.10
        parts.append(f"H={H}: pfclus/centclus={ratio_cent:.3f}")
        if H == 2:
            ratio_kfed = mu["kfed"] / mu["pfclus"]
            ok &= ratio_kfed >= 1.5
            parts.append(f"kfed/pfclus={ratio_kfed:.2f}")
    criterion(1, ok, "; ".join(parts) + f"; runtime {elapsed:.1f}s (<60s)")


def test_criterion_02_fairness(syn_no_runs, criterion):
    runs, _ = syn_no_runs
    wins = sum(runs[2, s]["pfclus"].sigma <= runs[2, s]["kfed"].sigma for s in SEEDS)
    criterion(2, wins >= 4, f"pfclus sigma <= kfed sigma in {wins}/5 seeds at H=2 (need >= 4)")


def test_criterion_03_communication(criterion):
    clients = syn_clients("NO", 2, 0)
    res = run_pfclus(clients, K, 2, rng_seed=0)
    exact = (res.comm.uploads() == {z: 1 for z in range(Z)}
             and res.comm.downloads() == {z: 1 for z in range(Z)} and len(res.comm) == 2 * Z)
    rounds = [mfc(syn_clients("O", 2, s), K, rng_seed=s).rounds for s in SEEDS]
    ok = exact and all(r >= 2 for r in rounds)
    criterion(3, ok, f"pfclus 1 up + 1 down per client: {exact}; "
                     f"MFC rounds after handshake on Syn-O H=2: {rounds}")


def test_criterion_04_gradient(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        h = int(rng.integers(1, 6))
        x, cg, cz = rng.normal(scale=5.0, size=(3, h))
        lam = float(rng.uniform(0, 2))

        def P(c):
            return 0.5 * float(np.sum((c - x) ** 2)) + lam * float(np.sum((c - cz) ** 2))

        fd = np.empty(h)
        for j in range(h):
            step = 1e-5 * max(1.0, abs(cg[j]))
            e = np.zeros(h)
            e[j] = step
            fd[j] = (P(cg + e) - P(cg - e)) / (2 * step)
        g = personalization_gradient(x, cg, cz, lam, 2)
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)))
    criterion(4, worst <= 1e-5, f"max relative error {worst:.2e} over 100 draws (<= 1e-5)")


def test_criterion_05_solver_properties(criterion):
    rng = np.random.default_rng(5)
    worst_increase = -math.inf
    members = True
    for i in range(50):
        n = int(rng.integers(5, 100))
        X = rng.normal(size=(n, int(rng.integers(1, 4)))) * rng.uniform(0.5, 20)
        k = int(rng.integers(1, min(8, n) + 1))
        hist = []
        lloyd_kmeans(X, SolverConfig(k=k, rng_seed=i), history=hist)
        if len(hist) > 1:
            worst_increase = max(worst_increase, float(np.max(np.diff(hist))))
        C, _ = kmedoids(X, SolverConfig(k=k, l=1, rng_seed=i))
        members &= all(any(np.array_equal(c, x) for x in X) for c in C)
    ok = worst_increase <= 1e-9 and members
    criterion(5, ok, f"largest per-iteration Lloyd increase {worst_increase:.1e} (<= 1e-9); "
                     f"medoids are input points: {members}")


def test_criterion_06_single_client_identity(criterion):
    # every synthetic family and seed, one client of 500 points, k = 10
    worst_set, per_kind = 0.0, {}
    for kind in ("NO", "LO", "O"):
        gaps = []
        for seed in SEEDS:
            X = generate_synthetic(SynSpec(kind, points_per_cluster=50, rng_seed=seed)).points
            C_loc = client_initialization(X, K, 2, client_seed(seed, 0))
            G = server_aggregate([C_loc], K, 2, rng_seed=seed)
            d = np.linalg.norm(G[:, None, :] - C_loc[None, :, :], axis=2)
            worst_set = max(worst_set, float(d.min(axis=1).max()), float(d.min(axis=0).max()))
            local = local_objective_cost(X, C_loc, assign_nearest(X, C_loc)) / len(X)
            end = run_pfclus([X], K, 2, rng_seed=seed).metrics.mu
            gaps.append(abs(end - local) / local)
        per_kind[kind] = gaps
    within = {kind: sum(g <= 0.01 for g in gaps) for kind, gaps in per_kind.items()}
    worst = {kind: max(gaps) for kind, gaps in per_kind.items()}
    ok = worst_set < 1e-9 and all(n == len(SEEDS) for n in within.values())
    detail = ", ".join(f"Syn-{kind} {within[kind]}/5 within 1% (worst {worst[kind]:.1%})" for kind in within)
    criterion(6, ok, f"aggregate vs local set distance {worst_set:.1e} (< 1e-9); end-to-end vs local: {detail}")


def test_criterion_07_metrics_oracle(criterion):
    rng = np.random.default_rng(7)
    ok, worst = True, 0.0
    for _ in range(200):
        costs = (rng.gamma(2.0, 3.0, size=int(rng.integers(1, 200)))).tolist()
        row = metrics_from_costs(costs)
        total = 0.0
        for c in costs:
            total += c
        mu = total / len(costs)
        sq = 0.0
        for c in costs:
            sq += (c - mu) * (c - mu)
        sigma = math.sqrt(sq / len(costs))
        worst = max(worst, abs(row.sigma - sigma))
        ok &= row.mu == mu and row.max == max(costs)
    ok &= worst <= 1e-12
    criterion(7, ok, f"mu bitwise equal and max exact on 200 cases; max sigma gap {worst:.1e} (<= 1e-12)")


def test_criterion_08_small_instance_oracle(criterion):
    rng = np.random.default_rng(8)
    assign_ok, ratios = True, []
    for trial in range(500):
        n = int(rng.integers(1, 7))
        k = int(rng.integers(1, 4))
        X = rng.integers(-5, 6, size=(n, 2)).astype(float)
        for l in (1, 2):
            C = rng.integers(-5, 6, size=(k, 2)).astype(float)
            near = local_objective_cost(X, C, assign_nearest(X, C, l), l)
            for labels in itertools.product(range(k), repeat=n):
                if near > local_objective_cost(X, C, np.array(labels), l) + 1e-12:
                    assign_ok = False
        if len(np.unique(X, axis=0)) < k:
            continue
        got_C, phi = kmedoids(X, SolverConfig(k=k, l=1, rng_seed=trial))
        got = local_objective_cost(X, got_C, phi, 1)
        best = min(local_objective_cost(X, X[list(S)], assign_nearest(X, X[list(S)], 1), 1)
                   for S in itertools.combinations(range(n), k))
        ratios.append(1.0 if best == 0 and got == 0 else (got / best if best > 0 else math.inf))
    worst = max(ratios)
    ok = assign_ok and worst <= 1.05
    criterion(8, ok, f"nearest assignment optimal on all instances: {assign_ok}; "
                     f"worst kmedoids/optimum {worst:.3f} over {len(ratios)} instances (<= 1.05)")


CONFIG_9 = """
output = "results.csv"
k = 5
seeds = [0, 300, 600]
workers = 2
[dataset]
kind = "O"
points_per_cluster = 60
[split]
modes = ["balanced", "unequal"]
Z = [12]
H = [2, 5]
"""


def test_criterion_09_determinism(tmp_path, criterion):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG_9)
    outs = []
    for name in ("a.csv", "b.csv"):
        proc = subprocess.run([sys.executable, "-m", "pfclus", "run", "--config", str(cfg),
                               "--output", str(tmp_path / name)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append((tmp_path / name).read_bytes())
    same = outs[0] == outs[1]
    criterion(9, same, f"two CLI runs byte-identical: {same} ({len(outs[0])} bytes)")


def test_criterion_10_partitioner_contracts(criterion):
    failures = []
    for mode in ("balanced", "unequal"):
        for i in range(20):
            rng = np.random.default_rng(1000 + i)
            H = int(rng.choice([2, 5, 7, 10]))
            z = int(rng.choice([50, 100]))
            data = generate_synthetic(SynSpec("NO", points_per_cluster=int(rng.integers(300, 600)), rng_seed=i))
            split = partition(data, SplitSpec(mode, z, H, rng_seed=i, k=K))
            allidx = np.sort(np.concatenate(split.client_indices))
            if not np.array_equal(allidx, np.arange(len(data))):
                failures.append(f"{mode}#{i} conservation")
            if max(len(s) for s in split.label_sets()) > H:
                failures.append(f"{mode}#{i} label sets")
            if mode == "balanced" and split.sizes().max() - split.sizes().min() > H:
                failures.append(f"{mode}#{i} spread")
    criterion(10, not failures, f"40 splits checked; violations: {failures or 'none'}")
