"""Shared primitives: l-norm distances, nearest-center assignment, objective
cost and the per-client fairness metrics (mu, sigma, max)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class MalformedInputError(ValueError):
    """Raised for shape mismatches, empty inputs and inconsistent assignments."""


def as_points(X) -> np.ndarray:
    """Coerce ``X`` to a 2-D float64 array of shape (n, h)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise MalformedInputError(f"expected a (n, h) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MalformedInputError("points must have finite coordinates")
    return arr


def check_norm(l: float) -> float:
    l = float(l)
    if not math.isfinite(l) or l < 1:
        raise MalformedInputError(f"norm order must be finite and >= 1, got {l}")
    return l


def row_norms(diff: np.ndarray, l: float) -> np.ndarray:
    # reduces the last axis
    if l == 2:
        return np.sqrt(np.sum(diff * diff, axis=-1))
    if l == 1:
        return np.sum(np.abs(diff), axis=-1)
    return np.sum(np.abs(diff) ** l, axis=-1) ** (1.0 / l)


def distance(x, y, l: float = 2) -> float:
    """l-norm of ``x - y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MalformedInputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    # rescale so tiny or huge differences neither underflow nor overflow
    scale = float(np.max(np.abs(diff))) if diff.size else 0.0
    if scale == 0.0:
        return 0.0
    return scale * float(row_norms(diff / scale, check_norm(l)))


def pairwise_distances(X, C, l: float = 2) -> np.ndarray:
    """(n, k) matrix of l-norm distances between points and centers."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if X.ndim != 2 or C.ndim != 2 or X.shape[1] != C.shape[1]:
        raise MalformedInputError(f"dimension mismatch: points {X.shape}, centers {C.shape}")
    return row_norms(X[:, None, :] - C[None, :, :], l)


def assign_nearest(X, C, l: float = 2) -> np.ndarray:
    """Index of the nearest center for every point; ties go to the lowest index."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or len(C) == 0:
        raise MalformedInputError("center set is empty")
    X = as_points(X)
    # np.argmin returns the first occurrence of the minimum
    return np.argmin(pairwise_distances(X, C, check_norm(l)), axis=1)


def local_objective_cost(X, C, assignment, l: float = 2) -> float:
    """Sum over points of ``d(x, C[assignment[x]]) ** l``."""
    X = as_points(X)
    C = np.asarray(C, dtype=np.float64)
    phi = np.asarray(assignment)
    if phi.shape != (len(X),):
        raise MalformedInputError(
            f"assignment has length {phi.size}, dataset has {len(X)} points"
        )
    if phi.size and (phi.min() < 0 or phi.max() >= len(C)):
        raise MalformedInputError("assignment refers to a center index out of range")
    l = check_norm(l)
    return float(np.sum(row_norms(X - C[phi], l) ** l))


@dataclass(frozen=True)
class MetricsRow:
    """Per-run summary of per-client per-point costs."""

    mu: float
    sigma: float
    max: float
    per_client_mu: tuple[float, ...]
    method: str = ""
    dataset: str = ""
    split_mode: str = ""
    Z: int = 0
    H: int = 0
    k: int = 0
    l: float = 2
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)


def metrics_from_costs(per_client_mu: Sequence[float], **identity) -> MetricsRow:
    """Build a :class:`MetricsRow` from per-client per-point costs."""
    pcm = [float(v) for v in per_client_mu]
    if not pcm:
        raise MalformedInputError("need at least one client")
    Z = len(pcm)
    mu = sum(pcm) / Z
    sigma = math.sqrt(sum((v - mu) ** 2 for v in pcm) / Z)
    identity.setdefault("Z", Z)
    return MetricsRow(mu=mu, sigma=sigma, max=max(pcm), per_client_mu=tuple(pcm), **identity)


def compute_metrics(per_client, l: float = 2, **identity) -> MetricsRow:
    """Metrics for a list of ``(X_z, C_z, phi_z)`` triples.

    ``C_z`` is whatever center set client ``z`` is evaluated against: the
    personalized centers for p-FClus, the shared global centers otherwise.
    Extra keyword arguments fill the identity fields of the row.
    """
    costs = []
    for z, (X, C, phi) in enumerate(per_client):
        X = as_points(X) if len(X) else np.empty((0, 1))
        if len(X) == 0:
            raise MalformedInputError(f"client {z} has an empty dataset")
        costs.append(local_objective_cost(X, C, phi, l) / len(X))
    identity.setdefault("l", l)
    return metrics_from_costs(costs, **identity)


def evaluate_centers(clients: Sequence, centers, l: float = 2, **identity) -> MetricsRow:
    """Metrics when every client uses the same center set with nearest assignment."""
    centers = np.asarray(centers, dtype=np.float64)
    triples = [(X, centers, assign_nearest(X, centers, l)) for X in clients]
    return compute_metrics(triples, l, **identity)
