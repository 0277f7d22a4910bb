"""Experiment configuration: a TOML file parsed into :class:`ExperimentConfig`."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from pfclus.baselines import CENTCLUS_N_INIT, MfcConfig
from pfclus.datagen import SPLIT_MODES, SYN_GEOMETRY, SynSpec
from pfclus.fed_pfclus import GRADIENT_MODES, STEP_MODES, PersonalizationConfig
from pfclus.local_solver import SolverConfig

METHODS = ("pfclus", "kfed", "mfc", "centclus")
DEFAULT_SEEDS = (0, 300, 600, 900, 1200)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "NO"  # NO / LO / O or "csv"
    name: str | None = None
    n_clusters: int = 10
    points_per_cluster: int = 100
    dim: int = 2
    path: str | None = None
    features: tuple[str, ...] = ()
    label: str | None = None
    standardize: bool = False

    @property
    def dataset_id(self) -> str:
        if self.name:
            return self.name
        if self.kind == "csv":
            return Path(self.path or "csv").stem
        return f"syn-{self.kind.lower()}"

    def syn_spec(self, seed: int) -> SynSpec:
        return SynSpec(self.kind, self.n_clusters, self.points_per_cluster, self.dim, seed)


@dataclass(frozen=True)
class SplitConfig:
    modes: tuple[str, ...] = ("balanced",)
    Z: tuple[int, ...] = (10,)
    H: tuple[int, ...] = (2,)
    skew: float = 0.1
    min_points: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    split: SplitConfig
    methods: tuple[str, ...] = METHODS
    k: int = 10
    l: float = 2
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output: str = "results.csv"
    workers: int = 1
    record_runtime: bool = False
    pfclus: PersonalizationConfig = field(default_factory=PersonalizationConfig)
    mfc: MfcConfig = field(default_factory=MfcConfig)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(k=1))
    kfed_k_prime: int | None = None
    centclus_n_init: int = CENTCLUS_N_INIT

    def cells(self) -> list[tuple[str, int, int]]:
        """(split_mode, Z, H) grid in a stable order."""
        return [(m, z, h) for m in self.split.modes for z in self.split.Z for h in self.split.H]

    def effective_workers(self) -> int:
        env = os.environ.get("FEDCLUS_WORKERS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError("FEDCLUS_WORKERS", f"not an integer: {env!r}") from None
        return self.workers


def _get(table: dict, key: str, path: str, kind, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}".lstrip("."), "required field missing")
        return default
    value = table[key]
    full = f"{path}.{key}".lstrip(".")
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(full, f"expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _int_list(table: dict, key: str, path: str, default) -> tuple[int, ...]:
    value = table.get(key, default)
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value]
    full = f"{path}.{key}".lstrip(".")
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(full, "expected a nonempty integer or list of integers")
    for v in value:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(full, f"expected integers, got {v!r}")
    return tuple(value)


def _build(label: str, fn, **kwargs):
    try:
        return fn(**kwargs)
    except ValueError as exc:
        raise ConfigError(label, str(exc)) from None


def _check_keys(table: dict, allowed: set[str], path: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}".lstrip("."), "unknown field")


def parse_config(raw: dict[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    top = {"output", "methods", "k", "l", "seeds", "workers", "record_runtime",
           "dataset", "split", "pfclus", "mfc", "solver", "kfed", "centclus"}
    _check_keys(raw, top, "")

    ds_raw = _get(raw, "dataset", "", dict, required=True)
    _check_keys(ds_raw, {"kind", "name", "n_clusters", "points_per_cluster", "dim", "path",
                         "features", "label", "standardize"}, "dataset")
    kind = _get(ds_raw, "kind", "dataset", str, "NO")
    if kind != "csv" and kind not in SYN_GEOMETRY:
        raise ConfigError("dataset.kind", f"expected one of {sorted(SYN_GEOMETRY)} or 'csv'")
    path = _get(ds_raw, "path", "dataset", str)
    features = tuple(_get(ds_raw, "features", "dataset", list, []))
    if not all(isinstance(f, str) for f in features):
        raise ConfigError("dataset.features", "expected a list of column names")
    label = _get(ds_raw, "label", "dataset", str)
    if kind == "csv":
        if not path:
            raise ConfigError("dataset.path", "required for kind = 'csv'")
        if not features:
            raise ConfigError("dataset.features", "required for kind = 'csv'")
        if not label:
            raise ConfigError("dataset.label", "heterogeneity-controlled splits need a label column")
        if base_dir is not None and not Path(path).is_absolute():
            path = str(base_dir / path)
    dataset = DatasetConfig(
        kind=kind,
        name=_get(ds_raw, "name", "dataset", str),
        n_clusters=_get(ds_raw, "n_clusters", "dataset", int, 10),
        points_per_cluster=_get(ds_raw, "points_per_cluster", "dataset", int, 100),
        dim=_get(ds_raw, "dim", "dataset", int, 2),
        path=path, features=features, label=label,
        standardize=_get(ds_raw, "standardize", "dataset", bool, False),
    )
    if kind != "csv":
        _build("dataset", dataset.syn_spec, seed=0)

    sp_raw = _get(raw, "split", "", dict, {})
    _check_keys(sp_raw, {"modes", "Z", "H", "skew", "min_points"}, "split")
    modes = sp_raw.get("modes", ["balanced"])
    if isinstance(modes, str):
        modes = [modes]
    if not modes or any(m not in SPLIT_MODES for m in modes):
        raise ConfigError("split.modes", f"expected values from {SPLIT_MODES}")
    split = SplitConfig(
        modes=tuple(modes),
        Z=_int_list(sp_raw, "Z", "split", [10]),
        H=_int_list(sp_raw, "H", "split", [2]),
        skew=_get(sp_raw, "skew", "split", float, 0.1),
        min_points=_get(sp_raw, "min_points", "split", int, 10),
    )
    if split.skew <= 0:
        raise ConfigError("split.skew", "must be positive")
    if split.min_points < 1:
        raise ConfigError("split.min_points", "must be positive")
    if any(z < 1 for z in split.Z):
        raise ConfigError("split.Z", "client counts must be positive")
    if any(h < 1 for h in split.H):
        raise ConfigError("split.H", "heterogeneity levels must be positive")

    methods = raw.get("methods", list(METHODS))
    if isinstance(methods, str):
        methods = [methods]
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods", "at least one method is required")
    for m in methods:
        if m not in METHODS:
            raise ConfigError("methods", f"unknown method {m!r}; choose from {METHODS}")

    k = _get(raw, "k", "", int, 10)
    if k < 1:
        raise ConfigError("k", "must be >= 1")
    if kind != "csv" and any(h > dataset.n_clusters for h in split.H):
        raise ConfigError("split.H", f"H cannot exceed dataset.n_clusters={dataset.n_clusters}")
    l = _get(raw, "l", "", float, 2.0)
    if l not in (1.0, 2.0):
        raise ConfigError("l", "solvers ship for l = 1 (k-medoids) and l = 2 (k-means)")
    seeds = _int_list(raw, "seeds", "", list(DEFAULT_SEEDS))
    workers = _get(raw, "workers", "", int, 1)
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")

    pf_raw = _get(raw, "pfclus", "", dict, {})
    _check_keys(pf_raw, {"lambda", "t", "tol", "medoid_snap", "gradient", "shuffle", "step_size"},
                "pfclus")
    gradient = _get(pf_raw, "gradient", "pfclus", str, "literal")
    if gradient not in GRADIENT_MODES:
        raise ConfigError("pfclus.gradient", f"expected one of {GRADIENT_MODES}")
    step_size = _get(pf_raw, "step_size", "pfclus", str, "count")
    if step_size not in STEP_MODES:
        raise ConfigError("pfclus.step_size", f"expected one of {STEP_MODES}")
    pfclus = _build(
        "pfclus", PersonalizationConfig,
        lam=_get(pf_raw, "lambda", "pfclus", float, 0.01),
        t=_get(pf_raw, "t", "pfclus", int, 10),
        l=l,
        tol=_get(pf_raw, "tol", "pfclus", float, 1e-4),
        medoid_snap=_get(pf_raw, "medoid_snap", "pfclus", bool, True),
        gradient=gradient,
        shuffle=_get(pf_raw, "shuffle", "pfclus", bool, False),
        step_size=step_size,
    )

    mfc_raw = _get(raw, "mfc", "", dict, {})
    _check_keys(mfc_raw, {"max_rounds", "tol"}, "mfc")
    mfc = _build("mfc", MfcConfig,
                 max_rounds=_get(mfc_raw, "max_rounds", "mfc", int, 20),
                 tol=_get(mfc_raw, "tol", "mfc", float, 1e-4))

    sol_raw = _get(raw, "solver", "", dict, {})
    _check_keys(sol_raw, {"max_iters", "tol", "n_init"}, "solver")
    solver = _build("solver", SolverConfig, k=k, l=l,
                    max_iters=_get(sol_raw, "max_iters", "solver", int, 100),
                    tol=_get(sol_raw, "tol", "solver", float, 1e-4),
                    n_init=_get(sol_raw, "n_init", "solver", int))

    kfed_raw = _get(raw, "kfed", "", dict, {})
    _check_keys(kfed_raw, {"k_prime"}, "kfed")
    k_prime = _get(kfed_raw, "k_prime", "kfed", int)
    if k_prime is not None and k_prime < 1:
        raise ConfigError("kfed.k_prime", "must be >= 1")

    cc_raw = _get(raw, "centclus", "", dict, {})
    _check_keys(cc_raw, {"n_init"}, "centclus")
    cc_init = _get(cc_raw, "n_init", "centclus", int, CENTCLUS_N_INIT)
    if cc_init < 1:
        raise ConfigError("centclus.n_init", "must be >= 1")

    return ExperimentConfig(
        dataset=dataset, split=split, methods=tuple(methods), k=k, l=l, seeds=seeds,
        output=_get(raw, "output", "", str, "results.csv"), workers=workers,
        record_runtime=_get(raw, "record_runtime", "", bool, False),
        pfclus=pfclus, mfc=mfc, solver=solver, kfed_k_prime=k_prime, centclus_n_init=cc_init,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return parse_config(raw, base_dir=path.parent)
