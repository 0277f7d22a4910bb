"""Grid runner, results file I/O and seed aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from pfclus.baselines import mfc, run_centclus, run_kfed
from pfclus.config import ExperimentConfig
from pfclus.core import MetricsRow
from pfclus.datagen import Dataset, SplitSpec, generate_synthetic, load_csv, partition
from pfclus.fed_pfclus import run_pfclus

logger = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "method", "dataset", "split_mode", "Z", "H", "k", "l", "seed", "split_checksum",
    "mu", "sigma", "max", "per_client_mu_json", "runtime_ms", "error",
)
CELL_KEYS = ("method", "dataset", "split_mode", "Z", "H", "k", "l")
METRICS = ("mu", "sigma", "max")


class AggregationError(ValueError):
    pass


def _load_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    ds = cfg.dataset
    if ds.kind == "csv":
        data = load_csv(ds.path, ds.features, ds.label, ds.standardize, name=ds.dataset_id)
    else:
        data = generate_synthetic(ds.syn_spec(seed))
    data.name = ds.dataset_id
    return data


def _error_row(identity: dict, message: str, checksum: str = "") -> MetricsRow:
    nan = float("nan")
    message = " ".join(message.split())  # one physical line per CSV record
    return MetricsRow(nan, nan, nan, (), **identity,
                      extra={"split_checksum": checksum, "error": message})


def _run_method(method: str, clients, cfg: ExperimentConfig, seed: int, identity: dict):
    identity = {key: v for key, v in identity.items() if key not in ("k", "l")}
    if method == "pfclus":
        return run_pfclus(clients, cfg.k, cfg.l, cfg.pfclus, seed, cfg.solver, **identity)
    if method == "kfed":
        return run_kfed(clients, cfg.k, cfg.kfed_k_prime, cfg.l, seed, cfg.solver, **identity)
    if method == "mfc":
        return mfc(clients, cfg.k, cfg.l, cfg.mfc, seed, cfg.solver, cfg.kfed_k_prime, **identity)
    if method == "centclus":
        return run_centclus(clients, cfg.k, cfg.l, seed, cfg.solver, cfg.centclus_n_init, **identity)
    raise ValueError(f"unknown method {method!r}")


def run_unit(cfg: ExperimentConfig, cell: tuple[str, int, int], seed: int) -> list[MetricsRow]:
    """Every configured method on one (cell, seed): one dataset, one split."""
    mode, Z, H = cell
    base = dict(dataset=cfg.dataset.dataset_id, split_mode=mode, Z=Z, H=H, k=cfg.k,
                l=cfg.l, seed=seed)
    try:
        data = _load_dataset(cfg, seed)
        split = partition(data, SplitSpec(mode, Z, H, seed, cfg.split.skew,
                                          cfg.split.min_points, cfg.k))
        small = [z for z, n in enumerate(split.sizes()) if n < cfg.k]
        if small:
            raise ValueError(f"clients {small[:5]} hold fewer than k={cfg.k} points")
    except Exception as exc:  # noqa: BLE001 - recorded, grid continues
        return [_error_row(dict(base, method=m), f"{type(exc).__name__}: {exc}") for m in cfg.methods]

    checksum = split.checksum()
    clients = split.clients
    rows = []
    for method in cfg.methods:
        identity = dict(base, method=method)
        start = time.perf_counter()
        try:
            result = _run_method(method, clients, cfg, seed, identity)
        except Exception as exc:  # noqa: BLE001
            logger.warning("%s failed on %s seed %d: %s", method, cell, seed, exc)
            rows.append(_error_row(identity, f"{type(exc).__name__}: {exc}", checksum))
            continue
        extra = {"split_checksum": checksum, "rounds": result.rounds,
                 "messages": len(result.comm)}
        if cfg.record_runtime:
            extra["runtime_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
        m = result.metrics
        rows.append(MetricsRow(m.mu, m.sigma, m.max, m.per_client_mu, **identity, extra=extra))
    return rows


def units(cfg: ExperimentConfig) -> list[tuple[tuple[str, int, int], int]]:
    return [(cell, seed) for cell in cfg.cells() for seed in cfg.seeds]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _fmt_norm(l: float) -> str:
    return str(int(l)) if float(l).is_integer() else repr(float(l))


def row_to_record(row: MetricsRow) -> list[str]:
    extra = row.extra
    return [
        row.method, row.dataset, row.split_mode, str(row.Z), str(row.H), str(row.k),
        _fmt_norm(row.l), str(row.seed), extra.get("split_checksum", ""),
        _fmt(row.mu), _fmt(row.sigma), _fmt(row.max),
        json.dumps(list(row.per_client_mu)) if row.per_client_mu else "",
        _fmt(extra["runtime_ms"]) if "runtime_ms" in extra else "",
        extra.get("error", ""),
    ]


def _format_records(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(row_to_record(r))
    return buf.getvalue()


def _header() -> str:
    return ",".join(RESULT_COLUMNS) + "\n"


def _row_key(rec: dict) -> tuple:
    return (rec["method"], rec["split_mode"], int(rec["Z"]), int(rec["H"]), int(rec["seed"]))


def _resume_prefix(path: Path, cfg: ExperimentConfig) -> tuple[list[str], int]:
    """Complete leading units already in ``path``: (their raw lines, unit count)."""
    text = path.read_text(encoding="utf-8")
    if "\n" not in text:
        return [], 0
    text = text[: text.rfind("\n") + 1]  # drop a half-written trailing line
    lines = text.splitlines(keepends=True)
    if not lines or lines[0] != _header():
        raise ValueError(f"{path}: not a results file written by this tool")
    body = lines[1:]
    records = list(csv.DictReader(io.StringIO(_header() + "".join(body))))
    kept, pos, done = [], 0, 0
    n_methods = len(cfg.methods)
    for cell, seed in units(cfg):
        expected = [(m, cell[0], cell[1], cell[2], seed) for m in cfg.methods]
        chunk = records[pos:pos + n_methods]
        if len(chunk) < n_methods or [_row_key(r) for r in chunk] != expected:
            break
        kept.extend(body[pos:pos + n_methods])
        pos += n_methods
        done += 1
    return kept, done


def _unit_job(args):
    cfg, cell, seed = args
    return run_unit(cfg, cell, seed)


def run_experiment(cfg: ExperimentConfig, output: str | Path | None = None,
                   resume: bool = False) -> list[MetricsRow]:
    """Run the whole grid, appending rows to the results CSV as units finish.

    Rows are written in the stable (cell, seed, method) order regardless of
    worker scheduling. With ``resume`` the complete units already present in
    the file are kept and skipped; the returned list then covers the whole
    file as read back from disk.
    """
    path = Path(output or cfg.output)
    todo = units(cfg)
    kept: list[str] = []
    skip = 0
    if resume and path.exists():
        kept, skip = _resume_prefix(path, cfg)
        logger.info("resuming: %d of %d units already complete", skip, len(todo))
    path.parent.mkdir(parents=True, exist_ok=True)
    rows: list[MetricsRow] = []
    jobs = [(cfg, cell, seed) for cell, seed in todo[skip:]]
    workers = cfg.effective_workers()
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(_header())
        fh.writelines(kept)
        fh.flush()
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_unit_job, jobs)
                for unit_rows in results:
                    fh.write(_format_records(unit_rows))
                    fh.flush()
                    rows.extend(unit_rows)
        else:
            for job in jobs:
                unit_rows = _unit_job(job)
                fh.write(_format_records(unit_rows))
                fh.flush()
                rows.extend(unit_rows)
    return read_results(path) if kept else rows


def _parse_float(s: str) -> float:
    return float(s) if s != "" else float("nan")


def read_results(path) -> list[MetricsRow]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            pcm = tuple(json.loads(rec["per_client_mu_json"])) if rec["per_client_mu_json"] else ()
            extra = {"split_checksum": rec["split_checksum"], "error": rec.get("error", "")}
            if rec.get("runtime_ms"):
                extra["runtime_ms"] = float(rec["runtime_ms"])
            rows.append(MetricsRow(
                _parse_float(rec["mu"]), _parse_float(rec["sigma"]), _parse_float(rec["max"]), pcm,
                method=rec["method"], dataset=rec["dataset"], split_mode=rec["split_mode"],
                Z=int(rec["Z"]), H=int(rec["H"]), k=int(rec["k"]), l=float(rec["l"]),
                seed=int(rec["seed"]), extra=extra,
            ))
    return rows


@dataclass(frozen=True)
class AggregateRow:
    keys: tuple[tuple[str, object], ...]
    n: int
    n_errors: int
    seeds: tuple[int, ...]
    mean: dict
    std: dict

    def as_record(self) -> dict:
        rec = dict(self.keys)
        rec["n"] = self.n
        rec["n_errors"] = self.n_errors
        for m in METRICS:
            rec[f"{m}_mean"] = self.mean[m]
            rec[f"{m}_std"] = self.std[m]
        return rec


def _sample_std(values: Sequence[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def aggregate_group(keys: tuple, rows: Sequence[MetricsRow], strict: bool = True) -> AggregateRow:
    """Mean and sample standard deviation (n-1) of each metric across seeds.

    With ``strict`` every row must share the full cell identity and no seed
    may repeat.
    """
    if strict:
        idents = {tuple(getattr(r, k) for k in CELL_KEYS) for r in rows}
        if len(idents) > 1:
            raise AggregationError(f"rows from {len(idents)} different cells grouped together")
        seeds = [r.seed for r in rows]
        if len(set(seeds)) != len(seeds):
            raise AggregationError("the same seed appears twice in one cell")
    ok = [r for r in rows if not r.extra.get("error")]
    mean, std = {}, {}
    for m in METRICS:
        vals = [getattr(r, m) for r in ok]
        mean[m] = statistics.fmean(vals) if vals else float("nan")
        std[m] = _sample_std(vals) if vals else float("nan")
    return AggregateRow(keys, len(ok), len(rows) - len(ok),
                        tuple(sorted({r.seed for r in ok})), mean, std)


def aggregate(rows: Sequence[MetricsRow], group_by: Sequence[str] = CELL_KEYS) -> list[AggregateRow]:
    """One :class:`AggregateRow` per distinct value of ``group_by``, first-seen order.

    Grouping by the full cell identity (the default) enforces one row per
    seed; coarser groupings pool whatever cells fall into a group.
    """
    for g in group_by:
        if g not in CELL_KEYS and g != "seed":
            raise AggregationError(f"cannot group by {g!r}; choose from {CELL_KEYS}")
    groups: dict[tuple, list[MetricsRow]] = {}
    for r in rows:
        key = tuple((g, getattr(r, g)) for g in group_by)
        groups.setdefault(key, []).append(r)
    strict = set(CELL_KEYS) <= set(group_by)
    return [aggregate_group(k, v, strict) for k, v in groups.items()]


def write_aggregates(aggs: Sequence[AggregateRow], fh) -> None:
    if not aggs:
        return
    records = [a.as_record() for a in aggs]
    w = csv.DictWriter(fh, fieldnames=list(records[0]), lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in rec.items()})


def write_panel_csvs(rows: Sequence[MetricsRow], out_dir) -> list[Path]:
    """Per-figure tables: one file per (dataset, split, Z, metric), rows are H,
    columns are ``<method>_mean`` / ``<method>_std``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aggs = aggregate(rows)
    methods = list(dict.fromkeys(r.method for r in rows))
    panels: dict[tuple, dict[int, dict[str, AggregateRow]]] = {}
    for a in aggs:
        d = dict(a.keys)
        panels.setdefault((d["dataset"], d["split_mode"], d["Z"], d["k"], d["l"]), {}) \
            .setdefault(d["H"], {})[d["method"]] = a
    written = []
    for (dataset, mode, Z, k, l), by_h in panels.items():
        for metric in METRICS:
            path = out_dir / f"{dataset}_{mode}_Z{Z}_k{k}_l{_fmt_norm(l)}_{metric}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["H"] + [f"{m}_{s}" for m in methods for s in ("mean", "std")])
                for H in sorted(by_h):
                    cells = []
                    for m in methods:
                        a = by_h[H].get(m)
                        cells += ["", ""] if a is None else [_fmt(a.mean[metric]), _fmt(a.std[metric])]
                    w.writerow([H] + cells)
            written.append(path)
    return written
