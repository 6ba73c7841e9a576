"""Long-format tables for plotting, built from entropy records and the performance model.

Each table is keyed by a figure's axes so external tooling can render it
directly; nothing here draws anything.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .characterization import EntropyRecord, best_record, location_bucket
from .io import write_table
from .trng import PerfModel, normalize_to_quac

TABLE_HEADER = "# simra-table v1"


def _stats(values: Sequence[float]) -> tuple[int, float, float, float]:
    v = np.asarray(values, dtype=float)
    return len(v), float(v.mean()), float(v.min()), float(v.max())


def best_per_group(records: Iterable[EntropyRecord]) -> dict[tuple, EntropyRecord]:
    """Best pattern for every (group, temperature)."""
    by = defaultdict(list)
    for r in records:
        by[(r.group.key, r.temperature)].append(r)
    return {k: best_record(v) for k, v in by.items()}


def entropy_vs_rows(records: Iterable[EntropyRecord]) -> list[tuple]:
    """rows, temperature, groups, mean/min/max of each group's best-pattern entropy."""
    acc = defaultdict(list)
    for rec in best_per_group(records).values():
        acc[(rec.group.size, rec.temperature)].append(rec.average_cache_block_entropy)
    return [(rows, t, *_stats(v)) for (rows, t), v in sorted(acc.items())]


def entropy_vs_ones(records: Iterable[EntropyRecord]) -> list[tuple]:
    """rows, ones, temperature, patterns, mean/min/max entropy over all patterns with that ones-count."""
    acc = defaultdict(list)
    for r in records:
        acc[(r.group.size, r.pattern.ones_count, r.temperature)].append(r.average_cache_block_entropy)
    return [(rows, ones, t, *_stats(v)) for (rows, ones, t), v in sorted(acc.items())]


def entropy_vs_temperature(records: Iterable[EntropyRecord]) -> list[tuple]:
    """rows, temperature, mean best-pattern entropy and its ratio to the coolest temperature."""
    acc = defaultdict(list)
    for rec in best_per_group(records).values():
        acc[(rec.group.size, rec.temperature)].append(rec.average_cache_block_entropy)
    out = []
    coolest = {}
    for (rows, t), v in sorted(acc.items()):
        mean = float(np.mean(v))
        coolest.setdefault(rows, mean)
        ratio = coolest[rows] / mean if mean > 0 else float("inf")
        out.append((rows, t, mean, ratio))
    return out


def entropy_vs_location(records: Iterable[EntropyRecord], n_subarrays: int) -> list[tuple]:
    """location, rows, temperature, groups, mean/min/max of best-pattern entropy."""
    acc = defaultdict(list)
    for rec in best_per_group(records).values():
        loc = location_bucket(rec.group.subarray, n_subarrays)
        acc[(loc, rec.group.size, rec.temperature)].append(rec.average_cache_block_entropy)
    order = {"Beginning": 0, "Middle": 1, "End": 2}
    keys = sorted(acc, key=lambda k: (order[k[0]], k[1], k[2]))
    return [(loc, rows, t, *_stats(acc[(loc, rows, t)])) for loc, rows, t in keys]


def latency_table(model: PerfModel | None = None, orders: Sequence[int] = (1, 2, 3, 4, 5)) -> list[tuple]:
    model = model or PerfModel()
    return [(k, 2 ** k, model.latency(k)) for k in orders]


def throughput_table(throughputs_bps: Mapping[int, float]) -> list[tuple]:
    """order, rows, Gbps, throughput relative to four-row activation."""
    norm = normalize_to_quac(dict(throughputs_bps))
    return [(k, 2 ** k, throughputs_bps[k] / 1e9, norm[k]) for k in sorted(throughputs_bps)]


FIGURE_TABLES = {
    "entropy_vs_rows.csv": (("rows", "temperature", "groups", "mean", "min", "max"), entropy_vs_rows),
    "entropy_vs_ones.csv": (("rows", "ones", "temperature", "patterns", "mean", "min", "max"), entropy_vs_ones),
    "entropy_vs_temperature.csv": (("rows", "temperature", "mean", "ratio_to_coolest"), entropy_vs_temperature),
}


def write_figure_tables(records: Sequence[EntropyRecord], out_dir: str | Path, n_subarrays: int) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for name, (cols, fn) in FIGURE_TABLES.items():
        write_table(out_dir / name, TABLE_HEADER, cols, fn(records))
        written.append(out_dir / name)
    cols = ("location", "rows", "temperature", "groups", "mean", "min", "max")
    write_table(out_dir / "entropy_vs_location.csv", TABLE_HEADER, cols, entropy_vs_location(records, n_subarrays))
    written.append(out_dir / "entropy_vs_location.csv")
    return written
