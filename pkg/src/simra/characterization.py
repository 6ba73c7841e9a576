"""Entropy characterization of SAR groups across data patterns and temperatures.

Each configuration (group, pattern, temperature) runs ``trials`` repetitions
of: RowClone every group row from an all-0 or all-1 staging row, APA with
violated timings, read the full row of sense amplifiers with nominal
timings. Per-bit logic-1 counts become per-bit Shannon entropies, which are
summed per 512-bit cache block and averaged over the row's blocks.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analog import ChipConfig, ChipInstance
from .discovery import SarCatalog, SubarrayMap
from .dram import CACHE_BLOCK_BITS, SarGroup
from .engine import Command, CommandEngine, act, apa_sequence, pre, read_blocks, rowclone_sequence, write_blocks
from .errors import DiscoveryError
from .io import atomic_save_npy, read_table, write_table

log = logging.getLogger(__name__)

RECORDS_HEADER = "# simra-entropy-records v1"
RECORD_COLUMNS = (
    "record", "bank", "subarray", "order", "rows", "pair_a", "pair_b", "pattern", "ones",
    "temperature", "trials", "avg_block_entropy", "min_block_entropy", "max_block_entropy",
)
LOCATIONS = ("Beginning", "Middle", "End")


def shannon_entropy(p1: float) -> float:
    """Binary Shannon entropy in bits, with 0 * log2(0) taken as 0."""
    if not 0.0 <= p1 <= 1.0 or math.isnan(p1):
        raise ValueError(f"probability {p1} outside [0, 1]")
    h = 0.0
    for p in (p1, 1.0 - p1):
        if p > 0.0:
            h -= p * math.log2(p)
    return h


def bit_entropies(p1: np.ndarray) -> np.ndarray:
    p1 = np.asarray(p1, dtype=float)
    if np.any((p1 < 0) | (p1 > 1)):
        raise ValueError("probabilities outside [0, 1]")
    p0 = 1.0 - p1
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p1 > 0, p1 * np.log2(p1), 0.0) + np.where(p0 > 0, p0 * np.log2(p0), 0.0))
    return h


def block_entropies(p1: np.ndarray, block_bits: int = CACHE_BLOCK_BITS) -> np.ndarray:
    """Sum of per-bit entropies over each cache block."""
    h = bit_entropies(p1)
    if h.size % block_bits:
        raise ValueError("row length is not a whole number of cache blocks")
    return h.reshape(-1, block_bits).sum(axis=1)


def average_cache_block_entropy(record_or_blocks) -> float:
    blocks = getattr(record_or_blocks, "block_entropies", record_or_blocks)
    return float(np.mean(np.asarray(blocks, dtype=float)))


@dataclass(frozen=True, order=True)
class DataPattern:
    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("pattern bits must be 0 or 1")

    @classmethod
    def parse(cls, text: str) -> "DataPattern":
        return cls(tuple(int(c) for c in text))

    @property
    def ones_count(self) -> int:
        return sum(self.bits)

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join(map(str, self.bits))


def generate_patterns(n_rows: int, ones: int, budget: int, rng: np.random.Generator) -> list[DataPattern]:
    """All patterns with ``ones`` logic-1s, or ``budget`` random distinct ones if there are more."""
    if not 0 <= ones <= n_rows:
        raise ValueError(f"cannot place {ones} ones in {n_rows} rows")
    if math.comb(n_rows, ones) <= budget:
        out = []
        for pos in itertools.combinations(range(n_rows), ones):
            bits = [0] * n_rows
            for p in pos:
                bits[p] = 1
            out.append(DataPattern(tuple(bits)))
        return sorted(out)
    chosen: set[tuple[int, ...]] = set()
    while len(chosen) < budget:
        bits = np.zeros(n_rows, dtype=int)
        bits[rng.choice(n_rows, ones, replace=False)] = 1
        chosen.add(tuple(int(b) for b in bits))
    return sorted(DataPattern(b) for b in chosen)


@dataclass(frozen=True)
class CampaignConfig:
    trials_per_config: int = 1000
    sar_groups_per_order: int = 100
    subarrays_per_module: int = 3
    pattern_budget: int = 100
    temperatures: tuple[float, ...] = (50.0, 60.0, 70.0, 80.0, 90.0)
    seed: int = 0
    orders: tuple[int, ...] = (1, 2, 3, 4, 5)
    ones_counts: tuple[int, ...] | None = None  # None sweeps 0..n_rows
    bank: int = 0

    def __post_init__(self):
        for name in ("trials_per_config", "sar_groups_per_order", "subarrays_per_module", "pattern_budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.temperatures or any(not 0 <= t <= 120 for t in self.temperatures):
            raise ValueError("temperatures must lie in [0, 120] C")
        object.__setattr__(self, "temperatures", tuple(float(t) for t in self.temperatures))
        object.__setattr__(self, "orders", tuple(int(k) for k in self.orders))
        if self.ones_counts is not None:
            object.__setattr__(self, "ones_counts", tuple(int(k) for k in self.ones_counts))


@dataclass
class EntropyRecord:
    group: SarGroup
    pattern: DataPattern
    temperature: float
    trials: int
    ones: np.ndarray = field(repr=False)  # per-bit logic-1 counts

    def __post_init__(self):
        if len(self.pattern) != self.group.size:
            raise ValueError("pattern length differs from SAR group size")
        self.ones = np.asarray(self.ones, dtype=np.uint32)

    @property
    def frequencies(self) -> np.ndarray:
        return self.ones / self.trials

    @property
    def block_entropies(self) -> np.ndarray:
        return block_entropies(self.frequencies)

    @property
    def average_cache_block_entropy(self) -> float:
        return average_cache_block_entropy(self.block_entropies)

    @property
    def order_k(self) -> int:
        return self.group.order_k

    @property
    def key(self) -> str:
        return f"{self.group.key}_p{self.pattern}_t{self.temperature:g}"


@dataclass(frozen=True)
class Task:
    group: SarGroup
    pattern: DataPattern
    temperature: float

    @property
    def key(self) -> str:
        return f"{self.group.key}_p{self.pattern}_t{self.temperature:g}"


def trial_seed(campaign_seed: int, group: SarGroup, trial: int) -> int:
    ss = np.random.SeedSequence([campaign_seed, group.bank, group.subarray, group.rows[0], group.order_k, trial])
    return int(ss.generate_state(1, np.uint64)[0])


def staging_rows(group: SarGroup, rows_per_subarray: int) -> tuple[int, int]:
    """The two highest rows of the subarray outside the group (local indices)."""
    free = [r for r in range(rows_per_subarray - 1, -1, -1) if r not in set(group.rows)]
    if len(free) < 2:
        raise ValueError("subarray has no room for staging rows")
    return free[1], free[0]  # (all-0 row, all-1 row)


def _write_row(engine: CommandEngine, bank: int, row: int, value: int) -> None:
    t = engine.timing
    data = np.full(engine.chip.geometry.columns_per_row, value, dtype=np.uint8)
    engine.execute([act(bank, row, t.t_rp), *write_blocks(bank, data, t), pre(bank, t.t_ras)])


def initialization_sequence(group: SarGroup, pattern: DataPattern, staging: tuple[int, int], rows_per_subarray: int,
                            timing) -> list[Command]:
    """RowClone each group row from the staging row matching its pattern bit."""
    base = group.subarray * rows_per_subarray
    seq: list[Command] = []
    for bit, row in zip(pattern.bits, group.rows):
        seq += rowclone_sequence(group.bank, base + staging[bit], base + row, timing)
    return seq


def prepare_staging(engine: CommandEngine, group: SarGroup) -> tuple[int, int]:
    rps = engine.chip.geometry.rows_per_subarray
    staging = staging_rows(group, rps)
    base = group.subarray * rps
    _write_row(engine, group.bank, base + staging[0], 0)
    _write_row(engine, group.bank, base + staging[1], 1)
    return staging


def characterize_config(engine: CommandEngine, group: SarGroup, pattern: DataPattern, temperature: float,
                        trials: int, campaign_seed: int) -> EntropyRecord:
    """Run the three-step experiment ``trials`` times for one configuration."""
    rps = engine.chip.geometry.rows_per_subarray
    t = engine.timing
    staging = prepare_staging(engine, group)
    base = group.subarray * rps
    seq = initialization_sequence(group, pattern, staging, rps, t)
    seq += apa_sequence(group.bank, base + group.pair[0], base + group.pair[1], t)
    seq += read_blocks(group.bank, [None], t)
    seq.append(pre(group.bank, t.t_ras))

    ones = np.zeros(engine.chip.geometry.columns_per_row, dtype=np.uint32)
    for i in range(trials):
        res = engine.execute(seq, temperature=temperature, trial_seed=trial_seed(campaign_seed, group, i))
        ones += res.reads[-1][2]
    return EntropyRecord(group, pattern, float(temperature), trials, ones)


def pattern_rng(campaign_seed: int, group: SarGroup, ones: int) -> np.random.Generator:
    return np.random.default_rng([campaign_seed, 7, group.bank, group.subarray, group.rows[0], group.order_k, ones])


def plan_tasks(catalog: SarCatalog, plan: CampaignConfig) -> list[Task]:
    """Expand a campaign into (group, pattern, temperature) tasks, deterministically."""
    if not catalog.groups:
        raise DiscoveryError("empty SAR catalog")
    rng = np.random.default_rng([plan.seed, 3])
    subs = catalog.subarrays
    if len(subs) > plan.subarrays_per_module:
        subs = sorted(int(s) for s in rng.choice(subs, plan.subarrays_per_module, replace=False))
    tasks = []
    for sub in subs:
        for k in plan.orders:
            groups = catalog.of(sub, k)
            if len(groups) > plan.sar_groups_per_order:
                idx = sorted(rng.choice(len(groups), plan.sar_groups_per_order, replace=False))
                groups = [groups[i] for i in idx]
            for g in groups:
                counts = plan.ones_counts if plan.ones_counts is not None else range(g.size + 1)
                for ones in counts:
                    if not 0 <= ones <= g.size:
                        continue
                    for pat in generate_patterns(g.size, ones, plan.pattern_budget, pattern_rng(plan.seed, g, ones)):
                        for temp in plan.temperatures:
                            tasks.append(Task(g, pat, temp))
    return tasks


# -- campaign execution ----------------------------------------------------------

_worker_engine: CommandEngine | None = None


def _init_worker(config: ChipConfig, seed: int) -> None:
    global _worker_engine
    _worker_engine = CommandEngine(ChipInstance(config, seed))


def _run_task(args) -> EntropyRecord:
    task, trials, seed = args
    return characterize_config(_worker_engine, task.group, task.pattern, task.temperature, trials, seed)


def run_characterization(chip: ChipInstance, plan: CampaignConfig, catalog: SarCatalog | None,
                         workers: int = 1, checkpoint_dir: str | Path | None = None,
                         tasks: Sequence[Task] | None = None) -> list[EntropyRecord]:
    """Run every task of the campaign and return records in task order.

    With ``checkpoint_dir`` each finished record is persisted immediately and
    records already present there are loaded instead of re-run, so an
    interrupted campaign resumes where it stopped. Results do not depend on
    ``workers``: each configuration re-initializes its rows and draws trial
    noise from seeds derived only from the campaign seed, group and trial.
    """
    if tasks is None:
        if catalog is None:
            raise DiscoveryError("a SAR catalog is required to plan a campaign")
        tasks = plan_tasks(catalog, plan)
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    done: dict[str, EntropyRecord] = {}
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)
        for t in tasks:
            f = ckpt / f"{t.key}.npy"
            if f.exists():
                done[t.key] = EntropyRecord(t.group, t.pattern, t.temperature, plan.trials_per_config, np.load(f))
    todo = [t for t in tasks if t.key not in done]
    log.info("characterization: %d tasks, %d resumed", len(tasks), len(done))

    def finish(rec: EntropyRecord):
        done[rec.key] = rec
        if ckpt is not None:
            atomic_save_npy(ckpt / f"{rec.key}.npy", rec.ones)

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(chip.config, chip.seed)) as pool:
            for rec in pool.map(_run_task, [(t, plan.trials_per_config, plan.seed) for t in todo], chunksize=1):
                finish(rec)
    else:
        engine = CommandEngine(chip)
        for t in todo:
            finish(characterize_config(engine, t.group, t.pattern, t.temperature, plan.trials_per_config, plan.seed))
    return [done[t.key] for t in tasks]


# -- aggregation -----------------------------------------------------------------

def location_bucket(subarray: int, n_subarrays: int) -> str:
    """Beginning / Middle / End third of the bank, split at floor(n/3) and floor(2n/3)."""
    if not 0 <= subarray < n_subarrays:
        raise IndexError(subarray)
    if subarray < n_subarrays // 3:
        return "Beginning"
    if subarray < (2 * n_subarrays) // 3:
        return "Middle"
    return "End"


def spatial_grouping(records: Iterable[EntropyRecord], subarray_map: SubarrayMap | int) -> dict[str, list[EntropyRecord]]:
    n = subarray_map if isinstance(subarray_map, int) else len(subarray_map)
    out: dict[str, list[EntropyRecord]] = {loc: [] for loc in LOCATIONS}
    for r in records:
        out[location_bucket(r.group.subarray, n)].append(r)
    return out


def best_record(records: Iterable[EntropyRecord]) -> EntropyRecord:
    """Highest average entropy; ties go to the lexicographically lowest pattern."""
    return min(records, key=lambda r: (-r.average_cache_block_entropy, str(r.pattern), r.group.rows))


# -- persistence -----------------------------------------------------------------

def save_records(records: Sequence[EntropyRecord], path: str | Path) -> None:
    """CSV summary plus a ``.counts.npy`` sidecar with per-bit logic-1 counts."""
    path = Path(path)
    rows = []
    for i, r in enumerate(records):
        be = r.block_entropies
        g = r.group
        rows.append((i, g.bank, g.subarray, g.order_k, " ".join(map(str, g.rows)), g.pair[0], g.pair[1],
                     str(r.pattern), r.pattern.ones_count, r.temperature, r.trials, float(be.mean()),
                     float(be.min()), float(be.max())))
    counts = np.stack([r.ones for r in records]) if records else np.zeros((0, 0), dtype=np.uint32)
    atomic_save_npy(sidecar_path(path), counts)
    write_table(path, RECORDS_HEADER, RECORD_COLUMNS, rows)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".counts.npy")


def load_records(path: str | Path) -> list[EntropyRecord]:
    table = read_table(path, RECORDS_HEADER)
    counts = np.load(sidecar_path(path))
    out = []
    for row in table:
        i = int(row["record"])
        rows = tuple(int(x) for x in row["rows"].split())
        g = SarGroup(int(row["bank"]), int(row["subarray"]), rows, int(row["order"]),
                     pair=(int(row["pair_a"]), int(row["pair_b"])))
        out.append(EntropyRecord(g, DataPattern.parse(row["pattern"]), float(row["temperature"]),
                                 int(row["trials"]), counts[i]))
    return out
