"""SiMRA-based TRNG: planning, generation, conditioning and performance models.

A round runs on four banks in lockstep: RowClone the chosen pattern into the
SAR group's rows, APA, then read ranked cache blocks. Blocks are taken
round-robin across banks, best first, and each time their estimated entropy
reaches 256 bits the collected raw bits (bank-major order) are hashed into
one 256-bit output word. A round therefore yields ``n_block`` words for a
latency of ``t_base + 2**order_k * t_rowclone``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analog import ChipInstance
from .characterization import (
    DataPattern,
    EntropyRecord,
    best_record,
    initialization_sequence,
    prepare_staging,
)
from .dram import CACHE_BLOCK_BITS, SarGroup
from .engine import CommandEngine, LatencyCosts, LatencyLedger, apa_sequence, pre, read_blocks
from .errors import InsufficientEntropyError, PlanMismatchError
from .sha256 import sha256_condition

WORD_BITS = 256
TRNG_BANKS = (0, 1, 2, 3)
QUAC_ORDER = 2  # four-row activation baseline


@dataclass(frozen=True)
class PerfModel:
    t_base: float = 74.9
    t_rowclone: float = 45.0

    @classmethod
    def from_costs(cls, costs: LatencyCosts) -> "PerfModel":
        return cls(costs.apa + costs.read + costs.hash, costs.rowclone)

    def latency(self, order_k: int) -> float:
        """ns to produce the first word with ``2**order_k`` activated rows."""
        if order_k < 1:
            raise ValueError("order_k must be at least 1")
        return self.t_base + self.t_rowclone * 2 ** order_k

    def throughput(self, n_block: float, order_k: int) -> float:
        """bits per second."""
        return WORD_BITS * n_block / (self.latency(order_k) * 1e-9)


def latency(order_k: int, model: PerfModel | None = None) -> float:
    if not 1 <= order_k <= 5:
        raise ValueError("order_k must be in 1..5")
    return (model or PerfModel()).latency(order_k)


def throughput(plan: "TrngPlan", model: PerfModel | None = None) -> float:
    return (model or PerfModel()).throughput(plan.n_block, plan.order_k)


def normalize_to_quac(throughputs):
    """Divide each throughput by the four-row (order 2) value.

    Accepts a mapping ``order -> throughput`` or a sequence for orders 1..N.
    """
    if isinstance(throughputs, Mapping):
        base = throughputs[QUAC_ORDER]
        return {k: v / base for k, v in throughputs.items()}
    values = list(throughputs)
    base = values[QUAC_ORDER - 1]
    return [v / base for v in values]


@dataclass
class BankPlan:
    group: SarGroup
    pattern: DataPattern
    block_entropy: np.ndarray

    @property
    def ranking(self) -> tuple[int, ...]:
        """Blocks with non-zero entropy, best first, ties by block index."""
        be = self.block_entropy
        order = sorted((int(i) for i in np.flatnonzero(be > 0)), key=lambda i: (-be[i], i))
        return tuple(order)


@dataclass
class TrngPlan:
    order_k: int
    temperature: float
    banks: dict[int, BankPlan]
    schedule: list[list[tuple[int, int]]] = field(default_factory=list)
    blocks_needed: int = 0

    @property
    def n_block(self) -> int:
        return len(self.schedule)

    def blocks_for(self, bank: int) -> list[int]:
        return sorted({blk for word in self.schedule for b, blk in word if b == bank})


def blocks_needed(block_entropy: Sequence[float], target: float = WORD_BITS) -> int:
    """Length of the shortest best-first prefix whose entropy sums to ``target``."""
    acc = 0.0
    for i, h in enumerate(sorted(block_entropy, reverse=True), 1):
        acc += h
        if acc >= target:
            return i
    raise InsufficientEntropyError(f"total entropy {acc:.2f} is below {target} bits")


def word_schedule(banks: Mapping[int, BankPlan]) -> list[list[tuple[int, int]]]:
    """Group blocks into words, round-robin over banks, best blocks first."""
    rankings = {b: banks[b].ranking for b in sorted(banks)}
    depth = max((len(r) for r in rankings.values()), default=0)
    words, current, acc = [], [], 0.0
    for rank in range(depth):
        for b, ranking in rankings.items():
            if rank < len(ranking):
                blk = ranking[rank]
                current.append((b, blk))
                acc += float(banks[b].block_entropy[blk])
                if acc >= WORD_BITS:
                    words.append(sorted(current, key=lambda bb: (bb[0], rankings[bb[0]].index(bb[1]))))
                    current, acc = [], 0.0
    return words


def build_plan(order_k: int, banks: Mapping[int, BankPlan], temperature: float = 50.0) -> TrngPlan:
    if not banks:
        raise PlanMismatchError("no banks in plan")
    primary = banks[min(banks)]
    needed = blocks_needed(primary.block_entropy)
    schedule = word_schedule(banks)
    return TrngPlan(order_k, float(temperature), dict(banks), schedule, needed)


def plan(records: Iterable[EntropyRecord], order_k: int, banks: Sequence[int] = TRNG_BANKS,
         temperature: float | None = None) -> TrngPlan:
    """Pick the highest-entropy group (and its best pattern) for each bank.

    Banks without their own records reuse the overall best group at the same
    rows and its entropy estimate.
    """
    recs = [r for r in records if r.order_k == order_k and (temperature is None or r.temperature == temperature)]
    if not recs:
        raise PlanMismatchError(f"no characterization records for order {order_k}")
    overall = best_record(recs)
    chosen = {}
    for bank in banks:
        own = [r for r in recs if r.group.bank == bank]
        rec = best_record(own) if own else overall
        group = rec.group if rec.group.bank == bank else replace(rec.group, bank=bank)
        chosen[bank] = BankPlan(group, rec.pattern, rec.block_entropies)
    best_total = max(float(bp.block_entropy.sum()) for bp in chosen.values())
    if best_total < WORD_BITS:
        raise InsufficientEntropyError(f"best group holds only {best_total:.2f} bits of entropy")
    return build_plan(order_k, chosen, overall.temperature)


@dataclass
class TrngOutput:
    words: list[bytes]
    raw_bits: int
    entropy_bits: float
    ledger: LatencyLedger
    rounds: int = 0
    first_word_latency: float = 0.0

    def to_bytes(self) -> bytes:
        return b"".join(self.words)

    def bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.to_bytes(), dtype=np.uint8))


def _check_plan(chip: ChipInstance, p: TrngPlan) -> None:
    g = chip.geometry
    for bank, bp in p.banks.items():
        grp = bp.group
        if not 0 <= bank < g.banks_per_chip or grp.bank != bank:
            raise PlanMismatchError(f"bank {bank} not available on this chip")
        if not 0 <= grp.subarray < g.subarrays_per_bank or max(grp.rows) >= g.rows_per_subarray:
            raise PlanMismatchError(f"group {grp.key} does not fit the chip geometry")
        if len(bp.block_entropy) != g.cache_blocks_per_row:
            raise PlanMismatchError("entropy map width differs from the chip's row width")
        if grp.order_k != p.order_k:
            raise PlanMismatchError("group order differs from plan order")
        try:
            truth = chip.sar_group(bank, grp.subarray * g.rows_per_subarray + grp.pair[0],
                                   grp.subarray * g.rows_per_subarray + grp.pair[1])
        except Exception as exc:
            raise PlanMismatchError(f"pair {grp.pair} is not an APA pair on this chip") from exc
        if truth.rows != grp.rows:
            raise PlanMismatchError(f"pair {grp.pair} opens {truth.rows}, plan expects {grp.rows}")


def round_seed(seed: int, rnd: int, bank: int) -> int:
    return int(np.random.SeedSequence([seed, 11, rnd, bank]).generate_state(1, np.uint64)[0])


def generate(chip: ChipInstance, plan: TrngPlan, n_words: int, seed: int = 0,
             costs: LatencyCosts | None = None) -> TrngOutput:
    """Produce ``n_words`` conditioned 256-bit words.

    Staging rows are written once before the first round; that setup is not
    part of the reported latency.
    """
    if n_words < 0:
        raise ValueError("n_words must be non-negative")
    ledger = LatencyLedger()
    if n_words == 0:
        return TrngOutput([], 0, 0.0, ledger)
    _check_plan(chip, plan)
    if plan.n_block == 0:
        raise InsufficientEntropyError("plan yields no words per round")

    engine = CommandEngine(chip, costs)
    rps = chip.geometry.rows_per_subarray
    t = engine.timing
    sequences = {}
    for bank, bp in plan.banks.items():
        staging = prepare_staging(engine, bp.group)
        base = bp.group.subarray * rps
        seq = initialization_sequence(bp.group, bp.pattern, staging, rps, t)
        seq += apa_sequence(bank, base + bp.group.pair[0], base + bp.group.pair[1], t)
        blocks = plan.blocks_for(bank)
        seq += read_blocks(bank, blocks, t)
        seq.append(pre(bank, t.t_ras))
        sequences[bank] = (seq, blocks)

    words: list[bytes] = []
    raw_bits = 0
    entropy = 0.0
    first = 0.0
    rnd = 0
    while len(words) < n_words:
        readout: dict[tuple[int, int], np.ndarray] = {}
        for bank, (seq, blocks) in sequences.items():
            res = engine.execute(seq, temperature=plan.temperature, trial_seed=round_seed(seed, rnd, bank))
            ledger.merge(res.ledger)
            for (_, blk, data) in res.reads:
                readout[(bank, blk)] = data
            ledger.charge(bank, "hash", engine.costs.hash)
        for word in plan.schedule:
            if len(words) == n_words:
                break
            raw = np.concatenate([readout[bb] for bb in word])
            words.append(sha256_condition(raw))
            raw_bits += raw.size
            entropy += sum(float(plan.banks[b].block_entropy[blk]) for b, blk in word)
        if rnd == 0:
            first = ledger.total
        rnd += 1
    return TrngOutput(words, raw_bits, entropy, ledger, rnd, first)


def von_neumann(raw) -> np.ndarray:
    """Debias by non-overlapping pairs: 01 -> 0, 10 -> 1, 00/11 dropped."""
    bits = np.asarray(raw, dtype=np.uint8).ravel()
    pairs = bits[: bits.size // 2 * 2].reshape(-1, 2)
    keep = pairs[:, 0] != pairs[:, 1]
    return pairs[keep, 0].astype(np.uint8)


def back_solve_n_block(throughput_gbps: float, order_k: int, model: PerfModel | None = None) -> float:
    """Words per round implied by a measured throughput."""
    return throughput_gbps * (model or PerfModel()).latency(order_k) / WORD_BITS


def words_for_bits(n_bits: int) -> int:
    return math.ceil(n_bits / WORD_BITS)
