import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simra.analog import ChipInstance
from simra.characterization import DataPattern, EntropyRecord, characterize_config
from simra.dram import SarGroup
from simra.engine import CommandEngine, LatencyCosts
from simra.errors import InsufficientEntropyError, PlanMismatchError
from simra.trng import (
    BankPlan,
    PerfModel,
    back_solve_n_block,
    blocks_needed,
    build_plan,
    generate,
    latency,
    normalize_to_quac,
    plan,
    throughput,
    von_neumann,
    word_schedule,
)

from conftest import small_config

REFERENCE_LATENCY = {1: 164.9, 2: 254.9, 3: 434.9, 4: 794.9, 5: 1514.9}
REFERENCE_GBPS = [9.90, 13.81, 16.05, 13.94, 10.81]


@pytest.mark.parametrize("k", range(1, 6))
def test_latency_table(k):
    assert latency(k) == pytest.approx(REFERENCE_LATENCY[k], abs=0.05)


def test_latency_rejects_bad_order():
    with pytest.raises(ValueError):
        latency(0)
    with pytest.raises(ValueError):
        latency(6)


def test_latency_split_matches_ledger_costs():
    assert PerfModel.from_costs(LatencyCosts()) == PerfModel()


def test_one_block_per_256_ns_is_one_gbps():
    assert PerfModel(t_base=166.0, t_rowclone=45.0).throughput(1, 1) == pytest.approx(1e9)


def test_quac_normalization_of_reference_averages():
    ratios = normalize_to_quac(REFERENCE_GBPS)
    assert ratios == pytest.approx([0.72, 1.00, 1.16, 1.01, 0.78], abs=0.01)
    as_map = normalize_to_quac(dict(enumerate(REFERENCE_GBPS, 1)))
    assert as_map[2] == 1.0


def test_back_solved_block_count():
    assert back_solve_n_block(13.81, 2) == pytest.approx(13.75, abs=0.01)


@given(st.integers(1, 200), st.integers(1, 5))
def test_throughput_monotone(n, k):
    m = PerfModel()
    assert m.throughput(n + 1, k) > m.throughput(n, k)
    if k < 5:
        assert m.throughput(n, k) > m.throughput(n, k + 1)


def _bank_plan(entropies, bank=0, k=1):
    g = SarGroup(bank, 0, tuple(range(2 ** k)), k, pair=(0, 2 ** k - 1))
    return BankPlan(g, DataPattern(tuple([0, 1] * (2 ** (k - 1)))), np.asarray(entropies, dtype=float))


def test_blocks_needed_examples():
    assert blocks_needed(np.full(128, 2.0)) == 128
    assert blocks_needed([300.0, 10.0] + [0.0] * 126) == 1
    with pytest.raises(InsufficientEntropyError):
        blocks_needed(np.full(128, 1.0))


def test_schedule_is_round_robin_and_entropy_gated():
    banks = {b: _bank_plan([200.0, 100.0, 60.0, 0.0], bank=b) for b in range(2)}
    words = word_schedule(banks)
    # 200 (b0) + 200 (b1) -> word, 100 + 100 -> 200 + 60 (b0) -> word, 60 left over
    assert words == [[(0, 0), (1, 0)], [(0, 1), (0, 2), (1, 1)]]
    for w in words:
        assert sum(banks[b].block_entropy[blk] for b, blk in w) >= 256


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 512.0), min_size=4, max_size=4))
def test_every_scheduled_word_has_enough_entropy(ent):
    banks = {b: _bank_plan(ent, bank=b) for b in range(4)}
    words = word_schedule(banks)
    used = [bb for w in words for bb in w]
    assert len(used) == len(set(used))
    for w in words:
        assert sum(banks[b].block_entropy[blk] for b, blk in w) >= 256
        assert [b for b, _ in w] == sorted(b for b, _ in w)


def test_higher_order_can_hold_more_entropy_yet_be_slower():
    k4 = build_plan(4, {b: _bank_plan([300.0] * 10, bank=b, k=4) for b in range(4)})
    k5 = build_plan(5, {b: _bank_plan([400.0] * 10, bank=b, k=5) for b in range(4)})
    assert k5.banks[0].block_entropy.sum() > k4.banks[0].block_entropy.sum()
    assert throughput(k5) < throughput(k4)


def _records(chip, k, trials=100, temps=(50.0,)):
    e = CommandEngine(chip)
    out = []
    for bank in range(4):
        g = chip.sar_group(bank, 0, 2 ** k - 1)
        for bits in ([0, 1] * (2 ** (k - 1)), [1, 0] * (2 ** (k - 1))):
            for t in temps:
                out.append(characterize_config(e, g, DataPattern(tuple(bits)), t, trials, 0))
    return out


@pytest.fixture(scope="module")
def trng_chip():
    return ChipInstance(small_config(blocks=4), seed=21)


def test_plan_picks_best_group_per_bank(trng_chip):
    recs = _records(trng_chip, 1)
    p = plan(recs, 1)
    assert sorted(p.banks) == [0, 1, 2, 3]
    for bank, bp in p.banks.items():
        own = [r for r in recs if r.group.bank == bank]
        assert bp.block_entropy.mean() == max(r.average_cache_block_entropy for r in own)
    assert p.blocks_needed >= 1 and p.n_block >= 1


def test_plan_without_matching_records(trng_chip):
    with pytest.raises(PlanMismatchError):
        plan(_records(trng_chip, 1, trials=10), 2)


def test_plan_rejects_entropy_poor_groups(trng_chip):
    e = CommandEngine(trng_chip)
    g = trng_chip.sar_group(0, 0, 1)
    rec = characterize_config(e, g, DataPattern((0, 0)), 50.0, 50, 0)
    with pytest.raises(InsufficientEntropyError):
        plan([rec], 1)


def test_first_word_latency_order_one(trng_chip):
    out = generate(trng_chip, plan(_records(trng_chip, 1), 1), 1, seed=3)
    assert out.first_word_latency == pytest.approx(164.9)
    assert out.ledger.total == pytest.approx(164.9)
    assert len(out.words) == 1 and len(out.words[0]) == 32
    assert out.entropy_bits >= 256


@pytest.mark.parametrize("k", [2, 3])
def test_first_word_latency_higher_orders(trng_chip, k):
    out = generate(trng_chip, plan(_records(trng_chip, k, trials=50), k), 1, seed=3)
    assert out.first_word_latency == pytest.approx(REFERENCE_LATENCY[k])


def test_zero_words(trng_chip):
    out = generate(trng_chip, plan(_records(trng_chip, 1, trials=20), 1), 0)
    assert out.words == [] and out.ledger.total == 0.0 and out.raw_bits == 0


def test_generation_is_deterministic_and_seed_dependent(trng_chip):
    p = plan(_records(trng_chip, 1), 1)
    a = generate(ChipInstance(small_config(blocks=4), 21), p, 40, seed=8)
    b = generate(ChipInstance(small_config(blocks=4), 21), p, 40, seed=8)
    c = generate(ChipInstance(small_config(blocks=4), 21), p, 40, seed=9)
    assert a.words == b.words
    assert a.words != c.words
    assert len(a.to_bytes()) * 8 == 256 * 40
    assert a.entropy_bits >= 256 * 40
    assert a.rounds == -(-40 // p.n_block)


def test_plan_for_another_chip_is_rejected(trng_chip):
    p = plan(_records(trng_chip, 1, trials=20), 1)
    other = ChipInstance(small_config(blocks=8), 21)
    with pytest.raises(PlanMismatchError):
        generate(other, p, 1)
    fewer_banks = ChipInstance(small_config(blocks=4, banks=2), 21)
    with pytest.raises(PlanMismatchError):
        generate(fewer_banks, p, 1)


def test_von_neumann_examples():
    assert list(von_neumann([0, 1, 1, 0])) == [0, 1]
    assert von_neumann(np.zeros(100, np.uint8)).size == 0
    assert list(von_neumann([1, 1, 1])) == []


def test_von_neumann_removes_bias():
    rng = np.random.default_rng(5)
    raw = (rng.random(2_200_000) < 0.9).astype(np.uint8)
    out = von_neumann(raw)
    assert out.size >= 100_000
    assert abs(out.mean() - 0.5) < 0.02
    # output rate matches the exact pair probability 2 p (1 - p)
    assert out.size / (raw.size // 2) == pytest.approx(2 * 0.9 * 0.1, rel=0.02)
