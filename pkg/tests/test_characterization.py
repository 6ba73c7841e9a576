import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from simra.analog import ChipInstance
from simra.characterization import (
    CampaignConfig,
    DataPattern,
    EntropyRecord,
    Task,
    average_cache_block_entropy,
    best_record,
    bit_entropies,
    block_entropies,
    characterize_config,
    generate_patterns,
    load_records,
    location_bucket,
    plan_tasks,
    run_characterization,
    save_records,
    shannon_entropy,
    spatial_grouping,
)
from simra.discovery import SarCatalog
from simra.dram import SarGroup
from simra.engine import CommandEngine
from simra.errors import DiscoveryError

from conftest import small_config

mpmath.mp.dps = 50


def entropy_oracle(p):
    p = mpmath.mpf(p)
    h = mpmath.mpf(0)
    for q in (p, 1 - p):
        if q > 0:
            h -= q * mpmath.log(q, 2)
    return float(h)


@pytest.mark.parametrize("p, h", [(0.5, 1.0), (0.0, 0.0), (1.0, 0.0), (0.25, 0.8112781244591328)])
def test_entropy_examples(p, h):
    assert shannon_entropy(p) == pytest.approx(h, abs=1e-15)


@given(st.floats(0.0, 1.0))
def test_entropy_matches_high_precision_oracle(p):
    assert abs(shannon_entropy(p) - entropy_oracle(p)) <= 1e-12


@given(st.floats(0.0, 1.0))
def test_entropy_is_symmetric_and_bounded(p):
    h = shannon_entropy(p)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(shannon_entropy(1.0 - p), abs=1e-12)


@pytest.mark.parametrize("p", [-0.1, 1.1, math.nan])
def test_entropy_rejects_invalid_probability(p):
    with pytest.raises(ValueError):
        shannon_entropy(p)


def test_vectorized_entropy_agrees_with_scalar(rng):
    p = rng.random(1000)
    p[:3] = (0.0, 1.0, 0.5)
    assert np.allclose(bit_entropies(p), [shannon_entropy(x) for x in p], atol=1e-14)


def test_average_cache_block_entropy_examples():
    assert average_cache_block_entropy([25, 75]) == 50
    assert average_cache_block_entropy(np.zeros(128)) == 0
    assert average_cache_block_entropy(np.arange(128)) == 63.5


def test_block_entropy_of_fair_bits_is_512():
    assert np.array_equal(block_entropies(np.full(1024, 0.5)), [512.0, 512.0])


def test_patterns_for_two_rows():
    out = generate_patterns(2, 1, 100, np.random.default_rng(0))
    assert [str(p) for p in out] == ["01", "10"]


def test_patterns_exhaustive_when_under_budget():
    out = generate_patterns(4, 2, 100, np.random.default_rng(0))
    assert len(out) == 6 == len(set(out))


def test_patterns_capped_by_budget():
    out = generate_patterns(32, 16, 100, np.random.default_rng(0))
    assert len(out) == 100 == len(set(out))
    assert all(p.ones_count == 16 and len(p) == 32 for p in out)


@given(st.integers(1, 12), st.data())
def test_patterns_have_requested_ones(n, data):
    ones = data.draw(st.integers(0, n))
    out = generate_patterns(n, ones, 20, np.random.default_rng(n))
    assert len(out) == min(20, math.comb(n, ones))
    assert all(p.ones_count == ones for p in out)


def test_pattern_parse_round_trip():
    assert str(DataPattern.parse("0110")) == "0110"
    with pytest.raises(ValueError):
        DataPattern((0, 2))


@pytest.mark.parametrize("n, sizes", [(64, (21, 21, 22)), (3, (1, 1, 1)), (128, (42, 43, 43))])
def test_location_buckets(n, sizes):
    counts = [sum(location_bucket(s, n) == loc for s in range(n)) for loc in ("Beginning", "Middle", "End")]
    assert tuple(counts) == sizes
    if n == 64:
        assert [s for s in range(n) if location_bucket(s, n) == "Beginning"] == list(range(21))


def _record(sub, value, pattern="01", temp=50.0):
    g = SarGroup(0, sub, (0, 1), 1, pair=(0, 1))
    ones = np.full(1024, value, dtype=np.uint32)
    return EntropyRecord(g, DataPattern.parse(pattern), temp, 10, ones)


def test_spatial_grouping_buckets_records():
    recs = [_record(s, 5) for s in range(3)]
    out = spatial_grouping(recs, 3)
    assert [len(out[k]) for k in ("Beginning", "Middle", "End")] == [1, 1, 1]


def test_best_record_breaks_ties_by_lowest_pattern():
    a, b = _record(0, 5, "10"), _record(0, 5, "01")
    assert str(best_record([a, b]).pattern) == "01"
    c = _record(0, 3, "11")  # p = 0.3 carries less entropy than p = 0.5
    assert best_record([a, c]) is a


def _engine(seed=5):
    return CommandEngine(ChipInstance(small_config(blocks=4), seed))


def test_all_zero_pattern_has_no_entropy():
    e = _engine()
    g = e.chip.sar_group(0, 0, 3)
    rec = characterize_config(e, g, DataPattern((0, 0, 0, 0)), 50.0, 100, 0)
    assert rec.average_cache_block_entropy < 5.12


def test_balanced_two_row_pattern_beats_unbalanced():
    e = _engine()
    g = e.chip.sar_group(0, 0, 1)
    h = {str(p): characterize_config(e, g, DataPattern.parse(p), 50.0, 300, 1).average_cache_block_entropy
         for p in ("00", "01", "10", "11")}
    assert min(h["01"], h["10"]) > max(h["00"], h["11"])


def _catalog(chip):
    groups = {}
    for sub in range(2):
        base = sub * 64
        groups[sub] = {1: [chip.sar_group(0, base, base + 1)], 2: [chip.sar_group(0, base + 4, base + 7)]}
    return SarCatalog(0, groups)


def test_plan_tasks_counts():
    chip = ChipInstance(small_config(), 0)
    plan = CampaignConfig(trials_per_config=5, temperatures=(50, 90), orders=(1, 2), subarrays_per_module=2)
    tasks = plan_tasks(_catalog(chip), plan)
    # per subarray: order 1 has 4 patterns, order 2 has 16; two temperatures each
    assert len(tasks) == 2 * (4 + 16) * 2
    with pytest.raises(DiscoveryError):
        plan_tasks(SarCatalog(0, {}), plan)


def test_campaign_independent_of_workers_and_resumable(tmp_path):
    chip = ChipInstance(small_config(), 0)
    plan = CampaignConfig(trials_per_config=20, temperatures=(50,), orders=(1,), subarrays_per_module=2, seed=9)
    cat = _catalog(chip)
    serial = run_characterization(chip, plan, cat, workers=1)
    parallel = run_characterization(ChipInstance(small_config(), 0), plan, cat, workers=2)
    assert [r.key for r in serial] == [r.key for r in parallel]
    assert all(np.array_equal(a.ones, b.ones) for a, b in zip(serial, parallel))

    tasks = plan_tasks(cat, plan)
    run_characterization(chip, plan, cat, checkpoint_dir=tmp_path, tasks=tasks[:3])
    assert len(list(tmp_path.glob("*.npy"))) == 3
    resumed = run_characterization(ChipInstance(small_config(), 0), plan, cat, checkpoint_dir=tmp_path)
    assert all(np.array_equal(a.ones, b.ones) for a, b in zip(serial, resumed))


def test_missing_catalog_is_an_error():
    with pytest.raises(DiscoveryError):
        run_characterization(ChipInstance(small_config(), 0), CampaignConfig(), None)


def test_records_round_trip(tmp_path):
    recs = [_record(0, 3), _record(1, 7, "10", 90.0)]
    path = tmp_path / "records.csv"
    save_records(recs, path)
    assert path.read_text().startswith("# simra-entropy-records v1\n")
    back = load_records(path)
    assert [r.key for r in back] == [r.key for r in recs]
    assert all(np.array_equal(a.ones, b.ones) for a, b in zip(back, recs))


def test_campaign_config_validation():
    with pytest.raises(ValueError):
        CampaignConfig(trials_per_config=0)
    with pytest.raises(ValueError):
        CampaignConfig(temperatures=(200,))
