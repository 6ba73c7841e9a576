import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from simra.analog import (
    AnalogParams,
    ChipInstance,
    bit_swap_remap,
    charge_share,
    logic_one_probability,
    sense,
    simulate_apa_trial,
    single_row_margin,
)
from simra.dram import SarGroup
from simra.errors import UninitializedRowError

from conftest import small_config

P = AnalogParams()


def test_all_cells_high_pull_bitline_up():
    assert charge_share([1.2] * 4, [1.0] * 4, 8.0, 1.2) > 0


def test_balanced_nominal_cells_cancel_exactly():
    assert charge_share([1.2, 1.2, 0, 0], [1.0] * 4, 8.0, 1.2) == pytest.approx(0.0, abs=1e-15)


def test_single_low_cell_closed_form():
    dv = charge_share([0.0], [1.0], 8.0, 1.2)
    assert dv == pytest.approx(-1.2 / 2 * 1.0 / 9.0, abs=1e-15)
    assert -dv == pytest.approx(single_row_margin(P))


def test_zero_capacitance_is_an_error():
    with pytest.raises(ZeroDivisionError):
        charge_share([1.2], [0.0], 0.0, 1.2)


@given(st.lists(st.sampled_from([0.0, 1.2]), min_size=1, max_size=32),
       st.floats(0.1, 20.0))
def test_charge_share_stays_within_rails(values, c_bl):
    caps = [1.0] * len(values)
    dv = charge_share(values, caps, c_bl, 1.2)
    assert -0.6 - 1e-12 <= dv <= 0.6 + 1e-12
    flipped = charge_share([1.2 - v for v in values], caps, c_bl, 1.2)
    assert dv == pytest.approx(-flipped, abs=1e-12)


def test_large_deviation_senses_deterministically():
    rng = np.random.default_rng(0)
    bits = sense(np.full(10_000, P.vdd / 4), np.zeros(10_000), 50.0, rng, P)
    assert bits.all()


def test_zero_deviation_is_a_fair_coin():
    rng = np.random.default_rng(1)
    bits = sense(np.zeros(100_000), np.zeros(100_000), 50.0, rng, P)
    assert abs(bits.mean() - 0.5) < 0.01


def test_offset_shifts_probability_to_gaussian_cdf():
    params = AnalogParams(temp_drift_alpha=1e-4)
    offset, temp = 20.0, 51.0  # drift = 20 * 1e-4 * 1 = 2 mV
    rng = np.random.default_rng(2)
    bits = sense(np.zeros(100_000), np.full(100_000, offset), temp, rng, params)
    expected = norm.cdf(2e-3 / params.thermal_noise_sigma)
    assert abs(bits.mean() - expected) < 0.01
    assert logic_one_probability(0.0, offset, temp, params) == pytest.approx(expected)


def test_scalar_sense_returns_int():
    assert sense(0.3, 0.0, 50.0, np.random.default_rng(0), P) == 1
    assert sense(-0.3, 0.0, 50.0, np.random.default_rng(0), P) == 0


def _fill(chip, group, pattern):
    n = chip.geometry.columns_per_row
    for bit, r in zip(pattern, group.rows):
        chip.store_row(group.bank, chip.bank_row(group, r), np.full(n, bit, dtype=np.uint8))


def test_all_ones_group_reads_all_ones(chip):
    g = chip.sar_group(0, 0, 7)
    _fill(chip, g, [1] * g.size)
    assert simulate_apa_trial(chip, g, 50.0, 5).all()


def test_apa_restores_readout_into_every_row(chip):
    g = chip.sar_group(0, 0, 3)
    _fill(chip, g, [0, 1, 0, 1])
    out = simulate_apa_trial(chip, g, 50.0, 9)
    for r in g.rows:
        assert np.array_equal(chip.load_row(0, chip.bank_row(g, r)), out)


def test_same_seed_same_readout():
    cfg = small_config(blocks=8)
    readouts = []
    for _ in range(2):
        chip = ChipInstance(cfg, seed=4)
        g = chip.sar_group(0, 0, 1)
        _fill(chip, g, [0, 1])
        readouts.append(simulate_apa_trial(chip, g, 50.0, 777))
    assert np.array_equal(*readouts)


def test_uninitialized_rows_raise(chip):
    g = chip.sar_group(0, 0, 1)
    with pytest.raises(UninitializedRowError):
        simulate_apa_trial(chip, g, 50.0, 0)


def test_two_row_balanced_pattern_is_mostly_metastable():
    chip = ChipInstance(small_config(blocks=16), seed=8)
    g = chip.sar_group(0, 0, 1)
    trials = 1000
    ones = np.zeros(chip.geometry.columns_per_row)
    for t in range(trials):
        _fill(chip, g, [0, 1])
        ones += simulate_apa_trial(chip, g, 50.0, t)
    freq = ones / trials
    assert np.mean((freq > 0.05) & (freq < 0.95)) >= 0.90


def test_process_variation_is_frozen_per_seed():
    a, b = ChipInstance(small_config(), 3), ChipInstance(small_config(), 3)
    assert np.array_equal(a.cell_caps(0, 1, 5), b.cell_caps(0, 1, 5))
    assert np.array_equal(a.bitline_offsets(1, 2), b.bitline_offsets(1, 2))
    c = ChipInstance(small_config(), 4)
    assert not np.array_equal(a.bitline_offsets(1, 2), c.bitline_offsets(1, 2))


def test_bit_swap_remap_is_an_involution():
    m = bit_swap_remap(64, 0, 3)
    assert sorted(m) == list(range(64))
    assert all(m[m[r]] == r for r in range(64))
    assert m[1] == 8 and m[8] == 1 and m[9] == 9


def test_remapped_chip_groups_follow_physical_decoder():
    chip = ChipInstance(small_config(remap=bit_swap_remap(64, 0, 3)), 0)
    g = chip.sar_group(0, 0, 1)  # logical 0,1 are physical 0,8: differ on level 3
    assert g.rows == (0, 1) and g.order_k == 1
    g = chip.sar_group(0, 0, 8)  # logical 8 is physical 1
    assert g.rows == (0, 8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(-3, 3), st.floats(0, 100))
def test_probability_is_monotone_in_deviation(dv, offset, temp):
    lo = logic_one_probability(dv, offset, temp, P)
    hi = logic_one_probability(dv + 1e-3, offset, temp, P)
    assert 0.0 <= lo <= hi <= 1.0


def test_parameter_validation():
    with pytest.raises(ValueError):
        AnalogParams(vdd=0)
    with pytest.raises(ValueError):
        AnalogParams(thermal_noise_sigma=-1)
    assert math.isclose(single_row_margin(P), 0.6 / 9)
