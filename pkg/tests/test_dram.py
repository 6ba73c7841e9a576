import itertools

import pytest
from hypothesis import given, strategies as st

from simra.dram import (
    DecoderModel,
    DramGeometry,
    RowAddress,
    SarGroup,
    cache_block_of,
    decode_sar_group,
)
from simra.errors import CrossSubarrayError, DecodeError

DEC = DecoderModel.reference(512)


def addr(row, sub=0, bank=0):
    return RowAddress(bank, sub, row)


def brute_force_group(a, b, decoder=DEC):
    """Every row whose bits agree with a or b on each decoder level and with a elsewhere."""
    rows = []
    for r in range(1 << decoder.row_bits):
        ok = all(decoder.field_value(r, lvl) in (decoder.field_value(a, lvl), decoder.field_value(b, lvl))
                 for lvl in range(decoder.levels))
        if ok and (r & decoder.select_mask) == (a & decoder.select_mask):
            rows.append(r)
    return tuple(rows)


def test_same_address_is_single_row_activation():
    g = decode_sar_group(addr(37), addr(37), DEC)
    assert g.rows == (37,) and g.order_k == 0 and g.size == 1


def test_two_differing_levels_open_four_rows():
    g = decode_sar_group(addr(0b00000), addr(0b00011), DEC)
    assert g.rows == (0, 1, 2, 3)
    assert g.order_k == 2


def test_all_levels_open_thirty_two_rows():
    g = decode_sar_group(addr(0b00000), addr(0b11111), DEC)
    assert g.rows == tuple(range(32)) and g.order_k == 5


def test_reference_decoder_matches_brute_force_enumeration():
    for a, b in itertools.product(range(32), repeat=2):
        g = decode_sar_group(addr(a), addr(b), DEC)
        assert g.rows == brute_force_group(a, b)


@given(st.integers(0, 511), st.integers(0, 511))
def test_group_sizes_are_powers_of_two(a, b):
    try:
        g = decode_sar_group(addr(a), addr(b), DEC)
    except DecodeError:
        assert (a ^ b) & DEC.select_mask
        return
    assert g.size == 2 ** g.order_k
    assert g.size in (1, 2, 4, 8, 16, 32)
    assert a in g.rows and b in g.rows
    assert g.order_k == bin((a ^ b) & 0b11111).count("1")


@given(st.integers(0, 511), st.integers(0, 511))
def test_decode_is_symmetric_in_rows(a, b):
    try:
        g1 = decode_sar_group(addr(a), addr(b), DEC)
    except DecodeError:
        return
    assert decode_sar_group(addr(b), addr(a), DEC).rows == g1.rows


def test_pair_differing_in_select_bits_is_rejected():
    with pytest.raises(DecodeError):
        decode_sar_group(addr(0), addr(32), DEC)


def test_cross_subarray_and_cross_bank_pairs_are_rejected():
    with pytest.raises(CrossSubarrayError):
        decode_sar_group(addr(0, sub=0), addr(1, sub=1), DEC)
    with pytest.raises(CrossSubarrayError):
        decode_sar_group(addr(0, bank=0), addr(1, bank=1), DEC)


def test_reference_decoder_needs_enough_address_bits():
    with pytest.raises(ValueError):
        DecoderModel.reference(16, levels=5)
    assert DecoderModel.reference(16, levels=4).max_activation == 16


def test_decoder_rejects_overlapping_levels():
    with pytest.raises(ValueError):
        DecoderModel(((0,), (0,)), 9)


@pytest.mark.parametrize("column, block", [(0, 0), (511, 0), (512, 1), (65535, 127)])
def test_cache_block_of(column, block):
    assert cache_block_of(column) == block


@pytest.mark.parametrize("column", [-1, 65536])
def test_cache_block_of_rejects_out_of_range(column):
    with pytest.raises(IndexError):
        cache_block_of(column)


@given(st.integers(0, 3), st.integers(0, 64 * 512 - 1))
def test_row_address_round_trip(bank, row):
    g = DramGeometry()
    a = g.row_address(bank, row)
    assert 0 <= a.row_in_subarray < g.rows_per_subarray
    assert g.bank_row(a) == row


def test_geometry_validation():
    with pytest.raises(ValueError):
        DramGeometry(rows_per_subarray=500)
    with pytest.raises(ValueError):
        DramGeometry(banks_per_chip=0)
    assert DramGeometry().columns_per_row == 65536


def test_sar_group_requires_power_of_two_rows():
    with pytest.raises(ValueError):
        SarGroup(0, 0, (1, 2, 3), 1)
