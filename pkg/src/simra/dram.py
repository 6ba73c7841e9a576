"""DRAM geometry, timing, addressing and the hierarchical row-decoder model.

A row address inside a subarray is split into bit fields, one per decoder
level. An ACT-PRE-ACT (APA) pair whose two addresses differ on ``k`` levels
leaves both intermediate signals asserted on each of those levels, so the
subarray opens ``2**k`` rows at once. Bits not owned by any level form a
``select`` field which both addresses must share.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import CrossSubarrayError, DecodeError

CACHE_BLOCK_BITS = 512


@dataclass(frozen=True)
class DramGeometry:
    banks_per_chip: int = 4
    subarrays_per_bank: int = 64
    rows_per_subarray: int = 512
    cache_blocks_per_row: int = 128
    cache_block_bits: int = CACHE_BLOCK_BITS

    def __post_init__(self):
        for name in ("banks_per_chip", "subarrays_per_bank", "rows_per_subarray", "cache_blocks_per_row"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.cache_block_bits != CACHE_BLOCK_BITS:
            raise ValueError("cache blocks are fixed at 512 bits")
        rps = self.rows_per_subarray
        if rps & (rps - 1):
            raise ValueError("rows_per_subarray must be a power of two")

    @property
    def columns_per_row(self) -> int:
        return self.cache_block_bits * self.cache_blocks_per_row

    @property
    def rows_per_bank(self) -> int:
        return self.subarrays_per_bank * self.rows_per_subarray

    @property
    def row_bits(self) -> int:
        return self.rows_per_subarray.bit_length() - 1

    def row_address(self, bank: int, row: int) -> "RowAddress":
        """Split a bank-level row index into (bank, subarray, row_in_subarray)."""
        if not 0 <= bank < self.banks_per_chip:
            raise IndexError(f"bank {bank} out of range")
        if not 0 <= row < self.rows_per_bank:
            raise IndexError(f"row {row} out of range")
        sub, local = divmod(row, self.rows_per_subarray)
        return RowAddress(bank, sub, local)

    def bank_row(self, addr: "RowAddress") -> int:
        return addr.subarray * self.rows_per_subarray + addr.row_in_subarray


@dataclass(frozen=True)
class TimingParams:
    """Nominal DDR4-style timings in nanoseconds."""

    t_ras: float = 32.0
    t_rp: float = 13.5
    t_rcd: float = 13.5

    def __post_init__(self):
        if min(self.t_ras, self.t_rp, self.t_rcd) <= 0:
            raise ValueError("nominal timings must be strictly positive")

    def ras_violated(self, delay: float) -> bool:
        return delay < self.t_ras

    def rp_violated(self, delay: float) -> bool:
        return delay < self.t_rp


@dataclass(frozen=True)
class DecoderModel:
    """Assignment of row-address bits to hierarchical decoder levels."""

    fields: tuple[tuple[int, ...], ...]
    row_bits: int

    def __post_init__(self):
        seen: set[int] = set()
        for bits in self.fields:
            if not bits:
                raise ValueError("decoder level with no address bits")
            for b in bits:
                if not 0 <= b < self.row_bits:
                    raise ValueError(f"bit {b} outside a {self.row_bits}-bit row address")
                if b in seen:
                    raise ValueError(f"bit {b} assigned to two decoder levels")
                seen.add(b)

    @classmethod
    def reference(cls, rows_per_subarray: int = 512, levels: int = 5) -> "DecoderModel":
        """One single-bit level per low address bit."""
        row_bits = rows_per_subarray.bit_length() - 1
        if levels > row_bits:
            raise ValueError(f"{levels} single-bit levels need at least {2 ** levels} rows per subarray")
        return cls(tuple((b,) for b in range(levels)), row_bits)

    @property
    def levels(self) -> int:
        return len(self.fields)

    @property
    def max_activation(self) -> int:
        return 2 ** self.levels

    @property
    def select_mask(self) -> int:
        owned = 0
        for bits in self.fields:
            for b in bits:
                owned |= 1 << b
        return ((1 << self.row_bits) - 1) & ~owned

    def field_value(self, row: int, level: int) -> int:
        return sum(((row >> b) & 1) << i for i, b in enumerate(self.fields[level]))

    def _with_field(self, row: int, level: int, value: int) -> int:
        for i, b in enumerate(self.fields[level]):
            row = (row & ~(1 << b)) | (((value >> i) & 1) << b)
        return row


@dataclass(frozen=True, order=True)
class RowAddress:
    bank: int
    subarray: int
    row_in_subarray: int


@dataclass(frozen=True)
class SarGroup:
    """Rows opened together by one APA pair.

    ``rows`` are row_in_subarray indices in ascending order, which is also the
    order data-pattern bits are assigned in. ``pair`` is the (first, second)
    ACT address that opens the group.
    """

    bank: int
    subarray: int
    rows: tuple[int, ...]
    order_k: int
    pair: tuple[int, int] = field(default=(0, 0), compare=False)

    def __post_init__(self):
        if len(self.rows) != 2 ** self.order_k:
            raise ValueError(f"{len(self.rows)} rows is not 2**{self.order_k}")
        if list(self.rows) != sorted(set(self.rows)):
            raise ValueError("rows must be strictly ascending")

    @property
    def size(self) -> int:
        return len(self.rows)

    @property
    def key(self) -> str:
        return f"b{self.bank}s{self.subarray}r{self.rows[0]}k{self.order_k}"


def decode_sar_group(addr_a: RowAddress, addr_b: RowAddress, decoder: DecoderModel) -> SarGroup:
    """Rows opened by ACT(addr_a), violated PRE, ACT(addr_b).

    On every level where the two addresses disagree both field values stay
    asserted; where they agree only the shared value is. A pair that differs
    in the select bits raises :class:`DecodeError`.
    """
    if (addr_a.bank, addr_a.subarray) != (addr_b.bank, addr_b.subarray):
        raise CrossSubarrayError(f"{addr_a} and {addr_b} are not in the same subarray")
    a, b = addr_a.row_in_subarray, addr_b.row_in_subarray
    limit = 1 << decoder.row_bits
    if not (0 <= a < limit and 0 <= b < limit):
        raise IndexError("row index exceeds the decoder's address width")
    if (a ^ b) & decoder.select_mask:
        raise DecodeError(f"rows {a} and {b} differ outside the decoder levels")

    choices = []
    for lvl in range(decoder.levels):
        fa, fb = decoder.field_value(a, lvl), decoder.field_value(b, lvl)
        choices.append((lvl, (fa,) if fa == fb else (fa, fb)))
    order_k = sum(len(vals) == 2 for _, vals in choices)

    rows = set()
    for combo in itertools.product(*(vals for _, vals in choices)):
        row = a
        for (lvl, _), value in zip(choices, combo):
            row = decoder._with_field(row, lvl, value)
        rows.add(row)
    return SarGroup(addr_a.bank, addr_a.subarray, tuple(sorted(rows)), order_k, pair=(a, b))


def cache_block_of(column: int, geometry: DramGeometry | None = None) -> int:
    geometry = geometry or DramGeometry()
    if not 0 <= column < geometry.columns_per_row:
        raise IndexError(f"column {column} outside a {geometry.columns_per_row}-column row")
    return column // geometry.cache_block_bits
