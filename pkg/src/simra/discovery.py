"""Reverse-engineering subarray boundaries and SAR groups through commands only.

Nothing here touches simulator internals: every probe is a command sequence
issued through :class:`~simra.engine.CommandEngine`, and every conclusion is
drawn from data read back.

Rows are tagged with their 16-bit bank row index repeated across the tagged
cache blocks. A RowClone ``src -> dst`` succeeded iff ``dst`` now carries
``src``'s tag; an APA + WR probe overwrote exactly the rows that now carry the
(non-periodic, hence tag-free) payload.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dram import CACHE_BLOCK_BITS, SarGroup
from .engine import (
    CommandEngine,
    Command,
    act,
    apa_sequence,
    pre,
    read_blocks,
    rowclone_sequence,
    write_blocks,
)
from .errors import AmbiguousProbeError, DiscoveryError, ProtocolError, UninitializedRowError

log = logging.getLogger(__name__)

MARKER_BLOCKS = (0,)
RESULTS_VERSION = 1


def row_marker(row: int, columns: int = CACHE_BLOCK_BITS) -> np.ndarray:
    if not 0 <= row < 1 << 16:
        raise ValueError("row tags are 16 bits")
    tag = np.unpackbits(np.array([row >> 8, row & 0xFF], dtype=np.uint8))
    return np.resize(tag, columns)


def probe_payload(seed: int = 0x5A) -> np.ndarray:
    """A 512-bit payload that is not 16-bit periodic, so it never equals a tag."""
    bits = np.random.default_rng(seed).integers(0, 2, CACHE_BLOCK_BITS, dtype=np.uint8)
    if np.array_equal(bits, np.resize(bits[:16], CACHE_BLOCK_BITS)):
        raise AmbiguousProbeError("payload is 16-bit periodic")
    return bits


@dataclass
class SubarrayMap:
    """Partition of one bank's rows into contiguous subarrays, ``[start, stop)``."""

    bank: int
    ranges: list[tuple[int, int]]

    def __post_init__(self):
        expected = 0
        for start, stop in self.ranges:
            if start != expected or stop <= start:
                raise DiscoveryError(f"ranges do not partition the bank: {self.ranges}")
            expected = stop

    @property
    def n_rows(self) -> int:
        return self.ranges[-1][1] if self.ranges else 0

    def __len__(self):
        return len(self.ranges)

    def subarray_of(self, row: int) -> int:
        for i, (start, stop) in enumerate(self.ranges):
            if start <= row < stop:
                return i
        raise IndexError(row)

    def to_dict(self) -> dict:
        return {"version": RESULTS_VERSION, "bank": self.bank, "ranges": [list(r) for r in self.ranges]}

    @classmethod
    def from_dict(cls, d: dict) -> "SubarrayMap":
        if d.get("version") != RESULTS_VERSION:
            raise DiscoveryError(f"unsupported subarray map version {d.get('version')}")
        return cls(d["bank"], [tuple(r) for r in d["ranges"]])


@dataclass
class SarCatalog:
    bank: int
    groups: dict[int, dict[int, list[SarGroup]]]  # subarray -> order -> groups

    def of(self, subarray: int, order_k: int) -> list[SarGroup]:
        return self.groups.get(subarray, {}).get(order_k, [])

    @property
    def subarrays(self) -> list[int]:
        return sorted(self.groups)

    def all_groups(self) -> Iterable[SarGroup]:
        for sub in self.subarrays:
            for order in sorted(self.groups[sub]):
                yield from self.groups[sub][order]

    def to_dict(self) -> dict:
        return {
            "version": RESULTS_VERSION,
            "bank": self.bank,
            "groups": [
                {"subarray": g.subarray, "order": g.order_k, "rows": list(g.rows), "pair": list(g.pair)}
                for g in self.all_groups()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SarCatalog":
        if d.get("version") != RESULTS_VERSION:
            raise DiscoveryError(f"unsupported catalog version {d.get('version')}")
        groups: dict[int, dict[int, list[SarGroup]]] = {}
        for e in d["groups"]:
            g = SarGroup(d["bank"], e["subarray"], tuple(e["rows"]), e["order"], pair=tuple(e["pair"]))
            groups.setdefault(g.subarray, {}).setdefault(g.order_k, []).append(g)
        return cls(d["bank"], groups)


def save_json(obj, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(obj.to_dict(), indent=1, sort_keys=True) + "\n")


class Prober:
    """Command-level probing helpers bound to one bank."""

    def __init__(self, engine: CommandEngine, bank: int, marker_blocks=MARKER_BLOCKS):
        self.engine = engine
        self.bank = bank
        self.blocks = tuple(marker_blocks)
        self.timing = engine.timing

    def _tagged(self, data: np.ndarray) -> np.ndarray:
        return np.concatenate([data] * len(self.blocks)) if len(self.blocks) > 1 else data

    def write_marker(self, row: int) -> None:
        cols = self.engine.chip.geometry.columns_per_row
        marker = row_marker(row, cols)
        seq = [act(self.bank, row, self.timing.t_rp), *write_blocks(self.bank, marker, self.timing, self.blocks),
               pre(self.bank, self.timing.t_ras)]
        self.engine.execute(seq)

    def read_tag(self, row: int) -> np.ndarray:
        seq = [act(self.bank, row, self.timing.t_rp), *read_blocks(self.bank, self.blocks, self.timing),
               pre(self.bank, self.timing.t_ras)]
        res = self.engine.execute(seq)
        return np.concatenate(res.row_data())

    def carries(self, row: int, tag_row: int) -> bool:
        try:
            tag = self.read_tag(row)
        except UninitializedRowError:
            return False
        return np.array_equal(tag, self._tagged(row_marker(tag_row)))

    def clone(self, src: int, dst: int) -> bool:
        """RowClone src->dst, report success, then put dst's own tag back."""
        self.engine.execute(rowclone_sequence(self.bank, src, dst, self.timing))
        if src == dst:
            return True
        tag = self.read_tag(dst)
        copied = np.array_equal(tag, self._tagged(row_marker(src)))
        if copied:
            self.write_marker(dst)
        elif not np.array_equal(tag, self._tagged(row_marker(dst))):
            raise DiscoveryError(f"row {dst} holds neither its own tag nor row {src}'s after RowClone")
        return copied

    def apa_write(self, a: int, b: int, payload: np.ndarray) -> None:
        seq: list[Command] = apa_sequence(self.bank, a, b, self.timing)
        seq += write_blocks(self.bank, np.resize(payload, CACHE_BLOCK_BITS * (max(self.blocks) + 1)), self.timing,
                            self.blocks)
        seq.append(pre(self.bank, self.timing.t_ras))
        self.engine.execute(seq)


def initialize_markers(engine: CommandEngine, bank: int, rows: Iterable[int], marker_blocks=MARKER_BLOCKS) -> None:
    p = Prober(engine, bank, marker_blocks)
    for r in rows:
        p.write_marker(r)


def find_subarray_boundaries(engine: CommandEngine, bank: int, n_rows: int | None = None,
                             exhaustive: bool = False, marker_blocks=MARKER_BLOCKS) -> SubarrayMap:
    """Partition rows ``0..n_rows-1`` of ``bank`` by RowClone reachability.

    The default scan clones each row into its successor (a failed copy marks
    a boundary) and then confirms every range by cloning its first row into
    its last. ``exhaustive=True`` probes every ordered pair instead.
    Rows must already carry their tags (:func:`initialize_markers`).
    """
    n_rows = engine.chip.geometry.rows_per_bank if n_rows is None else n_rows
    p = Prober(engine, bank, marker_blocks)
    for r in range(n_rows):
        if not p.carries(r, r):
            raise DiscoveryError(f"row {r} is not tagged; initialize markers first")

    if exhaustive:
        return _exhaustive_partition(p, bank, n_rows)

    ranges = []
    start = 0
    for r in range(n_rows - 1):
        if not p.clone(r, r + 1):
            ranges.append((start, r + 1))
            start = r + 1
    ranges.append((start, n_rows))

    for start, stop in ranges:
        if stop - start > 1 and not p.clone(start, stop - 1):
            raise DiscoveryError(f"rows {start} and {stop - 1} are adjacent-linked but cannot copy")
    for (s0, _), (s1, _) in zip(ranges, ranges[1:]):
        if p.clone(s0, s1):
            raise DiscoveryError(f"rows {s0} and {s1} copy across a detected boundary")
    return SubarrayMap(bank, ranges)


def _exhaustive_partition(p: Prober, bank: int, n_rows: int) -> SubarrayMap:
    reach = np.zeros((n_rows, n_rows), dtype=bool)
    for src in range(n_rows):
        for dst in range(n_rows):
            reach[src, dst] = p.clone(src, dst)
    if not np.array_equal(reach, reach.T):
        raise DiscoveryError("RowClone reachability is not symmetric")
    ranges = []
    start = 0
    while start < n_rows:
        members = np.flatnonzero(reach[start])
        stop = int(members.max()) + 1
        if not np.array_equal(members, np.arange(start, stop)):
            raise DiscoveryError(f"rows reachable from {start} are not contiguous")
        ranges.append((start, stop))
        start = stop
    return SubarrayMap(bank, ranges)


def _sweep(engine: CommandEngine, bank: int, subarray: int, start: int, stop: int, orders: Iterable[int],
           max_groups: int | None, marker_blocks) -> dict[int, list[SarGroup]]:
    p = Prober(engine, bank, marker_blocks)
    payload = probe_payload()
    tagged_payload = p._tagged(payload)
    for r in range(start, stop):
        if np.array_equal(p._tagged(row_marker(r)), tagged_payload):
            raise AmbiguousProbeError(f"payload equals the tag of row {r}")

    orders = sorted(set(orders))
    found: dict[int, list[SarGroup]] = {k: [] for k in orders}
    covered: dict[int, set[int]] = {k: set() for k in orders}

    def full(k):
        return max_groups is not None and len(found[k]) >= max_groups

    for a in range(start, stop):
        needed = {k for k in orders if a not in covered[k] and not full(k)}
        if not needed:
            if all(full(k) for k in orders):
                break
            continue
        for b in [*range(a + 1, stop), *range(start, a)]:
            try:
                p.apa_write(a, b, payload)
            except ProtocolError:
                log.debug("pair (%d, %d) rejected by the chip", a, b)
                continue
            hit = {r for r in range(start, stop) if np.array_equal(p.read_tag(r), tagged_payload)}
            for r in hit:
                p.write_marker(r)
            size = len(hit)
            if size == 0 or size & (size - 1) or a not in hit or b not in hit:
                raise DiscoveryError(f"APA({a}, {b}) overwrote an implausible row set {sorted(hit)}")
            k = size.bit_length() - 1
            if k in needed and not hit & covered[k]:
                found[k].append(SarGroup(bank, subarray, tuple(sorted(r - start for r in hit)), k,
                                         pair=(a - start, b - start)))
                covered[k] |= hit
                needed.discard(k)
            if not needed:
                break
    return found


def find_sar_groups(engine: CommandEngine, bank: int, subarray_map: SubarrayMap, subarray: int, order_k: int,
                    max_groups: int | None = None, marker_blocks=MARKER_BLOCKS) -> list[SarGroup]:
    """Disjoint SAR groups of one order, found by APA + WR probes.

    Anchors are taken in ascending row order; each anchor not yet covered is
    paired with every other row until a probe opens a ``2**order_k`` group
    that contains it. Subarray rows must carry their tags.
    """
    start, stop = subarray_map.ranges[subarray]
    return _sweep(engine, bank, subarray, start, stop, [order_k], max_groups, marker_blocks)[order_k]


def discover_catalog(engine: CommandEngine, bank: int, subarray_map: SubarrayMap, subarrays: Iterable[int],
                     orders: Iterable[int] = (1, 2, 3, 4, 5), max_groups: int | None = None,
                     marker_blocks=MARKER_BLOCKS) -> SarCatalog:
    """Like :func:`find_sar_groups` for several orders, sharing probes."""
    groups = {}
    for sub in subarrays:
        start, stop = subarray_map.ranges[sub]
        found = _sweep(engine, bank, sub, start, stop, orders, max_groups, marker_blocks)
        groups[sub] = {k: v for k, v in found.items() if v}
        log.info("bank %d subarray %d: %s", bank, sub, {k: len(v) for k, v in found.items()})
    return SarCatalog(bank, groups)
