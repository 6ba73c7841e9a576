"""DRAM command execution with nominal or violated timings.

Three idioms beyond plain ACT/RD/WR/PRE access are recognized:

* RowClone: ``ACT(src)``, then ``ACT(dst)`` after full restoration with no
  PRE in between. ``dst`` receives the sense-amplifier contents if it sits
  in the same subarray; otherwise it is simply opened.
* APA: ``ACT(a)``, ``PRE`` before tRAS, ``ACT(b)`` before tRP. Opens the
  decoder's SAR group for (a, b) and resolves it through the analog model.
* APA followed by WR: the write lands in every row of the open group.

Anything else that violates a timing parameter raises :class:`ProtocolError`.
Latency is charged per recognized operation from :class:`LatencyCosts`, so a
ledger depends only on the command structure, never on data.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .analog import ChipInstance, simulate_apa_trial
from .dram import CACHE_BLOCK_BITS, RowAddress
from .errors import CrossSubarrayError, DecodeError, ProtocolError, UninitializedRowError

KINDS = ("ACT", "PRE", "RD", "WR")
OPERATIONS = ("rowclone", "apa", "read", "hash", "access")


@dataclass(frozen=True)
class Command:
    kind: str
    bank: int
    row: int | None = None  # bank-level logical row, ACT only
    block: int | None = None  # cache block for RD/WR; RD with None reads the whole row
    data: np.ndarray | None = field(default=None, compare=False)
    delay: float = 0.0  # ns since the previous command in the sequence

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown command {self.kind!r}")
        if self.delay < 0:
            raise ValueError("issue delay must be non-negative")
        if self.kind == "ACT" and self.row is None:
            raise ValueError("ACT needs a row")
        if self.kind == "WR":
            if self.block is None or self.data is None or len(self.data) != CACHE_BLOCK_BITS:
                raise ValueError("WR needs a cache block index and a 512-bit payload")


@dataclass(frozen=True)
class LatencyCosts:
    """Per-operation charges in ns.

    Only rowclone and the sum apa + read + hash (74.9 ns) are anchored to
    measured SiMRA-TRNG latencies; the split of that sum is arbitrary.
    """

    rowclone: float = 45.0
    apa: float = 15.0
    read: float = 29.9
    hash: float = 30.0
    access: float = 45.5  # plain ACT..PRE, t_ras + t_rp at nominal DDR4 values


class LatencyLedger:
    """Per-bank cumulative latency with a per-operation breakdown."""

    def __init__(self):
        self._per_bank: dict[int, dict[str, float]] = defaultdict(lambda: dict.fromkeys(OPERATIONS, 0.0))

    def charge(self, bank: int, op: str, ns: float) -> None:
        if op not in OPERATIONS:
            raise ValueError(f"unknown ledger operation {op!r}")
        self._per_bank[bank][op] += ns

    def merge(self, other: "LatencyLedger") -> "LatencyLedger":
        for bank, ops in other._per_bank.items():
            for op, ns in ops.items():
                self._per_bank[bank][op] += ns
        return self

    @property
    def banks(self) -> list[int]:
        return sorted(self._per_bank)

    def bank_total(self, bank: int) -> float:
        return sum(self._per_bank[bank].values()) if bank in self._per_bank else 0.0

    def breakdown(self, bank: int | None = None) -> dict[str, float]:
        if bank is not None:
            return dict(self._per_bank.get(bank, dict.fromkeys(OPERATIONS, 0.0)))
        out = dict.fromkeys(OPERATIONS, 0.0)
        for ops in self._per_bank.values():
            for op, ns in ops.items():
                out[op] += ns
        return out

    @property
    def total(self) -> float:
        """Wall-clock time with banks running in parallel."""
        return max((self.bank_total(b) for b in self._per_bank), default=0.0)

    def copy(self) -> "LatencyLedger":
        return LatencyLedger().merge(self)

    def __repr__(self):
        return f"LatencyLedger(total={self.total:.1f} ns, banks={self.banks})"


@dataclass
class ExecResult:
    reads: list[tuple[int, int | None, np.ndarray]]
    ledger: LatencyLedger

    def row_data(self) -> list[np.ndarray]:
        return [data for _, _, data in self.reads]


@dataclass
class _BankCtl:
    last_kind: str | None = None
    last_time: float = float("-inf")
    pending_row: int | None = None  # set by a tRAS-violating PRE
    read_charged: bool = False
    charged: bool = False  # open period already billed (rowclone or apa)


class CommandEngine:
    """Executes command sequences against one :class:`ChipInstance`."""

    def __init__(self, chip: ChipInstance, costs: LatencyCosts | None = None):
        self.chip = chip
        self.costs = costs or LatencyCosts()
        self.timing = chip.config.timing
        self._ctl = [_BankCtl() for _ in range(chip.geometry.banks_per_chip)]
        self._clock = 0.0

    def execute(self, sequence: Sequence[Command], temperature: float = 50.0, trial_seed: int = 0) -> ExecResult:
        ledger = LatencyLedger()
        reads: list[tuple[int, int | None, np.ndarray]] = []
        apa_count = 0
        for cmd in sequence:
            self._clock += cmd.delay
            if not 0 <= cmd.bank < len(self._ctl):
                raise ProtocolError(f"bank {cmd.bank} does not exist")
            ctl = self._ctl[cmd.bank]
            elapsed = self._clock - ctl.last_time
            if cmd.kind == "ACT":
                seed = trial_seed if apa_count == 0 else _derive(trial_seed, apa_count)
                if self._act(cmd, ctl, elapsed, ledger, temperature, seed):
                    apa_count += 1
            elif cmd.kind == "PRE":
                self._pre(cmd, ctl, elapsed, ledger)
            elif cmd.kind == "RD":
                reads.append((cmd.bank, cmd.block, self._rd(cmd, ctl, elapsed, ledger)))
            else:
                self._wr(cmd, ctl)
            ctl.last_kind = cmd.kind
            ctl.last_time = self._clock
        for bank, ctl in enumerate(self._ctl):
            if ctl.pending_row is not None:
                raise ProtocolError(f"bank {bank}: sequence ends after a tRAS-violating PRE")
        return ExecResult(reads, ledger)

    # -- command handlers -----------------------------------------------------

    def _act(self, cmd, ctl, elapsed, ledger, temperature, seed) -> bool:
        chip, t = self.chip, self.timing
        state = chip.banks[cmd.bank]
        g = chip.geometry
        if not 0 <= cmd.row < g.rows_per_bank:
            raise ProtocolError(f"row {cmd.row} out of range")

        if ctl.pending_row is not None:
            first = ctl.pending_row
            ctl.pending_row = None
            if not t.rp_violated(elapsed):
                raise ProtocolError("PRE violated tRAS but the following ACT honours tRP")
            self._apa(cmd.bank, first, cmd.row, temperature, seed)
            ledger.charge(cmd.bank, "apa", self.costs.apa)
            ctl.read_charged = False
            ctl.charged = True
            return True

        if state.open_rows:
            if state.via_apa or len(state.open_rows) != 1:
                raise ProtocolError("ACT while a multi-row activation is open")
            if t.ras_violated(elapsed):
                raise ProtocolError("back-to-back ACT before the source row is restored")
            src = state.open_rows[0]
            if src // g.rows_per_subarray == cmd.row // g.rows_per_subarray:
                if not state.buffer_valid:
                    raise UninitializedRowError(f"RowClone source row {src} was never written")
                chip.store_row(cmd.bank, cmd.row, state.row_buffer)
            else:
                self._open_single(cmd.bank, cmd.row)
            state.open_rows = (cmd.row,)
            ledger.charge(cmd.bank, "rowclone", self.costs.rowclone)
            ctl.charged = True
            return False

        if ctl.last_kind == "PRE" and t.rp_violated(elapsed):
            raise ProtocolError("ACT issued before tRP elapsed")
        self._open_single(cmd.bank, cmd.row)
        ctl.read_charged = False
        ctl.charged = False
        return False

    def _open_single(self, bank: int, row: int) -> None:
        state = self.chip.banks[bank]
        data = self.chip.load_row(bank, row)
        state.open_rows = (row,)
        state.via_apa = False
        state.buffer_valid = data is not None
        state.row_buffer = data if data is not None else _zeros(self.chip.geometry.columns_per_row)

    def _apa(self, bank: int, first: int, second: int, temperature: float, seed: int) -> None:
        chip = self.chip
        state = chip.banks[bank]
        g = chip.geometry
        if first // g.rows_per_subarray != second // g.rows_per_subarray:
            raise ProtocolError("APA across subarrays")
        if not chip.config.simra_enabled:
            # second ACT suppressed: only the first row stays open
            self._open_single(bank, first)
            return
        try:
            group = chip.sar_group(bank, first, second)
        except DecodeError as exc:
            raise ProtocolError(str(exc)) from exc
        readout = simulate_apa_trial(chip, group, temperature, seed)
        state.open_rows = tuple(chip.bank_row(group, r) for r in group.rows)
        state.row_buffer = readout
        state.buffer_valid = True
        state.via_apa = len(group.rows) > 1

    def _pre(self, cmd, ctl, elapsed, ledger) -> None:
        state = self.chip.banks[cmd.bank]
        if ctl.pending_row is not None:
            raise ProtocolError("PRE after a tRAS-violating PRE")
        if not state.open_rows:
            return
        if self.timing.ras_violated(elapsed):
            if state.via_apa or ctl.charged or len(state.open_rows) != 1 or ctl.last_kind != "ACT":
                raise ProtocolError("tRAS-violating PRE outside an APA sequence")
            ctl.pending_row = state.open_rows[0]
        elif not ctl.charged and not state.via_apa:
            ledger.charge(cmd.bank, "access", self.costs.access)
        state.open_rows = ()
        state.row_buffer = None
        state.via_apa = False
        ctl.charged = False

    def _rd(self, cmd, ctl, elapsed, ledger) -> np.ndarray:
        state = self.chip.banks[cmd.bank]
        if not state.open_rows:
            raise ProtocolError("RD on a precharged bank")
        if ctl.last_kind == "ACT" and elapsed < self.timing.t_rcd:
            raise ProtocolError("RD issued before tRCD elapsed")
        if not state.buffer_valid:
            raise UninitializedRowError(f"bank {cmd.bank}: reading a row that was never written")
        if not ctl.read_charged:
            ledger.charge(cmd.bank, "read", self.costs.read)
            ctl.read_charged = True
        if cmd.block is None:
            return state.row_buffer
        return state.row_buffer[_block_slice(cmd.block, self.chip.geometry.cache_blocks_per_row)]

    def _wr(self, cmd, ctl) -> None:
        state = self.chip.banks[cmd.bank]
        if not state.open_rows:
            raise ProtocolError("WR on a precharged bank")
        buf = np.array(state.row_buffer, dtype=np.uint8)
        buf[_block_slice(cmd.block, self.chip.geometry.cache_blocks_per_row)] = np.asarray(cmd.data, dtype=np.uint8) & 1
        buf.flags.writeable = False
        state.row_buffer = buf
        state.buffer_valid = True
        for row in state.open_rows:
            self.chip.store_row(cmd.bank, row, buf)


def _zeros(n: int) -> np.ndarray:
    z = np.zeros(n, dtype=np.uint8)
    z.flags.writeable = False
    return z


def _block_slice(block: int, blocks_per_row: int) -> slice:
    if not 0 <= block < blocks_per_row:
        raise ProtocolError(f"cache block {block} out of range")
    return slice(block * CACHE_BLOCK_BITS, (block + 1) * CACHE_BLOCK_BITS)


def _derive(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFF_FFFF_FFFF_FFFF, index]).generate_state(1, np.uint64)[0])


# -- sequence builders ----------------------------------------------------------

APA_REDUCED = (3.0, 3.0)  # (ACT->PRE, PRE->ACT) in ns, both far below nominal
RD_SPACING = 5.0


def act(bank: int, row: int, delay: float) -> Command:
    return Command("ACT", bank, row=row, delay=delay)


def pre(bank: int, delay: float) -> Command:
    return Command("PRE", bank, delay=delay)


def rowclone_sequence(bank: int, src: int, dst: int, timing) -> list[Command]:
    return [act(bank, src, timing.t_rp), act(bank, dst, timing.t_ras), pre(bank, timing.t_ras)]


def apa_sequence(bank: int, row_a: int, row_b: int, timing, reduced: tuple[float, float] = APA_REDUCED) -> list[Command]:
    """ACT-PRE-ACT with both tRAS and tRP violated; the bank is left open."""
    return [act(bank, row_a, timing.t_rp), pre(bank, reduced[0]), act(bank, row_b, reduced[1])]


def read_blocks(bank: int, blocks: Iterable[int | None], timing) -> list[Command]:
    out = []
    for i, blk in enumerate(blocks):
        out.append(Command("RD", bank, block=blk, delay=timing.t_rcd if i == 0 else RD_SPACING))
    return out


def read_row_sequence(bank: int, row: int, timing) -> list[Command]:
    return [act(bank, row, timing.t_rp), *read_blocks(bank, [None], timing), pre(bank, timing.t_ras)]


def write_blocks(bank: int, data: np.ndarray, timing, blocks: Iterable[int] | None = None) -> list[Command]:
    data = np.asarray(data, dtype=np.uint8)
    n_blocks = len(data) // CACHE_BLOCK_BITS
    blocks = range(n_blocks) if blocks is None else blocks
    out = []
    for i, blk in enumerate(blocks):
        chunk = data[blk * CACHE_BLOCK_BITS:(blk + 1) * CACHE_BLOCK_BITS]
        out.append(Command("WR", bank, block=blk, data=chunk, delay=timing.t_rcd if i == 0 else RD_SPACING))
    return out


def write_row_sequence(bank: int, row: int, data: np.ndarray, timing) -> list[Command]:
    return [act(bank, row, timing.t_rp), *write_blocks(bank, data, timing), pre(bank, timing.t_ras)]


def rowclone(engine: CommandEngine, src: RowAddress, dst: RowAddress) -> LatencyLedger:
    """In-DRAM copy of ``src`` into ``dst``; returns the ledger delta."""
    if (src.bank, src.subarray) != (dst.bank, dst.subarray):
        raise CrossSubarrayError(f"RowClone needs one subarray, got {src} and {dst}")
    g = engine.chip.geometry
    seq = rowclone_sequence(src.bank, g.bank_row(src), g.bank_row(dst), engine.timing)
    return engine.execute(seq).ledger


# -- trace text format ----------------------------------------------------------

TRACE_HEADER = "# simra-trace v1"


def dump_trace(sequence: Iterable[Command], fp: TextIO) -> None:
    """One command per line: ``KIND BANK ADDRESS DELAY_NS [PAYLOAD_HEX]``.

    ADDRESS is the row for ACT, the cache block for RD/WR (``*`` = whole row)
    and ``-`` for PRE.
    """
    fp.write(TRACE_HEADER + "\n")
    for c in sequence:
        if c.kind == "ACT":
            addr = str(c.row)
        elif c.kind == "PRE":
            addr = "-"
        else:
            addr = "*" if c.block is None else str(c.block)
        line = f"{c.kind} {c.bank} {addr} {c.delay:g}"
        if c.kind == "WR":
            line += " " + np.packbits(c.data).tobytes().hex()
        fp.write(line + "\n")


def load_trace(fp: TextIO) -> list[Command]:
    out = []
    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            kind, bank, addr, delay = parts[0], int(parts[1]), parts[2], float(parts[3])
            if kind == "ACT":
                out.append(Command(kind, bank, row=int(addr), delay=delay))
            elif kind == "PRE":
                out.append(Command(kind, bank, delay=delay))
            elif kind == "RD":
                out.append(Command(kind, bank, block=None if addr == "*" else int(addr), delay=delay))
            elif kind == "WR":
                data = np.unpackbits(np.frombuffer(bytes.fromhex(parts[4]), dtype=np.uint8))
                out.append(Command(kind, bank, block=int(addr), data=data, delay=delay))
            else:
                raise ValueError(kind)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"trace line {lineno}: cannot parse {line!r}") from exc
    return out
