"""Charge sharing and sense-amplifier resolution for simultaneously opened rows.

Every bitline of an opened subarray sees the lumped capacitor network of its
precharged bitline plus one cell per activated row. The settled deviation
from VDD/2 is sensed against thermal noise; a frozen per-bitline offset,
scaled by the distance from the reference temperature, models how heat
pushes individual sense amplifiers away from metastability.

Process variation (cell capacitances, bitline offsets) is drawn from seeded
streams keyed by physical location, so an instance is reproducible from
``(config, seed)`` alone regardless of the order rows are touched in.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .dram import DecoderModel, DramGeometry, RowAddress, SarGroup, TimingParams, decode_sar_group
from .errors import UninitializedRowError


@dataclass(frozen=True)
class AnalogParams:
    vdd: float = 1.2
    c_bitline: float = 8.0
    c_cell_nominal: float = 1.0
    c_cell_sigma: float = 0.02
    sense_margin_epsilon: float = 0.02
    thermal_noise_sigma: float = 0.004
    # volts per degree C applied to a dimensionless per-bitline offset draw
    temp_drift_alpha: float = 1.2e-4
    reference_temp: float = 50.0

    def __post_init__(self):
        if self.vdd <= 0:
            raise ValueError("vdd must be positive")
        for name in ("c_bitline", "c_cell_nominal", "c_cell_sigma", "sense_margin_epsilon", "thermal_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ChipConfig:
    """Everything except the seed that defines a simulated chip."""

    geometry: DramGeometry = field(default_factory=DramGeometry)
    analog: AnalogParams = field(default_factory=AnalogParams)
    timing: TimingParams = field(default_factory=TimingParams)
    decoder: DecoderModel | None = None
    # logical -> physical row_in_subarray, identical for every subarray
    remap: tuple[int, ...] | None = None
    simra_enabled: bool = True
    name: str = "custom"

    def __post_init__(self):
        if self.decoder is None:
            object.__setattr__(self, "decoder", DecoderModel.reference(self.geometry.rows_per_subarray))
        if self.decoder.row_bits != self.geometry.row_bits:
            raise ValueError("decoder address width does not match rows_per_subarray")
        if self.remap is not None:
            if sorted(self.remap) != list(range(self.geometry.rows_per_subarray)):
                raise ValueError("remap must be a permutation of the rows in a subarray")


def bit_swap_remap(rows_per_subarray: int, bit_a: int, bit_b: int) -> tuple[int, ...]:
    """Logical->physical map that exchanges two row-address bits."""
    out = []
    for r in range(rows_per_subarray):
        x, y = (r >> bit_a) & 1, (r >> bit_b) & 1
        if x != y:
            r ^= (1 << bit_a) | (1 << bit_b)
        out.append(r)
    return tuple(out)


def charge_share(cell_values: Sequence[float], cell_caps: Sequence[float], bitline_cap: float, vdd: float) -> float:
    """Bitline deviation from VDD/2 after connecting the given cells.

    ``cell_values`` are cell voltages (VDD or 0).
    """
    values = np.asarray(cell_values, dtype=float)
    caps = np.asarray(cell_caps, dtype=float)
    if values.size == 0 or values.shape != caps.shape:
        raise ValueError("cell_values and cell_caps must be non-empty and equal length")
    total = bitline_cap + caps.sum()
    if total <= 0:
        raise ZeroDivisionError("zero total capacitance")
    return float((bitline_cap * vdd / 2 + (caps * values).sum()) / total - vdd / 2)


def logic_one_probability(dv, bitline_offset, temperature: float, params: AnalogParams):
    """P(bit = 1) for each bitline under the sensing model.

    Bitlines with ``|dv|`` above the sense margin resolve to ``sign(dv)``;
    the rest compare ``dv + drift + N(0, sigma)`` against zero, i.e.
    ``Phi((dv + drift) / sigma)``.
    """
    dv = np.asarray(dv, dtype=float)
    drift = np.asarray(bitline_offset, dtype=float) * (params.temp_drift_alpha * (temperature - params.reference_temp))
    mean = dv + drift
    if params.thermal_noise_sigma > 0:
        p = ndtr(mean / params.thermal_noise_sigma)
    else:
        p = (mean > 0).astype(float)
    return np.where(np.abs(dv) > params.sense_margin_epsilon, (dv > 0).astype(float), p)


def sense(dv, bitline_offset, temperature: float, trial_rng: np.random.Generator, params: AnalogParams):
    """Resolve bitline deviation(s) to bits; scalars or arrays.

    The thermal-noise term is drawn by inverse-CDF sampling: one uniform
    ``u`` per bitline, with noise ``sigma * Phi^-1(u)``. Comparing ``u``
    against :func:`logic_one_probability` is the same event and skips the
    transform. Deterministic bitlines consume their draw too, so the noise
    stream stays aligned with bitline index.
    """
    return _sense_p(logic_one_probability(dv, bitline_offset, temperature, params), trial_rng)


def _sense_p(p1, trial_rng: np.random.Generator):
    if np.ndim(p1) == 0:
        return int(trial_rng.random() < p1)
    return (trial_rng.random(np.shape(p1)) < p1).view(np.uint8)


@dataclass
class BankState:
    open_rows: tuple[int, ...] = ()
    row_buffer: np.ndarray | None = None
    buffer_valid: bool = True
    via_apa: bool = False


class ChipInstance:
    """A seeded simulated chip: frozen silicon plus mutable cell contents.

    Row contents are stored per (bank, logical bank row) as read-only uint8
    arrays. Copies share the array object, which is what makes RowClone cheap
    and lets charge-sharing results be cached by content identity.
    """

    _CAP_CACHE = 256

    def __init__(self, config: ChipConfig | None = None, seed: int = 0):
        self.config = config or ChipConfig()
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        g = self.config.geometry
        rps = g.rows_per_subarray
        self._to_phys = np.asarray(self.config.remap if self.config.remap is not None else range(rps), dtype=np.int64)
        self._to_logical = np.argsort(self._to_phys)
        self._cells: dict[tuple[int, int], np.ndarray] = {}
        self._caps: OrderedDict = OrderedDict()
        self._offsets: dict[tuple[int, int], np.ndarray] = {}
        # (bank, subarray, rows) -> (row contents, dv) and -> (dv, temperature, p1)
        self._dv_cache: OrderedDict = OrderedDict()
        self._p_cache: OrderedDict = OrderedDict()
        self.banks = [BankState() for _ in range(g.banks_per_chip)]

    @property
    def geometry(self) -> DramGeometry:
        return self.config.geometry

    @property
    def params(self) -> AnalogParams:
        return self.config.analog

    @property
    def decoder(self) -> DecoderModel:
        return self.config.decoder

    def physical_row(self, row_in_subarray: int) -> int:
        return int(self._to_phys[row_in_subarray])

    def logical_row(self, physical: int) -> int:
        return int(self._to_logical[physical])

    # -- ground truth, for tests and harness realism checks only -------------

    def sar_group(self, bank: int, row_a: int, row_b: int) -> SarGroup:
        """Group opened by APA on two bank-level logical rows."""
        ga = self.geometry.row_address(bank, row_a)
        gb = self.geometry.row_address(bank, row_b)
        pa = RowAddress(bank, ga.subarray, self.physical_row(ga.row_in_subarray))
        pb = RowAddress(bank, gb.subarray, self.physical_row(gb.row_in_subarray))
        phys = decode_sar_group(pa, pb, self.decoder)
        rows = tuple(sorted(self.logical_row(r) for r in phys.rows))
        return SarGroup(bank, ga.subarray, rows, phys.order_k, pair=(ga.row_in_subarray, gb.row_in_subarray))

    # -- frozen process variation ---------------------------------------------

    def cell_caps(self, bank: int, subarray: int, physical_row: int) -> np.ndarray:
        key = (bank, subarray, physical_row)
        caps = self._caps.get(key)
        if caps is None:
            p = self.params
            rng = np.random.default_rng([self.seed, 1, bank, subarray, physical_row])
            z = rng.standard_normal(self.geometry.columns_per_row, dtype=np.float32)
            caps = np.clip(p.c_cell_nominal * (1.0 + p.c_cell_sigma * z), 0.0, None)
            caps.flags.writeable = False
            self._caps[key] = caps
            if len(self._caps) > self._CAP_CACHE:
                self._caps.popitem(last=False)
        else:
            self._caps.move_to_end(key)
        return caps

    def bitline_offsets(self, bank: int, subarray: int) -> np.ndarray:
        key = (bank, subarray)
        off = self._offsets.get(key)
        if off is None:
            rng = np.random.default_rng([self.seed, 2, bank, subarray])
            off = rng.standard_normal(self.geometry.columns_per_row, dtype=np.float32)
            off.flags.writeable = False
            self._offsets[key] = off
        return off

    # -- cell storage -----------------------------------------------------------

    def bank_row(self, group: SarGroup, row_in_subarray: int) -> int:
        return group.subarray * self.geometry.rows_per_subarray + row_in_subarray

    def load_row(self, bank: int, row: int) -> np.ndarray | None:
        return self._cells.get((bank, row))

    def store_row(self, bank: int, row: int, data: np.ndarray) -> None:
        if data.flags.writeable:
            data = data.copy()
            data.flags.writeable = False
        self._cells[(bank, row)] = data

    def is_initialized(self, bank: int, row: int) -> bool:
        return (bank, row) in self._cells

    # -- analog behavior ------------------------------------------------------

    def bitline_deviation(self, sar: SarGroup) -> np.ndarray:
        """Charge-shared ΔV on every bitline for the group's current contents."""
        contents = []
        for r in sar.rows:
            data = self.load_row(sar.bank, self.bank_row(sar, r))
            if data is None:
                raise UninitializedRowError(f"bank {sar.bank} subarray {sar.subarray} row {r} was never written")
            contents.append(data)
        key = (sar.bank, sar.subarray, sar.rows)
        cached = self._dv_cache.get(key)
        if cached is not None and all(x is y for x, y in zip(cached[0], contents)):
            return cached[1]

        p = self.params
        charge = np.full(self.geometry.columns_per_row, p.c_bitline * p.vdd / 2, dtype=np.float64)
        total = np.full(self.geometry.columns_per_row, p.c_bitline, dtype=np.float64)
        for r, data in zip(sar.rows, contents):
            caps = self.cell_caps(sar.bank, sar.subarray, self.physical_row(r))
            total += caps
            charge += caps * (data * p.vdd)
        if np.any(total <= 0):
            raise ZeroDivisionError("zero total capacitance on a bitline")
        dv = charge / total - p.vdd / 2
        dv.flags.writeable = False
        _bounded_put(self._dv_cache, key, (tuple(contents), dv))
        return dv


    def one_probability(self, sar: SarGroup, temperature: float) -> np.ndarray:
        dv = self.bitline_deviation(sar)
        key = (sar.bank, sar.subarray, sar.rows)
        cached = self._p_cache.get(key)
        if cached is not None and cached[0] is dv and cached[1] == temperature:
            return cached[2]
        p1 = logic_one_probability(dv, self.bitline_offsets(sar.bank, sar.subarray), temperature, self.params)
        _bounded_put(self._p_cache, key, (dv, temperature, p1))
        return p1


def _bounded_put(cache: OrderedDict, key, value, limit: int = 16) -> None:
    cache[key] = value
    cache.move_to_end(key)
    if len(cache) > limit:
        cache.popitem(last=False)


def trial_rng(trial_seed: int) -> np.random.Generator:
    return np.random.default_rng(int(trial_seed) & 0xFFFF_FFFF_FFFF_FFFF)


def simulate_apa_trial(chip: ChipInstance, sar: SarGroup, temperature: float, trial_seed: int) -> np.ndarray:
    """One simultaneous activation: share charge, sense, restore into every row."""
    readout = _sense_p(chip.one_probability(sar, temperature), trial_rng(trial_seed))
    readout.flags.writeable = False
    for r in sar.rows:
        chip.store_row(sar.bank, chip.bank_row(sar, r), readout)
    return readout


def single_row_margin(params: AnalogParams) -> float:
    """|ΔV| for one nominal cell, which must exceed the sense margin."""
    return params.vdd / 2 * params.c_cell_nominal / (params.c_bitline + params.c_cell_nominal)


def balanced_spread(params: AnalogParams, n_rows: int) -> float:
    """Std-dev of ΔV for a balanced pattern, from capacitance mismatch alone."""
    total = params.c_bitline + n_rows * params.c_cell_nominal
    return params.vdd / 2 * params.c_cell_sigma * params.c_cell_nominal * math.sqrt(n_rows) / total
