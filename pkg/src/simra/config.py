"""Campaign files: a JSON document that fully determines a run.

Example::

    {
      "seed": 7,
      "out": "results",
      "chip": {"preset": "8Gb-A", "geometry": {"subarrays_per_bank": 8}},
      "campaign": {"trials_per_config": 200, "orders": [1, 2, 3]},
      "discovery": {"bank": 0, "subarrays": [0, 1, 2], "max_groups": 4},
      "trng": {"order": 1, "n_bits": 1024},
      "costs": {"rowclone": 45.0}
    }

``chip`` either names a preset or starts from the default chip; the
``geometry``, ``analog`` and ``timing`` sub-objects override individual
fields either way. ``remap_swap: [a, b]`` swaps two row-address bits.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .analog import AnalogParams, ChipConfig, ChipInstance, bit_swap_remap
from .characterization import CampaignConfig
from .dram import DecoderModel, DramGeometry, TimingParams
from .engine import LatencyCosts
from .errors import ConfigError
from .presets import preset

TOP_KEYS = {"seed", "out", "chip", "campaign", "discovery", "trng", "costs"}
CHIP_KEYS = {"preset", "geometry", "analog", "timing", "remap_swap", "simra_enabled", "levels"}


def _build(cls, base, overrides: dict | None, where: str):
    if not overrides:
        return base if base is not None else cls()
    allowed = {f.name for f in fields(cls)}
    unknown = set(overrides) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return replace(base, **overrides) if base is not None else cls(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def chip_from_dict(d: dict | None) -> ChipConfig:
    d = dict(d or {})
    unknown = set(d) - CHIP_KEYS
    if unknown:
        raise ConfigError(f"chip: unknown keys {sorted(unknown)}")
    base = preset(d["preset"]) if d.get("preset") else ChipConfig()
    geometry = _build(DramGeometry, base.geometry, d.get("geometry"), "chip.geometry")
    analog = _build(AnalogParams, base.analog, d.get("analog"), "chip.analog")
    timing = _build(TimingParams, base.timing, d.get("timing"), "chip.timing")
    try:
        decoder = base.decoder
        if geometry != base.geometry or "levels" in d:
            levels = int(d.get("levels", min(decoder.levels, geometry.row_bits)))
            decoder = DecoderModel.reference(geometry.rows_per_subarray, levels)
        remap = base.remap
        if remap is not None and len(remap) != geometry.rows_per_subarray:
            remap = None  # a preset remap only applies to its own geometry
        if "remap_swap" in d:
            swap = d["remap_swap"]
            remap = None if swap is None else bit_swap_remap(geometry.rows_per_subarray, *swap)
        return replace(base, geometry=geometry, analog=analog, timing=timing, decoder=decoder, remap=remap,
                       simra_enabled=bool(d.get("simra_enabled", base.simra_enabled)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"chip: {exc}") from exc


@dataclass
class DiscoverySettings:
    bank: int = 0
    subarrays: list[int] | None = None  # None: the first ``subarrays_per_module`` found
    max_groups: int | None = None  # None: the campaign's sar_groups_per_order
    n_rows: int | None = None  # rows scanned for boundaries; None: the whole bank


@dataclass
class TrngSettings:
    order: int = 1
    n_bits: int = 256
    banks: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    temperature: float | None = None


@dataclass
class CampaignFile:
    chip: ChipConfig = field(default_factory=ChipConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    discovery: DiscoverySettings = field(default_factory=DiscoverySettings)
    trng: TrngSettings = field(default_factory=TrngSettings)
    costs: LatencyCosts = field(default_factory=LatencyCosts)
    seed: int = 0
    out: Path = Path("results")
    source: dict = field(default_factory=dict)

    def make_chip(self) -> ChipInstance:
        return ChipInstance(self.chip, self.seed)

    def with_overrides(self, seed=None, preset_name=None, order=None, out=None, n_bits=None) -> "CampaignFile":
        src = json.loads(json.dumps(self.source))
        if seed is not None:
            src["seed"] = seed
        if preset_name is not None:
            src.setdefault("chip", {})["preset"] = preset_name
        if order is not None:
            src.setdefault("trng", {})["order"] = order
        if n_bits is not None:
            src.setdefault("trng", {})["n_bits"] = n_bits
        if out is not None:
            src["out"] = str(out)
        return from_dict(src)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.source))


def _seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {value!r}") from exc
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def _tupled(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def from_dict(d: dict[str, Any]) -> CampaignFile:
    if not isinstance(d, dict):
        raise ConfigError("campaign file must be a JSON object")
    unknown = set(d) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    seed = _seed(d.get("seed", 0))
    chip = chip_from_dict(d.get("chip"))
    campaign = _build(CampaignConfig, None, _tupled(d.get("campaign") or {}), "campaign")
    campaign = replace(campaign, seed=seed)
    discovery = _build(DiscoverySettings, None, d.get("discovery"), "discovery")
    trng = _build(TrngSettings, None, d.get("trng"), "trng")
    costs = _build(LatencyCosts, None, d.get("costs"), "costs")
    if not 1 <= trng.order <= chip.decoder.levels:
        raise ConfigError(f"trng.order must be in 1..{chip.decoder.levels}")
    if trng.n_bits <= 0 or trng.n_bits % 8:
        raise ConfigError("trng.n_bits must be a positive multiple of 8")
    for k in campaign.orders:
        if not 1 <= k <= chip.decoder.levels:
            raise ConfigError(f"campaign order {k} outside 1..{chip.decoder.levels}")
    if not 0 <= discovery.bank < chip.geometry.banks_per_chip:
        raise ConfigError("discovery.bank is not a bank of this chip")
    if any(not 0 <= b < chip.geometry.banks_per_chip for b in trng.banks) or not trng.banks:
        raise ConfigError("trng.banks must name banks of this chip")
    return CampaignFile(chip, campaign, discovery, trng, costs, seed, Path(d.get("out", "results")), d)


def load(path: str | Path | None) -> CampaignFile:
    if path is None:
        return from_dict({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def describe(cfg: CampaignFile) -> dict:
    """Resolved settings, for recording next to results."""
    return {
        "seed": cfg.seed,
        "chip": {"name": cfg.chip.name, "geometry": asdict(cfg.chip.geometry), "analog": asdict(cfg.chip.analog),
                 "timing": asdict(cfg.chip.timing), "remapped": cfg.chip.remap is not None,
                 "simra_enabled": cfg.chip.simra_enabled},
        "campaign": asdict(cfg.campaign),
        "discovery": asdict(cfg.discovery),
        "trng": asdict(cfg.trng),
        "costs": asdict(cfg.costs),
    }
