"""Command-line entry point.

    python -m simra discover     --config run.json
    python -m simra characterize --config run.json --workers 4
    python -m simra trng         --config run.json --order 1 --n-bits 4096
    python -m simra quality      --input results/trng/order1.bin --sequence-len 1000000
    python -m simra report       --config run.json

Results land under the campaign's ``out`` directory (``--out`` overrides).
Every file is written to a temporary sibling and renamed into place, so an
interrupted run never leaves a half-written table behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .characterization import load_records, plan_tasks, run_characterization, save_records
from .discovery import (
    SarCatalog,
    SubarrayMap,
    discover_catalog,
    find_subarray_boundaries,
    initialize_markers,
    save_json,
)
from .engine import CommandEngine
from .errors import ConfigError, SimraError
from .io import atomic_write_bytes, atomic_write_text, write_table
from .presets import PRESETS
from .report import TABLE_HEADER, latency_table, throughput_table, write_figure_tables
from .stattests import bytes_to_bits, evaluate
from .trng import PerfModel, generate, plan, throughput, words_for_bits

log = logging.getLogger("simra")

REPORT_HEADER = "# simra-trng-report v1"
QUALITY_HEADER = "# simra-quality v1"


def _paths(cfg: cfgmod.CampaignFile) -> dict[str, Path]:
    out = cfg.out
    return {
        "config": out / "config.json",
        "subarrays": out / "discovery" / "subarrays.json",
        "catalog": out / "discovery" / "catalog.json",
        "records": out / "characterize" / "records.csv",
        "figures": out / "characterize" / "figures",
        "trng": out / "trng",
        "quality": out / "quality",
        "report": out / "report",
    }


def _record_config(cfg: cfgmod.CampaignFile) -> str:
    text = json.dumps(cfgmod.describe(cfg), indent=1, sort_keys=True) + "\n"
    atomic_write_text(_paths(cfg)["config"], text)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- subcommands -----------------------------------------------------------------

def cmd_discover(cfg: cfgmod.CampaignFile) -> tuple[SubarrayMap, SarCatalog]:
    paths = _paths(cfg)
    _record_config(cfg)
    chip = cfg.make_chip()
    engine = CommandEngine(chip, cfg.costs)
    d = cfg.discovery
    n_rows = d.n_rows or chip.geometry.rows_per_bank
    if not 0 < n_rows <= chip.geometry.rows_per_bank:
        raise ConfigError("discovery.n_rows exceeds the bank")
    initialize_markers(engine, d.bank, range(n_rows))
    smap = find_subarray_boundaries(engine, d.bank, n_rows)
    subs = d.subarrays if d.subarrays is not None else list(range(min(cfg.campaign.subarrays_per_module, len(smap))))
    if any(not 0 <= s < len(smap) for s in subs):
        raise ConfigError(f"discovery.subarrays must lie in 0..{len(smap) - 1}")
    max_groups = d.max_groups or cfg.campaign.sar_groups_per_order
    catalog = discover_catalog(engine, d.bank, smap, subs, cfg.campaign.orders, max_groups)
    save_json(smap, paths["subarrays"])
    save_json(catalog, paths["catalog"])
    print(f"subarrays: {len(smap)}  groups: "
          f"{ {k: sum(len(catalog.of(s, k)) for s in catalog.subarrays) for k in cfg.campaign.orders} }")
    return smap, catalog


def _load_discovery(cfg: cfgmod.CampaignFile) -> tuple[SubarrayMap, SarCatalog]:
    paths = _paths(cfg)
    if not (paths["catalog"].exists() and paths["subarrays"].exists()):
        return cmd_discover(cfg)
    smap = SubarrayMap.from_dict(json.loads(paths["subarrays"].read_text()))
    catalog = SarCatalog.from_dict(json.loads(paths["catalog"].read_text()))
    return smap, catalog


def cmd_characterize(cfg: cfgmod.CampaignFile, workers: int = 1):
    paths = _paths(cfg)
    smap, catalog = _load_discovery(cfg)
    tag = _record_config(cfg)
    chip = cfg.make_chip()
    tasks = plan_tasks(catalog, cfg.campaign)
    ckpt = cfg.out / "characterize" / "checkpoints" / tag
    records = run_characterization(chip, cfg.campaign, catalog, workers, ckpt, tasks)
    save_records(records, paths["records"])
    write_figure_tables(records, paths["figures"], len(smap))
    print(f"records: {len(records)} -> {paths['records']}")
    return records


def _records(cfg: cfgmod.CampaignFile):
    path = _paths(cfg)["records"]
    if not path.exists():
        raise ConfigError(f"{path} not found; run 'characterize' first")
    return load_records(path)


def cmd_trng(cfg: cfgmod.CampaignFile):
    paths = _paths(cfg)
    t = cfg.trng
    p = plan(_records(cfg), t.order, t.banks, t.temperature)
    chip = cfg.make_chip()
    out = generate(chip, p, words_for_bits(t.n_bits), seed=cfg.seed, costs=cfg.costs)
    data = out.to_bytes()[: t.n_bits // 8]
    model = PerfModel.from_costs(cfg.costs)
    rows = [
        ("order", t.order),
        ("rows", 2 ** t.order),
        ("temperature", p.temperature),
        ("words", len(out.words)),
        ("output_bits", len(data) * 8),
        ("raw_bits", out.raw_bits),
        ("entropy_bits", out.entropy_bits),
        ("blocks_needed", p.blocks_needed),
        ("n_block", p.n_block),
        ("rounds", out.rounds),
        ("latency_ns", out.first_word_latency),
        ("total_latency_ns", out.ledger.total),
        ("throughput_gbps", throughput(p, model) / 1e9),
    ]
    for op, ns in out.ledger.breakdown(min(p.banks)).items():
        rows.append((f"latency_{op}_ns", ns))
    atomic_write_bytes(paths["trng"] / f"order{t.order}.bin", data)
    write_table(paths["trng"] / f"order{t.order}_report.csv", REPORT_HEADER, ("key", "value"), rows)
    for k, v in rows:
        print(f"{k:20s} {v:.4f}" if isinstance(v, float) else f"{k:20s} {v}")
    return dict(rows)


def cmd_quality(input_path: Path, out_dir: Path, sequence_len: int, alpha: float):
    try:
        data = Path(input_path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {input_path}: {exc}") from exc
    bits = bytes_to_bits(data)
    if bits.size < sequence_len:
        raise ConfigError(f"{input_path} holds {bits.size} bits, fewer than one {sequence_len}-bit sequence")
    rep = evaluate(bits, sequence_len, alpha)
    write_table(out_dir / "report.csv", QUALITY_HEADER, ("test", "proportion", "uniformity_p", "status"), rep.rows())
    pv_rows = [(i, *row) for i, row in enumerate(rep.pvalues)]
    write_table(out_dir / "pvalues.csv", QUALITY_HEADER, ("sequence", *rep.tests), pv_rows)
    print(rep.summary())
    return rep


def cmd_report(cfg: cfgmod.CampaignFile, throughputs_gbps: list[float] | None = None):
    paths = _paths(cfg)
    model = PerfModel.from_costs(cfg.costs)
    write_table(paths["report"] / "latency.csv", TABLE_HEADER, ("order", "rows", "latency_ns"), latency_table(model))
    if throughputs_gbps:
        thr = {k: g * 1e9 for k, g in enumerate(throughputs_gbps, 1)}
    else:
        records = _records(cfg)
        thr = {}
        for k in sorted({r.order_k for r in records}):
            try:
                thr[k] = throughput(plan(records, k, cfg.trng.banks, cfg.trng.temperature), model)
            except SimraError as exc:
                log.warning("order %d: %s", k, exc)
    if 2 not in thr:
        raise ConfigError("normalization needs a four-row (order 2) throughput")
    rows = throughput_table(thr)
    write_table(paths["report"] / "throughput.csv", TABLE_HEADER,
                ("order", "rows", "throughput_gbps", "normalized_to_4row"), rows)
    for k, n, lat in latency_table(model):
        print(f"order {k} ({n:2d} rows): latency {lat:7.1f} ns")
    for k, n, gbps, ratio in rows:
        print(f"order {k} ({n:2d} rows): {gbps:7.2f} Gbps  {ratio:.2f}x")
    return rows


# -- argument parsing ------------------------------------------------------------

def _positive(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _gbps_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="campaign file (JSON)")
    common.add_argument("--seed", type=int, help="global seed, overrides the file")
    common.add_argument("--preset", choices=PRESETS, help="chip preset, overrides the file")
    common.add_argument("--out", type=Path, help="results directory, overrides the file")
    common.add_argument("--workers", type=_positive, default=os.cpu_count() or 1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="simra", description="SiMRA DRAM TRNG laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("discover", parents=[common], help="find subarrays and SAR groups")
    sub.add_parser("characterize", parents=[common], help="run the entropy campaign")
    p = sub.add_parser("trng", parents=[common], help="generate random bits")
    p.add_argument("--order", type=int, choices=range(1, 6))
    p.add_argument("--n-bits", type=_positive)
    q = sub.add_parser("quality", parents=[common], help="run the statistical tests on a bitstream")
    q.add_argument("--input", type=Path, required=True)
    q.add_argument("--sequence-len", type=_positive, default=1_000_000)
    q.add_argument("--alpha", type=float, default=0.01)
    r = sub.add_parser("report", parents=[common], help="latency and throughput tables")
    r.add_argument("--throughputs", type=_gbps_list, help="Gbps for orders 1..N instead of measured plans")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config).with_overrides(
            seed=args.seed, preset_name=args.preset, out=args.out,
            order=getattr(args, "order", None), n_bits=getattr(args, "n_bits", None))
        if args.command == "discover":
            cmd_discover(cfg)
        elif args.command == "characterize":
            cmd_characterize(cfg, args.workers)
        elif args.command == "trng":
            cmd_trng(cfg)
        elif args.command == "quality":
            if not 0 < args.alpha < 1:
                raise ConfigError("--alpha must lie in (0, 1)")
            cmd_quality(args.input, cfg.out / "quality", args.sequence_len, args.alpha)
        elif args.command == "report":
            cmd_report(cfg, args.throughputs)
    except (SimraError, ValueError, OSError) as exc:
        print(f"simra {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
