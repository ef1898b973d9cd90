"""Command-line front end: ``thzroom pdp|laptop|coverage|materials``.

Exit codes: 0 success, 2 usage error, 3 unreadable input file, 4 invalid
input (bad config or material data), 5 any other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import coverage, laptop_link
from .config import PRESETS, Setup, deep_merge, load_document, setup_from_document
from .errors import ConfigError, MaterialValidationError, ThzRoomError
from .materials import DEFAULT_MATERIALS, default_materials, load_profile, validate_profile, write_profile
from .raytracer import Tracer, build_pdp

EXIT_OK, EXIT_USAGE, EXIT_UNREADABLE, EXIT_INVALID, EXIT_FAILURE = 0, 2, 3, 4, 5
OUT_ENV = "THZROOM_OUT"
log = logging.getLogger("thzroom")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thzroom", description="Indoor THz ray tracing and coverage analysis.")
    p.add_argument("--version", action="version", version=f"thzroom {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", choices=PRESETS, default="ieee")
    common.add_argument("--config", type=Path, help="YAML file merged over the scenario preset")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--segment-size", type=float, help="tessellation size in metres")
    common.add_argument("--max-order", type=int, choices=(0, 1, 2))
    common.add_argument("--freq", type=float, help="centre frequency in GHz")
    common.add_argument("--molecular-noise", action="store_true")
    common.add_argument("--threads", type=int, default=1, help="worker threads (output is unaffected)")
    common.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("pdp", parents=[common], help="power delay profiles of the laptop link")
    lap = sub.add_parser("laptop", parents=[common], help="laptop link budget")
    lap.add_argument("--mode", choices=("los", "nlos"), default="los")
    cov = sub.add_parser("coverage", parents=[common], help="SNR / capacity grid at device height")
    cov.add_argument("--mode", choices=("los", "nlos"), default="los")
    cov.add_argument("--grid-step", type=float)

    mat = sub.add_parser("materials", help="material profile tools")
    msub = mat.add_subparsers(dest="action", required=True)
    val = msub.add_parser("validate", help="ingest and check a material CSV")
    val.add_argument("csv", type=Path)
    exp = msub.add_parser("export", help="write the built-in parametric profiles as CSV")
    exp.add_argument("--out", type=Path)
    return p


def _out_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUT_ENV, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(args) -> dict:
    """Flag-level overrides, in setup-document form."""
    o: dict = {}
    if args.freq is not None:
        o.setdefault("radio", {})["center_frequency_ghz"] = args.freq
    if args.molecular_noise:
        o.setdefault("radio", {})["molecular_noise"] = True
    analysis = {}
    if args.segment_size is not None:
        analysis["segment_size"] = args.segment_size
    if args.max_order is not None:
        analysis["max_order"] = args.max_order
    if getattr(args, "grid_step", None) is not None:
        analysis["grid_step"] = args.grid_step
    if analysis:
        o["analysis"] = analysis
    return o


def _setup(args) -> tuple[Setup, dict]:
    doc = load_document(args.scenario)
    if args.config is not None:
        extra = load_document(args.config) if _has_extends(args.config) else _read_override(args.config)
        doc = deep_merge(doc, extra)
    flags = _overrides(args)
    doc = deep_merge(doc, flags)
    return setup_from_document(doc, name=str(doc.get("name", args.scenario))), flags


def _has_extends(path: Path) -> bool:
    import yaml

    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config file {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return isinstance(doc, dict) and "extends" in doc


def _read_override(path: Path) -> dict:
    import yaml

    doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    doc.pop("version", None)
    return doc


def _write_manifest(out: Path, setup: Setup, args, flags: dict, outputs: list[Path], started: float) -> Path:
    extra = {"command": args.command, "flags": flags}
    manifest = {
        "tool": "thzroom",
        "version": __version__,
        "command": args.command,
        "preset": args.scenario,
        "config_file": str(args.config) if args.config else None,
        "overrides": flags,
        "config_hash": setup.digest(extra),
        "outputs": sorted(p.name for p in outputs),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _freq_label(f: float) -> str:
    return f"{f:g}".replace(".", "p")


def cmd_pdp(args, started: float) -> int:
    setup, flags = _setup(args)
    a = setup.analysis
    freqs = [setup.radio.center_frequency] if args.freq is not None else list(a.pdp_frequencies_ghz)
    out = _out_dir(args)
    scene = setup.scene
    outputs = []
    for f in freqs:
        cfg = setup.radio.with_center(f)
        tracer = Tracer(scene, cfg, segment_size=a.segment_size,
                        second_order_segment_size=a.second_order_segment_size, workers=args.threads)
        paths = tracer.trace(scene.node(a.transmitter), scene.node(a.laptop), a.max_order, a.power_floor_dbm)
        pdp = build_pdp(paths, a.bin_width_ns * 1e-9, f)
        path = out / f"pdp_{setup.name}_{_freq_label(f)}GHz.csv"
        pdp.write_csv(path)
        outputs.append(path)
        log.info("%s: %d paths", path, len(paths))
    _write_manifest(out, setup, args, flags, outputs, started)
    for p in outputs:
        print(p)
    return EXIT_OK


def cmd_laptop(args, started: float) -> int:
    setup, flags = _setup(args)
    a = setup.analysis
    r = laptop_link(setup.scene, setup.radio, args.mode, tx=a.transmitter, rx=a.laptop,
                    max_order=a.max_order, power_floor_dbm=a.power_floor_dbm,
                    segment_size=a.segment_size, second_order_segment_size=a.second_order_segment_size,
                    bin_width=a.bin_width_ns * 1e-9, workers=args.threads)
    summary = {
        "scenario": setup.name,
        "mode": args.mode,
        "center_frequency_ghz": setup.radio.center_frequency,
        "bandwidth_ghz": setup.radio.bandwidth,
        "snr_db": float(f"{r.snr_db:.6g}"),
        "capacity_gbps": float(f"{r.capacity_bps / 1e9:.6g}"),
        "throughput_gbps": float(f"{r.throughput_bps / 1e9:.6g}"),
        "selected_surface": r.selected_path_surface or ("LOS" if r.has_path else None),
        "budget": {k: float(f"{v:.6g}") for k, v in (r.budget or {}).items()},
    }
    out = _out_dir(args)
    path = out / f"laptop_{setup.name}_{args.mode}.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(out, setup, args, flags, [path], started)
    print(f"{setup.name} {args.mode}: SNR {r.snr_db:.2f} dB, capacity {r.capacity_bps / 1e9:.1f} Gbit/s, "
          f"throughput {r.throughput_bps / 1e9:.2f} Gbit/s")
    print(path)
    return EXIT_OK


def cmd_coverage(args, started: float) -> int:
    setup, flags = _setup(args)
    a = setup.analysis
    grid = coverage(setup.scene, setup.radio, args.mode, a.grid_step, height=a.grid_height,
                    tx=a.transmitter, rx=a.mobile, max_order=a.max_order, power_floor_dbm=a.power_floor_dbm,
                    segment_size=a.coverage_segment_size if args.segment_size is None else args.segment_size,
                    second_order_segment_size=a.coverage_second_order_segment_size, workers=args.threads)
    out = _out_dir(args)
    path = out / f"coverage_{setup.name}_{args.mode}.csv"
    grid.write_csv(path)
    _write_manifest(out, setup, args, flags, [path], started)
    print(path)
    return EXIT_OK


def cmd_materials(args, started: float) -> int:
    if args.action == "export":
        out = args.out or Path(os.environ.get(OUT_ENV, "out"))
        out.mkdir(parents=True, exist_ok=True)
        lib = default_materials()
        for name in DEFAULT_MATERIALS:
            path = out / f"material_{name}.csv"
            write_profile(lib[name], path)
            print(path)
        return EXIT_OK
    try:
        profile = load_profile(args.csv)
    except MaterialValidationError as exc:
        raise MaterialValidationError(f"{args.csv}: {exc}") from None
    warnings = validate_profile(profile)
    for w in warnings:
        print(f"{args.csv}: warning: {w}", file=sys.stderr)
    lo, hi = profile.frequency_span
    print(f"{args.csv}: ok ({len(profile.incidence_deg)} x {len(profile.observation_deg)} angles, "
          f"{len(profile.frequency_ghz)} frequencies {lo:g}-{hi:g} GHz)")
    return EXIT_OK


COMMANDS = {"pdp": cmd_pdp, "laptop": cmd_laptop, "coverage": cmd_coverage, "materials": cmd_materials}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.perf_counter()
    try:
        return COMMANDS[args.command](args, started)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"thzroom: error: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    except (MaterialValidationError, ConfigError) as exc:
        print(f"thzroom: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ThzRoomError, ValueError, KeyError) as exc:
        print(f"thzroom: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
