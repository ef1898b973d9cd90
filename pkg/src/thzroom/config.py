"""YAML setup files: scene geometry, radio parameters, antennas and analysis
settings.

A setup file is a mapping with ``version: 1``. It may name a parent with
``extends: <preset or path>``; the child is deep-merged over the parent
(mappings merge key by key, everything else is replaced). The bundled
presets live in ``thzroom/data/presets``. See the README for the key set.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .propagation import AntennaSpec, RadioConfig
from .scene import Node, Obstacle, Scene, Surface

SETUP_VERSION = 1
PRESETS = ("ieee", "thz")


@dataclass(frozen=True)
class AnalysisSettings:
    segment_size: float = 0.05
    second_order_segment_size: float = 0.5
    coverage_segment_size: float = 0.1
    coverage_second_order_segment_size: float = 1.0
    max_order: int = 2
    power_floor_dbm: float = -180.0
    grid_step: float = 0.1
    grid_height: float = 1.0
    bin_width_ns: float = 0.1
    pdp_frequencies_ghz: tuple[float, ...] = (300.0, 1000.0, 3000.0)
    transmitter: str = "plug"
    laptop: str = "laptop"
    mobile: str = "mobile"


@dataclass(frozen=True, eq=False)
class Setup:
    name: str
    scene: Scene
    radio: RadioConfig
    analysis: AnalysisSettings
    document: dict

    def digest(self, extra: Mapping | None = None) -> str:
        """sha256 over the canonical (merged) document plus ``extra``."""
        payload = {"setup": self.document, "extra": dict(extra or {})}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def deep_merge(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _preset_text(name: str) -> str:
    ref = resources.files("thzroom") / "data" / "presets" / f"{name}.yaml"
    if not ref.is_file():
        raise ConfigError(f"unknown preset {name!r} (known: {', '.join(PRESETS)})")
    return ref.read_text(encoding="utf-8")


def _read_document(source: str | Path, seen: tuple = ()) -> dict:
    """Load a preset name or a path, resolving ``extends`` chains."""
    if isinstance(source, str) and "/" not in source and not source.endswith((".yaml", ".yml")):
        label, text = f"preset:{source}", _preset_text(source)
    else:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise FileNotFoundError(f"cannot read setup file {path}: {exc.strerror}") from exc
        label = str(path.resolve())
    if label in seen:
        raise ConfigError(f"circular 'extends' chain at {label}")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{label}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{label}: top level must be a mapping")
    if doc.get("version") != SETUP_VERSION:
        raise ConfigError(f"{label}: unsupported or missing version (expected {SETUP_VERSION})")
    parent = doc.pop("extends", None)
    if parent is not None:
        doc = deep_merge(_read_document(parent, seen + (label,)), doc)
    return doc


def load_document(source: str | Path, overrides: Mapping | None = None) -> dict:
    doc = _read_document(source)
    if overrides:
        doc = deep_merge(doc, overrides)
    return doc


def load_setup(source: str | Path = "ieee", overrides: Mapping | None = None) -> Setup:
    """Build a :class:`Setup` from a preset name or a YAML file path."""
    doc = load_document(source, overrides)
    return setup_from_document(doc, name=str(doc.get("name", source)))


def _req(mapping: Mapping, key: str, where: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"{where}: missing key {key!r}")
    return mapping[key]


def _antenna(spec: Mapping, where: str) -> AntennaSpec:
    try:
        return AntennaSpec(float(spec.get("boresight_gain_dbi", 0.0)),
                           float(spec.get("half_beamwidth_deg", 180.0)),
                           float(spec.get("floor_gain_dbi", -10.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def radio_from_mapping(spec: Mapping) -> RadioConfig:
    return RadioConfig(
        center_frequency=float(spec.get("center_frequency_ghz", 300.0)),
        bandwidth=float(spec.get("bandwidth_ghz", 50.0)),
        subband_count=int(spec.get("subband_count", 64)),
        tx_power=float(spec.get("tx_power_dbm", 0.0)),
        noise_figure=float(spec.get("noise_figure_db", 10.0)),
        temperature=float(spec.get("temperature_k", 296.0)),
        mac_efficiency=float(spec.get("mac_efficiency", 0.1)),
        molecular_noise_enabled=bool(spec.get("molecular_noise", False)),
    )


def setup_from_document(doc: Mapping, name: str = "") -> Setup:
    try:
        return _build(doc, name)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"setup {name!r}: {exc}") from None


def _build(doc: Mapping, name: str) -> Setup:
    antennas = {k: _antenna(v, f"antennas.{k}") for k, v in (doc.get("antennas") or {}).items()}
    surfaces = []
    for i, s in enumerate(doc.get("surfaces") or []):
        where = f"surfaces[{i}]"
        size = s.get("segment_size")
        surfaces.append(Surface(
            id=str(_req(s, "id", where)), corner=_req(s, "corner", where),
            edge_u=_req(s, "edge_u", where), edge_v=_req(s, "edge_v", where),
            material=str(_req(s, "material", where)), name=str(s.get("name", "")),
            segment_size=None if size is None else float(size),
        ))
    obstacles = [Obstacle(_req(o, "min", f"obstacles[{i}]"), _req(o, "max", f"obstacles[{i}]"),
                          str(o.get("label", "")))
                 for i, o in enumerate(doc.get("obstacles") or [])]
    nodes = []
    for i, n in enumerate(doc.get("nodes") or []):
        where = f"nodes[{i}]"
        ant = n.get("antenna", "isotropic")
        if isinstance(ant, Mapping):
            spec = _antenna(ant, where)
        elif ant == "isotropic":
            spec = AntennaSpec.isotropic()
        elif ant in antennas:
            spec = antennas[ant]
        else:
            raise ConfigError(f"{where}: unknown antenna {ant!r}")
        nodes.append(Node(str(_req(n, "name", where)), _req(n, "position", where), spec,
                          str(n.get("role", "receiver"))))
    room = doc.get("room") or {}
    scene = Scene(tuple(room.get("dims", (6.0, 4.0, 3.0))), tuple(surfaces), tuple(obstacles),
                  tuple(nodes), name=name)
    a = dict(doc.get("analysis") or {})
    if "pdp_frequencies_ghz" in a:
        a["pdp_frequencies_ghz"] = tuple(float(f) for f in a["pdp_frequencies_ghz"])
    unknown = set(a) - set(AnalysisSettings.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"analysis: unknown key(s) {', '.join(sorted(unknown))}")
    analysis = AnalysisSettings(**a)
    if analysis.max_order not in (0, 1, 2):
        raise ConfigError("analysis.max_order must be 0, 1 or 2")
    if analysis.segment_size <= 0 or analysis.grid_step <= 0 or analysis.bin_width_ns <= 0:
        raise ConfigError("analysis sizes and steps must be > 0")
    return Setup(name, scene, radio_from_mapping(doc.get("radio") or {}), analysis, dict(doc))
