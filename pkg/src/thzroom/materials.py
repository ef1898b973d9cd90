"""Angle- and frequency-dependent reflection/scattering responses.

A profile tabulates the normalized received energy fraction E for an
incidence angle, an observation angle (both from the surface normal, in
degrees) and a frequency (GHz). Profiles come either from measurement CSVs
or from parametric Gaussian-lobe descriptions.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigError, MaterialValidationError, OutOfBandError

CSV_HEADER = ("incidence_deg", "observation_deg", "frequency_ghz", "energy_fraction")
DEFAULT_MATERIALS = ("aluminium", "glass", "plastic", "hardboard", "concrete")


@dataclass(frozen=True, eq=False)
class MaterialProfile:
    name: str
    incidence_deg: np.ndarray     # (I,)
    observation_deg: np.ndarray   # (O,)
    frequency_ghz: np.ndarray     # (F,)
    energy: np.ndarray            # (I, O, F)
    kind: str = "measured"

    def __post_init__(self):
        axes = [np.asarray(a, dtype=float) for a in
                (self.incidence_deg, self.observation_deg, self.frequency_ghz)]
        energy = np.asarray(self.energy, dtype=float)
        for label, ax in zip(("incidence", "observation", "frequency"), axes):
            if ax.ndim != 1 or np.any(np.diff(ax) <= 0):
                raise MaterialValidationError(f"{self.name}: {label} axis must be strictly increasing")
            if self.kind == "measured" and len(ax) < 2:
                raise MaterialValidationError(f"{self.name}: measured profiles need >= 2 {label} samples")
        if energy.shape != tuple(len(a) for a in axes):
            raise MaterialValidationError(f"{self.name}: energy grid shape {energy.shape} does not match axes")
        if np.any(~np.isfinite(energy)) or np.any(energy < 0) or np.any(energy > 1):
            raise MaterialValidationError(f"{self.name}: energy fractions must lie in [0, 1]")
        if self.kind not in ("measured", "parametric"):
            raise MaterialValidationError(f"unknown profile kind {self.kind!r}")
        for attr, val in zip(("incidence_deg", "observation_deg", "frequency_ghz"), axes):
            object.__setattr__(self, attr, val)
        object.__setattr__(self, "energy", energy)

    @property
    def frequency_span(self) -> tuple[float, float]:
        return float(self.frequency_ghz[0]), float(self.frequency_ghz[-1])

    def check_band(self, f_ghz) -> None:
        f = np.asarray(f_ghz, dtype=float)
        lo, hi = self.frequency_span
        if np.any(f < lo) or np.any(f > hi):
            raise OutOfBandError(f"{self.name}: frequency outside profile span [{lo:g}, {hi:g}] GHz")

    def interp_angles(self, theta_i, theta_o, node: int) -> np.ndarray:
        """Bilinear interpolation over the angle grid at frequency node ``node``."""
        ti, wi = _bracket(self.incidence_deg, theta_i)
        to, wo = _bracket(self.observation_deg, theta_o)
        e = _padded(self)[..., node]
        return ((1 - wi) * ((1 - wo) * e[ti, to] + wo * e[ti, to + 1])
                + wi * ((1 - wo) * e[ti + 1, to] + wo * e[ti + 1, to + 1]))

    def __call__(self, theta_i, theta_o, f_ghz):
        return energy_fraction(self, theta_i, theta_o, f_ghz)


def _bracket(axis: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
    """Lower grid index and fractional weight for linear interpolation.

    Single-sample axes are handled by returning weight 0 on index 0 (the
    caller's grid then needs a duplicate column, see ``_padded``).
    """
    x = np.asarray(x, dtype=float)
    if len(axis) == 1:
        return np.zeros(x.shape, dtype=np.intp), np.zeros(x.shape)
    x = np.clip(x, axis[0], axis[-1])
    i = np.clip(np.searchsorted(axis, x, side="right") - 1, 0, len(axis) - 2)
    w = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, w


def energy_fraction(profile: MaterialProfile, theta_i, theta_o, f_ghz):
    """Trilinear interpolation of E(theta_i, theta_o, f) on the profile grid.

    Angles must lie in [0, 90] degrees; frequencies outside the profile span
    raise :class:`OutOfBandError` (no extrapolation).
    """
    ti = np.asarray(theta_i, dtype=float)
    to = np.asarray(theta_o, dtype=float)
    if np.any((ti < 0) | (ti > 90)) or np.any((to < 0) | (to > 90)):
        raise ValueError("angles must lie in [0, 90] degrees")
    profile.check_band(f_ghz)
    e = _padded(profile)
    ii, wi = _bracket(profile.incidence_deg, ti)
    io_, wo = _bracket(profile.observation_deg, to)
    fi, wf = _bracket(profile.frequency_ghz, f_ghz)
    ii, wi, io_, wo, fi, wf = np.broadcast_arrays(ii, wi, io_, wo, fi, wf)
    out = np.zeros(ii.shape)
    for di, a in ((0, 1 - wi), (1, wi)):
        for do, b in ((0, 1 - wo), (1, wo)):
            for df, c in ((0, 1 - wf), (1, wf)):
                out = out + a * b * c * e[ii + di, io_ + do, fi + df]
    return float(out) if out.ndim == 0 else out


def _padded(profile: MaterialProfile) -> np.ndarray:
    """Energy grid with singleton axes repeated so i+1 indexing is safe."""
    e = profile.energy
    for axis in range(3):
        if e.shape[axis] == 1:
            e = np.concatenate([e, e], axis=axis)
    return e


# --------------------------------------------------------------------------
# CSV ingestion

def load_profile(source: str | Path | io.TextIOBase, name: str | None = None) -> MaterialProfile:
    """Read a measured profile from CSV.

    The file must have the header ``incidence_deg,observation_deg,
    frequency_ghz,energy_fraction`` and form a complete rectangular grid.
    Problems are reported with the offending 1-based line number.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        with open(path, encoding="utf-8", newline="") as fh:
            return _parse_profile(fh, name or path.stem)
    return _parse_profile(source, name or getattr(source, "name", "profile"))


def _parse_profile(fh, name: str) -> MaterialProfile:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise MaterialValidationError(f"header must be {','.join(CSV_HEADER)}", row=1)
    points: dict[tuple[float, float, float], float] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 4:
            raise MaterialValidationError(f"expected 4 columns, got {len(row)}", row=lineno)
        try:
            ti, to, f, e = (float(x) for x in row)
        except ValueError:
            raise MaterialValidationError(f"non-numeric field in {row!r}", row=lineno) from None
        if not np.isfinite([ti, to, f, e]).all():
            raise MaterialValidationError("non-finite value", row=lineno)
        if not 0.0 <= e <= 1.0:
            raise MaterialValidationError(f"energy_fraction {e} outside [0, 1]", row=lineno)
        if not (0.0 <= ti <= 90.0 and 0.0 <= to <= 90.0):
            raise MaterialValidationError("angles must lie in [0, 90] degrees", row=lineno)
        if f <= 0:
            raise MaterialValidationError("frequency must be > 0", row=lineno)
        key = (ti, to, f)
        if key in points:
            raise MaterialValidationError(f"duplicate grid point {key}", row=lineno)
        points[key] = e
    if not points:
        raise MaterialValidationError("no samples")
    axes = [np.array(sorted({k[i] for k in points})) for i in range(3)]
    shape = tuple(len(a) for a in axes)
    if len(points) != int(np.prod(shape)):
        missing = _first_missing(points, axes)
        raise MaterialValidationError(
            f"non-rectangular grid: {len(points)} samples for a {shape[0]}x{shape[1]}x{shape[2]} grid; "
            f"missing e.g. incidence={missing[0]:g}, observation={missing[1]:g}, frequency={missing[2]:g}"
        )
    index = [{v: j for j, v in enumerate(a)} for a in axes]
    energy = np.empty(shape)
    for (ti, to, f), e in points.items():
        energy[index[0][ti], index[1][to], index[2][f]] = e
    return MaterialProfile(name, *axes, energy, kind="measured")


def _first_missing(points, axes):
    for ti in axes[0]:
        for to in axes[1]:
            for f in axes[2]:
                if (ti, to, f) not in points:
                    return ti, to, f
    raise AssertionError("unreachable")


def write_profile(profile: MaterialProfile, dest: str | Path | io.TextIOBase) -> None:
    """Write a profile in the ingestion CSV schema (LF line endings)."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            _write_profile(profile, fh)
    else:
        _write_profile(profile, dest)


def _write_profile(profile: MaterialProfile, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, ti in enumerate(profile.incidence_deg):
        for j, to in enumerate(profile.observation_deg):
            for k, f in enumerate(profile.frequency_ghz):
                w.writerow((f"{ti:g}", f"{to:g}", f"{f:g}", repr(float(profile.energy[i, j, k]))))


# --------------------------------------------------------------------------
# parametric profiles

@dataclass(frozen=True)
class ParametricLobe:
    """Gaussian specular lobe plus constant diffuse floor at one frequency."""

    frequency_ghz: float
    specular_amplitude: float
    lobe_width: float       # degrees
    diffuse_floor: float

    def __post_init__(self):
        if self.lobe_width <= 0:
            raise ConfigError(f"lobe_width must be > 0 (anchor {self.frequency_ghz} GHz)")
        if self.specular_amplitude < 0 or self.diffuse_floor < 0:
            raise ConfigError("lobe amplitudes must be >= 0")
        if self.specular_amplitude + self.diffuse_floor > 1 + 1e-12:
            raise ConfigError(
                f"specular_amplitude + diffuse_floor must be <= 1 (anchor {self.frequency_ghz} GHz)")

    def evaluate(self, theta_i, theta_o):
        d = (np.asarray(theta_o, dtype=float) - np.asarray(theta_i, dtype=float)) / self.lobe_width
        return self.specular_amplitude * np.exp(-d * d) + self.diffuse_floor


def parametric_profile(name: str, lobes: Sequence[ParametricLobe],
                       angle_step: float = 1.0) -> MaterialProfile:
    """Sample Gaussian-lobe anchors onto a regular angle grid.

    Between anchors the profile interpolates linearly in frequency, exactly
    as measured profiles do.
    """
    lobes = list(lobes)
    if not lobes:
        raise ConfigError(f"{name}: at least one frequency anchor is required")
    freqs = np.array([lb.frequency_ghz for lb in lobes], dtype=float)
    if np.any(np.diff(freqs) <= 0):
        raise ConfigError(f"{name}: anchors must be strictly increasing in frequency")
    angles = np.linspace(0.0, 90.0, int(round(90.0 / angle_step)) + 1)
    ti, to = np.meshgrid(angles, angles, indexing="ij")
    energy = np.stack([lb.evaluate(ti, to) for lb in lobes], axis=-1)
    return MaterialProfile(name, angles, angles, freqs, np.clip(energy, 0.0, 1.0), kind="parametric")


def lobes_from_mapping(spec: Mapping) -> list[ParametricLobe]:
    return [ParametricLobe(float(a["frequency_ghz"]), float(a["specular_amplitude"]),
                           float(a["lobe_width_deg"]), float(a["diffuse_floor"]))
            for a in spec["anchors"]]


def read_material_parameters(source: str | Path | None = None) -> dict:
    """Load the versioned parametric lobe file (bundled one by default)."""
    if source is None:
        text = (resources.files("thzroom") / "data" / "materials.yaml").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise ConfigError("material parameter file must declare version: 1")
    return doc


@lru_cache(maxsize=None)
def default_materials() -> Mapping[str, MaterialProfile]:
    doc = read_material_parameters()
    step = float(doc.get("angle_step_deg", 1.0))
    return {name: parametric_profile(name, lobes_from_mapping(spec), step)
            for name, spec in doc["materials"].items()}


def resolve_materials(names: Iterable[str],
                      library: Mapping[str, MaterialProfile] | None = None) -> dict[str, MaterialProfile]:
    library = default_materials() if library is None else library
    missing = sorted(set(names) - set(library))
    if missing:
        raise ConfigError(f"unknown material(s): {', '.join(missing)}")
    return {n: library[n] for n in names}


# --------------------------------------------------------------------------
# qualitative checks used by `materials validate` and the test-suite

def off_specular_mean(profile: MaterialProfile, theta_i: float, f_ghz: float,
                      min_offset: float = 20.0) -> float:
    """Mean E over observation angles at least ``min_offset`` from specular."""
    to = profile.observation_deg[np.abs(profile.observation_deg - theta_i) >= min_offset]
    return float(np.mean(energy_fraction(profile, theta_i, to, f_ghz)))


def specular_peak_offset(profile: MaterialProfile, theta_i: float, f_ghz: float) -> float:
    """Observation angle of the maximum response minus ``theta_i``."""
    to = profile.observation_deg
    e = energy_fraction(profile, np.full(to.shape, theta_i), to, f_ghz)
    return float(to[int(np.argmax(e))] - theta_i)


def validate_profile(profile: MaterialProfile) -> list[str]:
    """Soft checks on a profile; returns human-readable warnings."""
    warnings = []
    f_hi = float(profile.frequency_ghz[-1])
    peak = energy_fraction(profile, 45.0, 45.0, f_hi)
    off = off_specular_mean(profile, 45.0, f_hi)
    if peak <= off:
        warnings.append(f"{profile.name}: no specular peak at 45 deg / {f_hi:g} GHz")
    return warnings
