"""Link physics: spreading loss, molecular absorption, antennas, noise and
Shannon capacity.

Frequencies are in GHz at the API surface and converted to Hz internally.
Gains are in dB with the convention that a loss is a negative gain, except
``fspl_db`` and ``absorption_db`` which return positive losses.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, OutOfBandError

SPEED_OF_LIGHT = 299_792_458.0  # m/s
BOLTZMANN = 1.380649e-23  # J/K
GHZ = 1e9
ABSORPTION_HEADER = ("frequency_ghz", "k_per_m")
# 10*log10(e): converts a Beer-Lambert exponent to dB
_DB_PER_NEPER_POWER = 10.0 * math.log10(math.e)


@dataclass(frozen=True)
class AntennaSpec:
    """Sectored (cone) antenna: ``boresight_gain`` inside the cone of
    half-angle ``half_beamwidth`` around boresight, ``floor_gain`` outside."""

    boresight_gain: float = 0.0
    half_beamwidth: float = 180.0
    floor_gain: float = -10.0

    def __post_init__(self):
        if not 0 < self.half_beamwidth <= 180:
            raise ConfigError(f"half_beamwidth must be in (0, 180], got {self.half_beamwidth}")
        if self.boresight_gain < self.floor_gain:
            raise ConfigError("boresight_gain must be >= floor_gain")

    @classmethod
    def isotropic(cls) -> "AntennaSpec":
        return cls(0.0, 180.0, 0.0)


def antenna_gain_db(spec: AntennaSpec, off_boresight):
    """Gain in dBi at ``off_boresight`` degrees (scalar or array)."""
    theta = np.asarray(off_boresight, dtype=float)
    if np.any((theta < 0) | (theta > 180)):
        raise ValueError("off_boresight must lie in [0, 180] degrees")
    gain = np.where(theta <= spec.half_beamwidth, spec.boresight_gain, spec.floor_gain)
    return float(gain) if gain.ndim == 0 else gain


def fspl_db(d, f_ghz):
    """Free-space path loss 20*log10(4*pi*d*f/c) in dB; d in m, f in GHz."""
    d = np.asarray(d, dtype=float)
    f = np.asarray(f_ghz, dtype=float)
    if np.any(d <= 0) or np.any(f <= 0):
        raise ValueError("fspl_db needs d > 0 and f > 0")
    loss = 20.0 * np.log10(4.0 * np.pi * d * f * GHZ / SPEED_OF_LIGHT)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True, eq=False)
class AbsorptionTable:
    """Molecular absorption coefficient k(f) in 1/m, linear in f between samples."""

    frequency_ghz: np.ndarray
    k_per_m: np.ndarray
    source: str = ""

    def __post_init__(self):
        f = np.asarray(self.frequency_ghz, dtype=float)
        k = np.asarray(self.k_per_m, dtype=float)
        if f.ndim != 1 or f.shape != k.shape or len(f) < 2:
            raise ConfigError("absorption table needs >= 2 matching frequency/k samples")
        if np.any(np.diff(f) <= 0):
            raise ConfigError("absorption table frequencies must be strictly increasing")
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise ConfigError("absorption coefficients must be finite and >= 0")
        object.__setattr__(self, "frequency_ghz", f)
        object.__setattr__(self, "k_per_m", k)

    @classmethod
    def constant(cls, k: float, f_min: float = 1.0, f_max: float = 10_000.0) -> "AbsorptionTable":
        return cls(np.array([f_min, f_max]), np.array([k, k]), source=f"constant k={k}")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.frequency_ghz[0]), float(self.frequency_ghz[-1])

    def k(self, f_ghz):
        f = np.asarray(f_ghz, dtype=float)
        lo, hi = self.span
        if np.any(f < lo) or np.any(f > hi):
            raise OutOfBandError(f"frequency outside absorption table span [{lo}, {hi}] GHz")
        k = np.interp(f, self.frequency_ghz, self.k_per_m)
        return float(k) if k.ndim == 0 else k


def load_absorption_table(source: str | Path | io.TextIOBase) -> AbsorptionTable:
    """Parse a ``frequency_ghz,k_per_m`` CSV."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return _parse_absorption(fh, str(source))
    return _parse_absorption(source, getattr(source, "name", "<stream>"))


def _parse_absorption(fh, name: str) -> AbsorptionTable:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != ABSORPTION_HEADER:
        raise ConfigError(f"{name}: header must be {','.join(ABSORPTION_HEADER)}")
    freqs, ks = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            f, k = (float(x) for x in row)
        except ValueError:
            raise ConfigError(f"{name}: row {lineno}: expected two numbers, got {row!r}") from None
        freqs.append(f)
        ks.append(k)
    return AbsorptionTable(np.array(freqs), np.array(ks), source=name)


def default_absorption_table() -> AbsorptionTable:
    """Bundled water-vapour absorption table (0.1-4 THz)."""
    ref = resources.files("thzroom") / "data" / "absorption.csv"
    with ref.open("r", encoding="utf-8", newline="") as fh:
        return _parse_absorption(fh, "absorption.csv")


def absorption_db(d, f_ghz, table: AbsorptionTable):
    """Beer-Lambert loss 10*log10(e)*k(f)*d in dB."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be >= 0")
    loss = _DB_PER_NEPER_POWER * np.asarray(table.k(f_ghz)) * d
    return float(loss) if np.ndim(loss) == 0 else loss


@dataclass(frozen=True)
class RadioConfig:
    center_frequency: float = 300.0   # GHz
    bandwidth: float = 50.0           # GHz
    subband_count: int = 64
    tx_power: float = 0.0             # dBm, total over the band
    noise_figure: float = 10.0        # dB
    temperature: float = 296.0        # K
    mac_efficiency: float = 0.1
    molecular_noise_enabled: bool = False

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be > 0")
        if int(self.subband_count) != self.subband_count or self.subband_count < 1:
            raise ConfigError("subband_count must be a positive integer")
        if not 0 < self.mac_efficiency <= 1:
            raise ConfigError("mac_efficiency must be in (0, 1]")
        if self.center_frequency - self.bandwidth / 2 <= 0:
            raise ConfigError("band must lie above 0 Hz")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0 K")

    @property
    def subband_width_hz(self) -> float:
        return self.bandwidth * GHZ / self.subband_count

    @property
    def subband_centers_ghz(self) -> np.ndarray:
        step = self.bandwidth / self.subband_count
        lo = self.center_frequency - self.bandwidth / 2
        return lo + (np.arange(self.subband_count) + 0.5) * step

    def with_center(self, center_frequency: float) -> "RadioConfig":
        return replace(self, center_frequency=float(center_frequency))


def noise_power_dbm(cfg: RadioConfig, subband_width: float, received_dbm=None,
                    molecular_factor=None):
    """Noise power in dBm over ``subband_width`` Hz.

    Thermal floor kTB plus noise figure. With ``cfg.molecular_noise_enabled``
    the caller supplies the received power and the absorbed fraction
    ``molecular_factor`` = 1 - exp(-k(f) d) of the path; the re-emitted
    power ``molecular_factor * P_rx`` is added in the linear domain.
    """
    if np.any(np.asarray(subband_width) <= 0):
        raise ValueError("subband_width must be > 0")
    thermal = 10.0 * np.log10(BOLTZMANN * cfg.temperature * np.asarray(subband_width, dtype=float) * 1000.0)
    noise = thermal + cfg.noise_figure
    if cfg.molecular_noise_enabled:
        if received_dbm is None:
            raise ValueError("molecular noise is enabled but no received power was given")
        beta = np.asarray(0.0 if molecular_factor is None else molecular_factor, dtype=float)
        if np.any((beta < 0) | (beta > 1)):
            raise ValueError("molecular_factor must be in [0, 1]")
        noise = 10.0 * np.log10(10.0 ** (noise / 10.0) + beta * 10.0 ** (np.asarray(received_dbm) / 10.0))
    return float(noise) if np.ndim(noise) == 0 else noise


def shannon_capacity_bps(cfg: RadioConfig, snr_per_subband: Sequence[float]) -> float:
    """Sum over subbands of (B/S) * log2(1 + SNR_i); SNRs are linear."""
    snr = np.asarray(snr_per_subband, dtype=float)
    if snr.shape != (cfg.subband_count,):
        raise ValueError(f"expected {cfg.subband_count} subband SNRs, got shape {snr.shape}")
    if np.any(snr < 0):
        raise ValueError("SNR must be >= 0 (linear)")
    return float(cfg.subband_width_hz * np.sum(np.log2(1.0 + snr)))


def throughput_bps(cfg: RadioConfig, capacity: float) -> float:
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    return cfg.mac_efficiency * capacity


def wavelength_m(f_ghz):
    return SPEED_OF_LIGHT / (np.asarray(f_ghz, dtype=float) * GHZ)
