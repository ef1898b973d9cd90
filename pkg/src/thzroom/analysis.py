"""Link budgets and SNR / capacity coverage maps."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .materials import MaterialProfile
from .propagation import BOLTZMANN, AbsorptionTable, RadioConfig
from .raytracer import (
    DEFAULT_BIN_WIDTH, DEFAULT_POWER_FLOOR_DBM, DEFAULT_SECOND_ORDER_SEGMENT_SIZE, DEFAULT_SEGMENT_SIZE,
    PathSet, PowerDelayProfile, PropagationPath, Tracer, _groups, build_pdp,
)
from .scene import Scene

MODES = ("los", "nlos")
COVERAGE_HEADER = ("x_m", "y_m", "snr_db", "capacity_gbps", "throughput_gbps", "mode", "selected_surface")
DEFAULT_GRID_STEP = 0.1
DEFAULT_HEIGHT = 1.0
# coverage traces thousands of links, so it tessellates more coarsely than
# the single laptop link; per-surface refinement is a near-field aid only
COVERAGE_SEGMENT_SIZE = 0.1
COVERAGE_SECOND_ORDER_SEGMENT_SIZE = 1.0


@dataclass(frozen=True)
class CellResult:
    snr_db: float
    capacity_bps: float
    throughput_bps: float
    mode: str
    selected_path_surface: str | None = None   # None: LoS selected or no path
    has_path: bool = True

    @classmethod
    def empty(cls, mode: str) -> "CellResult":
        return cls(-math.inf, 0.0, 0.0, mode, None, False)


def _noise_mw(cfg: RadioConfig) -> float:
    """Thermal noise plus noise figure in one subband, mW."""
    return BOLTZMANN * cfg.temperature * cfg.subband_width_hz * 1000.0 * 10.0 ** (cfg.noise_figure / 10.0)


def link_metrics(cfg: RadioConfig, gain_lin: np.ndarray, length: float, k_per_m: np.ndarray):
    """(snr_db, capacity_bps, per-subband snr) for one path's linear gains.

    The transmit power is split evenly across subbands. The reported SNR is
    total signal over total noise across the band.
    """
    signal = 10.0 ** (cfg.tx_power / 10.0) / cfg.subband_count * np.asarray(gain_lin, dtype=float)
    noise = np.full(cfg.subband_count, _noise_mw(cfg))
    if cfg.molecular_noise_enabled:
        noise = noise + (1.0 - np.exp(-np.asarray(k_per_m) * length)) * signal
    snr = signal / noise
    total = signal.sum() / noise.sum()
    snr_db = 10.0 * math.log10(total) if total > 0 else -math.inf
    capacity = float(cfg.subband_width_hz * np.sum(np.log2(1.0 + snr)))
    return snr_db, capacity, snr


def _cell_from(cfg: RadioConfig, ps: PathSet, i: int, mode: str, k: np.ndarray) -> CellResult:
    snr_db, cap, _ = link_metrics(cfg, ps.gain_lin[i], float(ps.length[i]), k)
    s = int(ps.surf[i, 0])
    label = None if s < 0 else ps.surface_ids[s]
    return CellResult(snr_db, cap, cfg.mac_efficiency * cap, mode, label)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")


def _select(groups: PathSet, mode: str) -> int | None:
    """Index into ``groups`` of the best candidate for ``mode``."""
    idx = np.arange(len(groups))
    if mode == "nlos":
        idx = idx[groups.order > 0]
    if idx.size == 0:
        return None
    sub = groups.take(idx)
    keys = sub.sort_keys()[2:4] + [sub.delay, -sub.total_gain]
    return int(idx[np.lexsort(keys)[0]])


@dataclass(frozen=True, eq=False)
class LinkResult(CellResult):
    """A :class:`CellResult` for a fixed node pair plus the full trace."""

    paths: PathSet | None = None
    groups: PathSet | None = None
    selected: PropagationPath | None = None
    pdp: PowerDelayProfile | None = None
    budget: Mapping[str, float] | None = None


def laptop_link(scene: Scene, cfg: RadioConfig, mode: str = "los", *, tx: str = "plug", rx: str = "laptop",
                max_order: int = 2, power_floor_dbm: float = DEFAULT_POWER_FLOOR_DBM,
                segment_size: float = DEFAULT_SEGMENT_SIZE,
                second_order_segment_size: float = DEFAULT_SECOND_ORDER_SEGMENT_SIZE,
                bin_width: float = DEFAULT_BIN_WIDTH,
                materials: Mapping[str, MaterialProfile] | None = None,
                absorption: AbsorptionTable | None = None, workers: int = 1) -> LinkResult:
    """Trace the fixed plug-to-device link and evaluate its budget."""
    _check_mode(mode)
    try:
        tx_node, rx_node = scene.node(tx), scene.node(rx)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    tracer = Tracer(scene, cfg, materials, absorption, segment_size, second_order_segment_size, workers)
    paths = tracer.trace(tx_node, rx_node, max_order, power_floor_dbm)
    pdp = build_pdp(paths, bin_width, cfg.center_frequency) if len(paths) else None
    if not len(paths):
        return LinkResult(-math.inf, 0.0, 0.0, mode, None, False, paths, paths, None, None, {})
    groups = _groups(paths, tx_node.antenna, rx_node.antenna)
    i = _select(groups, mode)
    if i is None:
        return LinkResult(-math.inf, 0.0, 0.0, mode, None, False, paths, groups, None, pdp, {})
    cell = _cell_from(cfg, groups, i, mode, tracer.k)
    chosen = groups[i]
    distance = float(np.linalg.norm(np.asarray(rx_node.position) - np.asarray(tx_node.position)))
    budget = {
        "tx_power_dbm": cfg.tx_power,
        "distance_m": distance,
        "path_length_m": chosen.length,
        "received_power_dbm": chosen.received_power_dbm,
        "noise_power_dbm": 10.0 * math.log10(_noise_mw(cfg) * cfg.subband_count),
        "tx_boresight_gain_dbi": tx_node.antenna.boresight_gain,
        "rx_boresight_gain_dbi": rx_node.antenna.boresight_gain,
        "path_count": float(len(paths)),
    }
    return LinkResult(cell.snr_db, cell.capacity_bps, cell.throughput_bps, mode,
                      cell.selected_path_surface, True, paths, groups, chosen, pdp, budget)


# --------------------------------------------------------------------------
# coverage

@dataclass(frozen=True, eq=False)
class CoverageGrid:
    """Per-cell results on the horizontal slice z = ``height``.

    Arrays are indexed [iy, ix]; cell (ix, iy) sits at
    ``origin + (ix, iy) * step``.
    """

    origin: tuple[float, float]
    step: float
    height: float
    mode: str
    snr_db: np.ndarray
    capacity_bps: np.ndarray
    throughput_bps: np.ndarray
    selected_surface: np.ndarray   # object array of str | None
    has_path: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.snr_db.shape

    @property
    def xs(self) -> np.ndarray:
        return _coords(self.origin[0], self.step, self.shape[1])

    @property
    def ys(self) -> np.ndarray:
        return _coords(self.origin[1], self.step, self.shape[0])

    def cell(self, ix: int, iy: int) -> CellResult:
        return CellResult(float(self.snr_db[iy, ix]), float(self.capacity_bps[iy, ix]),
                          float(self.throughput_bps[iy, ix]), self.mode,
                          self.selected_surface[iy, ix], bool(self.has_path[iy, ix]))

    @property
    def cells(self) -> list[list[CellResult]]:
        return [[self.cell(ix, iy) for ix in range(self.shape[1])] for iy in range(self.shape[0])]

    def horizontal_distance(self, point) -> np.ndarray:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.hypot(gx - point[0], gy - point[1])

    def write_csv(self, dest: str | Path | io.TextIOBase) -> None:
        if isinstance(dest, (str, Path)):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                self._write(fh)
        else:
            self._write(dest)

    def _write(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COVERAGE_HEADER)
        xs, ys = self.xs, self.ys
        for iy in range(self.shape[0]):
            for ix in range(self.shape[1]):
                snr = self.snr_db[iy, ix]
                sel = self.selected_surface[iy, ix]
                if sel is None:
                    sel = "LOS" if self.has_path[iy, ix] else ""
                w.writerow((f"{xs[ix]:.6g}", f"{ys[iy]:.6g}", "-inf" if snr == -math.inf else f"{snr:.6g}",
                            f"{self.capacity_bps[iy, ix] / 1e9:.6g}", f"{self.throughput_bps[iy, ix] / 1e9:.6g}",
                            self.mode, sel))


def _coords(origin: float, step: float, n: int) -> np.ndarray:
    return np.round(origin + np.arange(n) * step, 9)


def grid_axes(scene: Scene, step: float, origin: tuple[float, float] | None = None):
    if not step > 0:
        raise ConfigError("grid step must be > 0")
    if origin is None:
        origin = (step / 2.0, step / 2.0)
    w, d = scene.room_dims[0], scene.room_dims[1]
    nx = int(math.floor((w - origin[0]) / step + 1e-9)) + 1
    ny = int(math.floor((d - origin[1]) / step + 1e-9)) + 1
    xs, ys = _coords(origin[0], step, nx), _coords(origin[1], step, ny)
    return (float(origin[0]), float(origin[1])), xs[xs <= w], ys[ys <= d]


def coverage(scene: Scene, cfg: RadioConfig, mode: str = "los", step: float = DEFAULT_GRID_STEP, *,
             height: float = DEFAULT_HEIGHT, origin: tuple[float, float] | None = None,
             tx: str = "plug", rx: str = "mobile", max_order: int = 2,
             power_floor_dbm: float = DEFAULT_POWER_FLOOR_DBM,
             segment_size: float = COVERAGE_SEGMENT_SIZE,
             second_order_segment_size: float = COVERAGE_SECOND_ORDER_SEGMENT_SIZE,
             refine: bool = False,
             materials: Mapping[str, MaterialProfile] | None = None,
             absorption: AbsorptionTable | None = None, workers: int = 1,
             tracer: Tracer | None = None) -> CoverageGrid:
    """SNR / capacity of the best path (per ``mode``) from ``tx`` to every cell.

    The ``rx`` node's antenna is carried to each cell centre at ``height``.
    ``los`` picks the best of LoS and reflected path groups, ``nlos``
    discards the LoS path only. Cells without any path get SNR -inf and
    zero capacity.
    """
    _check_mode(mode)
    try:
        tx_node, rx_proto = scene.node(tx), scene.node(rx)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    if not 0 <= height <= scene.room_dims[2]:
        raise ConfigError("grid height outside the room")
    origin, xs, ys = grid_axes(scene, step, origin)
    if tracer is None:
        tracer = Tracer(scene, cfg, materials, absorption, segment_size, second_order_segment_size,
                        refine=refine)
    # warm shared caches before any worker touches them
    tracer.seg1, tracer.seg2
    if max_order >= 2:
        tracer._pair_table()
    points = [(x, y) for y in ys for x in xs]

    def run(p):
        rx_node = rx_proto.moved((p[0], p[1], height))
        groups = tracer.group_gains(tx_node, rx_node, max_order, power_floor_dbm)
        i = _select(groups, mode) if len(groups) else None
        return CellResult.empty(mode) if i is None else _cell_from(cfg, groups, i, mode, tracer.k)

    workers = max(1, int(workers))
    if workers == 1:
        results = [run(p) for p in points]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, points))
    shape = (len(ys), len(xs))
    sel = np.empty(len(results), dtype=object)
    sel[:] = [r.selected_path_surface for r in results]
    return CoverageGrid(
        origin, float(step), float(height), mode,
        np.array([r.snr_db for r in results]).reshape(shape),
        np.array([r.capacity_bps for r in results]).reshape(shape),
        np.array([r.throughput_bps for r in results]).reshape(shape),
        sel.reshape(shape),
        np.array([r.has_path for r in results]).reshape(shape),
    )
