"""Path enumeration over tessellated surfaces and power delay profiles.

Paths are the line-of-sight ray plus first- and second-order interactions
through segment point re-radiators (see :mod:`thzroom.reradiation`). For
speed, a traced set of paths is kept as a :class:`PathSet` (struct of
arrays); indexing it yields :class:`PropagationPath` objects.
"""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, NoPathError
from .materials import MaterialProfile, resolve_materials
from .propagation import (
    SPEED_OF_LIGHT, AbsorptionTable, AntennaSpec, RadioConfig, default_absorption_table, wavelength_m,
)
from .reradiation import kernel_for
from .scene import Node, Scene, Vec3, occluded_mask

DEFAULT_SEGMENT_SIZE = 0.05
DEFAULT_SECOND_ORDER_SEGMENT_SIZE = 0.5
DEFAULT_POWER_FLOOR_DBM = -180.0
DEFAULT_BIN_WIDTH = 0.1e-9
PDP_HEADER = ("delay_ns", "surface", "power_dbm")
# fixed work-unit size so results never depend on the worker count
_CHUNK = 16384


@dataclass(frozen=True, eq=False)
class PathGainSpectrum:
    gain_db: np.ndarray   # per subband, antennas included
    delay: float


@dataclass(frozen=True, eq=False)
class PropagationPath:
    hops: tuple[Vec3, ...]
    surface_trace: tuple[str, ...]
    length: float
    delay: float
    gain: PathGainSpectrum
    tx_power_dbm: float = 0.0

    @property
    def order(self) -> int:
        return len(self.surface_trace)

    @property
    def is_los(self) -> bool:
        return not self.surface_trace

    @property
    def total_gain(self) -> float:
        """Sum of linear subband gains (the best-path ranking key)."""
        return float(np.sum(10.0 ** (self.gain.gain_db / 10.0)))

    @property
    def received_power_dbm(self) -> float:
        mean = np.mean(10.0 ** (self.gain.gain_db / 10.0))
        return self.tx_power_dbm + 10.0 * math.log10(mean) if mean > 0 else -math.inf


def _unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(v, axis=-1)
    return v / norm[..., None], norm


def _angle_deg(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.degrees(np.arccos(np.clip(np.einsum("...i,...i->...", u, v), -1.0, 1.0)))


def _antenna_lin(spec: AntennaSpec, directions: np.ndarray, boresight: np.ndarray) -> np.ndarray:
    inside = _angle_deg(directions, boresight) <= spec.half_beamwidth
    return np.where(inside, 10.0 ** (spec.boresight_gain / 10.0), 10.0 ** (spec.floor_gain / 10.0))


@dataclass(frozen=True, eq=False)
class PathSet(Sequence):
    """Paths between one transmitter and one receiver, as parallel arrays.

    ``surf`` and ``points`` hold up to two interactions per path (-1 / NaN
    when unused). ``prop_lin`` is the per-subband power gain without
    antennas and ``antenna_lin`` the product of both antenna gains.
    """

    surface_ids: tuple[str, ...]
    tx: np.ndarray
    rx: np.ndarray
    surf: np.ndarray          # (n, 2) int
    segment: np.ndarray       # (n, 2) int, tessellation indices (tie-breaking)
    points: np.ndarray        # (n, 2, 3)
    length: np.ndarray        # (n,)
    prop_lin: np.ndarray      # (n, S)
    antenna_lin: np.ndarray   # (n,)
    tx_power_dbm: float = 0.0
    frequencies_ghz: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.length)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        k = int(self.order[i])
        hops = (Vec3(*self.tx),) + tuple(Vec3(*p) for p in self.points[i, :k]) + (Vec3(*self.rx),)
        trace = tuple(self.surface_ids[s] for s in self.surf[i, :k])
        with np.errstate(divide="ignore"):
            gain_db = 10.0 * np.log10(self.gain_lin[i])
        delay = float(self.delay[i])
        return PropagationPath(hops, trace, float(self.length[i]), delay,
                               PathGainSpectrum(gain_db, delay), self.tx_power_dbm)

    @property
    def order(self) -> np.ndarray:
        return np.count_nonzero(self.surf >= 0, axis=1)

    @property
    def delay(self) -> np.ndarray:
        return self.length / SPEED_OF_LIGHT

    @property
    def gain_lin(self) -> np.ndarray:
        return self.prop_lin * self.antenna_lin[:, None]

    @property
    def total_gain(self) -> np.ndarray:
        return self.gain_lin.sum(axis=1)

    @property
    def received_power_mw(self) -> np.ndarray:
        return 10.0 ** (self.tx_power_dbm / 10.0) * self.gain_lin.mean(axis=1)

    @property
    def first_surface(self) -> np.ndarray:
        return self.surf[:, 0]

    def departure(self) -> np.ndarray:
        first = np.where(self.surf[:, :1] >= 0, self.points[:, 0], self.rx)
        return _unit(first - self.tx)[0]

    def arrival(self) -> np.ndarray:
        k = self.order
        last = self.points[np.arange(len(self)), np.maximum(k - 1, 0)]
        last = np.where((k > 0)[:, None], last, self.tx)
        return _unit(last - self.rx)[0]

    def take(self, index) -> "PathSet":
        index = np.asarray(index)
        return PathSet(self.surface_ids, self.tx, self.rx, self.surf[index], self.segment[index],
                       self.points[index], self.length[index], self.prop_lin[index],
                       self.antenna_lin[index], self.tx_power_dbm, self.frequencies_ghz)

    def sort_keys(self) -> list[np.ndarray]:
        """Keys for np.lexsort giving (delay, surface_trace, segments) order."""
        return _order_keys(self.surface_ids, self.surf, self.segment, self.length)

    def sorted(self) -> "PathSet":
        return self.take(np.lexsort(self.sort_keys()))

    @classmethod
    def from_paths(cls, paths: Iterable[PropagationPath]) -> "PathSet":
        paths = list(paths)
        if not paths:
            raise NoPathError("no paths")
        ids = sorted({s for p in paths for s in p.surface_trace})
        n = len(paths)
        surf = np.full((n, 2), -1, dtype=np.int64)
        points = np.full((n, 2, 3), np.nan)
        for i, p in enumerate(paths):
            if p.order > 2:
                raise ConfigError("paths with more than two interactions are not supported")
            for j, s in enumerate(p.surface_trace):
                surf[i, j] = ids.index(s)
                points[i, j] = p.hops[j + 1]
        gain = np.array([10.0 ** (p.gain.gain_db / 10.0) for p in paths])
        return cls(tuple(ids), np.asarray(paths[0].hops[0], float), np.asarray(paths[0].hops[-1], float),
                   surf, np.full((n, 2), -1, dtype=np.int64), points,
                   np.array([p.length for p in paths]), gain, np.ones(n), paths[0].tx_power_dbm)


def _id_ranks(ids: Sequence[str]) -> np.ndarray:
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids))
    return rank


def _as_pathset(paths) -> PathSet:
    return paths if isinstance(paths, PathSet) else PathSet.from_paths(paths)


# --------------------------------------------------------------------------
# tracer

@dataclass
class _Raw:
    """Unsorted, unpruned tracing output.

    A path's propagation gain at subband s is
    ``sum_c coef[c] * basis[cls][s, c] * exp(-k_s * length)``, where the
    basis of each material (or material pair) class folds in the
    wavelength-dependent spreading and the frequency interpolation of the
    re-radiation kernel.
    """

    surf: np.ndarray
    segment: np.ndarray
    points: np.ndarray
    length: np.ndarray
    coef: np.ndarray
    cls: np.ndarray

    @classmethod
    def concat(cls, parts: list["_Raw"], terms: int) -> "_Raw":
        if not parts:
            return cls(np.zeros((0, 2), np.int64), np.zeros((0, 2), np.int64), np.zeros((0, 2, 3)),
                       np.zeros(0), np.zeros((0, terms)), np.zeros(0, np.int64))
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("surf", "segment", "points", "length", "coef", "cls")))

    def take(self, index) -> "_Raw":
        return _Raw(self.surf[index], self.segment[index], self.points[index], self.length[index],
                    self.coef[index], self.cls[index])

    def departure(self, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
        first = np.where(self.surf[:, :1] >= 0, self.points[:, 0], rx)
        return _unit(first - tx)[0]

    def arrival(self, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
        k = np.count_nonzero(self.surf >= 0, axis=1)
        last = self.points[np.arange(len(k)), np.maximum(k - 1, 0)]
        last = np.where((k > 0)[:, None], last, tx)
        return _unit(last - rx)[0]


def _order_keys(surface_ids: Sequence[str], surf: np.ndarray, segment: np.ndarray,
                length: np.ndarray) -> list[np.ndarray]:
    """np.lexsort keys for (delay, surface_trace, segment) order."""
    rank = np.r_[_id_ranks(surface_ids), -1]
    r = np.where(surf >= 0, rank[surf], -1)
    return [segment[:, 1], segment[:, 0], r[:, 1], r[:, 0], length / SPEED_OF_LIGHT]


class Tracer:
    """Reusable tracing context for one scene and radio configuration.

    Holds the tessellations, per-material re-radiation kernels, the
    per-class subband bases and the segment-to-segment visibility used by
    second-order paths. First-order paths use ``segment_size`` (refined per
    surface where the scene asks for it); second-order paths use the
    coarser ``second_order_segment_size`` everywhere. ``refine=False``
    ignores the per-surface refinement.
    """

    def __init__(self, scene: Scene, cfg: RadioConfig,
                 materials: Mapping[str, MaterialProfile] | None = None,
                 absorption: AbsorptionTable | None = None,
                 segment_size: float = DEFAULT_SEGMENT_SIZE,
                 second_order_segment_size: float = DEFAULT_SECOND_ORDER_SEGMENT_SIZE,
                 workers: int = 1, refine: bool = True):
        self.scene = scene
        self.cfg = cfg
        self.workers = max(1, int(workers))
        self.surface_ids = tuple(scene.surface_ids)
        self.freqs = cfg.subband_centers_ghz
        absorption = default_absorption_table() if absorption is None else absorption
        self.k = np.asarray(absorption.k(self.freqs), dtype=float)
        spectral = wavelength_m(self.freqs) ** 2 / (16.0 * np.pi ** 2)
        names = sorted({s.material for s in scene.surfaces})
        profiles = resolve_materials(names, materials)
        self.kernels = [kernel_for(profiles[n]) for n in names]
        weights = [k.node_weights(self.freqs) for k in self.kernels]
        self.nodes = [w[0] for w in weights]
        self.surface_material = np.array([names.index(s.material) for s in scene.surfaces], dtype=np.int64)
        m = len(names)
        kmax = max([len(n) for n in self.nodes], default=1)
        self.kmax = kmax
        self.terms = kmax * kmax
        bases = np.zeros((1 + m + m * m, len(self.freqs), self.terms))
        bases[0, :, 0] = spectral
        for a, (_, w) in enumerate(weights):
            bases[1 + a, :, :w.shape[1]] = spectral[:, None] * w
            for b, (_, w2) in enumerate(weights):
                for i in range(w.shape[1]):
                    for j in range(w2.shape[1]):
                        bases[1 + m + a * m + b, :, i * kmax + j] = spectral * w[:, i] * w2[:, j]
        self.bases = bases
        self.seg1 = scene.segments(segment_size, refine)
        self.seg2 = scene.segments(second_order_segment_size, refine=False)
        self._pairs = None

    # -- helpers -------------------------------------------------------------

    def _map(self, fn, n: int):
        starts = list(range(0, n, _CHUNK))
        if self.workers == 1 or len(starts) <= 1:
            return [fn(s, min(s + _CHUNK, n)) for s in starts]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(lambda s: fn(s, min(s + _CHUNK, n)), starts))

    def _brdf_nodes(self, surf_idx, theta_i, theta_o, delta) -> np.ndarray:
        """Kernel f (1/sr) at each surface material's nodes, zero-padded to (n, kmax)."""
        out = np.zeros((len(surf_idx), self.kmax))
        mat = self.surface_material[surf_idx]
        for m, kernel in enumerate(self.kernels):
            rows = np.nonzero(mat == m)[0]
            if rows.size:
                nodes = self.nodes[m]
                out[rows, :len(nodes)] = kernel.brdf(theta_i[rows], theta_o[rows], delta[rows], nodes)
        return out

    def spectra(self, raw: _Raw) -> np.ndarray:
        """Per-subband propagation gain, shape (n, S)."""
        out = np.empty((len(raw.length), len(self.freqs)))
        for c in np.unique(raw.cls):
            rows = np.nonzero(raw.cls == c)[0]
            out[rows] = raw.coef[rows] @ self.bases[c].T
        return out * np.exp(-np.outer(raw.length, self.k))

    # -- orders --------------------------------------------------------------

    def los(self, tx: np.ndarray, rx: np.ndarray) -> _Raw:
        d = float(np.linalg.norm(rx - tx))
        if d == 0:
            raise ConfigError("transmitter and receiver coincide")
        if occluded_mask(tx[None], rx[None], self.scene)[0]:
            return _Raw.concat([], self.terms)
        coef = np.zeros((1, self.terms))
        coef[0, 0] = 1.0 / d ** 2
        return _Raw(np.full((1, 2), -1, np.int64), np.full((1, 2), -1, np.int64),
                    np.full((1, 2, 3), np.nan), np.array([d]), coef, np.zeros(1, np.int64))

    def first_order(self, tx: np.ndarray, rx: np.ndarray) -> _Raw:
        seg = self.seg1

        def run(lo, hi):
            c = seg.centers[lo:hi]
            n = seg.normals[lo:hi]
            s_idx = seg.surface_index[lo:hi]
            a, r1 = _unit(tx - c)
            b, r2 = _unit(rx - c)
            cn_i = np.einsum("ij,ij->i", a, n)
            cn_o = np.einsum("ij,ij->i", b, n)
            rows = np.nonzero(cn_i * cn_o > 0)[0]
            rows = rows[~occluded_mask(np.broadcast_to(tx, c[rows].shape), c[rows], self.scene, s_idx[rows])]
            rows = rows[~occluded_mask(c[rows], np.broadcast_to(rx, c[rows].shape), self.scene, s_idx[rows])]
            a, b, n, r1, r2 = a[rows], b[rows], n[rows], r1[rows], r2[rows]
            cos_i = np.abs(cn_i[rows])
            cos_o = np.abs(cn_o[rows])
            delta = _angle_deg(2.0 * cn_i[rows, None] * n - a, b)
            theta_i = np.degrees(np.arccos(np.minimum(cos_i, 1.0)))
            theta_o = np.degrees(np.arccos(np.minimum(cos_o, 1.0)))
            f = self._brdf_nodes(s_idx[rows], theta_i, theta_o, delta)
            geom = seg.areas[lo:hi][rows] * cos_i * cos_o / (r1 * r1 * r2 * r2)
            m = len(rows)
            coef = np.zeros((m, self.terms))
            coef[:, :self.kmax] = geom[:, None] * f
            surf = np.full((m, 2), -1, np.int64)
            surf[:, 0] = s_idx[rows]
            segment = np.full((m, 2), -1, np.int64)
            segment[:, 0] = rows + lo
            points = np.full((m, 2, 3), np.nan)
            points[:, 0] = c[rows]
            return _Raw(surf, segment, points, r1 + r2, coef, 1 + self.surface_material[s_idx[rows]])

        return _Raw.concat(self._map(run, len(seg)), self.terms)

    def _pair_table(self):
        """Mutually visible segment pairs on different surfaces (scene-only)."""
        if self._pairs is None:
            seg = self.seg2
            n = len(seg)
            j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            j, k = j.reshape(-1), k.reshape(-1)
            keep = seg.surface_index[j] != seg.surface_index[k]
            j, k = j[keep], k[keep]
            d, r12 = _unit(seg.centers[k] - seg.centers[j])
            cn_j = np.einsum("ij,ij->i", d, seg.normals[j])
            cn_k = -np.einsum("ij,ij->i", d, seg.normals[k])
            keep = (cn_j != 0) & (cn_k != 0)
            j, k, d, r12, cn_j, cn_k = j[keep], k[keep], d[keep], r12[keep], cn_j[keep], cn_k[keep]
            ign = np.stack([seg.surface_index[j], seg.surface_index[k]], axis=1)
            vis = ~occluded_mask(seg.centers[j], seg.centers[k], self.scene, ign)
            self._pairs = tuple(x[vis] for x in (j, k, d, r12, cn_j, cn_k))
        return self._pairs

    def second_order(self, tx: np.ndarray, rx: np.ndarray) -> _Raw:
        seg = self.seg2
        pj, pk, d, r12, cn_j, cn_k = self._pair_table()
        a, r1 = _unit(tx - seg.centers)
        b, r2 = _unit(rx - seg.centers)
        cn_i = np.einsum("ij,ij->i", a, seg.normals)
        cn_o = np.einsum("ij,ij->i", b, seg.normals)
        vis_tx = (cn_i != 0) & ~occluded_mask(np.broadcast_to(tx, seg.centers.shape), seg.centers,
                                              self.scene, seg.surface_index)
        vis_rx = (cn_o != 0) & ~occluded_mask(seg.centers, np.broadcast_to(rx, seg.centers.shape),
                                              self.scene, seg.surface_index)
        m_count = len(self.kernels)

        def deg(x):
            return np.degrees(np.arccos(np.minimum(np.abs(x), 1.0)))

        def run(lo, hi):
            j, k = pj[lo:hi], pk[lo:hi]
            ok = vis_tx[j] & vis_rx[k] & (cn_i[j] * cn_j[lo:hi] > 0) & (cn_k[lo:hi] * cn_o[k] > 0)
            rows = np.nonzero(ok)[0]
            j, k = j[rows], k[rows]
            dd, rr, cj, ck = d[lo:hi][rows], r12[lo:hi][rows], cn_j[lo:hi][rows], cn_k[lo:hi][rows]
            nj, nk = seg.normals[j], seg.normals[k]
            # at j: arrives from tx, leaves along dd; at k: arrives along dd, leaves to rx
            delta_j = _angle_deg(2.0 * cn_i[j, None] * nj - a[j], dd)
            back = -dd
            delta_k = _angle_deg(2.0 * np.einsum("ij,ij->i", back, nk)[:, None] * nk - back, b[k])
            sj, sk = seg.surface_index[j], seg.surface_index[k]
            f_j = self._brdf_nodes(sj, deg(cn_i[j]), deg(cj), delta_j)
            f_k = self._brdf_nodes(sk, deg(ck), deg(cn_o[k]), delta_k)
            geom = (seg.areas[j] * np.abs(cn_i[j]) * np.abs(cj) * seg.areas[k] * np.abs(ck) * np.abs(cn_o[k])
                    / (r1[j] ** 2 * rr ** 2 * r2[k] ** 2))
            m = len(rows)
            coef = (f_j[:, :, None] * f_k[:, None, :]).reshape(m, self.terms) * geom[:, None]
            cls = 1 + m_count + self.surface_material[sj] * m_count + self.surface_material[sk]
            points = np.stack([seg.centers[j], seg.centers[k]], axis=1)
            return _Raw(np.stack([sj, sk], axis=1), np.stack([j, k], axis=1), points.reshape(m, 2, 3),
                        r1[j] + rr + r2[k], coef, cls)

        return _Raw.concat(self._map(run, len(pj)), self.terms)

    def trace_raw(self, tx: np.ndarray, rx: np.ndarray, max_order: int = 2) -> _Raw:
        if max_order not in (0, 1, 2):
            raise ConfigError(f"max_order must be 0, 1 or 2, got {max_order}")
        tx = np.asarray(tx, dtype=float)
        rx = np.asarray(rx, dtype=float)
        parts = [self.los(tx, rx)]
        if max_order >= 1:
            parts.append(self.first_order(tx, rx))
        if max_order >= 2:
            parts.append(self.second_order(tx, rx))
        return _Raw.concat(parts, self.terms)

    def trace(self, tx: Node, rx: Node, max_order: int = 2,
              power_floor_dbm: float = DEFAULT_POWER_FLOOR_DBM, pointing=None) -> PathSet:
        txp = np.asarray(tx.position, dtype=float)
        rxp = np.asarray(rx.position, dtype=float)
        raw = self.trace_raw(txp, rxp, max_order)
        bore_tx, bore_rx = _pointing(txp, rxp, pointing)
        ant = (_antenna_lin(tx.antenna, raw.departure(txp, rxp), bore_tx)
               * _antenna_lin(rx.antenna, raw.arrival(txp, rxp), bore_rx))
        paths = PathSet(self.surface_ids, txp, rxp, raw.surf, raw.segment, raw.points, raw.length,
                        self.spectra(raw), ant, self.cfg.tx_power, self.freqs)
        with np.errstate(divide="ignore"):
            keep = 10.0 * np.log10(paths.received_power_mw) >= power_floor_dbm
        return paths.take(np.nonzero(keep)[0]).sorted()

    def group_gains(self, tx: Node, rx: Node, max_order: int = 2,
                    power_floor_dbm: float = DEFAULT_POWER_FLOOR_DBM) -> PathSet:
        """Same result as ``reflection_groups(self.trace(tx, rx, ...))``.

        Sums each group in the factored representation, so the full
        (paths x subbands) gain array is never built.
        """
        txp = np.asarray(tx.position, dtype=float)
        rxp = np.asarray(rx.position, dtype=float)
        raw = self.trace_raw(txp, rxp, max_order)
        n_ids = len(self.surface_ids)
        key = raw.surf[:, 0] * (n_ids + 1) + (raw.surf[:, 1] + 1)
        order = np.lexsort(_order_keys(self.surface_ids, raw.surf, raw.segment, raw.length) + [key])
        raw = raw.take(order)
        key = key[order]
        dep, arr = raw.departure(txp, rxp), raw.arrival(txp, rxp)
        bore_tx, bore_rx = _pointing(txp, rxp, None)
        ant_chord = _antenna_lin(tx.antenna, dep, bore_tx) * _antenna_lin(rx.antenna, arr, bore_rx)
        expo = np.exp(-np.outer(raw.length, self.k))
        floor_mw = 10.0 ** ((power_floor_dbm - self.cfg.tx_power) / 10.0) * len(self.freqs)
        starts = np.nonzero(np.r_[True, key[1:] != key[:-1]])[0] if len(key) else np.zeros(0, np.int64)
        ends = np.r_[starts[1:], len(key)]
        peak = 10.0 ** ((tx.antenna.boresight_gain + rx.antenna.boresight_gain) / 10.0)
        leads, gains = [], []
        for lo, hi in zip(starts, ends):
            basis = self.bases[raw.cls[lo]]
            e = expo[lo:hi]
            total = np.einsum("ic,ic->i", raw.coef[lo:hi], e @ basis)
            kept = np.nonzero(ant_chord[lo:hi] * total >= floor_mw)[0]
            if kept.size == 0:
                continue
            lead = lo + kept[int(np.argmax(total[kept]))]
            ant = (_antenna_lin(tx.antenna, dep[lo:hi][kept], dep[lead])
                   * _antenna_lin(rx.antenna, arr[lo:hi][kept], arr[lead]))
            summed = (ant[:, None] * raw.coef[lo:hi][kept]).T @ e[kept]     # (C, S)
            leads.append(lead)
            gains.append(np.einsum("cs,sc->s", summed, basis))
        leads = np.array(leads, dtype=np.int64)
        prop = np.array(gains).reshape(len(leads), len(self.freqs)) / peak
        return PathSet(self.surface_ids, txp, rxp, raw.surf[leads], raw.segment[leads], raw.points[leads],
                       raw.length[leads], prop, np.full(len(leads), peak), self.cfg.tx_power,
                       self.freqs).sorted()


def _pointing(tx: np.ndarray, rx: np.ndarray, pointing):
    if pointing is None:
        chord = _unit(rx - tx)[0]
        return chord, -chord
    bt, br = (np.asarray(p, dtype=float) for p in pointing)
    return _unit(bt)[0], _unit(br)[0]


def trace_paths(scene: Scene, tx: Node, rx: Node, cfg: RadioConfig, max_order: int = 2,
                power_floor_dbm: float = DEFAULT_POWER_FLOOR_DBM, *,
                materials: Mapping[str, MaterialProfile] | None = None,
                absorption: AbsorptionTable | None = None,
                segment_size: float = DEFAULT_SEGMENT_SIZE,
                second_order_segment_size: float = DEFAULT_SECOND_ORDER_SEGMENT_SIZE,
                pointing=None, workers: int = 1) -> PathSet:
    """Enumerate LoS, first- and second-order paths from ``tx`` to ``rx``.

    Antennas point along the Tx-Rx chord unless ``pointing`` gives explicit
    (tx_boresight, rx_boresight) direction vectors. Paths whose received
    power falls below ``power_floor_dbm`` are dropped; the result is sorted
    by (delay, surface_trace).
    """
    if max_order not in (0, 1, 2):
        raise ConfigError(f"max_order must be 0, 1 or 2, got {max_order}")
    tracer = Tracer(scene, cfg, materials, absorption, segment_size, second_order_segment_size, workers)
    return tracer.trace(tx, rx, max_order, power_floor_dbm, pointing)


# --------------------------------------------------------------------------
# path selection

def best_path(paths, exclude_los: bool = False) -> PropagationPath:
    """Path with the largest subband-summed received power.

    Ties go to the smaller delay, then to the lexicographically smaller
    surface trace.
    """
    ps = _as_pathset(paths)
    idx = np.arange(len(ps))
    if exclude_los:
        idx = idx[ps.order > 0]
    if idx.size == 0:
        raise NoPathError("no candidate paths" + (" after excluding LoS" if exclude_los else ""))
    sub = ps.take(idx)
    keys = sub.sort_keys()[2:4] + [sub.delay, -sub.total_gain]
    return sub[int(np.lexsort(keys)[0])]


def reflection_groups(paths, tx_antenna: AntennaSpec, rx_antenna: AntennaSpec) -> PathSet:
    """Collapse paths sharing a surface trace into one path per trace.

    Both antennas are re-pointed at the group's strongest member (by
    propagation gain), and the group gain is the linear sum of all members
    seen through those pointings. The group path carries the strongest
    member's geometry. The LoS path, if present, is kept with boresight
    gains on both ends.
    """
    ps = _as_pathset(paths)
    if len(ps) == 0:
        return ps
    return _groups(ps, tx_antenna, rx_antenna)


def _groups(ps: PathSet, tx_antenna: AntennaSpec, rx_antenna: AntennaSpec) -> PathSet:
    prop_total = ps.prop_lin.sum(axis=1)
    keys = ps.surf[:, 0] * (len(ps.surface_ids) + 1) + (ps.surf[:, 1] + 1)
    # members ordered by group, strongest first, then by the deterministic keys
    order = np.lexsort(ps.sort_keys() + [-prop_total, keys])
    keys_sorted = keys[order]
    starts = np.nonzero(np.r_[True, keys_sorted[1:] != keys_sorted[:-1]])[0]
    group_of = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(order)]))
    lead = order[starts]
    dep, arr = ps.departure(), ps.arrival()
    ant = (_antenna_lin(tx_antenna, dep[order], dep[lead][group_of])
           * _antenna_lin(rx_antenna, arr[order], arr[lead][group_of]))
    summed = np.add.reduceat(ps.prop_lin[order] * ant[:, None], starts, axis=0)
    peak = 10.0 ** ((tx_antenna.boresight_gain + rx_antenna.boresight_gain) / 10.0)
    return PathSet(ps.surface_ids, ps.tx, ps.rx, ps.surf[lead], ps.segment[lead], ps.points[lead],
                   ps.length[lead], summed / peak, np.full(len(lead), peak), ps.tx_power_dbm,
                   ps.frequencies_ghz).sorted()


# --------------------------------------------------------------------------
# power delay profiles

@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    """Delay-binned received power (mW) in bins of ``bin_width`` seconds.

    ``bins``/``power_mw`` is the aggregate; ``per_surface`` maps a surface id
    to its own (bins, power_mw) series, keyed by the first surface a path
    touches; ``los`` is the line-of-sight series.
    """

    bin_width: float
    frequency: float
    bins: np.ndarray
    power_mw: np.ndarray
    per_surface: dict[str, tuple[np.ndarray, np.ndarray]]
    los: tuple[np.ndarray, np.ndarray]

    @property
    def power_dbm(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power_mw)

    @property
    def delays(self) -> np.ndarray:
        return self.bins * self.bin_width

    def series(self, key: str) -> tuple[np.ndarray, np.ndarray]:
        if key == "ALL":
            return self.bins, self.power_mw
        if key == "LOS":
            return self.los
        return self.per_surface[key]

    def peak(self, key: str) -> tuple[int, float]:
        """(bin, power_mw) of the strongest bin of a series."""
        b, p = self.series(key)
        i = int(np.argmax(p))
        return int(b[i]), float(p[i])

    def rows(self) -> list[tuple[float, str, float]]:
        out = []
        for key, (b, p) in [("ALL", (self.bins, self.power_mw)), ("LOS", self.los),
                            *self.per_surface.items()]:
            for bi, pi in zip(b, p):
                out.append((int(bi), key, float(pi)))
        out.sort(key=lambda r: (r[0], r[1]))
        return [(b * self.bin_width * 1e9, key, 10.0 * math.log10(p)) for b, key, p in out]

    def write_csv(self, dest: str | Path | io.TextIOBase) -> None:
        """Write ``delay_ns,surface,power_dbm`` rows (6 significant digits)."""
        if isinstance(dest, (str, Path)):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                self._write(fh)
        else:
            self._write(dest)

    def _write(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PDP_HEADER)
        for delay_ns, key, dbm in self.rows():
            w.writerow((f"{delay_ns:.6g}", key, f"{dbm:.6g}"))


def _binned(bins: np.ndarray, power: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if bins.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    lo = int(bins.min())
    sums = np.bincount(bins - lo, weights=power)
    nz = np.nonzero(sums > 0)[0]
    return nz + lo, sums[nz]


def build_pdp(paths, bin_width: float = DEFAULT_BIN_WIDTH, frequency: float | None = None) -> PowerDelayProfile:
    """Bin each path's subband-averaged received power by delay."""
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    ps = _as_pathset(paths).sorted()
    if frequency is None:
        frequency = float(np.mean(ps.frequencies_ghz)) if len(ps.frequencies_ghz) else float("nan")
    power = ps.received_power_mw
    bins = np.floor(ps.delay / bin_width).astype(np.int64)
    first = ps.first_surface
    per_surface = {}
    for s in sorted(set(first[first >= 0].tolist()), key=lambda i: ps.surface_ids[i]):
        m = first == s
        per_surface[ps.surface_ids[s]] = _binned(bins[m], power[m])
    los = first < 0
    agg_bins, agg_power = _binned(bins, power)
    return PowerDelayProfile(bin_width, frequency, agg_bins, agg_power, per_surface,
                             _binned(bins[los], power[los]))
