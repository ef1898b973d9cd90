"""Segment re-radiation kernel built from a material profile.

Each tessellation segment behaves as a point re-radiator. Power intercepted
by a segment of area A from incidence direction i is re-emitted toward
direction o with intensity ``P_int * f(i, o) * cos(theta_o)`` (W/sr), where
the bistatic kernel f (1/sr) is derived from the profile E as follows:

* the profile's observation axis is read as the angular distance from the
  specular direction, ``theta_i + delta`` (falling back to
  ``theta_i - delta``, then to the table edge farthest from specular when
  neither fits in [0, 90]);
* for incidence angle theta the lobe shape ``E(theta, .)`` is normalized
  over the hemisphere so that ``integral f cos(theta_o) dOmega`` equals
  ``rho(theta) = max_o E(theta, o)``, the re-radiated energy fraction;
* ``f(i, o) = (g(theta_i, delta) + g(theta_o, delta)) / 2`` is symmetric,
  so path gains are reciprocal.

For a narrow lobe with peak 1 the sum over segments converges to the image
method result ``(lambda / (4 pi L))**2``. The kernel is computed on the
profile's own frequency nodes and interpolated linearly in between.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .materials import MaterialProfile

_THETA_STEP = 0.25   # degrees, grid for rho and the normalization
_DELTA_STEP = 0.05   # degrees, quadrature step over specular deviation


def effective_observation(theta, delta):
    """Map specular deviation ``delta`` onto the profile's observation axis."""
    theta = np.asarray(theta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    up = theta + delta
    down = theta - delta
    edge = np.where(90.0 - theta >= theta, 90.0, 0.0)
    return np.where(up <= 90.0, up, np.where(down >= 0.0, down, edge))


def _azimuth_integral(theta_rad, delta_rad):
    """Integral over azimuth (around the specular direction) of max(cos theta_o, 0)."""
    a = np.cos(theta_rad) * np.cos(delta_rad)
    b = np.sin(theta_rad) * np.sin(delta_rad)
    out = 2.0 * np.pi * np.maximum(a, 0.0)
    partial = b > np.abs(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi0 = np.arccos(np.clip(-a / b, -1.0, 1.0))
    return np.where(partial, 2.0 * (a * phi0 + b * np.sin(phi0)), out)


class ReradiationKernel:
    def __init__(self, profile: MaterialProfile):
        self.profile = profile
        self.theta = np.arange(0.0, 90.0 + 1e-9, _THETA_STEP)
        nodes = len(profile.frequency_ghz)
        self.rho = np.empty((len(self.theta), nodes))
        self.norm = np.empty((len(self.theta), nodes))
        obs = np.linspace(0.0, 90.0, 361)
        delta = np.arange(0.0, 180.0 + 1e-9, _DELTA_STEP)
        th, de = np.meshgrid(self.theta, delta, indexing="ij")
        weight = _azimuth_integral(np.radians(th), np.radians(de)) * np.sin(np.radians(de))
        eff = effective_observation(th, de)
        th_o = np.broadcast_to(self.theta[:, None], (len(self.theta), len(obs)))
        for n in range(nodes):
            shape = profile.interp_angles(th, eff, n)
            self.norm[:, n] = np.trapezoid(shape * weight, np.radians(delta), axis=1)
            self.rho[:, n] = profile.interp_angles(th_o, obs[None, :], n).max(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.scale = np.where(self.norm > 0, self.rho / self.norm, 0.0)
        # E resampled on the regular theta grid for index-arithmetic lookups;
        # exact whenever the profile's own grid points lie on this grid
        ti, to = np.meshgrid(self.theta, self.theta, indexing="ij")
        self.table = np.stack([profile.interp_angles(ti, to, n) for n in range(nodes)])

    def node_weights(self, f_ghz) -> tuple[np.ndarray, np.ndarray]:
        """Frequency nodes used by ``f_ghz`` and the (S, K) interpolation matrix."""
        f = np.atleast_1d(np.asarray(f_ghz, dtype=float))
        self.profile.check_band(f)
        axis = self.profile.frequency_ghz
        if len(axis) == 1:
            return np.array([0]), np.ones((len(f), 1))
        i = np.clip(np.searchsorted(axis, f, side="right") - 1, 0, len(axis) - 2)
        w = (f - axis[i]) / (axis[i + 1] - axis[i])
        nodes = np.unique(np.concatenate([i, i + 1]))
        col = {n: c for c, n in enumerate(nodes)}
        mat = np.zeros((len(f), len(nodes)))
        rows = np.arange(len(f))
        mat[rows, [col[j] for j in i]] += 1.0 - w
        mat[rows, [col[j] for j in i + 1]] += w
        return nodes, mat

    def lobe(self, theta, delta, node: int) -> np.ndarray:
        """g(theta, delta) in 1/sr at one frequency node."""
        return self._lobes(np.asarray(theta, dtype=float), np.asarray(delta, dtype=float), [node])[..., 0]

    def _lobes(self, theta: np.ndarray, delta: np.ndarray, nodes) -> np.ndarray:
        last = len(self.theta) - 2
        x = np.clip(theta, 0.0, 90.0) / _THETA_STEP
        i = np.minimum(x.astype(np.int64), last)
        fx = x - i
        y = np.clip(effective_observation(theta, delta), 0.0, 90.0) / _THETA_STEP
        j = np.minimum(y.astype(np.int64), last)
        fy = y - j
        width = len(self.theta)
        flat = i * width + j
        out = []
        for n in nodes:
            t = self.table[n].reshape(-1)
            e = ((t[flat] * (1.0 - fy) + t[flat + 1] * fy) * (1.0 - fx)
                 + (t[flat + width] * (1.0 - fy) + t[flat + width + 1] * fy) * fx)
            sc = self.scale[:, n]
            out.append((sc[i] * (1.0 - fx) + sc[i + 1] * fx) * e)
        return np.stack(out, axis=-1)

    def brdf(self, theta_i, theta_o, delta, nodes) -> np.ndarray:
        """Symmetric kernel f(i, o) at each requested node, shape (..., K)."""
        delta = np.asarray(delta, dtype=float)
        return 0.5 * (self._lobes(np.asarray(theta_i, dtype=float), delta, nodes)
                      + self._lobes(np.asarray(theta_o, dtype=float), delta, nodes))

    def reradiated_fraction(self, theta_i, node: int) -> np.ndarray:
        return np.interp(theta_i, self.theta, self.rho[:, node])


@lru_cache(maxsize=64)
def kernel_for(profile: MaterialProfile) -> ReradiationKernel:
    return ReradiationKernel(profile)
