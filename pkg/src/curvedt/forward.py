"""Born-approximation measurements on a closed curve.

For sources and receivers at the curve samples ``r_i``, the scattered
pressure is the midpoint-rule sum over the support pixels

    p(j; i) = sum_pix q(r') g0(r'|r_i) g0(r_j|r') dA

and its normal derivative at the receiver replaces ``g0(r_j|r')`` by its
gradient dotted with the receiver normal.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as _io
from .errors import GeometryError
from .special import green2d, green2d_grad

PIXEL_CHUNK = 2048
SOURCE_BLOCK = 64


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """Complex field ``data[j, i]`` at receiver ``j`` for unit source ``i``."""

    data: np.ndarray
    k0: float
    field_kind: str = "scattered"
    curve_digest: str = field(default="", compare=False)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 2:
            raise GeometryError("measurement data must be 2D")
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    def save(self, path):
        _io.write_matrix(path, self.data, self.k0, self.field_kind)

    @classmethod
    def load(cls, path):
        data, k0, kind, _ = _io.read_matrix(path)
        return cls(data, k0, kind)


@dataclass(frozen=True, eq=False)
class GradientMatrix(MeasurementMatrix):
    """Normal derivative ``dp/dn`` at receiver ``j`` for source ``i``."""

    field_kind: str = "gradient"


def incident_field(source, targets, k0):
    """Free-space field of a unit point source at ``targets``."""
    return green2d(k0, np.atleast_2d(targets), np.asarray(source, float))


def _prepare(q, curve, k0):
    if not k0 > 0:
        raise GeometryError("k0 must be > 0")
    q.check_inside(curve)
    pts, vals = q.support_points()
    return pts, vals * q.pixel_area


def _blocks(n, block):
    return [slice(s, min(s + block, n)) for s in range(0, n, block)]


def _run_blocks(fn, blocks, threads):
    if threads is None or threads <= 1:
        for b in blocks:
            fn(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fn, blocks))


def _simulate(q, curve, k0, receiver_factor, threads):
    pts, strength = _prepare(q, curve, k0)
    n = curve.n
    out = np.zeros((n, n), complex)
    if len(pts) == 0:
        return out
    blocks = _blocks(n, SOURCE_BLOCK)
    for c in _blocks(len(pts), PIXEL_CHUNK):
        # chunks are accumulated in a fixed order, so every column sees the
        # same summation sequence however the blocks are scheduled
        g = np.empty((n, c.stop - c.start), complex)

        def rows(r, c=c, g=g):
            g[r] = green2d(k0, curve.points[r, None, :], pts[c][None, :, :])

        _run_blocks(rows, blocks, threads)
        rec = g if receiver_factor is None else receiver_factor(pts[c])
        src = strength[c][:, None] * g.T

        def column_block(cols, rec=rec, src=src):
            out[:, cols] += rec @ src[:, cols]

        _run_blocks(column_block, blocks, threads)
    return out


def simulate_measurements(q, curve, k0, threads=None, noise=0.0, rng=None):
    """Scattered pressure for every source/receiver pair on ``curve``.

    Parameters
    ----------
    q : ScatteringPotential
        Must lie strictly inside ``curve``.
    curve : BoundaryCurve
    k0 : float
    threads : int, optional
        Worker threads; the result is bit-identical for any value.
    noise : float
        Standard deviation of optional complex Gaussian noise, relative to
        the RMS of the noiseless data.
    rng : numpy.random.Generator or int, optional
    """
    data = _simulate(q, curve, k0, None, threads)
    if noise > 0:
        data = add_noise(data, noise, rng)
    return MeasurementMatrix(data, k0, "scattered", curve.digest())


def simulate_gradients(q, curve, k0, threads=None):
    """Receiver-normal derivative of the scattered pressure."""
    def rec(p):
        grad = green2d_grad(k0, p[None, :, :], curve.points[:, None, :])
        return np.einsum("rpk,rk->rp", grad, curve.normals)
    return GradientMatrix(_simulate(q, curve, k0, rec, threads), k0, "gradient", curve.digest())


def add_noise(data, level, rng=None):
    rng = np.random.default_rng(rng)
    rms = np.sqrt(np.mean(np.abs(data) ** 2))
    noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
    return data + level * rms / np.sqrt(2.0) * noise
