"""Virtual linear arrays synthesised from closed-curve measurements.

Working-frame convention: for a rotation ``phi`` the global position of a
line element with local coordinates ``(x, z)`` is ``origin + R(phi) (x, z)``,
where ``R`` is the counter-clockwise rotation and ``origin`` is the centroid
of the measurement curve. Sources sit on a line at ``z_S < 0`` and receivers
on a parallel line at ``z_R > 0``, on opposite sides of the object.
"""

from dataclasses import dataclass

import numpy as np

from . import io as _io
from .errors import FormatError, GeometryError
from .geometry import curve_contains, rotation_matrix
from .kernels import ExtinctionSolver, KernelCache, image_kernels

DEFAULT_ELEMENTS = 900
DEFAULT_SPAN = 1.0
DEFAULT_SEPARATION = 0.220


@dataclass(frozen=True)
class VirtualLine:
    """Uniform straight array of ``n`` elements.

    Element ``m`` has local coordinate ``x_m = x0 + m * dx`` with
    ``dx = span / n`` and ``x0`` chosen so the array is centred on ``x = 0``.
    """

    rotation: float
    z: float
    n: int = DEFAULT_ELEMENTS
    span: float = DEFAULT_SPAN
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.n < 1 or not self.span > 0:
            raise GeometryError("a virtual line needs n >= 1 and span > 0")

    @property
    def dx(self):
        return self.span / self.n

    @property
    def x0(self):
        return -0.5 * (self.n - 1) * self.dx

    @property
    def x(self):
        """Local coordinates along the line."""
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def positions(self):
        """Global element positions, shape ``(n, 2)``."""
        local = np.column_stack([self.x, np.full(self.n, self.z)])
        return local @ rotation_matrix(self.rotation).T + np.asarray(self.origin, float)

    def check_exterior(self, curve):
        inside = curve_contains(curve, self.positions)
        if np.any(inside):
            i = int(np.argmax(inside))
            raise GeometryError(f"virtual line element {i} at {self.positions[i].tolist()} is inside the curve")


def line_pair(curve, rotation, separation=DEFAULT_SEPARATION, n=DEFAULT_ELEMENTS, span=DEFAULT_SPAN):
    """Source and receiver lines placed symmetrically about the curve centroid."""
    origin = tuple(curve.centroid)
    line_s = VirtualLine(rotation, -0.5 * separation, n, span, origin)
    line_r = VirtualLine(rotation, 0.5 * separation, n, span, origin)
    return line_s, line_r


@dataclass(frozen=True, eq=False)
class VirtualArrayData:
    """Projected data ``p(x_R; x_S)`` with shape ``(n_R, n_S)``."""

    data: np.ndarray
    line_s: VirtualLine
    line_r: VirtualLine
    k0: float

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.shape != (self.line_r.n, self.line_s.n):
            raise GeometryError(f"data shape {d.shape} does not match lines ({self.line_r.n}, {self.line_s.n})")
        if not np.all(np.isfinite(d)):
            raise GeometryError("virtual array data must be finite")
        object.__setattr__(self, "data", d)

    @property
    def rotation(self):
        return self.line_s.rotation

    def save(self, path):
        if self.line_r.rotation != self.line_s.rotation or self.line_r.origin != self.line_s.origin:
            raise FormatError("lines must share rotation and origin to be stored")
        extra = _io.pack_virtual_extra(self.rotation, self.line_s.z, self.line_r.z, self.line_s.span,
                                       self.line_r.span, *self.line_s.origin)
        _io.write_matrix(path, self.data, self.k0, magic=_io.VIRTUAL_MAGIC, extra=extra)

    @classmethod
    def load(cls, path):
        data, k0, _, extra = _io.read_matrix(path, magic=_io.VIRTUAL_MAGIC, extra_size=_io.VIRTUAL_EXTRA_SIZE)
        rot, z_s, z_r, span_s, span_r, ox, oz = _io.unpack_virtual_extra(extra)
        n_r, n_s = data.shape
        return cls(data, VirtualLine(rot, z_s, n_s, span_s, (ox, oz)), VirtualLine(rot, z_r, n_r, span_r, (ox, oz)), k0)


def project_field(field_on_curve, kernel, curve):
    """Exterior pressure ``sum_j p_j K_j w_j`` from boundary pressure ``p``.

    ``kernel`` is a :class:`~curvedt.kernels.ProjectionKernel` or an array of
    kernel values; a 2D array projects to several targets at once.
    """
    values = np.asarray(getattr(kernel, "values", kernel))
    p = np.asarray(field_on_curve)
    if values.shape[-1] != curve.n or p.shape[0] != curve.n:
        raise GeometryError(f"length mismatch: field {p.shape[0]}, kernel {values.shape[-1]}, curve {curve.n}")
    return (values * curve.weights) @ p


class KernelProvider:
    """Produces (and caches) kernel rows for virtual line elements.

    Parameters
    ----------
    curve : BoundaryCurve
    k0 : float
    method : {"image", "extinction"}
    strict : bool
        Passed to the image kernel.
    extinction : dict
        Keyword arguments for :class:`~curvedt.kernels.ExtinctionSolver`.
    cache : KernelCache, optional
    """

    def __init__(self, curve, k0, method="image", strict=True, extinction=None, cache=None):
        if method not in ("image", "extinction"):
            raise ValueError(f"unknown kernel method {method!r}")
        self.curve = curve
        self.k0 = k0
        self.method = method
        self.strict = strict
        self.extinction = dict(extinction or {})
        self.cache = KernelCache() if cache is None else cache
        self._solver = None
        self._digest = curve.digest()
        self.stats = []

    @property
    def solver(self):
        if self._solver is None:
            self._solver = ExtinctionSolver(self.curve, self.k0, **self.extinction)
        return self._solver

    def _compute(self, targets):
        if self.method == "image":
            return image_kernels(targets, self.curve, self.k0, self.strict)
        values, stats = self.solver.solve(targets)
        self.stats.extend(stats)
        return values

    def __call__(self, targets):
        return self.cache.lookup_many(self._digest, self.method, targets, self._compute)


def build_virtual_sources(meas, curve, line_s, kernels):
    """Project every measured source column to the source line.

    Returns ``P1`` with shape ``(n_S, n_curve)``: ``P1[s, i]`` is the field at
    element ``s`` due to real source ``i``. By reciprocity row ``s`` is the
    field on the curve due to a virtual source at ``s``.

    ``kernels`` is a callable mapping targets to kernel rows or a precomputed
    ``(n_S, n_curve)`` array.
    """
    line_s.check_exterior(curve)
    data = np.asarray(getattr(meas, "data", meas))
    if data.shape != (curve.n, curve.n):
        raise GeometryError("measurement matrix does not match the curve")
    k_s = kernels(line_s.positions) if callable(kernels) else np.asarray(kernels)
    return (k_s * curve.weights) @ data


def build_virtual_receivers(p1, curve, line_s, line_r, kernels, k0):
    """Project virtual-source fields on the curve to the receiver line."""
    line_r.check_exterior(curve)
    k_r = kernels(line_r.positions) if callable(kernels) else np.asarray(kernels)
    return VirtualArrayData((k_r * curve.weights) @ np.asarray(p1).T, line_s, line_r, k0)


def double_projection(meas, curve, k_s, k_r):
    """Direct double quadrature ``sum_i sum_j K_R[j] w_j p(j; i) K_S[i] w_i``.

    Evaluated element by element; serves as a reference for the two-stage
    composition.
    """
    data = np.asarray(getattr(meas, "data", meas))
    w = curve.weights
    out = np.zeros((len(k_r), len(k_s)), complex)
    for r in range(len(k_r)):
        a = k_r[r] * w
        for s in range(len(k_s)):
            out[r, s] = np.sum(a[:, None] * data * (k_s[s] * w)[None, :])
    return out


def virtual_array(meas, curve, rotation, kernels, k0, separation=DEFAULT_SEPARATION,
                  n=DEFAULT_ELEMENTS, span=DEFAULT_SPAN):
    """Both projection stages for one rotation."""
    line_s, line_r = line_pair(curve, rotation, separation, n, span)
    p1 = build_virtual_sources(meas, curve, line_s, kernels)
    return build_virtual_receivers(p1, curve, line_s, line_r, kernels, k0)


def rotate_frame(curve, meas, angle):
    """Rotate the curve by ``-angle`` about its centroid so lines of rotation
    ``angle`` become axis-aligned. Measurement values are scalars and are
    returned unchanged."""
    return curve.rotated(-angle, about=curve.centroid), meas
