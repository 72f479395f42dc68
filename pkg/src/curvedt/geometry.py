"""Closed boundary curves: parametric families, arc-length sampling, normals.

Coordinates are ``(x, z)`` in metres. Sampled curves are stored
counter-clockwise with outward unit normals.
"""

import csv
import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import BoundaryAmbiguityError, GeometryError

FAMILIES = ("circle", "oval", "egg", "indented", "custom")

OVAL_EXPONENT = 2.2
OVERSAMPLE = 10
BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class CurveSpec:
    """Description of a closed measurement curve.

    ``long_axis`` lies along z and ``short_axis`` along x. ``circumference`` is
    a fitting target for the egg and indented families and is ignored for the
    others. ``param`` is required for ``family="custom"`` and must map an
    array of angles in ``[0, 2 pi)`` to an ``(n, 2)`` array of points.
    """

    family: str
    long_axis: float = 0.200
    short_axis: float = 0.150
    spacing: float = 0.97e-3
    circumference: Optional[float] = None
    center: tuple = (0.0, 0.0)
    param: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GeometryError(f"unknown curve family {self.family!r}; expected one of {FAMILIES}")
        if not self.spacing > 0:
            raise GeometryError("sample spacing must be > 0")
        if self.family != "custom" and not (self.long_axis > 0 and self.short_axis > 0):
            raise GeometryError("curve axes must be > 0")
        if self.family == "custom" and self.param is None:
            raise GeometryError("custom curves need a parametrisation")


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Sampled closed curve.

    Attributes
    ----------
    points : ndarray, shape (n, 2)
        Sample positions [m], counter-clockwise.
    normals : ndarray, shape (n, 2)
        Outward unit normals.
    weights : ndarray, shape (n,)
        Arc-length quadrature weights [m].
    circumference : float
        Length of the closed curve [m].
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    circumference: float

    def __post_init__(self):
        for name in ("points", "normals", "weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_points(cls, points, circumference=None):
        """Build a curve from ordered samples, deriving normals and weights.

        Orientation is normalised to counter-clockwise. Normals follow the
        tangent-cross-out-of-plane construction: the tangent is the central
        difference of neighbouring samples and is rotated by -90 degrees.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise GeometryError("a closed curve needs at least 4 points of shape (n, 2)")
        if _signed_area(pts) < 0:
            pts = pts[::-1].copy()
        tangent = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
        tnorm = np.hypot(tangent[:, 0], tangent[:, 1])
        if np.any(tnorm == 0):
            raise GeometryError("repeated consecutive points")
        normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / tnorm[:, None]
        chords = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
        weights = 0.5 * (chords + np.roll(chords, 1))
        if circumference is None:
            circumference = float(chords.sum())
        return cls(pts, normals, weights, float(circumference))

    @property
    def n(self):
        return len(self.points)

    @property
    def tangents(self):
        t = np.roll(self.points, -1, axis=0) - np.roll(self.points, 1, axis=0)
        return t / np.hypot(t[:, 0], t[:, 1])[:, None]

    @property
    def centroid(self):
        """Area centroid of the sampled polygon."""
        x, z = self.points[:, 0], self.points[:, 1]
        x1, z1 = np.roll(x, -1), np.roll(z, -1)
        cross = x * z1 - x1 * z
        area = 0.5 * cross.sum()
        cx = ((x + x1) * cross).sum() / (6 * area)
        cz = ((z + z1) * cross).sum() / (6 * area)
        return np.array([cx, cz])

    @property
    def area(self):
        return _signed_area(self.points)

    def digest(self):
        """Stable hash of the sampled geometry, used as a cache key."""
        h = hashlib.sha1()
        for arr in (self.points, self.normals, self.weights):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def rotated(self, angle, about=None):
        """Rigid rotation by ``angle`` radians (counter-clockwise) about a point."""
        about = self.centroid if about is None else np.asarray(about, dtype=float)
        rot = rotation_matrix(angle)
        pts = (self.points - about) @ rot.T + about
        return BoundaryCurve(pts, self.normals @ rot.T, self.weights.copy(), self.circumference)

    def distance_to(self, p):
        """Distance from each point in ``p`` to the sampled polyline."""
        return _polyline_distance(self.points, np.atleast_2d(np.asarray(p, dtype=float)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_m", "y_m"])
            for x, z in self.points:
                writer.writerow([repr(float(x)), repr(float(z))])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise GeometryError(f"bad curve row {row!r} in {path}") from None
                    continue  # header
        return cls.from_points(np.array(rows))


def rotation_matrix(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _signed_area(pts):
    x, z = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


# ---------------------------------------------------------------------------
# Parametric families
# ---------------------------------------------------------------------------

def _superellipse(a_x, a_z, exponent):
    def f(t):
        c, s = np.cos(t), np.sin(t)
        x = a_x * np.sign(c) * np.abs(c) ** (2.0 / exponent)
        z = a_z * np.sign(s) * np.abs(s) ** (2.0 / exponent)
        return np.column_stack([x, z])
    return f


def _egg(a, b, w):
    # Hugelschaffer construction with the long axis along x, then rotated so
    # that it lies along z (blunt end at +z).
    def f(t):
        c, s = np.cos(t), np.sin(t)
        rho = w * c + np.sqrt(b * b - (w * s) ** 2)
        return np.column_stack([-rho * s, a * c])
    return f


def _indented(a_x, a_z, exponent, depth, width=0.3):
    # Superellipse with a Gaussian notch pushed in from the +x apex.
    def f(t):
        c, s = np.cos(t), np.sin(t)
        x = a_x * np.sign(c) * np.abs(c) ** (2.0 / exponent)
        z = a_z * np.sign(s) * np.abs(s) ** (2.0 / exponent)
        tw = np.angle(np.exp(1j * t))
        return np.column_stack([x - depth * np.exp(-0.5 * (tw / width) ** 2), z])
    return f


def _dense_length(param, n=20000):
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    p = param(t)
    return float(np.sum(np.hypot(*(np.roll(p, -1, axis=0) - p).T)))


def _extent(param, n=20000):
    p = param(np.linspace(0.0, 2 * np.pi, n, endpoint=False))
    return np.ptp(p[:, 0]), np.ptp(p[:, 1])


def _fit_egg(long_axis, short_axis, circumference):
    a = long_axis / 2

    def resid(v):
        b, w = v
        f = _egg(a, b, w)
        ex, _ = _extent(f, 4000)
        return [ex - short_axis, _dense_length(f, 4000) - circumference]

    sol = optimize.least_squares(resid, [short_axis / 2, 0.1 * short_axis / 2],
                                 bounds=([1e-6, 0.0], [long_axis, short_axis / 2 * 0.9]))
    b, w = sol.x
    return _egg(a, b, w)


def _fit_indented(long_axis, short_axis, circumference, notch=0.095):
    depth = notch * short_axis

    def resid(v):
        ax, az, e = v
        f = _indented(ax, az, e, depth)
        ex, ez = _extent(f, 4000)
        return [ex - short_axis, ez - long_axis, _dense_length(f, 4000) - circumference]

    sol = optimize.least_squares(resid, [short_axis / 2, long_axis / 2, 2.0],
                                 bounds=([1e-6, 1e-6, 1.5], [long_axis, long_axis, 4.0]))
    ax, az, e = sol.x
    return _indented(ax, az, e, depth)


def curve_parametrisation(spec):
    """Return ``t -> points`` for a :class:`CurveSpec`, centred at ``spec.center``."""
    if spec.family == "circle":
        r = spec.long_axis / 2
        base = _superellipse(r, r, 2.0)
    elif spec.family == "oval":
        base = _superellipse(spec.short_axis / 2, spec.long_axis / 2, OVAL_EXPONENT)
    elif spec.family == "egg":
        circ = spec.circumference if spec.circumference is not None else 0.560
        base = _fit_egg(spec.long_axis, spec.short_axis, circ)
    elif spec.family == "indented":
        circ = spec.circumference if spec.circumference is not None else 0.655
        base = _fit_indented(spec.long_axis, spec.short_axis, circ)
    else:
        base = spec.param
    center = np.asarray(spec.center, dtype=float)
    return lambda t: base(np.asarray(t, dtype=float)) + center


def reference_curve(name, spacing=None):
    """The three measurement curves used in the examples: ``"a"``, ``"b"`` or ``"c"``."""
    if name == "a":
        return CurveSpec("oval", 0.200, 0.150, spacing or 0.97e-3)
    if name == "b":
        return CurveSpec("egg", 0.200, 0.157, spacing or 0.6e-3, circumference=0.560)
    if name == "c":
        return CurveSpec("indented", 0.253, 0.158, spacing or 1.1e-3, circumference=0.655)
    raise GeometryError(f"unknown curve {name!r}")


def sample_curve(spec, wavelength=None):
    """Sample a curve uniformly in arc length.

    The parametrisation is evaluated on a grid ``OVERSAMPLE`` times finer than
    the requested spacing; the cumulative chord length of that polyline is
    inverted to find parameter values at equal arc-length steps.

    Raises
    ------
    GeometryError
        If the curve self-intersects or the spacing is too coarse to resolve
        its features.
    """
    if wavelength is not None and spec.spacing > wavelength / 2 * (1 + 1e-9):
        warnings.warn(f"sample spacing {spec.spacing:.3g} m exceeds half a wavelength", stacklevel=2)
    param = curve_parametrisation(spec)
    rough = _dense_length(param, 4096)
    n_dense = max(OVERSAMPLE * int(np.ceil(rough / spec.spacing)), 4096)
    t = np.linspace(0.0, 2 * np.pi, n_dense + 1)
    dense = param(t)
    seg = np.hypot(*np.diff(dense, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    length = s[-1]
    n = int(round(length / spec.spacing))
    if n < 8:
        raise GeometryError("sample spacing is larger than the curve features")
    t_new = np.interp(np.arange(n) * length / n, s, t)
    pts = param(t_new)
    _check_features(dense[:-1], spec.spacing)
    curve = BoundaryCurve.from_points(pts, circumference=length)
    if not is_simple(curve.points):
        raise GeometryError("curve is self-intersecting at the sampling resolution")
    return curve


def _check_features(dense, spacing):
    # Smallest radius of curvature on the dense polyline via circumscribed circles.
    a = dense
    b = np.roll(dense, -1, axis=0)
    c = np.roll(dense, -2, axis=0)
    ab = np.hypot(*(b - a).T)
    bc = np.hypot(*(c - b).T)
    ca = np.hypot(*(a - c).T)
    cross = np.abs((b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        radius = ab * bc * ca / (2 * cross)
    radius = radius[np.isfinite(radius)]
    if radius.size and spacing > radius.min():
        raise GeometryError(
            f"sample spacing {spacing:.3g} m exceeds the smallest radius of curvature {radius.min():.3g} m")


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def is_simple(points, chunk=256):
    """True if the closed polyline through ``points`` has no self-intersections."""
    p = np.asarray(points, dtype=float)
    n = len(p)
    a, b = p, np.roll(p, -1, axis=0)
    idx = np.arange(n)
    for start in range(0, n, chunk):
        i = idx[start:start + chunk]
        hit = _segments_intersect(a[i, None], b[i, None], a[None], b[None])
        gap = np.abs(i[:, None] - idx[None])
        hit &= (gap > 1) & (gap < n - 1)
        if hit.any():
            return False
    return True


def _polyline_distance(poly, p, chunk=2048):
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ab2 = np.sum(ab * ab, axis=1)
    out = np.empty(len(p))
    for start in range(0, len(p), chunk):
        q = p[start:start + chunk, None, :]
        t = np.clip(np.sum((q - a) * ab, axis=-1) / ab2, 0.0, 1.0)
        d = q - (a + t[..., None] * ab)
        out[start:start + chunk] = np.sqrt(np.min(np.sum(d * d, axis=-1), axis=1))
    return out


def curve_contains(curve, p):
    """Point-in-polygon test by winding number on the sampled polyline.

    Accepts a single point or an ``(m, 2)`` array; returns a bool or bool array.

    Raises
    ------
    BoundaryAmbiguityError
        If any point lies within ``1e-9`` m of the polyline.
    """
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    q = np.atleast_2d(pts)
    if np.any(curve.distance_to(q) < BOUNDARY_EPS):
        raise BoundaryAmbiguityError("point lies on the sampled boundary")
    a = curve.points
    b = np.roll(a, -1, axis=0)
    out = np.empty(len(q), dtype=bool)
    for start in range(0, len(q), 2048):
        qq = q[start:start + 2048, None, :]
        ay = a[None, :, 1] - qq[..., 1]
        by = b[None, :, 1] - qq[..., 1]
        cross = (a[None, :, 0] - qq[..., 0]) * by - (b[None, :, 0] - qq[..., 0]) * ay
        up = (ay <= 0) & (by > 0) & (cross > 0)
        down = (ay > 0) & (by <= 0) & (cross < 0)
        out[start:start + 2048] = (up.sum(axis=1) - down.sum(axis=1)) != 0
    return bool(out[0]) if single else out


def mirror_point(r_target, r_boundary):
    """Image-source location ``2 r_boundary - r_target``."""
    return 2.0 * np.asarray(r_boundary, dtype=float) - np.asarray(r_target, dtype=float)
