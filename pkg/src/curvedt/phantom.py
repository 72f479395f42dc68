"""Sound-speed phantoms and their scattering potential.

Grids are indexed ``[iz, ix]``; pixel ``(iz, ix)`` has its centre at
``origin + (ix * pitch, iz * pitch)``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import curve_contains

# Shepp-Logan ellipses on the unit square: (value, a, b, x0, z0, angle_deg).
# Values follow the higher-contrast variant commonly used for display.
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

RESOLUTION_LADDER_MM = (56.0, 28.0, 14.0, 7.0, 3.5, 1.75, 0.875)
BORN_WARN_RATIO = 0.1


@dataclass(frozen=True, eq=False)
class Phantom:
    """Gridded sound-speed map in an otherwise uniform medium.

    Attributes
    ----------
    speed : ndarray, shape (nz, nx)
        Sound speed [m/s].
    origin : ndarray, shape (2,)
        Centre of pixel ``[0, 0]`` as ``(x, z)`` [m].
    pitch : float
        Pixel pitch [m].
    c0 : float
        Background sound speed [m/s].
    """

    speed: np.ndarray
    origin: np.ndarray
    pitch: float
    c0: float

    def __post_init__(self):
        speed = np.array(self.speed, dtype=float)
        if speed.ndim != 2:
            raise GeometryError("phantom grid must be 2D")
        if not np.all(speed > 0) or not self.c0 > 0:
            raise GeometryError("sound speeds must be positive")
        if not self.pitch > 0:
            raise GeometryError("pixel pitch must be > 0")
        speed.setflags(write=False)
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "origin", np.array(self.origin, dtype=float))

    @property
    def shape(self):
        return self.speed.shape

    def pixel_centers(self):
        nz, nx = self.shape
        x = self.origin[0] + self.pitch * np.arange(nx)
        z = self.origin[1] + self.pitch * np.arange(nz)
        return np.meshgrid(x, z)

    def support(self):
        return self.speed != self.c0


@dataclass(frozen=True, eq=False)
class ScatteringPotential:
    """Complex scattering potential ``q`` [1/m^2] on the phantom grid."""

    q: np.ndarray
    origin: np.ndarray
    pitch: float

    def __post_init__(self):
        q = np.array(self.q, dtype=complex)
        if not np.all(np.isfinite(q)):
            raise GeometryError("scattering potential must be finite")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "origin", np.array(self.origin, dtype=float))

    @property
    def pixel_area(self):
        return self.pitch * self.pitch

    def support_points(self):
        """Positions ``(m, 2)`` and values ``(m,)`` of the non-zero pixels, row-major."""
        iz, ix = np.nonzero(self.q)
        pts = np.column_stack([self.origin[0] + ix * self.pitch, self.origin[1] + iz * self.pitch])
        return pts, self.q[iz, ix]

    def bounding_box(self):
        """``(xmin, zmin, xmax, zmax)`` of the support pixel centres, or None if empty."""
        pts, _ = self.support_points()
        if len(pts) == 0:
            return None
        return (*pts.min(axis=0), *pts.max(axis=0))

    def check_inside(self, curve, margin=0.0):
        """Raise :class:`GeometryError` unless the support lies strictly inside ``curve``."""
        pts, _ = self.support_points()
        if len(pts) == 0:
            return
        half = 0.5 * self.pitch
        corners = np.concatenate([pts + [sx * half, sz * half] for sx in (-1, 1) for sz in (-1, 1)])
        if np.any(curve.distance_to(corners) <= margin) or not np.all(curve_contains(curve, corners)):
            raise GeometryError("scattering support touches or crosses the measurement curve")

    @classmethod
    def point(cls, position, strength, pitch):
        """Single-pixel scatterer with integrated strength ``q * pixel_area = strength``."""
        return cls(np.array([[strength / pitch ** 2]]), np.asarray(position, dtype=float), pitch)


@dataclass(frozen=True)
class Deformation:
    """Radial Fourier deformation of the outer phantom boundary.

    The boundary radius is scaled by ``1 + sum(a * cos(m * theta + phase))``
    over ``harmonics = ((m, a, phase), ...)``.
    """

    harmonics: tuple = ((3, 0.15, 0.4), (2, 0.04, 1.1))

    def factor(self, theta):
        out = np.ones_like(theta)
        for m, amp, phase in self.harmonics:
            out = out + amp * np.cos(m * theta + phase)
        return out

    def check(self):
        theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        if np.min(self.factor(theta)) <= 0.05:
            raise GeometryError("deformation folds the outer boundary onto itself")

    def has_concavity(self):
        theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        r = self.factor(theta)
        dr = np.gradient(r, theta)
        d2r = np.gradient(dr, theta)
        curvature_num = r * r + 2 * dr * dr - r * d2r
        return bool(np.any(curvature_num < 0))


NO_DEFORMATION = Deformation(harmonics=())


def make_shepp_logan_modified(pitch, deform=Deformation(), half_size=0.045, c0=1500.0,
                              contrast=50.0, center=(0.0, 0.0), supersample=1):
    """Shepp-Logan sound-speed phantom with a deformed outer boundary.

    The ten standard ellipses span ``[-half_size, half_size]``. Speeds are
    ``c0 + contrast * value``. Only the two outermost ellipses are deformed;
    the interior features are rendered unchanged.

    With ``supersample = s > 1`` each pixel holds the mean value over an
    ``s x s`` grid of sub-samples, which smooths the ellipse edges so that
    refining the pitch converges faster.
    """
    if int(supersample) < 1:
        raise GeometryError("supersample must be >= 1")
    if not pitch > 0:
        raise GeometryError("pitch must be > 0")
    deform.check()
    reach = half_size * (1.0 + sum(abs(a) for _, a, _ in deform.harmonics))
    n = int(np.ceil(reach / pitch)) + 2
    origin = np.array(center, dtype=float) - n * pitch
    # offsets from the centre, so a pixel's position does not depend on the grid size
    coords = np.arange(-n, n + 1) * pitch
    x, z = np.meshgrid(center[0] + coords, center[1] + coords)
    s = int(supersample)
    if s == 1:
        value = _shepp_logan_value(x, z, deform, half_size, center)
    else:
        sub = ((np.arange(s) + 0.5) / s - 0.5) * pitch
        value = sum(_shepp_logan_value(x + du, z + dv, deform, half_size, center)
                    for du in sub for dv in sub) / (s * s)
    speed = c0 + contrast * value
    return Phantom(speed, origin, pitch, c0)


def _shepp_logan_value(x, z, deform, half_size, center):
    value = np.zeros_like(x)
    for i, (val, a, b, x0, z0, ang) in enumerate(SHEPP_LOGAN):
        th = np.deg2rad(ang)
        dx = (x - center[0]) / half_size - x0
        dz = (z - center[1]) / half_size - z0
        u = dx * np.cos(th) + dz * np.sin(th)
        v = -dx * np.sin(th) + dz * np.cos(th)
        rho = np.hypot(u / a, v / b)
        if i < 2:
            limit = deform.factor(np.arctan2(v / b, u / a))
        else:
            limit = 1.0
        value = value + np.where(rho <= limit, val, 0.0)
    return value


def resolution_layout(offset=0.025):
    """Positions of the point scatterers and line segments of the resolution phantom.

    Two rows (``z = +-offset``) and two columns (``x = +-offset``) each hold
    eight points whose successive gaps follow ``RESOLUTION_LADDER_MM``; the
    second row and column run in the opposite direction. Two solid lines cross
    at the centre along the diagonals.

    Returns
    -------
    points : ndarray, shape (32, 2)
    lines : list of (start, end) pairs
    """
    gaps = np.array(RESOLUTION_LADDER_MM) * 1e-3
    ladder = np.concatenate([[0.0], np.cumsum(gaps)])
    ladder = ladder - 0.5 * gaps.sum()
    pts = []
    for sign, z in ((1, offset), (-1, -offset)):
        pts += [(sign * s, z) for s in ladder]
    for sign, x in ((1, offset), (-1, -offset)):
        pts += [(x, sign * s) for s in ladder]
    half = 0.015 / np.sqrt(2.0)
    lines = [((-half, -half), (half, half)), ((-half, half), (half, -half))]
    return np.array(pts), lines


def make_resolution_phantom(c0=1500.0, c_scatter=1550.0, pitch=0.125e-3, offset=0.025):
    """Point/line resolution phantom.

    Every point scatterer is one pixel with speed ``c_scatter``; the default
    pitch makes all ladder gaps an exact number of pixels.
    """
    if not (c0 > 0 and c_scatter > 0):
        raise GeometryError("sound speeds must be positive")
    pts, lines = resolution_layout(offset)
    reach = np.abs(pts).max() + 4 * pitch
    n = int(np.ceil(reach / pitch))
    origin = np.array([-n * pitch, -n * pitch])
    speed = np.full((2 * n + 1, 2 * n + 1), float(c0))
    idx = np.rint((pts - origin) / pitch).astype(int)
    speed[idx[:, 1], idx[:, 0]] = c_scatter
    for a, b in lines:
        a = np.asarray(a)
        b = np.asarray(b)
        steps = int(np.ceil(np.abs(b - a).max() / pitch)) + 1
        seg = a + np.linspace(0, 1, steps)[:, None] * (b - a)
        j = np.rint((seg - origin) / pitch).astype(int)
        speed[j[:, 1], j[:, 0]] = c_scatter
    return Phantom(speed, origin, pitch, c0)


def phantom_to_q(ph, k0, warn=True):
    """Scattering potential ``q = k0^2 (c0^2 / c^2 - 1)``.

    Emits a warning when ``max|q| / k0^2`` exceeds ``BORN_WARN_RATIO``.
    """
    if not k0 > 0:
        raise GeometryError("k0 must be > 0")
    if not np.all(ph.speed > 0):
        raise GeometryError("non-positive sound speed")
    ratio = (ph.c0 / ph.speed) ** 2 - 1.0
    ratio[ph.speed == ph.c0] = 0.0
    q = k0 * k0 * ratio
    if warn and born_ratio(q, k0) > BORN_WARN_RATIO:
        warnings.warn(f"max|q|/k0^2 = {born_ratio(q, k0):.3f}: Born approximation questionable",
                      stacklevel=2)
    return ScatteringPotential(q.astype(complex), ph.origin, ph.pitch)


def born_ratio(q, k0):
    q = np.asarray(getattr(q, "q", q))
    return float(np.max(np.abs(q), initial=0.0) / (k0 * k0))
