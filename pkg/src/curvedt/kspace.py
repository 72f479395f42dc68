"""Object spectrum from virtual-array data.

Conventions
-----------
``Q(k) = integral q(r) exp(-i k.r) dr`` with ``r`` measured from the curve
centroid. In the working frame of a rotation ``phi`` the sources lie on
``z = z_S`` and the receivers on ``z = z_R > z_S``. For a pair of transverse
wavenumbers ``(a, b) = (k_Rx, k_Sx)`` with ``gamma(u) = sqrt(k0^2 - u^2)``,
plane-wave expansion of both Green's functions in the Born sum gives

    Q(a - b, gamma(a) - gamma(b)) = -4 gamma(a) gamma(b)
        exp(i gamma(b) z_S) exp(-i gamma(a) z_R) P(a, b),
    P(a, b) = sum_R sum_S p(x_R; x_S) exp(-i a x_R) exp(+i b x_S) dx_R dx_S.

A global wavevector ``k`` is looked up in rotation ``phi`` at ``R(-phi) k``.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import cKDTree

from .errors import DomainError, GeometryError
from .geometry import rotation_matrix

EDGE_FRACTION = 0.05
DEFAULT_CUTOFF_FRACTION = 0.9
DEFAULT_ORDER = 4
_TOL = 1e-12


def _gamma(u, k0):
    return np.sqrt(np.maximum(k0 * k0 - np.asarray(u, float) ** 2, 0.0))


def forward_map(k_rx, k_sx, k0):
    """``(kx, kz) = (k_Rx - k_Sx, gamma(k_Rx) - gamma(k_Sx))``.

    Raises :class:`DomainError` for evanescent inputs (``|k_x| > k0``).
    """
    a = np.asarray(k_rx, float)
    b = np.asarray(k_sx, float)
    if np.any(np.abs(a) > k0 * (1 + _TOL)) or np.any(np.abs(b) > k0 * (1 + _TOL)):
        raise DomainError("forward_map needs |k_Rx|, |k_Sx| <= k0")
    ga, gb = _gamma(a, k0), _gamma(b, k0)
    den = ga + gb
    # difference of square roots without cancellation near a = b
    with np.errstate(invalid="ignore", divide="ignore"):
        kz = np.where(den > 0, (b - a) * (b + a) / np.where(den > 0, den, 1.0), 0.0)
    return a - b, kz


def branch_for(kx, kz):
    """Sign of ``k_Rx + k_Sx`` for a target: ``+1`` iff ``kx * kz < 0``.

    Follows from ``gamma(a) + gamma(b) = -kx (a + b) / kz >= 0``; quadrants
    II and IV use the additive root.
    """
    return np.where(np.asarray(kx) * np.asarray(kz) < 0, 1, -1)


def inverse_map(kx, kz, k0, branch=None):
    """Solve ``forward_map(a, b) = (kx, kz)`` for ``(a, b) = (k_Rx, k_Sx)``.

    Parameters
    ----------
    kx, kz : float or ndarray
    k0 : float
    branch : {+1, -1}, optional
        Root to use; by default the one allowed in the target's quadrant.

    Returns
    -------
    a, b : ndarray
        NaN where the target is not reachable with the requested branch.
    valid : ndarray of bool

    Notes
    -----
    The origin maps to ``a = b = 0``. Targets on the ``kx = 0`` axis other
    than the origin are unreachable from a single rotation.
    """
    kx = np.asarray(kx, float)
    kz = np.asarray(kz, float)
    kx, kz = np.broadcast_arrays(kx, kz)
    k2 = kx * kx + kz * kz
    sign = branch_for(kx, kz) if branch is None else np.broadcast_to(branch, kx.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        rad = kz * kz * (4 * k0 * k0 - k2) / k2
        s = sign * np.sqrt(rad)
    s = np.where(kz == 0, 0.0, s)
    a = 0.5 * (kx + s)
    b = a - kx
    origin = k2 == 0
    a = np.where(origin, 0.0, a)
    b = np.where(origin, 0.0, b)
    with np.errstate(invalid="ignore"):
        valid = (rad >= 0) | (kz == 0)
        valid &= (np.abs(a) <= k0 * (1 + _TOL)) & (np.abs(b) <= k0 * (1 + _TOL))
        # gamma has an infinite slope at |u| = k0, so a rounding-level error
        # in a or b shows up as ~sqrt(eps) in kz; the wrong root is off by O(kz)
        kz_back = _gamma(a, k0) - _gamma(b, k0)
        valid &= np.abs(kz_back - kz) <= 1e-7 * k0
    valid |= origin
    a = np.where(valid, a, np.nan)
    b = np.where(valid, b, np.nan)
    return a, b, valid


def inverse_map_point(kx, kz, k0, branch=None):
    """Scalar form of :func:`inverse_map`; returns ``(a, b)`` or None."""
    a, b, ok = inverse_map(kx, kz, k0, branch)
    return (float(a), float(b)) if bool(ok) else None


def rotation_schedule(count):
    """First ``count`` rotation angles: 0, pi/2, +-pi/4, +-pi/8, +-3pi/8, +-pi/16, ..."""
    if count < 1:
        raise GeometryError("need at least one rotation")
    out = [0.0, np.pi / 2]
    d = 4
    while len(out) < count:
        for m in range(1, d // 2, 2):
            out += [m * np.pi / d, -m * np.pi / d]
        d *= 2
    return out[:count]


@dataclass(frozen=True, eq=False)
class KSpacePlan:
    """Assignment of spectrum grid points to rotations and ``(k_Rx, k_Sx)`` pairs.

    Grid index ``(iz, ix)`` holds ``kx = (ix - nx/2) dkx``, ``kz = (iz - nz/2) dkz``.
    For the assigned targets, ``flat`` lists their flat grid indices,
    ``rotation_index`` points into ``rotations`` and ``k_rx``/``k_sx`` are the
    working-frame transverse wavenumbers.
    """

    extent: tuple
    pitch: float
    k0: float
    shape: tuple
    rotations: list
    flat: np.ndarray
    rotation_index: np.ndarray
    branch: np.ndarray
    k_rx: np.ndarray
    k_sx: np.ndarray
    candidates: int
    report: dict = field(default_factory=dict)

    @property
    def dk(self):
        return np.pi / self.extent[0], np.pi / self.extent[1]

    @property
    def kx_axis(self):
        return (np.arange(self.shape[1]) - self.shape[1] // 2) * self.dk[0]

    @property
    def kz_axis(self):
        return (np.arange(self.shape[0]) - self.shape[0] // 2) * self.dk[1]

    def k_of(self, flat):
        iz, ix = np.unravel_index(flat, self.shape)
        return self.kx_axis[ix], self.kz_axis[iz]

    @property
    def fill_fraction(self):
        return len(self.flat) / max(self.candidates, 1)

    def for_rotation(self, i):
        sel = self.rotation_index == i
        return self.flat[sel], self.k_rx[sel], self.k_sx[sel]


def aperture_limit(span, separation, extent):
    """Largest ``|k_x| / k0`` every point of the image region can exchange with
    both lines: the sine of the angle from the far corner of the region to the
    end of a line of length ``span`` at distance ``separation / 2`` from the
    centre."""
    e = 0.5 * (extent if np.isscalar(extent) else max(extent))
    reach = 0.5 * span - e
    if reach <= 0:
        raise GeometryError("virtual lines are shorter than the image region")
    return float(reach / np.hypot(reach, 0.5 * separation + e))


def plan(extent, pitch, k0, max_rotations=2, fill=1.0, edge=EDGE_FRACTION, transverse=1.0):
    """Plan the spectrum grid and per-target rotation assignments.

    Parameters
    ----------
    extent : float or (L, H)
        Image width and height [m].
    pitch : float
        Image pixel size [m]; sets the Nyquist limit ``pi / pitch``.
    k0 : float
    max_rotations : int
    fill : float
        Fraction of ``2 k0`` up to which targets are planned.
    edge : float
        Targets needing ``min(gamma(k_Rx), gamma(k_Sx)) < edge * k0`` are
        left unfilled.
    transverse : float
        Targets needing ``max(|k_Rx|, |k_Sx|) > transverse * k0`` are left
        unfilled (see :func:`aperture_limit`).
    """
    L, H = (extent, extent) if np.isscalar(extent) else tuple(extent)
    if not (L > 0 and H > 0 and pitch > 0 and k0 > 0):
        raise GeometryError("extent, pitch and k0 must be > 0")
    nx = 2 * int(round(L / pitch))
    nz = 2 * int(round(H / pitch))
    dkx, dkz = np.pi / L, np.pi / H
    kx = (np.arange(nx) - nx // 2) * dkx
    kz = (np.arange(nz) - nz // 2) * dkz
    KX, KZ = np.meshgrid(kx, kz)
    kmax = min(2 * k0 * fill, np.pi / pitch)
    cand = np.nonzero((np.hypot(KX, KZ) <= kmax).ravel())[0]
    kxc, kzc = KX.ravel()[cand], KZ.ravel()[cand]
    rotations = rotation_schedule(max_rotations)
    owner = np.full(cand.size, -1)
    ka = np.full(cand.size, np.nan)
    kb = np.full(cand.size, np.nan)
    br = np.zeros(cand.size, int)
    report = {}
    for r, phi in enumerate(rotations):
        todo = owner < 0
        rot = rotation_matrix(-phi)
        kw = np.column_stack([kxc[todo], kzc[todo]]) @ rot.T
        a, b, ok = inverse_map(kw[:, 0], kw[:, 1], k0)
        with np.errstate(invalid="ignore"):
            ok &= np.minimum(_gamma(a, k0), _gamma(b, k0)) >= edge * k0
            ok &= np.maximum(np.abs(a), np.abs(b)) <= transverse * k0
        idx = np.nonzero(todo)[0][ok]
        owner[idx] = r
        ka[idx] = a[ok]
        kb[idx] = b[ok]
        br[idx] = branch_for(kw[ok, 0], kw[ok, 1])
        report[phi] = _jacobian_report(a[ok], b[ok], k0, dkx, dkz)
    keep = owner >= 0
    return KSpacePlan((L, H), pitch, k0, (nz, nx), rotations, cand[keep], owner[keep], br[keep],
                      ka[keep], kb[keep], int(cand.size), report)


def _jacobian_report(a, b, k0, dkx, dkz):
    """Spacing in ``(k_Rx, k_Sx)`` implied by the grid step, via the inverse Jacobian.

    ``d(kx, kz) = [[1, -1], [-a/ga, b/gb]] d(a, b)``; the singular values of
    the inverse matrix scale the grid step into K_RS spacing.
    """
    if a.size == 0:
        return {"targets": 0}
    ga, gb = _gamma(a, k0), _gamma(b, k0)
    J = np.empty((a.size, 2, 2))
    J[:, 0, 0], J[:, 0, 1] = 1.0, -1.0
    J[:, 1, 0], J[:, 1, 1] = -a / ga, b / gb
    det = np.abs(np.linalg.det(J))
    ok = det > 1e-12
    sv = np.linalg.svd(np.linalg.inv(J[ok]), compute_uv=False) if ok.any() else np.zeros((0, 2))
    step = max(dkx, dkz)
    return {
        "targets": int(a.size),
        "krs_step_min": float(sv[:, 1].min() * min(dkx, dkz)) if len(sv) else float("nan"),
        "krs_step_max": float(sv[:, 0].max() * step) if len(sv) else float("nan"),
        "aperture_for_min_step": float(2 * np.pi / (sv[:, 1].min() * min(dkx, dkz))) if len(sv) else float("nan"),
    }


# Extraction -----------------------------------------------------------------


def fourier_sum(vad, k_rx, k_sx, batch=2048):
    """``P(a, b)`` at arbitrary ``(a, b)`` pairs by direct double sums."""
    p = vad.data
    xr, xs = vad.line_r.x, vad.line_s.x
    scale = vad.line_r.dx * vad.line_s.dx
    a = np.asarray(k_rx, float)
    b = np.asarray(k_sx, float)
    out = np.empty(a.size, complex)
    for s in range(0, a.size, batch):
        sl = slice(s, s + batch)
        er = np.exp(-1j * np.outer(a[sl], xr))
        es = np.exp(1j * np.outer(b[sl], xs))
        out[sl] = np.sum((er @ p) * es, axis=1) * scale
    return out


def spectrum_weight(k_rx, k_sx, k0, z_s, z_r):
    ga, gb = _gamma(k_rx, k0), _gamma(k_sx, k0)
    return -4.0 * ga * gb * np.exp(1j * gb * z_s) * np.exp(-1j * ga * z_r)


def extract_q_points(vad, k_rx, k_sx, batch=2048):
    """Spectrum values ``Q`` at planned ``(k_Rx, k_Sx)`` pairs for one rotation."""
    a = np.asarray(k_rx, float)
    b = np.asarray(k_sx, float)
    k0 = vad.k0
    if np.any(np.abs(a) > k0 * (1 + _TOL)) or np.any(np.abs(b) > k0 * (1 + _TOL)):
        raise DomainError("extraction targets must satisfy |k_Rx|, |k_Sx| <= k0")
    return fourier_sum(vad, a, b, batch) * spectrum_weight(a, b, k0, vad.line_s.z, vad.line_r.z)


@dataclass(frozen=True, eq=False)
class QGrid:
    """Filled object spectrum on the plan grid; unfilled entries are zero."""

    values: np.ndarray
    mask: np.ndarray
    plan: KSpacePlan
    calibration: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, complex)
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite value in spectrum grid")
        if np.any(v[~self.mask] != 0):
            raise DomainError("unfilled spectrum entries must be zero")
        object.__setattr__(self, "values", v)

    def k_magnitude(self):
        KX, KZ = np.meshgrid(self.plan.kx_axis, self.plan.kz_axis)
        return np.hypot(KX, KZ)

    def save(self, path):
        """Complex grid followed by the mask as bytes (raw, little endian)."""
        with open(path, "wb") as fh:
            fh.write(np.ascontiguousarray(self.values, dtype="<c16").tobytes())
            fh.write(self.mask.astype(np.uint8).tobytes())


def assemble(plan_, vads, extractor=extract_q_points):
    """Fill a :class:`QGrid` from one virtual array per planned rotation."""
    nz, nx = plan_.shape
    values = np.zeros(nz * nx, complex)
    mask = np.zeros(nz * nx, bool)
    for i, vad in enumerate(vads):
        flat, a, b = plan_.for_rotation(i)
        if flat.size:
            values[flat] = extractor(vad, a, b)
            mask[flat] = True
    return QGrid(values.reshape(nz, nx), mask.reshape(nz, nx), plan_)


def butterworth_gain(k, cutoff, order=DEFAULT_ORDER):
    if not cutoff > 0:
        raise DomainError("cutoff must be > 0")
    return 1.0 / np.sqrt(1.0 + (np.asarray(k, float) / cutoff) ** (2 * order))


def butterworth(qgrid, cutoff=None, order=DEFAULT_ORDER):
    """Radial Butterworth low-pass; ``cutoff`` defaults to ``0.9 k0``."""
    cutoff = DEFAULT_CUTOFF_FRACTION * qgrid.plan.k0 if cutoff is None else cutoff
    g = butterworth_gain(qgrid.k_magnitude(), cutoff, order)
    return QGrid(qgrid.values * g, qgrid.mask, qgrid.plan, qgrid.calibration)


@dataclass(frozen=True, eq=False)
class Image:
    """Complex image ``q`` on a regular grid; pixel ``(iz, ix)`` sits at
    ``origin + (ix, iz) * pitch``."""

    field: np.ndarray
    origin: np.ndarray
    pitch: float

    @property
    def magnitude(self):
        return np.abs(self.field)

    def coords(self):
        nz, nx = self.field.shape
        return self.origin[0] + self.pitch * np.arange(nx), self.origin[1] + self.pitch * np.arange(nz)


def invert_to_image(qgrid, center=(0.0, 0.0), crop=True):
    """Inverse Fourier transform of the spectrum.

    Parameters
    ----------
    center : (x, z)
        Image centre relative to the spectrum origin [m].
    crop : bool
        Keep the central ``L x H`` region of the ``2L x 2H`` transform.
    """
    p = qgrid.plan
    nz, nx = p.shape
    dkx, dkz = p.dk
    values = qgrid.values
    c = np.asarray(center, float)
    if np.any(c != 0):
        KX, KZ = np.meshgrid(p.kx_axis, p.kz_axis)
        values = values * np.exp(1j * (KX * c[0] + KZ * c[1]))
    img = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(values))) * (nx * nz * dkx * dkz / (4 * np.pi ** 2))
    pitch_x = 2 * np.pi / (nx * dkx)
    origin = c - np.array([nx // 2 * pitch_x, nz // 2 * (2 * np.pi / (nz * dkz))])
    if crop:
        ox, oz = nx // 4, nz // 4
        img = img[oz:oz + nz // 2, ox:ox + nx // 2]
        origin = origin + np.array([ox, oz]) * pitch_x
    return Image(img, origin, pitch_x)


# FFT + map + interpolate path -------------------------------------------------


def _fft_samples(vad, edge, pad):
    """All propagating FFT bins of one rotation mapped to global (kx, kz) with their Q."""
    p = vad.data
    nr, ns = p.shape
    k0 = vad.k0
    mr, ms = pad * nr, pad * ns
    a = 2 * np.pi * np.fft.fftfreq(mr, vad.line_r.dx)
    b = 2 * np.pi * np.fft.fftfreq(ms, vad.line_s.dx)
    F = np.fft.fft(p, n=mr, axis=0) * np.exp(-1j * a * vad.line_r.x0)[:, None]
    F = np.fft.ifft(F, n=ms, axis=1) * ms * np.exp(1j * b * vad.line_s.x0)[None, :]
    F *= vad.line_r.dx * vad.line_s.dx
    ia = np.nonzero(np.abs(a) < k0)[0]
    ib = np.nonzero(np.abs(b) < k0)[0]
    A, B = np.meshgrid(a[ia], b[ib], indexing="ij")
    vals = F[np.ix_(ia, ib)]
    keep = (np.minimum(_gamma(A, k0), _gamma(B, k0)) >= edge * k0) & (A != B)
    A, B, vals = A[keep], B[keep], vals[keep]
    kx, kz = forward_map(A, B, k0)
    q = vals * spectrum_weight(A, B, k0, vad.line_s.z, vad.line_r.z)
    kg = np.column_stack([kx, kz]) @ rotation_matrix(vad.rotation).T
    return kg, q


def interpolate_scattered(points, values, query, neighbours=4):
    """Barycentric-linear interpolation on a Delaunay triangulation with an
    inverse-distance fallback for queries outside the triangulated hull."""
    out = LinearNDInterpolator(points, values, fill_value=np.nan)(query)
    bad = ~np.isfinite(out)
    if bad.any():
        tree = cKDTree(points)
        d, i = tree.query(query[bad], k=neighbours)
        w = 1.0 / np.maximum(d, 1e-300)
        out[bad] = np.sum(w * values[i], axis=1) / np.sum(w, axis=1)
    return out


def fft_map_interp(plan_, vads, edge=EDGE_FRACTION, pad=1):
    """Fill the planned targets from full FFTs of each rotation's data."""
    nz, nx = plan_.shape
    values = np.zeros(nz * nx, complex)
    mask = np.zeros(nz * nx, bool)
    for i, vad in enumerate(vads):
        flat, _, _ = plan_.for_rotation(i)
        if flat.size == 0:
            continue
        pts, q = _fft_samples(vad, edge, pad)
        kx, kz = plan_.k_of(flat)
        values[flat] = interpolate_scattered(pts, q, np.column_stack([kx, kz]))
        mask[flat] = True
    return QGrid(values.reshape(nz, nx), mask.reshape(nz, nx), plan_)


def normalized_cross_correlation(a, b):
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / den) if den > 0 else 0.0


# Orchestration ---------------------------------------------------------------


@dataclass
class ReconstructionParams:
    """Settings for :func:`reconstruct`; lengths in metres."""

    extent: float = 0.100
    pixels: int = 256
    rotations: int = 2
    separation: float = 0.220
    elements: int = 900
    span: float = 1.0
    cutoff_fraction: float = DEFAULT_CUTOFF_FRACTION
    order: int = DEFAULT_ORDER
    kernel: str = "image"
    strict: bool = True
    n_interior: int = 4500
    interior_region: tuple = None
    seed: int = 0
    gmres_tol: float = 1e-6
    gmres_restart: int = 50
    gmres_maxit: int = 2000
    fill: float = 1.0
    edge: float = EDGE_FRACTION
    aperture: bool = True
    path: str = "algebraic"
    center: tuple = None

    @property
    def pitch(self):
        return self.extent / self.pixels


@dataclass
class Reconstruction:
    image: Image
    qgrid: QGrid
    plan: KSpacePlan
    vads: list
    timings: dict
    kernel_stats: list = field(default_factory=list)


def virtual_arrays(meas, curve, k0, params, plan_=None, provider=None):
    """Project the measurements to the line pair of each planned rotation."""
    from .virtual import KernelProvider, virtual_array

    if provider is None:
        ext = {"n_interior": params.n_interior, "region": params.interior_region,
               "seed": params.seed, "tol": params.gmres_tol,
               "restart": params.gmres_restart, "maxit": params.gmres_maxit}
        provider = KernelProvider(curve, k0, params.kernel, params.strict, ext)
    rotations = plan_.rotations if plan_ is not None else rotation_schedule(params.rotations)
    vads = [virtual_array(meas, curve, phi, provider, k0, params.separation, params.elements, params.span)
            for phi in rotations]
    return vads, provider


def make_plan(params, k0):
    limit = aperture_limit(params.span, params.separation, params.extent) if params.aperture else 1.0
    return plan(params.extent, params.pitch, k0, params.rotations, params.fill, params.edge, limit)


def reconstruct(meas, curve, k0, params=None, provider=None):
    """Measurements on ``curve`` to an image of ``q`` around the curve centroid."""
    params = ReconstructionParams() if params is None else params
    timings = {}
    t = time.perf_counter()
    plan_ = make_plan(params, k0)
    timings["plan"] = time.perf_counter() - t
    t = time.perf_counter()
    vads, provider = virtual_arrays(meas, curve, k0, params, plan_, provider)
    timings["projection"] = time.perf_counter() - t
    t = time.perf_counter()
    if params.path == "algebraic":
        qg = assemble(plan_, vads)
    elif params.path == "fft":
        qg = fft_map_interp(plan_, vads, params.edge)
    else:
        raise ValueError(f"unknown reconstruction path {params.path!r}")
    timings["spectrum"] = time.perf_counter() - t
    t = time.perf_counter()
    filtered = butterworth(qg, params.cutoff_fraction * k0, params.order)
    offset = (0.0, 0.0) if params.center is None else np.asarray(params.center, float) - curve.centroid
    img = invert_to_image(filtered, offset)
    img = Image(img.field, img.origin + curve.centroid, img.pitch)
    timings["inversion"] = time.perf_counter() - t
    return Reconstruction(img, qg, plan_, vads, timings, provider.stats)
