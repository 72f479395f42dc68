"""Exterior Dirichlet projection kernels on a sampled boundary.

A kernel ``K`` for an exterior target ``x`` turns boundary pressure into the
pressure at ``x`` by the quadrature ``p(x) = sum_j p_j K_j w_j`` (see
:func:`curvedt.virtual.project_field`). Two constructions are offered:

* image method: the Green's function is made to vanish on the boundary by a
  negated source mirrored through each boundary sample, restricted to the
  part of the boundary facing the target;
* extinction method: ``K`` is chosen so that the same quadrature applied to
  ``g0`` reproduces the free field of ``x`` at many interior points, which is
  the condition that the Dirichlet Green's function vanishes inside.
"""

import struct
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as _la

from .errors import ConvergenceError, FormatError, GeometryError, ValidityError
from .geometry import _segments_intersect, curve_contains, mirror_point
from .krylov import DEFAULT_MAXIT, DEFAULT_RESTART, DEFAULT_TOL, LinearSystemStats, gmres_batch
from .special import green2d, green2d_dn

METHODS = ("image", "extinction")
DEFAULT_INTERIOR = 4500


@dataclass(frozen=True, eq=False)
class ProjectionKernel:
    """Kernel samples for one exterior target.

    ``values`` has units of 1/m and one entry per boundary sample. ``stats``
    is set for extinction kernels only.
    """

    target: np.ndarray
    values: np.ndarray
    method: str
    curve_digest: str
    stats: LinearSystemStats = field(default=None, repr=False)


def _as_targets(targets):
    t = np.asarray(targets, dtype=float)
    return t[None] if t.ndim == 1 else t


def _check_exterior(curve, targets):
    inside = np.atleast_1d(curve_contains(curve, targets))
    if inside.any():
        i = int(np.argmax(inside))
        raise GeometryError(f"target {targets[i].tolist()} lies inside the measurement curve")


def is_convex(curve):
    p = curve.points
    e1 = np.roll(p, -1, axis=0) - p
    e0 = p - np.roll(p, 1, axis=0)
    return bool(np.all(e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0] >= 0))


def lit_mask(target, curve):
    """Boundary samples whose outward normal faces ``target``."""
    return np.sum(curve.normals * (np.asarray(target, float) - curve.points), axis=1) > 0


def occluded_samples(target, curve, mask=None):
    """Indices of lit samples whose line of sight to ``target`` crosses the curve."""
    mask = lit_mask(target, curve) if mask is None else mask
    if is_convex(curve):
        return np.zeros(0, dtype=int)
    idx = np.nonzero(mask)[0]
    a = curve.points
    b = np.roll(a, -1, axis=0)
    t = np.asarray(target, float)
    bad = []
    n = curve.n
    for start in range(0, idx.size, 128):
        j = idx[start:start + 128]
        # pull the sample end slightly toward the target so its own edges do not count
        s = a[j] + 1e-9 * (t - a[j])
        hit = _segments_intersect(s[:, None], t[None, None], a[None], b[None])
        e = np.arange(n)
        hit &= (e[None] != j[:, None]) & (e[None] != (j[:, None] - 1) % n)
        bad.extend(j[hit.any(axis=1)].tolist())
    return np.array(bad, dtype=int)


def image_kernel(target, curve, k0, strict=True):
    """Image-method kernel ``d/dn' [g0(x|r') - g0(2r' - x|r')]`` on the lit boundary.

    The image point is held fixed while the normal derivative is taken, so
    each lit sample gets twice the free-space normal derivative. Samples that
    face away from the target are set to zero: their mirror points would land
    on the target's side of the boundary, where the image construction no
    longer cancels the Green's function without disturbing the exterior.

    Parameters
    ----------
    target : array_like, shape (2,)
        Exterior point.
    curve : BoundaryCurve
    k0 : float
    strict : bool
        On non-convex curves, raise :class:`ValidityError` if a lit sample is
        hidden from the target by another part of the curve.

    Raises
    ------
    GeometryError
        Target inside the curve.
    ValidityError
        Occluded sample under ``strict``; ``err.sample`` is its index.
    """
    t = np.asarray(target, dtype=float)
    _check_exterior(curve, t[None])
    return ProjectionKernel(t.copy(), _image_values(t, curve, k0, strict), "image", curve.digest())


def _image_values(t, curve, k0, strict):
    mask = lit_mask(t, curve)
    if strict:
        bad = occluded_samples(t, curve, mask)
        if bad.size:
            raise ValidityError(
                f"boundary sample {int(bad[0])} at {curve.points[bad[0]].tolist()} is hidden from "
                f"target {t.tolist()}; image kernel not valid here", sample=int(bad[0]))
    rp = curve.points
    images = mirror_point(t, rp)
    values = green2d_dn(k0, t, rp, curve.normals) - green2d_dn(k0, images, rp, curve.normals)
    return np.where(mask, values, 0.0)


def image_kernels(targets, curve, k0, strict=True):
    """Image kernels for many targets as an array ``(n_targets, n_samples)``."""
    t = _as_targets(targets)
    _check_exterior(curve, t)
    return np.stack([_image_values(x, curve, k0, strict) for x in t]) if len(t) else np.zeros((0, curve.n), complex)


def sample_interior(curve, n, wavelength, region=None, rng=None, margin=0.25):
    """Uniform random points inside ``curve`` and inside a bounding ``region``.

    Points closer than ``margin * wavelength`` to the boundary are redrawn.

    Parameters
    ----------
    region : (xmin, zmin, xmax, zmax), optional
        Sampling box; defaults to the curve's bounding box.
    rng : numpy.random.Generator or int, optional
    """
    rng = np.random.default_rng(rng)
    lo = curve.points.min(axis=0)
    hi = curve.points.max(axis=0)
    if region is not None:
        lo = np.maximum(lo, region[:2])
        hi = np.minimum(hi, region[2:])
    if np.any(hi <= lo):
        raise GeometryError("interior sampling region is empty")
    out = np.zeros((0, 2))
    for _ in range(1000):
        if len(out) >= n:
            break
        cand = rng.uniform(lo, hi, size=(max(2 * (n - len(out)), 64), 2))
        far = curve.distance_to(cand) > margin * wavelength
        cand = cand[far]
        if len(cand):
            cand = cand[curve_contains(curve, cand)]
        out = np.concatenate([out, cand])
    if len(out) < n:
        raise GeometryError("could not place interior points: region too thin for the boundary margin")
    return out[:n]


class ExtinctionSolver:
    """Extinction-condition kernel solver for one curve and one interior point set.

    The overdetermined system ``A K = b`` with ``A[m, j] = g0(r_m|r'_j) w_j``
    and ``b[m] = g0(r_m|x)`` is reduced once by a column-pivoted QR
    factorisation, ``A P = Q R``. Each target then needs only ``Q^H b`` and a
    GMRES solve of the square triangular system ``R y = Q^H b``, right
    preconditioned by the inverse diagonal of ``R`` (so the GMRES residual is
    still the residual of the unpreconditioned system).

    Parameters
    ----------
    curve : BoundaryCurve
    k0 : float
    n_interior : int
        Number of interior collocation points, at least ``curve.n``.
    region : (xmin, zmin, xmax, zmax), optional
        Box restricting the interior points (usually the object's bounding box).
    seed : int, optional
    tol, restart, maxit :
        GMRES controls.
    """

    def __init__(self, curve, k0, n_interior=DEFAULT_INTERIOR, region=None, seed=0,
                 tol=DEFAULT_TOL, restart=DEFAULT_RESTART, maxit=DEFAULT_MAXIT):
        if n_interior < curve.n:
            raise GeometryError(
                f"need at least as many interior points as boundary samples ({n_interior} < {curve.n})")
        self.curve = curve
        self.k0 = float(k0)
        self.tol = tol
        self.restart = int(restart)
        self.maxit = maxit
        self.interior = sample_interior(curve, n_interior, 2 * np.pi / k0, region, seed)
        self.matrix = self.system_matrix(self.interior)
        q, r, perm = _la.qr(self.matrix, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if diag[-1] <= np.finfo(float).eps * diag[0]:
            raise GeometryError("interior point set gives a rank-deficient extinction system")
        self.q, self.r, self.perm = q, r, perm
        self._scale = 1.0 / np.diag(r)
        self.condition_estimate = float(diag[0] / diag[-1])

    def system_matrix(self, points):
        pts = np.asarray(points, float)
        return green2d(self.k0, pts[:, None, :], self.curve.points[None]) * self.curve.weights

    def rhs(self, targets, points=None):
        pts = self.interior if points is None else np.asarray(points, float)
        t = _as_targets(targets)
        return green2d(self.k0, pts[:, None, :], t[None])

    def solve(self, targets, batch=64):
        """Kernel values ``(n_targets, n_samples)`` and one stats object per target.

        Raises :class:`ConvergenceError` carrying all kernels and stats if any
        target fails to converge.
        """
        t = _as_targets(targets)
        _check_exterior(self.curve, t)
        out = np.zeros((len(t), self.curve.n), complex)
        stats = []
        failed = False
        for start in range(0, len(t), batch):
            tb = t[start:start + batch]
            b = self.rhs(tb)
            c = self.q.conj().T @ b
            try:
                y, st = gmres_batch(self._apply, c, self.tol, self.restart, self.maxit)
            except ConvergenceError as err:
                y, st, failed = err.x, err.stats, True
            out[start:start + batch, self.perm] = (y * self._scale[:, None]).T
            resid = np.linalg.norm(self.matrix @ out[start:start + batch].T - b, axis=0)
            for s, r_, bn in zip(st, resid, np.linalg.norm(b, axis=0)):
                s.extinction_residual = float(r_ / bn)
            stats.extend(st)
        if failed:
            raise ConvergenceError("extinction kernel solve did not converge", x=out, stats=stats)
        return out, stats

    def _apply(self, v):
        return self.r @ (v * self._scale[:, None])

    def held_out_residual(self, kernels, targets, points):
        """Relative extinction residual of ``kernels`` at fresh interior ``points``."""
        a = self.system_matrix(points)
        b = self.rhs(targets, points)
        return np.linalg.norm(a @ np.atleast_2d(kernels).T - b, axis=0) / np.linalg.norm(b, axis=0)


def extinction_kernel(target, curve, k0, n_interior=DEFAULT_INTERIOR, tol=DEFAULT_TOL, region=None,
                      seed=0, restart=DEFAULT_RESTART, maxit=DEFAULT_MAXIT, solver=None):
    """Extinction-method kernel for one target; returns ``(ProjectionKernel, stats)``.

    Pass a prepared :class:`ExtinctionSolver` as ``solver`` to reuse its
    factorisation across targets.
    """
    if solver is None:
        solver = ExtinctionSolver(curve, k0, n_interior, region, seed, tol, restart, maxit)
    t = np.asarray(target, float)
    values, stats = solver.solve(t[None])
    return ProjectionKernel(t.copy(), values[0], "extinction", curve.digest(), stats[0]), stats[0]


# Kernel cache ---------------------------------------------------------------

CACHE_MAGIC = b"CDTKERN1"
_RECORD = struct.Struct("<20sddBQ")


class KernelCache:
    """Thread-safe map from ``(curve digest, method, target)`` to kernel values.

    Targets are keyed by their exact float64 bit patterns.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._data = {}

    @staticmethod
    def key(digest, method, target):
        t = np.asarray(target, dtype="<f8")
        return (digest, method, t.tobytes())

    def get(self, digest, method, target):
        with self._lock:
            return self._data.get(self.key(digest, method, target))

    def put(self, digest, method, target, values):
        values = np.array(values, dtype=complex)
        values.setflags(write=False)
        with self._lock:
            return self._data.setdefault(self.key(digest, method, target), values)

    def __len__(self):
        with self._lock:
            return len(self._data)

    def lookup_many(self, digest, method, targets, compute):
        """Return kernels for all ``targets``, computing the missing rows in one call."""
        t = _as_targets(targets)
        rows = [self.get(digest, method, x) for x in t]
        missing = [i for i, r in enumerate(rows) if r is None]
        if missing:
            fresh = compute(t[missing])
            for i, v in zip(missing, fresh):
                rows[i] = self.put(digest, method, t[i], v)
        return np.stack(rows) if rows else np.zeros((0, 0), complex)

    def save(self, path):
        with self._lock:
            items = sorted(self._data.items())
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<Q", len(items)))
            for (digest, method, tb), values in items:
                tx, tz = np.frombuffer(tb, dtype="<f8")
                fh.write(_RECORD.pack(bytes.fromhex(digest), tx, tz, METHODS.index(method), values.size))
                fh.write(np.ascontiguousarray(values, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path):
        cache = cls()
        with open(path, "rb") as fh:
            if fh.read(8) != CACHE_MAGIC:
                raise FormatError(f"{path}: not a kernel cache")
            (count,) = struct.unpack("<Q", fh.read(8))
            for _ in range(count):
                head = fh.read(_RECORD.size)
                if len(head) != _RECORD.size:
                    raise FormatError(f"{path}: truncated record")
                digest, tx, tz, method, n = _RECORD.unpack(head)
                raw = fh.read(16 * n)
                if len(raw) != 16 * n:
                    raise FormatError(f"{path}: truncated kernel values")
                cache.put(digest.hex(), METHODS[method], (tx, tz), np.frombuffer(raw, dtype="<c16"))
        return cache
