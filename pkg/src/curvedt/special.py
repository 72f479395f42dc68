"""Cylindrical Hankel functions and the free-space 2D Helmholtz Green's function.

Conventions
-----------
Time dependence ``exp(-i w t)``; outgoing waves are ``H^(1)``. The Green's
function solves ``(lap + k^2) g = -delta`` and is

    g(r | r') = (i/4) H0^(1)(k |r - r'|)

All functions broadcast over numpy arrays. Points are arrays whose last axis
has length 2 (x, z).
"""

import numpy as np
from scipy import special as _sp

from .errors import DomainError


def _check_positive(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise DomainError(f"{name} must be finite and > 0 (Hankel functions are singular at 0)")
    return x


def hankel1_0(x):
    """Zero-order Hankel function of the first kind, ``J0(x) + i Y0(x)``.

    Parameters
    ----------
    x : float or array_like
        Strictly positive real argument.

    Raises
    ------
    DomainError
        If any ``x <= 0``.
    """
    x = _check_positive(x)
    return _sp.hankel1(0, x)


def hankel1_1(x):
    """First-order Hankel function of the first kind, ``J1(x) + i Y1(x)``."""
    x = _check_positive(x)
    return _sp.hankel1(1, x)


def _separation(r, rp):
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    d = rp - r
    dist = np.hypot(d[..., 0], d[..., 1])
    if np.any(dist == 0.0):
        raise DomainError("Green's function evaluated at coincident points")
    return d, dist


def green2d(k, r, rp):
    """Outgoing 2D Green's function ``(i/4) H0^(1)(k |r - rp|)``.

    Symmetric in ``r`` and ``rp``. Raises :class:`DomainError` for coincident
    points or ``k <= 0``.
    """
    _check_positive(k, "k")
    _, dist = _separation(r, rp)
    return 0.25j * _sp.hankel1(0, k * dist)


def green2d_grad(k, r, rp):
    """Gradient of :func:`green2d` with respect to ``rp``.

    Returns an array of shape ``broadcast(r, rp)`` with a trailing axis of
    length 2. The value is ``-(i k / 4) H1^(1)(k rho) (rp - r) / rho``, so that
    ``green2d_grad(k, r, rp) @ n`` is the derivative along ``n`` at ``rp``.
    """
    _check_positive(k, "k")
    d, dist = _separation(r, rp)
    scale = -0.25j * k * _sp.hankel1(1, k * dist) / dist
    return scale[..., None] * d


def green2d_dn(k, r, rp, normal):
    """Directional derivative of :func:`green2d` at ``rp`` along ``normal``."""
    _check_positive(k, "k")
    d, dist = _separation(r, rp)
    proj = np.sum(d * np.asarray(normal, dtype=float), axis=-1)
    return -0.25j * k * _sp.hankel1(1, k * dist) * proj / dist
