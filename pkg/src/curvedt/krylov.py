"""Restarted GMRES with Givens-rotation least squares.

The batched driver runs several right-hand sides in lockstep so that the
operator is applied to a block of vectors at once (one matrix-matrix product
per Arnoldi step). Each column keeps its own Hessenberg matrix and rotations.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as _la

from .errors import ConvergenceError

DEFAULT_TOL = 1e-6
DEFAULT_RESTART = 50
DEFAULT_MAXIT = 2000


@dataclass
class LinearSystemStats:
    """Outcome of one iterative solve.

    Attributes
    ----------
    iterations : int
        Total Arnoldi steps over all restart cycles.
    residual : float
        Final relative residual ``|b - A x| / |b|``.
    restart : int
        Krylov subspace size per cycle.
    converged : bool
    breakdown : bool
        True if the Arnoldi process produced a zero vector.
    history : list of float
        Relative residual estimate after every Arnoldi step.
    """

    iterations: int = 0
    residual: float = np.inf
    restart: int = DEFAULT_RESTART
    converged: bool = False
    breakdown: bool = False
    history: list = field(default_factory=list)


def _givens(a, b):
    """Complex Givens rotation ``(c, s)`` zeroing ``b`` in ``[a, b]``; ``c`` is real."""
    absa = np.abs(a)
    absb = np.abs(b)
    nrm = np.hypot(absa, absb)
    c = np.where(nrm > 0, absa / np.where(nrm > 0, nrm, 1.0), 1.0)
    phase = np.where(absa > 0, a / np.where(absa > 0, absa, 1.0), 1.0)
    s = np.where(nrm > 0, phase * np.conj(b) / np.where(nrm > 0, nrm, 1.0), 0.0)
    return c, s


def gmres_batch(apply, B, tol=DEFAULT_TOL, restart=DEFAULT_RESTART, maxit=DEFAULT_MAXIT, x0=None):
    """Solve ``A X = B`` column by column with restarted GMRES.

    Parameters
    ----------
    apply : callable
        ``apply(V)`` returns ``A @ V`` for a block ``V`` of shape ``(n, m)``.
    B : ndarray, shape (n, m)
    tol : float
        Relative residual target per column.
    restart : int
        Krylov dimension per cycle.
    maxit : int
        Cap on total Arnoldi steps per column.

    Returns
    -------
    X : ndarray, shape (n, m)
    stats : list of LinearSystemStats

    Raises
    ------
    ConvergenceError
        If any column misses ``tol``. ``err.x`` holds the best iterates and
        ``err.stats`` the per-column statistics.
    """
    B = np.asarray(B, dtype=complex)
    if B.ndim != 2:
        raise ValueError("B must be 2D (n, m)")
    n, m = B.shape
    restart = int(max(1, min(restart, n)))
    X = np.zeros((n, m), complex) if x0 is None else np.array(x0, dtype=complex)
    bnorm = np.linalg.norm(B, axis=0)
    zero = bnorm == 0
    bnorm = np.where(zero, 1.0, bnorm)
    stats = [LinearSystemStats(restart=restart) for _ in range(m)]
    for j in np.nonzero(zero)[0]:
        X[:, j] = 0.0
        stats[j].residual = 0.0
        stats[j].converged = True

    active = ~zero
    total = np.zeros(m, int)
    while active.any():
        cols = np.nonzero(active)[0]
        R = B[:, cols] - apply(X[:, cols])
        beta = np.linalg.norm(R, axis=0)
        rel = beta / bnorm[cols]
        done_now = rel <= tol
        for c, r in zip(cols[done_now], rel[done_now]):
            stats[c].residual = float(r)
            stats[c].converged = True
        keep = ~done_now & (total[cols] < maxit)
        for c, r in zip(cols[~keep & ~done_now], rel[~keep & ~done_now]):
            stats[c].residual = float(r)
        active[cols[~keep]] = False
        cols, R, beta = cols[keep], R[:, keep], beta[keep]
        if cols.size == 0:
            break
        X[:, cols] += _cycle(apply, R, beta, bnorm[cols], tol, restart, maxit - total[cols],
                             [stats[c] for c in cols], total, cols)

    for s, c in zip(stats, range(m)):
        s.iterations = int(total[c])
    failed = [j for j, s in enumerate(stats) if not s.converged]
    if failed:
        worst = max(stats[j].residual for j in failed)
        raise ConvergenceError(
            f"GMRES did not reach tol={tol:g} for {len(failed)} of {m} systems "
            f"(worst residual {worst:.3e})", x=X, stats=stats)
    return X, stats


def _cycle(apply, R, beta, bnorm, tol, restart, budget, stats, total, cols):
    """One restart cycle for the active columns; returns the update ``V y``.

    All columns step together; a column that has converged or broken down
    stops contributing to the update but is still carried through the
    (cheap) block operations.
    """
    n, m = R.shape
    steps = int(min(restart, budget.max()))
    V = np.zeros((m, steps + 1, n), complex)
    H = np.zeros((m, steps + 1, steps), complex)
    cs = np.zeros((m, steps))
    sn = np.zeros((m, steps), complex)
    g = np.zeros((m, steps + 1), complex)
    g[:, 0] = beta
    V[:, 0] = (R / beta).T
    live = np.ones(m, bool)
    used = np.zeros(m, int)
    for j in range(steps):
        live &= used < budget
        if not live.any():
            break
        w = np.ascontiguousarray(apply(np.ascontiguousarray(V[:, j].T)).T)
        basis = V[:, : j + 1]
        # classical Gram-Schmidt, applied twice for stability
        for _ in range(2):
            h = np.conj(np.matmul(basis, w.conj()[:, :, None])[..., 0])
            w -= np.matmul(h[:, None, :], basis)[:, 0]
            H[:, : j + 1, j] += h
        hn = np.linalg.norm(w, axis=1)
        H[:, j + 1, j] = hn
        scale = np.maximum(np.abs(H[:, : j + 1, j]).max(axis=1), 1.0e-300)
        broke = hn <= 1e-14 * scale
        V[:, j + 1] = np.where(broke[:, None], 0.0, w / np.where(broke, 1.0, hn)[:, None])
        # apply previous rotations to the new column, then form a new one
        col = H[:, :, j]
        for i in range(j):
            a = col[:, i].copy()
            b = col[:, i + 1]
            col[:, i] = cs[:, i] * a + sn[:, i] * b
            col[:, i + 1] = -np.conj(sn[:, i]) * a + cs[:, i] * b
        c, s = _givens(col[:, j], col[:, j + 1])
        cs[:, j] = np.where(live, c, 1.0)
        sn[:, j] = np.where(live, s, 0.0)
        col[:, j] = cs[:, j] * col[:, j] + sn[:, j] * col[:, j + 1]
        col[:, j + 1] = 0.0
        gj = g[:, j].copy()
        g[:, j + 1] = np.where(live, -np.conj(sn[:, j]) * gj, g[:, j + 1])
        g[:, j] = np.where(live, cs[:, j] * gj, gj)
        used[live] += 1
        rel = np.abs(g[:, j + 1]) / bnorm
        for i in np.nonzero(live)[0]:
            stats[i].history.append(float(rel[i]))
            if broke[i]:
                stats[i].breakdown = True
        live &= ~((rel <= tol) | broke)

    total[cols] += used
    update = np.zeros((n, m), complex)
    for i in range(m):
        k = used[i]
        if k == 0:
            continue
        y = _la.solve_triangular(H[i, :k, :k], g[i, :k]) if np.all(np.diag(H[i, :k, :k]) != 0) \
            else _back_substitute(H[i, :k, :k], g[i, :k])
        update[:, i] = y @ V[i, :k]
    return update


def _back_substitute(U, g):
    k = len(g)
    y = np.zeros(k, complex)
    for i in range(k - 1, -1, -1):
        d = U[i, i]
        y[i] = 0.0 if d == 0 else (g[i] - U[i, i + 1:] @ y[i + 1:]) / d
    return y


def gmres(apply, b, tol=DEFAULT_TOL, restart=DEFAULT_RESTART, maxit=DEFAULT_MAXIT, x0=None):
    """Restarted GMRES for one right-hand side.

    ``apply`` maps a vector of shape ``(n,)`` to ``A @ v``. Returns ``(x, stats)``
    and raises :class:`ConvergenceError` (carrying the best iterate) on failure.
    """
    b = np.asarray(b, dtype=complex)

    def block(V):
        return np.column_stack([apply(V[:, i]) for i in range(V.shape[1])])

    x0b = None if x0 is None else np.asarray(x0, complex)[:, None]
    try:
        X, stats = gmres_batch(block, b[:, None], tol, restart, maxit, x0b)
    except ConvergenceError as err:
        raise ConvergenceError(str(err), x=err.x[:, 0], stats=err.stats[0]) from None
    return X[:, 0], stats[0]
