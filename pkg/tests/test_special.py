import mpmath
import numpy as np
import pytest
from scipy import special as sp

from curvedt.errors import DomainError
from curvedt.special import green2d, green2d_dn, green2d_grad, hankel1_0, hankel1_1


def _mp_h(order, x):
    mpmath.mp.dps = 30
    return complex(mpmath.besselj(order, x) + 1j * mpmath.bessely(order, x))


@pytest.mark.parametrize("x", np.geomspace(1e-3, 1e4, 41))
def test_hankel_against_mpmath(x):
    for fn, order in ((hankel1_0, 0), (hankel1_1, 1)):
        ref = _mp_h(order, x)
        assert abs(fn(x) - ref) <= 1e-10 * abs(ref)


def test_table_values():
    h0 = hankel1_0(1.0)
    assert h0.real == pytest.approx(0.7651976866, abs=1e-10)
    assert h0.imag == pytest.approx(0.0882569642, abs=1e-10)
    assert hankel1_1(1.0).real == pytest.approx(0.4400505857, abs=1e-10)


def test_large_argument_modulus():
    assert abs(hankel1_0(10.0)) == pytest.approx(np.sqrt(2 / (np.pi * 10)), rel=1e-2)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_domain(x):
    with pytest.raises(DomainError):
        hankel1_0(x)
    with pytest.raises(DomainError):
        hankel1_1(x)


def test_derivative_identity():
    h = 1e-5
    fd = (hankel1_0(2 + h) - hankel1_0(2 - h)) / (2 * h)
    assert abs(fd + hankel1_1(2.0)) < 1e-6 * abs(hankel1_1(2.0))


def test_wronskian():
    x = np.linspace(0.01, 100, 2001)
    h0, h1 = hankel1_0(x), hankel1_1(x)
    w = h1.real * h0.imag - h0.real * h1.imag
    assert np.max(np.abs(w / (2 / (np.pi * x)) - 1)) < 1e-10
    assert abs(sp.j1(3) * sp.y0(3) - sp.j0(3) * sp.y1(3) - 2 / (3 * np.pi)) < 1e-10 * 2 / (3 * np.pi)


def test_green_unit_distance():
    g = green2d(1.0, np.array([1.0, 0.0]), np.zeros(2))
    assert g == pytest.approx(0.25j * (0.7651976866 + 0.0882569642j), abs=1e-10)


def test_green_symmetry_and_coincidence(rng):
    a, b = rng.normal(size=(2, 50, 2))
    assert np.array_equal(green2d(3.0, a, b), green2d(3.0, b, a))
    with pytest.raises(DomainError):
        green2d(3.0, a[0], a[0])


def test_green_far_field(k0, lam):
    g1 = abs(green2d(k0, np.array([100 * lam, 0.0]), np.zeros(2)))
    g4 = abs(green2d(k0, np.array([400 * lam, 0.0]), np.zeros(2)))
    assert g1 / g4 == pytest.approx(2.0, rel=1e-2)


def test_gradient_finite_difference(k0, rng):
    r = np.array([0.01, -0.02])
    for _ in range(5):
        d = rng.normal(size=2)
        rp = r + 0.05 * d / np.linalg.norm(d)
        grad = green2d_grad(k0, r, rp)
        h = 1e-8
        fd = np.array([(green2d(k0, r, rp + h * e) - green2d(k0, r, rp - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.linalg.norm(grad - fd) < 1e-6 * np.linalg.norm(grad)


def test_gradient_rotation_and_radial(k0):
    r, rp = np.array([0.0, 0.0]), np.array([0.03, 0.01])
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(green2d_grad(k0, rot @ r, rot @ rp), rot @ green2d_grad(k0, r, rp), rtol=1e-13, atol=0)
    g = green2d_grad(k0, r, np.array([0.05, 0.0]))
    assert g[1] == 0
    n = np.array([0.6, 0.8])
    assert green2d_dn(k0, r, rp, n) == pytest.approx(green2d_grad(k0, r, rp) @ n, rel=1e-14)


def test_helmholtz_stencil(k0, lam):
    h = lam / 100
    c = np.array([0.02, 0.013])
    pts = c + h * np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])
    g = green2d(k0, pts, np.zeros(2))
    lap = (g[1:].sum() - 4 * g[0]) / h**2
    assert abs(lap + k0**2 * g[0]) / (k0**2 * abs(g[0])) < 1e-3
