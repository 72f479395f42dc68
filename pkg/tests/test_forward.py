import numpy as np
import pytest

from curvedt.errors import GeometryError
from curvedt.forward import (MeasurementMatrix, add_noise, incident_field, simulate_gradients,
                             simulate_measurements)
from curvedt.geometry import reference_curve, sample_curve
from curvedt.phantom import ScatteringPotential, make_shepp_logan_modified, phantom_to_q
from curvedt.special import green2d, green2d_grad, hankel1_0


def _blob(rng, n=6, pitch=0.5e-3, origin=(-0.004, 0.006)):
    q = rng.normal(size=(n, n)) * 1e5 + 1j * rng.normal(size=(n, n)) * 1e4
    return ScatteringPotential(q, origin, pitch)


@pytest.fixture(scope="module")
def small_curve():
    return sample_curve(reference_curve("a", 1.5e-3))


def _direct(q, receivers, source, k0):
    # independent oracle: explicit sum over the pixels
    pts, vals = q.support_points()
    return np.array([np.sum(vals * q.pixel_area * green2d(k0, pts, source) * green2d(k0, r, pts))
                     for r in receivers])


def test_zero_potential(small_curve, k0):
    q = ScatteringPotential(np.zeros((4, 4)), (0, 0), 1e-3)
    assert not np.any(simulate_measurements(q, small_curve, k0).data)
    assert not np.any(simulate_gradients(q, small_curve, k0).data)


def test_single_pixel_closed_form(small_curve, k0):
    rc, strength = np.array([0.012, -0.02]), 2.5
    q = ScatteringPotential.point(rc, strength, 0.5e-3)
    m = simulate_measurements(q, small_curve, k0)
    g = green2d(k0, small_curve.points, rc)
    assert np.allclose(m.data, strength * np.outer(g, g), rtol=1e-13, atol=0)
    grad = simulate_gradients(q, small_curve, k0)
    dg = np.einsum("rk,rk->r", green2d_grad(k0, rc, small_curve.points), small_curve.normals)
    assert np.allclose(grad.data, strength * np.outer(dg, g), rtol=1e-13, atol=0)


def test_matches_direct_sum(small_curve, k0, rng):
    q = _blob(rng)
    m = simulate_measurements(q, small_curve, k0)
    for i in (0, 101, 250):
        ref = _direct(q, small_curve.points, small_curve.points[i], k0)
        assert np.allclose(m.data[:, i], ref, rtol=1e-12, atol=0)


def test_symmetry_linearity_scaling(small_curve, k0, rng):
    q1, q2 = _blob(rng), _blob(rng)
    p1 = simulate_measurements(q1, small_curve, k0).data
    p2 = simulate_measurements(q2, small_curve, k0).data
    p12 = simulate_measurements(ScatteringPotential(q1.q + q2.q, q1.origin, q1.pitch), small_curve, k0).data
    scale = np.max(np.abs(p12))
    assert np.max(np.abs(p1 - p1.T)) <= 1e-10 * np.max(np.abs(p1))
    assert np.max(np.abs(p12 - p1 - p2)) <= 1e-12 * scale
    p3 = simulate_measurements(ScatteringPotential(-3.5 * q1.q, q1.origin, q1.pitch), small_curve, k0).data
    assert np.max(np.abs(p3 + 3.5 * p1)) <= 1e-12 * np.max(np.abs(p3))


def test_gradient_finite_difference(small_curve, k0, lam, rng):
    # eps = lam/400 keeps the central-difference truncation error (k eps)^2 / 6 near 4e-5
    q = _blob(rng)
    grad = simulate_gradients(q, small_curve, k0).data
    eps = lam / 400
    for j, i in ((3, 200), (150, 10), (300, 301)):
        r, n = small_curve.points[j], small_curve.normals[j]
        src = small_curve.points[i]
        fd = (_direct(q, [r + eps * n], src, k0) - _direct(q, [r - eps * n], src, k0))[0] / (2 * eps)
        assert abs(grad[j, i] - fd) < 1e-4 * abs(fd)


def test_bit_identical_across_threads(k0, rng):
    curve = sample_curve(reference_curve("a", 1.5e-3))
    q = _blob(rng, n=60, pitch=0.4e-3, origin=(-0.012, -0.012))
    one = simulate_measurements(q, curve, k0, threads=1).data
    four = simulate_measurements(q, curve, k0, threads=4).data
    assert one.tobytes() == four.tobytes()


def test_support_touching_curve_rejected(small_curve, k0):
    q = ScatteringPotential.point(small_curve.points[0], 1.0, 1e-3)
    with pytest.raises(GeometryError):
        simulate_measurements(q, small_curve, k0)


def test_incident_field(k0, lam):
    src = np.array([0.01, 0.02])
    assert incident_field(src, src + [lam, 0], k0)[0] == pytest.approx(0.25j * hankel1_0(2 * np.pi), rel=1e-14)
    a, b = incident_field(src, [src + [0.03, 0.0], src - [0.03, 0.0]], k0)
    assert a == b
    near, far = np.abs(incident_field(src, [src + [10 * lam, 0], src + [100 * lam, 0]], k0))
    assert near / far == pytest.approx(np.sqrt(10), rel=0.02)


def test_matrix_file_round_trip(tmp_path, small_curve, k0, rng):
    m = simulate_measurements(_blob(rng), small_curve, k0)
    m.save(tmp_path / "m.cdt")
    back = MeasurementMatrix.load(tmp_path / "m.cdt")
    assert back.data.tobytes() == m.data.tobytes()
    assert back.k0 == k0 and back.field_kind == "scattered"


def test_noise_is_seeded(rng):
    d = rng.normal(size=(5, 5)) + 0j
    assert np.array_equal(add_noise(d, 0.1, 7), add_noise(d, 0.1, 7))
    assert not np.array_equal(add_noise(d, 0.1, 7), d)


@pytest.mark.slow
def test_grid_convergence_smooth_phantom(k0, lam):
    # baseline pitch lam/6 against lam/12, area-averaged rendering
    curve = sample_curve(reference_curve("a", lam))
    p = [simulate_measurements(phantom_to_q(make_shepp_logan_modified(pitch, supersample=8), k0), curve, k0).data
         for pitch in (lam / 6, lam / 12)]
    assert np.linalg.norm(p[0] - p[1]) / np.linalg.norm(p[1]) < 0.01
