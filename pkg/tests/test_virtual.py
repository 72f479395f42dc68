import numpy as np
import pytest

from curvedt.errors import GeometryError
from curvedt.forward import simulate_measurements
from curvedt.geometry import reference_curve, sample_curve
from curvedt.kernels import KernelCache, image_kernels
from curvedt.kspace import ReconstructionParams, reconstruct
from curvedt.phantom import ScatteringPotential
from curvedt.special import green2d
from curvedt.virtual import (KernelProvider, VirtualArrayData, VirtualLine, build_virtual_receivers,
                             build_virtual_sources, double_projection, line_pair, project_field, rotate_frame,
                             virtual_array)

STRENGTH = 1e-3  # integrated q * area of the point scatterer [1]


@pytest.fixture(scope="module")
def small_curve():
    return sample_curve(reference_curve("a", 1.5e-3))


@pytest.fixture(scope="module")
def point_setup(curve_a, k0):
    rc = curve_a.centroid + np.array([0.012, -0.008])
    meas = simulate_measurements(ScatteringPotential.point(rc, STRENGTH, 0.5e-3), curve_a, k0)
    return rc, meas


def test_project_field_linear_and_checked(small_curve, k0, rng):
    target = small_curve.centroid + [0.0, -0.12]
    kern = image_kernels(target, small_curve, k0)[0]
    a, b = rng.normal(size=(2, small_curve.n)) + 1j * rng.normal(size=(2, small_curve.n))
    alpha, beta = 0.3 - 2j, 1.7
    lhs = project_field(alpha * a + beta * b, kern, small_curve)
    rhs = alpha * project_field(a, kern, small_curve) + beta * project_field(b, kern, small_curve)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)
    assert project_field(np.zeros(small_curve.n), kern, small_curve) == 0
    with pytest.raises(GeometryError):
        project_field(a[:-1], kern, small_curve)


def test_two_stage_equals_double_sum(small_curve, k0, rng):
    d = rng.normal(size=(small_curve.n,) * 2) + 1j * rng.normal(size=(small_curve.n,) * 2)
    d = d + d.T
    line_s, line_r = line_pair(small_curve, 0.3, n=12, span=0.3)
    ks = image_kernels(line_s.positions, small_curve, k0)
    kr = image_kernels(line_r.positions, small_curve, k0)
    p1 = build_virtual_sources(d, small_curve, line_s, ks)
    two = build_virtual_receivers(p1, small_curve, line_s, line_r, kr, k0).data
    ref = double_projection(d, small_curve, ks, kr)
    assert np.max(np.abs(two - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_zero_measurements(small_curve, k0):
    vad = virtual_array(np.zeros((small_curve.n,) * 2), small_curve, 0.0,
                        lambda t: image_kernels(t, small_curve, k0), k0, n=16, span=0.2)
    assert not np.any(vad.data)


def test_virtual_sources_single_scatterer(point_setup, curve_a, k0):
    rc, meas = point_setup
    line_s, _ = line_pair(curve_a, 0.0, n=90, span=0.5)
    p1 = build_virtual_sources(meas, curve_a, line_s, lambda t: image_kernels(t, curve_a, k0))
    ref = STRENGTH * np.outer(green2d(k0, line_s.positions, rc), green2d(k0, curve_a.points, rc))
    assert np.linalg.norm(p1 - ref) / np.linalg.norm(ref) < 0.05


def test_virtual_array_single_scatterer(point_setup, curve_a, k0):
    # both legs projected: within 8 %
    rc, meas = point_setup
    provider = KernelProvider(curve_a, k0)
    vad = virtual_array(meas, curve_a, np.pi / 4, provider, k0, n=90, span=0.5)
    ref = STRENGTH * np.outer(green2d(k0, vad.line_r.positions, rc), green2d(k0, vad.line_s.positions, rc))
    assert np.linalg.norm(vad.data - ref) / np.linalg.norm(ref) < 0.08


def test_reciprocity_transpose(point_setup, curve_a, k0):
    _, meas = point_setup
    line_s, _ = line_pair(curve_a, 0.0, n=40, span=0.4)
    kw = image_kernels(line_s.positions, curve_a, k0) * curve_a.weights
    over_receivers = kw @ meas.data
    over_sources = meas.data @ kw.T
    assert np.max(np.abs(over_receivers - over_sources.T)) <= 1e-6 * np.max(np.abs(over_receivers))


def test_lines_must_be_exterior(curve_a, k0):
    line = VirtualLine(0.0, 0.0, 10, 0.05, tuple(curve_a.centroid))
    with pytest.raises(GeometryError):
        build_virtual_sources(np.zeros((curve_a.n,) * 2), curve_a, line,
                              lambda t: image_kernels(t, curve_a, k0))


def test_line_geometry():
    line = VirtualLine(np.pi / 2, -0.11, 900, 1.0, (0.01, 0.02))
    assert line.dx == pytest.approx(1.0 / 900)
    assert np.allclose(np.diff(line.x), line.dx)
    assert line.x.mean() == pytest.approx(0.0, abs=1e-15)
    pos = line.positions - [0.01, 0.02]
    # rotated by 90 degrees: the line runs along z at x = +0.11
    assert np.allclose(pos[:, 0], 0.11) and np.allclose(np.diff(pos[:, 1]), line.dx)


def test_rotate_frame_identities(curve_a):
    same, data = rotate_frame(curve_a, "m", 0.0)
    assert np.array_equal(same.points, curve_a.points) and data == "m"
    full, _ = rotate_frame(curve_a, None, 2 * np.pi)
    assert np.max(np.abs(full.points - curve_a.points)) < 1e-12


def test_vad_file_round_trip(tmp_path, small_curve, k0, rng):
    line_s, line_r = line_pair(small_curve, 0.7, n=8, span=0.1)
    vad = VirtualArrayData(rng.normal(size=(8, 8)) + 0j, line_s, line_r, k0)
    vad.save(tmp_path / "v.bin")
    back = VirtualArrayData.load(tmp_path / "v.bin")
    assert back.data.tobytes() == vad.data.tobytes()
    assert back.line_s == line_s and back.line_r == line_r


def test_provider_uses_cache(small_curve, k0):
    cache = KernelCache()
    provider = KernelProvider(small_curve, k0, cache=cache)
    t = small_curve.centroid + np.array([[0.0, -0.12], [0.05, -0.12]])
    a = provider(t)
    assert len(cache) == 2
    assert np.array_equal(provider(t), a)


@pytest.mark.slow
def test_quarter_turn_invariance(curve_a, k0):
    # centred point scatterer: rotating the curve by pi/2 about the scatterer
    # leaves the data unchanged, so the image must rotate with it
    rc = curve_a.centroid
    meas = simulate_measurements(ScatteringPotential.point(rc, STRENGTH, 0.5e-3), curve_a, k0)
    params = ReconstructionParams(pixels=128)
    img1 = reconstruct(meas, curve_a, k0, params).image.magnitude
    turned, data = rotate_frame(curve_a, meas, -np.pi / 2)
    img2 = reconstruct(data, turned, k0, params).image.magnitude
    n = img1.shape[0]
    # pixel (iz, ix) sits at (ix - n/2, iz - n/2) steps from the centre; a
    # counter-clockwise quarter turn sends (x, z) to (-z, x)
    i = np.arange(1, n)
    iz, ix = np.meshgrid(i, i, indexing="ij")
    want = img1[n - ix, iz]
    got = img2[iz, ix]
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 0.02
