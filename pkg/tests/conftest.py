import numpy as np
import pytest

from curvedt.geometry import BoundaryCurve, reference_curve, sample_curve

FREQ = 500e3
C0 = 1500.0
LAM = C0 / FREQ
K0 = 2 * np.pi / LAM


def stadium(length, radius, spacing):
    """Two straight sides of ``length`` joined by half circles; the bottom side is z = -radius."""
    per = 2 * length + 2 * np.pi * radius
    n = int(round(per / spacing))
    pts = []
    for s in np.arange(n) * per / n:
        if s < length:
            pts.append((-length / 2 + s, -radius))
        elif s < length + np.pi * radius:
            a = -np.pi / 2 + (s - length) / radius
            pts.append((length / 2 + radius * np.cos(a), radius * np.sin(a)))
        elif s < 2 * length + np.pi * radius:
            pts.append((length / 2 - (s - length - np.pi * radius), radius))
        else:
            a = np.pi / 2 + (s - 2 * length - np.pi * radius) / radius
            pts.append((-length / 2 + radius * np.cos(a), radius * np.sin(a)))
    return BoundaryCurve.from_points(np.array(pts))


@pytest.fixture(scope="session")
def k0():
    return K0


@pytest.fixture(scope="session")
def lam():
    return LAM


@pytest.fixture(scope="session")
def curve_a():
    return sample_curve(reference_curve("a"), LAM)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
