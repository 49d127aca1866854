import math

import numpy as np
import pytest

from ngi.fourier import direct_ft, frame_forward, frame_inverse, ft_at


@pytest.mark.parametrize("shape", [(17,), (16,), (9, 12)])
def test_ft_at_matches_direct(shape, rng):
    img = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    q_axes = [rng.uniform(-math.pi, math.pi, size=13) for _ in shape]
    np.testing.assert_allclose(ft_at(img, 1.0, q_axes), direct_ft(img, 1.0, q_axes), atol=1e-10)


def test_ft_at_on_lattice(rng):
    img = rng.normal(size=24)
    q = 2 * math.pi * np.arange(-32, 32) / (64 * 0.5)
    np.testing.assert_allclose(ft_at(img, 0.5, [q]), direct_ft(img, 0.5, [q]), atol=1e-12)


def test_ft_band_limit():
    with pytest.raises(ValueError, match="band limit"):
        ft_at(np.ones(8), 1.0, [np.array([0.0, 4.0])])


def test_plus_sign_convention():
    img = np.zeros(5)
    img[4] = 1.0  # pixel at ζ = +2
    q = np.array([0.3])
    assert ft_at(img, 1.0, [q])[0] == pytest.approx(np.exp(+0.6j), abs=1e-13)


def test_frame_round_trip(rng):
    x = rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6))
    np.testing.assert_allclose(frame_inverse(frame_forward(x, 0.7), 0.7), x, atol=1e-13)
    # frame pixel j sits at ζ = j·a
    X = frame_forward(x, 0.7)
    q0 = 2 * math.pi / (8 * 0.7)
    ref = np.sum(x * np.exp(1j * q0 * 0.7 * np.arange(8))[:, None]) * 0.7**2
    assert X[1, 0] == pytest.approx(ref, abs=1e-12)
