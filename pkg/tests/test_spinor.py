import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngi.scene import SampleGrid
from ngi.spinor import (
    ROW_CHANNELS,
    coefficient_matrix,
    forward_S_vector,
    kappa_hat,
    project_y,
    sample_function,
    spinor_components,
)

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def pauli_spinor(A, M, khat, beta):
    """β σ·[κ̂×(M×κ̂)] + A acting on spin-up, by explicit 2×2 algebra."""
    v = np.cross(khat, np.cross(M, khat))
    op = beta * sum(v[i] * PAULI[i] for i in range(3)) + A * np.eye(2)
    return op @ np.array([1.0, 0.0])


def test_kappa_hat_examples():
    np.testing.assert_allclose(kappa_hat(0.2, "P1"), [-0.995004, 0.099833, 0.0], atol=1e-6)
    np.testing.assert_allclose(kappa_hat(0.2, "P3"), [0.0, 0.099833, -0.995004], atol=1e-6)
    k1, k2 = kappa_hat(0.2, "P1"), kappa_hat(0.2, "P2")
    assert k2[0] == -k1[0] and k2[1] == k1[1] and k2[2] == k1[2]
    for lab in ("P1", "P2", "P3"):
        for th in (1e-6, 0.05, 0.7, 1.5):
            assert abs(np.linalg.norm(kappa_hat(th, lab)) - 1) < 1e-14


def test_kappa_hat_matches_normalize():
    for th in (0.05, 0.2, 1.0):
        kf = np.array([math.sin(th), math.cos(th), 0.0])
        v = np.array([0.0, 1.0, 0.0]) - kf
        np.testing.assert_allclose(kappa_hat(th, "P1"), v / np.linalg.norm(v), atol=1e-14)


def test_kappa_hat_errors():
    with pytest.raises(ValueError, match="undefined"):
        kappa_hat(0.0, "P1")
    with pytest.raises(ValueError):
        kappa_hat(0.1, "P9")


def test_sample_function_examples():
    up, down = spinor_components(2.5, np.zeros(3), kappa_hat(0.3, "P1"), 0.9)
    assert up == 2.5 and down == 0
    up, down = spinor_components(0.7, np.array([0, 0, 1.3]), kappa_hat(0.3, "P1"), 0.9)
    assert up == pytest.approx(0.9 * 1.3 + 0.7, abs=1e-15) and abs(down) < 1e-15
    # θ = π/2 is outside kappa_hat's domain; build κ̂ directly
    k = np.array([-math.sqrt(0.5), math.sqrt(0.5), 0.0])
    up, down = spinor_components(0.0, np.array([1.0, 0, 0]), k, 2.0)
    assert abs(up) < 1e-15
    assert down == pytest.approx(2.0 * (0.5 + 0.5j), abs=1e-15)


def test_non_unit_khat_rejected():
    with pytest.raises(ValueError, match="unit"):
        spinor_components(1.0, np.zeros(3), np.array([1.0, 1.0, 0.0]), 1.0)


def test_closed_forms_match_pauli_algebra(rng):
    for _ in range(200):
        M, A, beta = rng.normal(size=3), rng.normal(), rng.uniform(0.1, 2)
        k = rng.normal(size=3)
        k /= np.linalg.norm(k)
        up, down = spinor_components(A, M, k, beta)
        np.testing.assert_allclose([up, down], pauli_spinor(A, M, k, beta), atol=1e-13)


def test_transversality(rng):
    M = rng.normal(size=(50, 3))
    for lab in ("P1", "P2", "P3"):
        k = kappa_hat(0.4, lab)
        Mp = M - (M @ k)[:, None] * k
        assert np.max(np.abs(Mp @ k)) < 1e-12
        assert np.all(np.linalg.norm(Mp, axis=1) <= np.linalg.norm(M, axis=1) + 1e-12)


def test_zero_magnetization_invariant(rng):
    A = rng.normal(size=(3, 4, 2))
    g = SampleGrid(A, np.zeros((3, 4, 2, 3)), 1.0)
    v = sample_function(g, kappa_hat(0.2, "P2"), 1.3, "P2")
    np.testing.assert_array_equal(v.up, A)
    np.testing.assert_array_equal(v.down, 0)
    assert v.up.shape == g.dims


def test_project_y_examples(rng):
    np.testing.assert_array_equal(project_y(np.ones((3, 4, 5)), 0.5), 2.0)
    vol = np.zeros((4, 5, 6))
    vol[1, 2, 3] = 7.0
    img = project_y(vol, 0.25)
    assert img[1, 3] == 0.25 * 7.0 and np.count_nonzero(img) == 1
    U, V = rng.normal(size=(2, 3, 4, 5))
    np.testing.assert_allclose(project_y(2 * U - 3 * V, 0.7), 2 * project_y(U, 0.7) - 3 * project_y(V, 0.7),
                               atol=1e-13)


def test_project_commutes_with_sample_function(rng):
    g = SampleGrid(rng.normal(size=(4, 5, 3)), rng.normal(size=(4, 5, 3, 3)), 0.5)
    k = kappa_hat(0.3, "P3")
    img = project_y(sample_function(g, k, 0.8, "P3"))
    up, down = spinor_components(project_y(g.A, 0.5), project_y(g.M, 0.5), k, 0.8)
    np.testing.assert_allclose(img.up, up, atol=1e-13)
    np.testing.assert_allclose(img.down, down, atol=1e-13)


def test_coefficient_matrix_examples():
    C = coefficient_matrix(1e-9).entries
    np.testing.assert_allclose(C[1], [0, 1j, 0, 0], atol=1e-8)
    C = coefficient_matrix(math.pi / 3).entries
    np.testing.assert_allclose(C[1], [0.25 + 0.4330127j, 0.4330127 + 0.75j, 0, 0], atol=1e-7)
    s = C @ np.array([1, 0, 0, 0])
    np.testing.assert_allclose(s, [0, 0.25 + 0.4330127j, 0.25 - 0.4330127j, 0, 1], atol=1e-7)


def test_coefficient_matrix_row1_and_rank():
    thetas = np.geomspace(1e-3, 1.5, 30)
    conds = []
    for th in thetas:
        C = coefficient_matrix(th).entries
        np.testing.assert_array_equal(C[0], [0, 0, 1, 1])
        assert np.linalg.matrix_rank(C) == 4
        conds.append(np.linalg.cond(C))
    # measured: cond rises smoothly from ~2.99 at θ=1e-3 to ~4.8 at θ=1.5; the
    # matrix stays full rank as θ -> 0 because S1↑ and S3↑ pin βMz and A
    assert np.all(np.diff(conds) > 0)
    assert 2.9 < conds[0] < 3.0 and conds[-1] < 5.0


def test_coefficient_matrix_range():
    for bad in (0.0, -0.1, math.pi / 2):
        with pytest.raises(ValueError):
            coefficient_matrix(bad)


def test_matrix_text_dump():
    txt = coefficient_matrix(0.3).as_text()
    assert txt.splitlines()[2].startswith("S1_up")
    assert "0.977668244562803j" in txt  # i·cos²(0.15)


def test_forward_examples():
    np.testing.assert_array_equal(forward_S_vector(0, 0, 0, 0, 0.3, 1.0), 0)
    s = forward_S_vector(0, 0, 0.4, 0.2, 0.3, 2.0)
    assert s[0] == pytest.approx(2.0 * 0.4 + 0.2) and s[1] == 0 and s[2] == 0


@given(st.floats(0.01, 1.5), st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.1, 3))
@settings(max_examples=200, deadline=None)
def test_forward_matches_sample_function(theta, v, beta):
    Mx, My, Mz, A = v
    s = forward_S_vector(Mx, My, Mz, A, theta, beta)
    for row, (lab, spin) in enumerate(ROW_CHANNELS):
        up, down = spinor_components(A, np.array([Mx, My, Mz]), kappa_hat(theta, lab), beta)
        assert abs(s[row] - (up if spin == "up" else down)) < 1e-12
