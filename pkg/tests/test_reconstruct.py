import math
import warnings

import numpy as np
import pytest

from ngi.correlator import CorrelationMap, DeltaGrid
from ngi.errors import DataQualityWarning, GeometryError, StatisticsError
from ngi.fourier import frame_forward
from ngi.phantoms import ellipse_image, ellipse_projection
from ngi.reconstruct.magnitude import magnitude_from_correlation
from ngi.reconstruct.phase import (
    RetrievalParams,
    align,
    check_support,
    conjugate_flip,
    phase_retrieve,
    register_and_score,
)
from ngi.reconstruct.tomo import (
    angle_coverage,
    check_coverage,
    derotate_components,
    fbp_slice,
    rotate_sample,
    tomo_components,
    tomo_fbp,
)
from ngi.reconstruct.unmix import solve_components
from ngi.scene import SampleGrid
from ngi.spinor import CHANNEL_NAMES, coefficient_matrix, project_y


def fermion_map(values, stderr=None, norm=2.0):
    values = np.asarray(values, float)
    dg = DeltaGrid((-(values.size // 2) * 1.0,), (1.0,), (values.size,))
    meta = {"lambda": 1.0, "d2": 100.0}
    if norm is not None:
        meta["norm"] = norm
    return CorrelationMap(values=values, delta_grid=dg, spin="up", position_label="P1", statistics="fermion",
                          provenance="test", stderr=stderr, meta=meta)


# magnitude


def test_magnitude_examples():
    m = magnitude_from_correlation(fermion_map([-2.0 * 4, 0.0, -2.0 * 9]))
    np.testing.assert_allclose(m.values, [2.0, 0.0, 3.0], rtol=1e-15)
    assert m.q_pitch[0] == pytest.approx(2 * math.pi / 100.0)
    assert m.q_axis(0)[1] == 0.0


def test_magnitude_round_trip(rng):
    mag = rng.uniform(0, 5, size=33)
    m = magnitude_from_correlation(fermion_map(-1.7 * mag**2, norm=1.7))
    np.testing.assert_allclose(m.values, mag, rtol=1e-12)


def test_magnitude_clamps_positive_with_warning():
    with pytest.warns(DataQualityWarning, match="clamped"):
        m = magnitude_from_correlation(fermion_map([-8.0, 0.5, -2.0]))
    assert m.values[1] == 0.0
    # within 3 stderr: silent
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        magnitude_from_correlation(fermion_map([-8.0, 0.5, -2.0], stderr=np.full(3, 0.2)))


def test_magnitude_needs_norm_and_fermion():
    with pytest.raises(StatisticsError, match="norm"):
        magnitude_from_correlation(fermion_map([-1.0, -1.0], norm=None))
    bos = fermion_map([1.0, 1.0]).negated("boson")
    with pytest.raises(StatisticsError, match="fermionic"):
        magnitude_from_correlation(bos)


# phase retrieval


def test_point_object_recovered():
    truth = np.zeros((16, 16))
    truth[3, 5] = 1.0
    mag = np.abs(frame_forward(truth, 1.0))
    sup = np.zeros_like(truth, bool)
    sup[:8, :8] = True
    res = phase_retrieve(mag, sup, pitch=1.0, n_iter=200, restarts=2)
    assert res.residuals.min() < 1e-6
    assert register_and_score(res.best, truth) < 1e-6


def test_conjugate_flip_preserves_magnitude(rng):
    x = rng.normal(size=(12, 10)) + 1j * rng.normal(size=(12, 10))
    np.testing.assert_allclose(np.abs(frame_forward(conjugate_flip(x), 0.5)), np.abs(frame_forward(x, 0.5)),
                               atol=1e-12)
    np.testing.assert_array_equal(conjugate_flip(conjugate_flip(x)), x)


def test_support_errors():
    with pytest.raises(ValueError, match="empty"):
        check_support(np.zeros((8, 8), bool), (8, 8))
    with pytest.raises(ValueError, match="frame"):
        check_support(np.ones((10, 8), bool), (8, 8))
    sup = np.zeros((8, 8), bool)
    sup[:5, :3] = True
    with pytest.raises(ValueError, match="oversampling below 2 on axis 0"):
        check_support(sup, (8, 8))


def test_retrieval_deterministic(rng):
    truth = np.zeros((16, 16))
    truth[:6, :6] = rng.uniform(size=(6, 6))
    mag = np.abs(frame_forward(truth, 1.0))
    sup = np.zeros_like(truth, bool)
    sup[:8, :8] = True
    a = phase_retrieve(mag, sup, RetrievalParams(n_iter=60, restarts=2, seed=5), pitch=1.0)
    b = phase_retrieve(mag, sup, RetrievalParams(n_iter=60, restarts=2, seed=5), pitch=1.0)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.objects, b.objects))
    assert a.traces[0].shape == (60,)


def test_asymmetric_start_and_plain_mode():
    from ngi.reconstruct.phase import _asymmetric
    sup = np.zeros((16, 16), bool)
    sup[:8, :8] = True
    a = _asymmetric(sup)
    assert a.sum() == 64 - 4 and not a[6:8, 6:8].any() and a[:6, :8].all()
    truth = np.zeros((16, 16))
    truth[3, 5] = 1.0
    mag = np.abs(frame_forward(truth, 1.0))
    res = phase_retrieve(mag, sup, pitch=1.0, n_iter=100, restarts=1, asym_iters=0, shrinkwrap_every=0)
    assert res.objects[0].shape == (16, 16) and np.all(res.objects[0][~sup] == 0)


# scoring


def test_score_identity_shift_phase_flip(rng):
    truth = np.zeros((16, 16), complex)
    truth[2:8, 3:9] = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    assert register_and_score(truth, truth) < 1e-14
    moved = np.roll(truth, (3, -2), axis=(0, 1)) * np.exp(0.7j)
    al = align(moved, truth)
    assert al.nrmse < 1e-13 and not al.flipped
    assert al.phase == pytest.approx(-0.7, abs=1e-12)
    assert register_and_score(conjugate_flip(truth), truth) < 1e-13
    assert align(conjugate_flip(truth), truth).flipped


def test_score_zero_truth():
    with pytest.raises(ValueError, match="zero norm"):
        register_and_score(np.ones((4, 4)), np.zeros((4, 4)))


# unmixing


def forward_images(comp, theta, beta):
    C = coefficient_matrix(theta).entries
    x = np.stack([beta * comp[0], beta * comp[1], beta * comp[2], comp[3]])
    S = np.tensordot(C, x, axes=1)
    return {name: S[i] for i, name in enumerate(CHANNEL_NAMES)}


def test_unmix_round_trip(rng):
    comp = rng.normal(size=(4, 20, 24))
    maps = solve_components(forward_images(comp, 0.35, 1.9), 0.35, 1.9)
    np.testing.assert_allclose(maps.stacked(), comp, atol=1e-12)
    assert np.max(maps.residual) < 1e-12
    assert maps.condition_number == pytest.approx(np.linalg.cond(
        np.vstack([coefficient_matrix(0.35).entries.real, coefficient_matrix(0.35).entries.imag])))


def test_unmix_zeros_and_sequence():
    maps = solve_components([np.zeros((3, 3))] * 5, 0.2, 1.0)
    np.testing.assert_array_equal(maps.stacked(), 0)


def test_unmix_noise_scales_linearly(rng):
    comp = rng.normal(size=(4, 32, 32))
    S = forward_images(comp, 0.3, 1.0)
    sig = np.linspace(1e-3, 1e-1, 8)
    err = []
    for s in sig:
        noisy = {k: v + s * (rng.normal(size=v.shape) + 1j * rng.normal(size=v.shape)) for k, v in S.items()}
        err.append(np.sqrt(np.mean((solve_components(noisy, 0.3, 1.0).stacked() - comp) ** 2)))
    r = np.corrcoef(sig, err)[0, 1]
    assert r**2 > 0.95


def test_unmix_errors():
    imgs = [np.zeros((3, 3))] * 4 + [np.zeros((3, 4))]
    with pytest.raises(ValueError, match="dimension mismatch"):
        solve_components(imgs, 0.2, 1.0)
    with pytest.raises(ValueError, match="theta"):
        solve_components([np.zeros((2, 2))] * 5, 1e-4, 1.0)
    with pytest.raises(KeyError, match="S3_down"):
        solve_components({c: np.zeros(2) for c in CHANNEL_NAMES[:4]}, 0.2, 1.0)


# rotation and tomography


def test_rotate_identity_and_composition(rng):
    g = SampleGrid(rng.normal(size=(6, 6, 3)), rng.normal(size=(6, 6, 3, 3)), 1.0)
    same = rotate_sample(g, 0.0)
    assert same.A.tobytes() == g.A.tobytes() and same.M.tobytes() == g.M.tobytes()
    twice = rotate_sample(rotate_sample(g, math.pi / 2, "z"), math.pi / 2, "z")
    once = rotate_sample(g, math.pi, "z")
    np.testing.assert_allclose(twice.A, once.A, atol=1e-12)
    np.testing.assert_allclose(twice.M, once.M, atol=1e-12)


def test_rotate_vector_field():
    dims = (5, 5, 3)
    M = np.zeros(dims + (3,))
    M[..., 0] = 1.0
    g = SampleGrid(np.ones(dims), M, 1.0)
    r = rotate_sample(g, math.pi / 2, "z")
    np.testing.assert_allclose(r.M[..., 1], 1.0, atol=1e-12)
    np.testing.assert_allclose(r.M[..., 0], 0.0, atol=1e-12)
    r = rotate_sample(g, math.pi / 2, "x")
    np.testing.assert_allclose(r.M[..., 0], np.where(r.A > 0, 1.0, 0.0), atol=1e-12)
    # a voxel at +x moves to +y under +90° about z
    A = np.zeros(dims)
    A[4, 2, 1] = 1.0
    r = rotate_sample(SampleGrid(A, np.zeros(dims + (3,)), 1.0), math.pi / 2, "z")
    assert r.A[2, 4, 1] == pytest.approx(1.0, abs=1e-12)


def test_fbp_uniform_disc():
    n, R = 64, 20.0
    det = np.arange(n) - (n - 1) / 2
    proj = 2 * np.sqrt(np.clip(R**2 - det**2, 0, None))
    ang = np.arange(180) * math.pi / 180
    img = fbp_slice(np.tile(proj, (180, 1)), ang, 1.0)
    X, Y = np.meshgrid(det, det, indexing="ij")
    inner = np.hypot(X, Y) < R - 3
    assert abs(img[inner].mean() - 1.0) < 0.01
    r = np.hypot(X, Y)
    assert np.abs(img[(r > R + 3) & (r < n / 2 - 1)]).max() < 0.05  # corners lie outside the detector FOV


def test_fbp_single_voxel_location():
    n = 41
    det = np.arange(n) - (n - 1) / 2
    x0, y0 = 7.0, -4.0
    ang = np.arange(120) * math.pi / 120
    sino = np.zeros((ang.size, n))
    for i, phi in enumerate(ang):
        s = x0 * math.cos(phi) - y0 * math.sin(phi)
        sino[i] = np.interp(det, [s - 1, s, s + 1], [0, 1, 0], left=0, right=0)
    img = fbp_slice(sino, ang, 1.0)
    ix, iy = np.unravel_index(np.argmax(img), img.shape)
    assert (det[ix], det[iy]) == (x0, y0)


def test_fbp_linear(rng):
    ang = np.arange(90) * math.pi / 90
    a, b = rng.normal(size=(2, 90, 24))
    lhs = fbp_slice(2 * a - 0.5 * b, ang, 0.7)
    rhs = 2 * fbp_slice(a, ang, 0.7) - 0.5 * fbp_slice(b, ang, 0.7)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_fbp_shepp_logan_small():
    n = 64
    s = (np.arange(n) - (n - 1) / 2) * (2.0 / n)
    ang = np.arange(90) * math.pi / 90
    sino = np.stack([ellipse_projection(s, a) for a in ang])
    img = fbp_slice(sino, ang, 2.0 / n)
    truth = ellipse_image(n)
    inside = truth > 0
    err = np.linalg.norm((img - truth)[inside]) / np.linalg.norm(truth[inside])
    assert err < 0.2


def test_coverage():
    ang = np.radians(np.arange(180.0))
    assert angle_coverage(ang) == pytest.approx(math.pi)
    check_coverage(ang)
    with pytest.raises(GeometryError, match="angle coverage"):
        check_coverage(np.radians(np.arange(179.0)))
    with pytest.raises(GeometryError, match="angle coverage"):
        tomo_fbp(np.zeros((2, 4, 1)), [0.0, 0.1])


def test_rotate_project_fbp_consistent():
    # rotate a 3D disc stack, project along y, back-project about z
    n, nz = 32, 2
    c = np.arange(n) - (n - 1) / 2
    X, Y = np.meshgrid(c, c, indexing="ij")
    disc = ((X - 4) ** 2 + Y**2 < 36).astype(float)
    A = np.repeat(disc[:, :, None], nz, axis=2)
    g = SampleGrid(A, np.zeros(A.shape + (3,)), 1.0)
    ang = np.arange(60) * math.pi / 60
    proj = np.stack([project_y(rotate_sample(g, a, "z").A, 1.0) for a in ang])
    vol = tomo_fbp(proj, ang, "z")
    err = np.linalg.norm(vol.values[..., 0] - disc) / np.linalg.norm(disc)
    assert err < 0.3
    assert vol.values.shape == (n, n, nz)


def test_derotate_components_vector():
    from ngi.reconstruct.unmix import ComponentMaps
    one = np.ones((2, 2))
    maps = ComponentMaps(Mx=0 * one, My=one, Mz=0 * one, A=one, residual=0 * one, condition_number=3.0,
                         theta=0.2)
    body = derotate_components(maps, math.pi / 2, "z")
    np.testing.assert_allclose(body["Mx"], 1.0, atol=1e-15)
    np.testing.assert_allclose(body["My"], 0.0, atol=1e-15)
    out = tomo_components([(a, maps) for a in np.arange(4) * math.pi / 4], "z")
    assert set(out) == {"Mx", "My", "Mz", "A"}
