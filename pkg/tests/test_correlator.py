import copy
import math

import numpy as np
import pytest

from ngi.correlator import (
    DeltaGrid,
    correlation_closed_form,
    correlation_quadrature,
    delta_grid_for,
    speckle_mc,
    speckle_mc_pair,
)
from ngi.errors import StatisticsError
from ngi.scene import SampleGrid, build_scene, chi
from ngi.spinor import project_y, spinor_images
from conftest import config


def scaled(sample, c):
    return SampleGrid(sample.A * c, sample.M * c, sample.pitch)


def test_quadrature_zero_sample(minimal_scene):
    s = minimal_scene
    zero = SampleGrid(np.zeros(s.sample.dims), np.zeros(s.sample.dims + (3,)), 1.0)
    m = correlation_quadrature(s, zero, "up", "P1")
    np.testing.assert_array_equal(m.values, 0)


def test_quadrature_quadratic_in_sample(minimal_scene):
    s = minimal_scene
    a = correlation_quadrature(s, s.sample, "down", "P2")
    b = correlation_quadrature(s, scaled(s.sample, -2.5), "down", "P2")
    np.testing.assert_allclose(b.values, 6.25 * a.values, rtol=1e-12)


def test_quadrature_point_object_is_flat():
    cfg = config("minimal_1d")
    cfg["sample"]["phantom"] = {"kind": "single_voxel", "dims": [1, 1, 1], "A": 1.0}
    s = build_scene(cfg)
    m = correlation_quadrature(s, s.sample, "up", "P1")
    # point object: |F| = s·a² everywhere (one voxel, projected)
    ref = -chi(s) * (1.0 * s.sample.pitch * s.sample.pitch) ** 2
    assert np.max(np.abs(m.values - ref)) / abs(ref) < 0.02


def test_closed_form_dc_value(minimal_scene):
    s = minimal_scene
    img = spinor_images(s.sample, s.geometry.theta, s.constants.beta)["P1"]
    dg = DeltaGrid((0.0,), (1.0,), (1,))
    m = correlation_closed_form(s, img.up[:, 0], "up", dg, position_label="P1", pitch=1.0)
    ref = -chi(s) * abs(np.sum(img.up) * 1.0) ** 2
    assert m.values[0] == pytest.approx(ref, rel=1e-12)


def test_closed_form_even_for_real_object(minimal_scene):
    s = minimal_scene
    img = spinor_images(s.sample, s.geometry.theta, s.constants.beta)["P1"].up[:, 0]
    assert np.all(np.isreal(img))
    dg = DeltaGrid((-40.0,), (2.5,), (33,))
    m = correlation_closed_form(s, img, "up", dg, position_label="P1", pitch=1.0)
    np.testing.assert_allclose(m.values, m.values[::-1], rtol=1e-12)


def _rect_first_zero(d2, w=8):
    cfg = config("minimal_1d")
    cfg["geometry"]["d2"] = d2
    s = build_scene(cfg)
    rect = np.ones(w)
    step = s.geometry.lam * d2 / (w * 8)  # eight samples per zero spacing
    dg = DeltaGrid((0.0,), (step,), (12,))
    m = correlation_closed_form(s, rect, "up", dg, position_label="P1", pitch=1.0)
    return m, dg, s


def test_rect_first_zero():
    w = 8
    m, dg, s = _rect_first_zero(2000.0, w)
    dxi = dg.axis(0)
    k0 = int(np.argmin(np.abs(dxi - s.geometry.lam * s.geometry.d2 / w)))
    assert abs(m.values[k0]) < 1e-12 * abs(m.values[0])
    assert np.all(np.abs(m.values[1:k0]) > 1e-6 * abs(m.values[0]))


def test_frequency_mapping_doubling_d2():
    w = 8
    m1, dg1, s1 = _rect_first_zero(2000.0, w)
    m2, dg2, s2 = _rect_first_zero(4000.0, w)
    z1 = dg1.axis(0)[np.argmin(np.abs(m1.values[1:])) + 1]
    z2 = dg2.axis(0)[np.argmin(np.abs(m2.values[1:])) + 1]
    assert z2 == pytest.approx(2 * z1, abs=dg2.pitch[0])


def test_fermionic_maps_nonpositive(minimal_scene):
    s = minimal_scene
    imgs = spinor_images(s.sample, s.geometry.theta, s.constants.beta)
    for lab in ("P1", "P2", "P3"):
        for spin in ("up", "down"):
            cf = correlation_closed_form(s, imgs[lab].component(spin)[:, 0], spin, position_label=lab, pitch=1.0)
            q = correlation_quadrature(s, s.sample, spin, lab)
            assert cf.values.max() <= 0 and q.values.max() <= 0
            bos = correlation_closed_form(s, imgs[lab].component(spin)[:, 0], spin, position_label=lab,
                                          pitch=1.0, statistics="boson")
            np.testing.assert_array_equal(bos.values, -cf.values)


def test_closed_form_band_error(minimal_scene):
    dg = DeltaGrid((0.0,), (1e4,), (3,))
    with pytest.raises(ValueError, match="band"):
        correlation_closed_form(minimal_scene, np.ones(4), "up", dg, position_label="P1", pitch=1.0)


def test_map_metadata(minimal_scene):
    s = minimal_scene
    m = correlation_quadrature(s, s.sample, "up", "P3")
    for key in ("chi", "norm", "velocity", "I0", "lambda", "d2", "theta", "beta", "fourier_sign", "factors"):
        assert key in m.meta
    assert m.delta_grid == delta_grid_for(s, "P3")


def test_mc_fermion_is_negated_boson(minimal_scene):
    b, f = speckle_mc_pair(minimal_scene, None, "up", "P1", 200, seed=9)
    assert f.values.tobytes() == (-b.values).tobytes()
    assert f.statistics == "fermion" and b.statistics == "boson"
    assert "negat" in f.meta["sign_convention"] or "-(" in f.meta["sign_convention"]
    single = speckle_mc(minimal_scene, None, "up", "P1", 200, "fermion", seed=9)
    assert single.values.tobytes() == f.values.tobytes()


def test_mc_too_few(minimal_scene):
    with pytest.raises(StatisticsError, match="n_realizations too small"):
        speckle_mc(minimal_scene, None, "up", "P1", 3)


def test_mc_thread_independence(minimal_scene):
    a, _ = speckle_mc_pair(minimal_scene, None, "down", "P3", 400, seed=4, threads=1)
    b, _ = speckle_mc_pair(minimal_scene, None, "down", "P3", 400, seed=4, threads=4)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.stderr.tobytes() == b.stderr.tobytes()


def _siegert_grid(scene):
    p = scene.detector.pitch[0]
    return DeltaGrid((-2 * p,), (p,), (5,))


def test_mc_siegert_small(minimal_scene):
    b, _ = speckle_mc_pair(minimal_scene, None, "up", "P1", 20000, seed=2, open_beam=True,
                           delta_grid=_siegert_grid(minimal_scene))
    i0 = 2
    assert abs(b.normalized[i0] - 1.0) < 3 * b.normalized_stderr[i0]


def test_mc_stderr_scaling(minimal_scene):
    dg = _siegert_grid(minimal_scene)
    b1, _ = speckle_mc_pair(minimal_scene, None, "up", "P1", 4000, seed=11, delta_grid=dg, open_beam=True)
    b4, _ = speckle_mc_pair(minimal_scene, None, "up", "P1", 16000, seed=12, delta_grid=dg, open_beam=True)
    ratio = b1.normalized_stderr / b4.normalized_stderr
    assert np.all(np.abs(ratio - 2.0) < 0.4), ratio


@pytest.mark.slow
def test_mc_matches_quadrature(minimal_scene):
    s = minimal_scene
    b, _ = speckle_mc_pair(s, None, "up", "P1", 100000, seed=1, threads=4)
    q = correlation_quadrature(s, s.sample, "up", "P1", statistics="boson")
    z = (b.values - q.values) / b.stderr
    assert np.max(np.abs(z)) < 3.0


def test_mc_requires_valid_statistics(minimal_scene):
    with pytest.raises(ValueError):
        speckle_mc(minimal_scene, None, "up", "P1", 20, "anyon")
