"""Embedded invariant suite behind ``ngi selftest``: small, fast oracle comparisons."""
from __future__ import annotations

import math

import numpy as np

from . import io
from .correlator import correlation_closed_form, correlation_quadrature, speckle_mc_pair
from .fourier import direct_ft, ft_at
from .propagation import FieldGrid, fresnel_direct, fresnel_propagate
from .reconstruct.phase import conjugate_flip, register_and_score
from .reconstruct.tomo import rotate_sample
from .reconstruct.unmix import solve_components
from .scene import SampleGrid, build_scene, chi
from .spinor import coefficient_matrix, forward_S_vector, kappa_hat, spinor_components, spinor_images

SCENE = {
    "mode": "normalized",
    "geometry": {"lambda": 1.0, "d1": 2000.0, "d2": 2000.0, "theta": 0.05, "transverse": "1d"},
    "source": {"extent": 600.0, "n_points": 128, "taper": 0.667},
    "detector": {"extent": 80.0, "n_pixels": 33, "center": "axis"},
    "sample": {"pitch": 1.0, "phantom": {"kind": "bars", "dims": [16, 4, 1], "M": [0.3, -0.2, 0.4]}},
}


def _eq16():
    g = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        M, A, theta = g.normal(size=3), g.normal(), g.uniform(0.01, 1.5)
        C = coefficient_matrix(theta).entries
        rows = []
        for lab, spin in (("P1", "up"), ("P1", "down"), ("P2", "down"), ("P3", "up"), ("P3", "down")):
            up, down = spinor_components(A, M, kappa_hat(theta, lab), 1.0)
            rows.append(up if spin == "up" else down)
        worst = max(worst, np.max(np.abs(np.array(rows) - C @ np.r_[M, A])))
    return worst < 1e-12, f"max |spinor - matrix| = {worst:.2e}"


def _ngi_roundtrip():
    g = np.random.default_rng(1)
    ok = True
    for shape in ((7,), (3, 5), (2, 3, 4)):
        for arr in (g.normal(size=shape), g.normal(size=shape) + 1j * g.normal(size=shape)):
            back = io.decode_array(io.encode_array(arr))
            ok &= back.dtype == arr.dtype and back.tobytes() == arr.tobytes()
    return bool(ok), "bitwise identical for f8/c16, ndim 1-3"


def _fourier():
    g = np.random.default_rng(2)
    img = g.normal(size=(12, 9)) + 1j * g.normal(size=(12, 9))
    q = [np.linspace(-2.5, 2.5, 17), np.linspace(-1.0, 3.0, 11)]
    err = np.max(np.abs(ft_at(img, 1.0, q) - direct_ft(img, 1.0, q)))
    return err < 1e-10, f"ft_at vs direct sum {err:.2e}"


def _fresnel():
    g = np.random.default_rng(3)
    f = FieldGrid(values=g.normal(size=64) + 1j * g.normal(size=64), origin=(-32.0,), pitch=(1.0,))
    kw = dict(out_origin=(-20.0,), out_pitch=(0.75,), out_shape=(50,))
    a = fresnel_propagate(f, 500.0, lam=1.0, **kw).values
    b = fresnel_direct(f, 500.0, 1.0, **kw).values
    err = np.max(np.abs(a - b)) / np.max(np.abs(b))
    return err < 1e-10, f"chirp convolution vs direct {err:.2e}"


def _chi():
    s = build_scene({**SCENE, "geometry": {**SCENE["geometry"], "d1": 1.0e4, "d2": 1.0e4}})
    ref = 4 * math.pi**2 / 1.0e4 ** 2  # D = 1: λ^{3} d2^{2}
    return math.isclose(chi(s), ref, rel_tol=1e-14), f"chi = {chi(s):.6g}"


def _sign():
    s = build_scene(SCENE)
    imgs = spinor_images(s.sample, s.geometry.theta, s.constants.beta)
    worst = -math.inf
    for lab in ("P1", "P2", "P3"):
        for spin in ("up", "down"):
            cf = correlation_closed_form(s, imgs[lab].component(spin)[:, 0], spin, position_label=lab, pitch=1.0)
            worst = max(worst, cf.values.max())
    q = correlation_quadrature(s, s.sample, "up", "P1")
    worst = max(worst, q.values.max())
    return worst <= 0.0, f"max fermionic map value {worst:.3g}"


def _mc_exchange():
    s = build_scene(SCENE)
    b, f = speckle_mc_pair(s, None, "up", "P1", 20, seed=5)
    return bool(np.array_equal(f.values, -b.values)), "fermion map = -(boson map), shared realizations"


def _unmix():
    g = np.random.default_rng(4)
    X = g.normal(size=(4, 6, 5))
    S = forward_S_vector(*X, theta=0.3, beta=0.7)
    c = solve_components(list(S), 0.3, 0.7)
    err = np.max(np.abs(c.stacked() - X))
    return err < 1e-10 and c.residual.max() < 1e-12, f"round trip {err:.2e}, residual {c.residual.max():.1e}"


def _rotation():
    M = np.zeros((5, 5, 5, 3))
    M[..., 0] = 1.0
    r = rotate_sample(SampleGrid(np.ones((5, 5, 5)), M, 1.0), math.pi / 2, "z")
    ok = np.allclose(r.M[2, 2, 2], [0.0, 1.0, 0.0], atol=1e-15)
    return bool(ok), f"Rz(90°)·x̂ = {np.round(r.M[2, 2, 2], 15).tolist()}"


def _ambiguity():
    g = np.random.default_rng(6)
    t = g.normal(size=(8, 8)) + 1j * g.normal(size=(8, 8))
    shifted = np.roll(t, (3, -2), axis=(0, 1)) * np.exp(0.7j)
    e = max(register_and_score(shifted, t), register_and_score(conjugate_flip(t), t))
    return e < 1e-12, f"shift/phase/flip score {e:.1e}"


CHECKS = (
    ("eq16_algebra", _eq16), ("ngi_roundtrip", _ngi_roundtrip), ("fourier_oracle", _fourier),
    ("fresnel_oracle", _fresnel), ("chi_value", _chi), ("fermion_sign", _sign),
    ("mc_exchange_sign", _mc_exchange), ("unmix_roundtrip", _unmix), ("vector_rotation", _rotation),
    ("ambiguity_scoring", _ambiguity),
)


def run_all() -> list[dict]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append({"name": name, "passed": bool(ok), "detail": detail})
    return out
