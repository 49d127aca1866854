"""Intensity-fluctuation correlation maps ⟨ΔI_r ΔI_t⟩ over Δξ = ξ_r - ξ_t.

Three routes to the same quantity:

* ``correlation_quadrature``: exact δ-correlated-source sum with non-paraxial
  target-arm distances,
* ``correlation_closed_form``: -χ |F[P S^p](2πΔξ/(λ d2))|²,
* ``speckle_mc``: ensemble of Gaussian speckle realizations.

Fermionic statistics and classical fields
-----------------------------------------
Classical (Gaussian) field realizations can only produce the bunching, "+"
branch of the fourth-order factorization; negative fluctuation correlations
have no classical realization. ``speckle_mc`` therefore estimates the
exchange term with Gaussian fields and reports the fermionic map as its exact
negation. The quadrature and closed-form routes carry the fermionic sign
natively. Maps record this under ``meta["sign_convention"]``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .errors import StatisticsError
from .fourier import FOURIER_SIGN, ft_at
from .propagation import FieldGrid, _carrier, _root_i_lam_d, fresnel_kernel, fresnel_propagate, h_target_exact
from .scene import Scene, SampleGrid, chi, scan_points, target_point
from .spinor import SpinorImage, kappa_hat, sample_function

STATISTICS = ("fermion", "boson")
MIN_REALIZATIONS = 10
MC_SIGN_NOTE = "fermion = -(Gaussian-field exchange estimate); classical fields realize only the bosonic branch"


@dataclass(frozen=True)
class DeltaGrid:
    """Regular Δξ grid: Δξ_k = origin + k·pitch on each transverse axis."""

    origin: tuple
    pitch: tuple
    n: tuple

    def axis(self, ax: int) -> np.ndarray:
        return self.origin[ax] + np.arange(self.n[ax]) * self.pitch[ax]

    def q_axis(self, ax: int, lam: float, d2: float) -> np.ndarray:
        return 2.0 * math.pi * self.axis(ax) / (lam * d2)


def delta_grid_for(scene: Scene, position_label: str) -> DeltaGrid:
    xt = target_point(scene, position_label)
    origin, pitch, n = [], [], []
    for ax in range(scene.ndim):
        xi = scan_points(scene, position_label, ax)
        origin.append(float(xi[0] - xt[ax]))
        pitch.append(scene.detector.pitch[ax])
        n.append(len(xi))
    return DeltaGrid(tuple(origin), tuple(pitch), tuple(n))


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    values: np.ndarray
    delta_grid: DeltaGrid
    spin: str
    position_label: str
    statistics: str
    provenance: str
    stderr: np.ndarray | None = None
    normalized: np.ndarray | None = None
    normalized_stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def negated(self, statistics: str) -> "CorrelationMap":
        neg = lambda a: None if a is None else -a  # noqa: E731
        return replace(self, values=-self.values, normalized=neg(self.normalized),
                       statistics=statistics)


def _sign(statistics: str) -> float:
    if statistics not in STATISTICS:
        raise ValueError(f"statistics must be one of {STATISTICS}, got {statistics!r}")
    return -1.0 if statistics == "fermion" else 1.0


def _base_meta(scene: Scene) -> dict:
    g = scene.geometry
    return {
        "chi": chi(scene), "norm": chi(scene), "velocity": scene.velocity, "I0": g.I0,
        "lambda": g.lam, "d1": g.d1, "d2": g.d2, "theta": g.theta, "ndim": scene.ndim,
        "fourier_sign": FOURIER_SIGN, "units": scene.units, "beta": scene.constants.beta,
    }


def source_grid(scene: Scene) -> tuple[FieldGrid, np.ndarray]:
    """Source sample points (as an empty FieldGrid) and the taper weights on that grid."""
    src = scene.source
    axes = [src.axis_points(ax) for ax in range(scene.ndim)]
    weights = src.axis_weights(0)
    if scene.ndim == 2:
        weights = np.outer(weights, src.axis_weights(1))
    grid = FieldGrid(values=np.zeros(weights.shape), origin=tuple(a[0] for a in axes), pitch=src.pitch)
    return grid, weights


def _source_points(scene: Scene) -> np.ndarray:
    src = scene.source
    axes = [src.axis_points(ax) for ax in range(scene.ndim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def target_response(scene: Scene, sample: SampleGrid | None, p: str, position_label: str) -> np.ndarray:
    """h_t(ξ_t, η) on the source grid (shape of the source grid).

    ``sample=None`` is the open-beam arm: free propagation over d1 + d2, the
    same path as the reference arm.
    """
    eta = _source_points(scene)
    xt = target_point(scene, position_label)
    shape = tuple(scene.source.n_points)
    g = scene.geometry
    if sample is None:
        return fresnel_kernel(xt[None, :], eta, g.d_r, g.lam, g.k).reshape(shape)
    vol = sample_function(sample, kappa_hat(g.theta, position_label), scene.constants.beta, position_label)
    return h_target_exact(xt, eta, scene, vol, p).reshape(shape)


def correlation_quadrature(scene: Scene, sample: SampleGrid | None, p: str, position_label: str,
                           delta_grid: DeltaGrid | None = None, statistics: str = "fermion") -> CorrelationMap:
    """∓ v² I0² |Σ_η h_r*(ξ_r, η) h_t(ξ_t, η) w(η) Δη^D|² for every reference pixel."""
    sign = _sign(statistics)
    sample = scene.sample if sample is None else sample
    g = scene.geometry
    D = scene.ndim
    dg = delta_grid or delta_grid_for(scene, position_label)
    xt = target_point(scene, position_label)
    _, w = source_grid(scene)
    ht = target_response(scene, sample, p, position_label)
    gvec = ht * w * (g.I0 * float(np.prod(scene.source.pitch)))

    kernels = []
    for ax in range(D):
        xi = xt[ax] + dg.axis(ax)
        eta = scene.source.axis_points(ax)
        kernels.append(np.exp(-1j * math.pi * (xi[:, None] - eta[None, :]) ** 2 / (g.lam * g.d_r)))
    amp = np.einsum("ij,j...->i...", kernels[0], gvec)
    if D == 2:
        amp = np.einsum("kl,il->ik", kernels[1], amp)
    pref = np.conj(_carrier(g.d_r, g.lam) / _root_i_lam_d(g.lam, g.d_r, D))
    values = sign * scene.velocity**2 * np.abs(pref * amp) ** 2
    meta = _base_meta(scene)
    meta["factors"] = "v^2 * I0^2 * |sum_eta conj(h_r) h_t w dEta^D|^2"
    return CorrelationMap(values=values, delta_grid=dg, spin=p, position_label=position_label,
                          statistics=statistics, provenance="quadrature", meta=meta)


def correlation_closed_form(scene: Scene, image: SpinorImage | np.ndarray, spin: str = "up",
                            delta_grid: DeltaGrid | None = None, statistics: str = "fermion",
                            position_label: str | None = None, pitch: float | None = None) -> CorrelationMap:
    """-χ |F[P S^p](q)|², q = 2πΔξ/(λ d2), F with the +i kernel."""
    sign = _sign(statistics)
    g = scene.geometry
    if isinstance(image, SpinorImage):
        img = image.component(spin)
        pitch = image.pitch
        position_label = position_label or image.position_label
    else:
        img = np.asarray(image)
        if pitch is None:
            raise ValueError("pitch required for a plain image")
    if position_label is None:
        raise ValueError("position_label required")
    if scene.ndim == 1:
        img = np.asarray(img).reshape(img.shape[0], -1)
        if img.shape[1] != 1:
            raise ValueError("1D-transverse mode needs an (Nx, 1) image")
        img = img[:, 0]
    dg = delta_grid or delta_grid_for(scene, position_label)
    q_axes = [dg.q_axis(ax, g.lam, g.d2) for ax in range(scene.ndim)]
    F = ft_at(img, pitch, q_axes)
    values = sign * chi(scene) * np.abs(F) ** 2
    meta = _base_meta(scene)
    meta["factors"] = "chi * |F[P S](q)|^2, F Riemann sum with a^D"
    return CorrelationMap(values=values, delta_grid=dg, spin=spin, position_label=position_label,
                          statistics=statistics, provenance="closed_form", meta=meta)


# ---------------------------------------------------------------------------
# Monte-Carlo speckle ensemble


def _block_sums(scene, ht, w, dg, xt, seed, lo, hi, chunk=256):
    g = scene.geometry
    src_grid, _ = source_grid(scene)
    dvol = float(np.prod(scene.source.pitch))
    scale = np.sqrt(g.I0 * w / dvol)
    v = scene.velocity
    out_origin = tuple(xt[ax] + dg.origin[ax] for ax in range(scene.ndim))
    sums = None
    for c0 in range(lo, hi, chunk):
        c1 = min(hi, c0 + chunk)
        phi = np.stack([rng.complex_gaussian(seed, r, w.shape, scale) for r in range(c0, c1)])
        ref = fresnel_propagate(replace(src_grid, values=phi), g.d_r, lam=g.lam,
                                out_origin=out_origin, out_pitch=dg.pitch, out_shape=dg.n)
        I_r = v * np.abs(ref.values) ** 2
        E_t = (phi * ht).reshape(len(phi), -1).sum(axis=1) * dvol
        I_t = v * np.abs(E_t) ** 2
        I_t_b = I_t.reshape((-1,) + (1,) * scene.ndim)
        part = np.stack([(I_r * I_t_b).sum(axis=0), I_r.sum(axis=0),
                         np.broadcast_to(I_t.sum(), I_r.shape[1:])])
        sums = part if sums is None else sums + part
    return sums, hi - lo


def _covariance(S_rt, S_r, S_t, n):
    mr, mt = S_r / n, S_t / n
    cov = S_rt / n - mr * mt
    return cov, cov / (mr * mt)


def speckle_mc_pair(scene: Scene, sample: SampleGrid | None, p: str, position_label: str,
                    n_realizations: int, seed: int = 0, delta_grid: DeltaGrid | None = None,
                    threads: int = 1, n_blocks: int = 100, open_beam: bool = False):
    """Bosonic and fermionic maps from one shared set of realizations.

    Realization r draws its source field from counter stream r of ``seed``.
    Realizations are grouped into contiguous blocks; the standard error is
    the delete-one-block jackknife. ``open_beam=True`` replaces the sample
    arm by free propagation (HBT calibration).
    """
    if n_realizations < MIN_REALIZATIONS:
        raise StatisticsError(f"n_realizations too small: {n_realizations} < {MIN_REALIZATIONS}")
    if not open_beam:
        sample = scene.sample if sample is None else sample
    dg = delta_grid or delta_grid_for(scene, position_label)
    xt = target_point(scene, position_label)
    _, w = source_grid(scene)
    ht = target_response(scene, None if open_beam else sample, p, position_label)

    G = min(n_blocks, n_realizations)
    bounds = np.linspace(0, n_realizations, G + 1).round().astype(int)
    jobs = [(int(bounds[b]), int(bounds[b + 1])) for b in range(G)]

    def run(job):
        return _block_sums(scene, ht, w, dg, xt, seed, *job)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    sums = np.stack([r[0] for r in results])  # (G, 3, *grid)
    counts = np.array([r[1] for r in results], dtype=float)
    total = sums.sum(axis=0)
    n = counts.sum()
    cov, ratio = _covariance(total[0], total[1], total[2], n)

    loo = total[None] - sums
    n_loo = (n - counts).reshape((-1,) + (1,) * scene.ndim)
    cov_j, ratio_j = _covariance(loo[:, 0], loo[:, 1], loo[:, 2], n_loo)
    fac = (G - 1) / G
    stderr = np.sqrt(fac * ((cov_j - cov_j.mean(axis=0)) ** 2).sum(axis=0))
    rstderr = np.sqrt(fac * ((ratio_j - ratio_j.mean(axis=0)) ** 2).sum(axis=0))

    meta = _base_meta(scene)
    meta.update({"seed": int(seed), "n_realizations": int(n_realizations), "jackknife_blocks": int(G),
                 "sign_convention": MC_SIGN_NOTE, "target": "open_beam" if open_beam else "sample",
                 "factors": "intensities v|E|^2; estimator mean(I_r I_t) - mean(I_r) mean(I_t)"})
    boson = CorrelationMap(values=cov, delta_grid=dg, spin=p, position_label=position_label,
                           statistics="boson", provenance="monte_carlo", stderr=stderr,
                           normalized=ratio, normalized_stderr=rstderr, meta=meta)
    return boson, boson.negated("fermion")


def speckle_mc(scene: Scene, sample: SampleGrid | None, p: str, position_label: str, n_realizations: int,
               statistics: str = "fermion", seed: int = 0, **kwargs) -> CorrelationMap:
    _sign(statistics)
    boson, fermion = speckle_mc_pair(scene, sample, p, position_label, n_realizations, seed, **kwargs)
    return fermion if statistics == "fermion" else boson
