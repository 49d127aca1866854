"""Support-constrained phase retrieval (HIO + ER) and ambiguity-aware scoring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .. import rng
from ..fourier import frame_forward, frame_inverse
from .magnitude import MagnitudeImage

CONSTRAINTS = ("real_nonnegative", "real", "complex")


@dataclass(frozen=True)
class RetrievalParams:
    n_iter: int = 2000
    beta_feedback: float = 0.9
    restarts: int = 8
    seed: int = 0
    hio_iters: int = 40
    er_iters: int = 10
    constraint: str = "real_nonnegative"
    # symmetry-breaking start: a support with one corner removed for the
    # first asym_iters iterations (0 disables)
    asym_iters: int = 200
    # shrinkwrap: every shrinkwrap_every iterations the support becomes the
    # part of the user support where the blurred |x| exceeds
    # shrinkwrap_threshold·max; the blur width falls linearly from
    # sigma_start to sigma_end over the first 70% of iterations (0 disables)
    shrinkwrap_every: int = 50
    shrinkwrap_threshold: float = 0.2
    sigma_start: float = 3.0
    sigma_end: float = 1.0


@dataclass(frozen=True, eq=False)
class PhaseRetrievalResult:
    objects: list
    residuals: np.ndarray
    traces: list
    best_index: int
    pitch: tuple

    @property
    def best(self) -> np.ndarray:
        return self.objects[self.best_index]

    @property
    def best_trace(self) -> np.ndarray:
        return self.traces[self.best_index]


def fourier_residual(x, mag, pitch) -> float:
    return float(np.linalg.norm(np.abs(frame_forward(x, pitch)) - mag) / np.linalg.norm(mag))


def check_support(support: np.ndarray, frame_shape) -> None:
    support = np.asarray(support, bool)
    if support.shape != tuple(frame_shape):
        raise ValueError(f"support shape {support.shape} larger than / different from frame {tuple(frame_shape)}")
    if not support.any():
        raise ValueError("support mask is empty")
    for ax in range(support.ndim):
        other = tuple(i for i in range(support.ndim) if i != ax)
        used = np.nonzero(support.any(axis=other))[0]
        extent = used[-1] - used[0] + 1
        if 2 * extent > support.shape[ax]:
            raise ValueError(f"oversampling below 2 on axis {ax}: support spans {extent} of {support.shape[ax]} pixels")


def _asymmetric(support: np.ndarray) -> np.ndarray:
    """``support`` without the far corner block of its bounding box (a quarter of each side)."""
    cut = np.ones(support.shape, bool)
    for ax in range(support.ndim):
        other = tuple(i for i in range(support.ndim) if i != ax)
        used = np.nonzero(support.any(axis=other))[0]
        edge = used[0] + 3 * (used[-1] - used[0] + 1) // 4
        shape = [1] * support.ndim
        shape[ax] = -1
        cut &= (np.arange(support.shape[ax]) >= edge).reshape(shape)
    return support & ~cut


def _shrinkwrap(x, support, it, params: RetrievalParams):
    frac = min(1.0, it / (0.7 * params.n_iter))
    sigma = params.sigma_start + (params.sigma_end - params.sigma_start) * frac
    blur = ndimage.gaussian_filter(np.abs(x), sigma, mode="wrap")
    return support & (blur >= params.shrinkwrap_threshold * blur.max())


def _run(mag, support, pitch, params: RetrievalParams, index: int):
    g = rng.stream(params.seed, index)
    real = params.constraint != "complex"
    nonneg = params.constraint == "real_nonnegative"
    sup = _asymmetric(support) if params.asym_iters > 0 else support
    x = frame_inverse(mag * np.exp(2j * np.pi * g.random(mag.shape)), pitch)
    if real:
        x = x.real
    x = np.where(sup & ((x >= 0) if nonneg else True), x, 0)
    block = params.hio_iters + params.er_iters
    trace = np.empty(params.n_iter)
    mag_norm = np.linalg.norm(mag)
    for it in range(params.n_iter):
        if it == params.asym_iters:
            sup = support
        if params.shrinkwrap_every and it > params.asym_iters and it % params.shrinkwrap_every == 0:
            sup = _shrinkwrap(x, support, it, params)
            if not sup.any():
                sup = support
        F = frame_forward(x, pitch)
        trace[it] = np.linalg.norm(np.abs(F) - mag) / mag_norm
        y = frame_inverse(mag * np.exp(1j * np.angle(F)), pitch)
        if real:
            y = y.real
        ok = sup & (y >= 0) if nonneg else sup
        if it % block < params.hio_iters:
            x = np.where(ok, y, x - params.beta_feedback * y)
        else:
            x = np.where(ok, y, 0)
    return x, fourier_residual(x, mag, pitch), trace


def phase_retrieve(mag: MagnitudeImage | np.ndarray, support, params: RetrievalParams | None = None,
                   pitch=None, **overrides) -> PhaseRetrievalResult:
    """Recover an object from Fourier magnitudes on the DFT lattice of its frame.

    ``mag`` is a MagnitudeImage (centred q grid) or an array already in FFT
    order, in which case ``pitch`` gives the frame pixel size. Blocks of
    ``hio_iters`` HIO steps alternate with ``er_iters`` ER steps; each
    restart starts from uniformly random Fourier phases drawn from its own
    counter stream. A corner-cut support at the start breaks the twin-image
    symmetry of box supports and shrinkwrap tightens loose ones; both stay
    inside ``support``. The restart with the lowest Fourier residual is ``best``.
    """
    params = params or RetrievalParams()
    if overrides:
        params = RetrievalParams(**{**params.__dict__, **overrides})
    if params.constraint not in CONSTRAINTS:
        raise ValueError(f"constraint must be one of {CONSTRAINTS}")
    if isinstance(mag, MagnitudeImage):
        pitch = mag.frame_pitch()
        m = mag.fft_ordered()
    else:
        m = np.asarray(mag, float)
        pitch = (1.0,) * m.ndim if pitch is None else tuple(np.broadcast_to(pitch, (m.ndim,)))
    if len(set(pitch)) != 1:
        raise ValueError("frame pitch must be equal on all axes")
    a = float(pitch[0])
    support = np.asarray(support, bool)
    check_support(support, m.shape)
    results = [_run(m, support, a, params, r) for r in range(params.restarts)]
    residuals = np.array([r[1] for r in results])
    return PhaseRetrievalResult(objects=[r[0] for r in results], residuals=residuals,
                                traces=[r[2] for r in results], best_index=int(np.argmin(residuals)),
                                pitch=tuple(pitch))


def conjugate_flip(x: np.ndarray) -> np.ndarray:
    """x(r) -> conj(x(-r)) on the periodic frame."""
    return np.conj(np.roll(np.flip(x), 1, axis=tuple(range(x.ndim))))


@dataclass(frozen=True)
class Alignment:
    nrmse: float
    shift: tuple
    flipped: bool
    phase: float
    aligned: np.ndarray


def align(recon, truth) -> Alignment:
    """Best match of ``recon`` to ``truth`` over integer (periodic) translations,
    global phase and conjugate flip."""
    recon = np.asarray(recon, dtype=np.complex128)
    truth = np.asarray(truth, dtype=np.complex128)
    if recon.shape != truth.shape:
        raise ValueError(f"shape mismatch {recon.shape} vs {truth.shape}")
    tnorm = np.linalg.norm(truth)
    if tnorm == 0:
        raise ValueError("truth has zero norm")
    axes = tuple(range(truth.ndim))
    T = np.fft.fftn(truth)
    best = None
    for flipped, cand in ((False, recon), (True, conjugate_flip(recon))):
        cc = np.fft.ifftn(T * np.conj(np.fft.fftn(cand)))
        idx = np.unravel_index(int(np.argmax(np.abs(cc))), cc.shape)
        phase = float(np.angle(cc[idx]))
        aligned = np.roll(cand, idx, axis=axes) * np.exp(1j * phase)
        err = float(np.linalg.norm(aligned - truth) / tnorm)
        if best is None or err < best.nrmse:
            best = Alignment(err, tuple(int(i) for i in idx), flipped, phase, aligned)
    return best


def register_and_score(recon, truth) -> float:
    return align(recon, truth).nrmse
