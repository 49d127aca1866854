"""Riemann-sum Fourier transform shared by the correlator and reconstruction.

    F[f](q) = Σ_ζ f(ζ) exp(+i q·ζ) a^D

with ζ at pixel centres, ζ_n = (n - (N-1)/2) a, on every axis.
"""
from __future__ import annotations

import math

import numpy as np

FOURIER_SIGN = +1
_ON_GRID_TOL = 1e-9


def pixel_coords(n: int, pitch: float) -> np.ndarray:
    return (np.arange(n) - (n - 1) / 2.0) * pitch


def direct_ft(image, pitch: float, q_axes) -> np.ndarray:
    """Plain summation over all pixels; O(N·Q), used as the oracle."""
    img = np.asarray(image, dtype=np.complex128)
    out = img
    for ax, q in enumerate(q_axes):
        zeta = pixel_coords(img.shape[ax], pitch)
        K = np.exp(FOURIER_SIGN * 1j * np.outer(np.asarray(q, float), zeta)) * pitch
        out = np.moveaxis(np.tensordot(out, K, axes=(ax, 1)), -1, ax)
    return out


def _axis_weights(q, n: int, pitch: float, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights W (nq, L) with Σ_n f_n e^{iqan} = Σ_k W[:, k] X_k, X = L·ifft(f, L)."""
    q = np.asarray(q, float)
    u_grid = 2 * math.pi * np.arange(L) / L
    s = q * pitch * L / (2 * math.pi)
    r = np.round(s)
    on_grid = np.abs(s - r) < _ON_GRID_TOL
    W = np.zeros((len(q), L), dtype=np.complex128)
    idx = np.nonzero(on_grid)[0]
    W[idx, (r[idx].astype(np.int64) % L)] = 1.0
    off = np.nonzero(~on_grid)[0]
    if len(off):
        u = q[off, None] * pitch - u_grid[None, :]
        # Dirichlet kernel Σ_{n<L} e^{iun}, scaled by 1/L
        W[off] = np.exp(0.5j * u * (L - 1)) * np.sin(L * u / 2) / np.sin(u / 2) / L
    return W, np.exp(-1j * q * pitch * (n - 1) / 2.0)


def band_limit(pitch: float) -> float:
    return math.pi / pitch


def ft_at(image, pitch: float, q_axes, pad: int = 2) -> np.ndarray:
    """F[image] at the outer-product grid of ``q_axes`` (one 1D array per axis).

    Zero-padded FFT followed by exact band-limited (Dirichlet) interpolation;
    points landing on the padded FFT lattice are taken directly.
    """
    img = np.asarray(image, dtype=np.complex128)
    if img.ndim != len(q_axes):
        raise ValueError(f"image has {img.ndim} axes but {len(q_axes)} q-axes were given")
    limit = band_limit(pitch) * (1 + 1e-12)
    for q in q_axes:
        if np.any(np.abs(q) > limit):
            raise ValueError(f"requested |q| up to {np.max(np.abs(q)):.6g} beyond band limit π/a = {limit:.6g}")
    sizes = []
    for ax, q in enumerate(q_axes):
        n = img.shape[ax]
        L = max(pad * n, n)
        q = np.asarray(q, float)
        if len(q) > 1:
            dq = np.diff(q)
            if np.allclose(dq, dq[0], rtol=1e-9, atol=0) and dq[0] != 0:
                frame = 2 * math.pi / (abs(dq[0]) * pitch)
                if abs(frame - round(frame)) < 1e-6 and round(frame) >= n:
                    L = int(round(frame))
        sizes.append(L)
    X = np.fft.ifftn(img, s=sizes, axes=tuple(range(img.ndim))) * float(np.prod(sizes))
    out = X
    for ax, q in enumerate(q_axes):
        W, phase = _axis_weights(q, img.shape[ax], pitch, sizes[ax])
        W = W * (phase * pitch)[:, None]
        out = np.moveaxis(np.tensordot(out, W, axes=(ax, 1)), -1, ax)
    return out


# frame transforms used by phase retrieval and oracle-phase inversion: frame pixel
# j sits at ζ_j = j·a, frequencies on the DFT lattice q_k = 2πk/(N a) in FFT order


def frame_forward(x, pitch: float) -> np.ndarray:
    n = np.prod(np.shape(x))
    return np.fft.ifftn(x) * (n * pitch ** np.ndim(x))


def frame_inverse(X, pitch: float) -> np.ndarray:
    n = np.prod(np.shape(X))
    return np.fft.fftn(X) / (n * pitch ** np.ndim(X))
