"""Wave kernels: incident spherical wave, paraxial Fresnel kernel, exact
first-Born target-arm impulse response, and fast Fresnel propagation.

Prefactors are written for D transverse dimensions: (iλ d)^(D/2) in the
Fresnel kernel and (i/λ)^(D/2) / (r1 r2)^(D/2) in the Born sum. D = 2 is the
physical 3D case; D = 1 is a cheap 2D world in which all statements hold
with the same structure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft

from .errors import GeometryError
from .scene import Scene, nyquist_bound
from .spinor import SpinorVolume

CHUNK_ELEMENTS = 1 << 22


def _carrier(d: float, lam: float) -> complex:
    """exp(i k d), with the phase reduced exactly before the product."""
    frac = math.fmod(d / lam, 1.0)
    return complex(math.cos(2 * math.pi * frac), math.sin(2 * math.pi * frac))


def _root_i_lam_d(lam: float, d: float, D: int) -> complex:
    # principal branch per axis, so forward(d)·backward(-d) prefactors multiply to 1/(λ|d|)
    per_axis = np.sqrt(complex(0.0, math.copysign(1.0, d))) * math.sqrt(lam * abs(d))
    return complex(per_axis**D)


def spherical_kernel(r, r0, k: float, lam: float, dim: int = 2) -> complex | np.ndarray:
    """Spin-up amplitude (iλ)^(-D/2) exp(ik|r-r0|)/|r-r0|^(D/2) of the incident wave."""
    sep = np.linalg.norm(np.asarray(r, float) - np.asarray(r0, float), axis=-1)
    if np.any(sep == 0):
        raise ValueError("spherical_kernel: coincident points")
    pref = (1j * lam) ** (-dim / 2)
    return pref * np.exp(1j * k * sep) / sep ** (dim / 2)


def fresnel_kernel(xi, eta, d: float, lam: float, k: float | None = None):
    """e^{ikd}/(iλd)^(D/2) · exp[iπ|ξ-η|²/(λd)]; D is the trailing size of ξ, η."""
    xi = np.atleast_1d(np.asarray(xi, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    D = xi.shape[-1]
    if d == 0:
        raise ValueError("fresnel_kernel needs d != 0")
    carrier = _carrier(d, lam) if k is None or abs(k * lam - 2 * math.pi) < 1e-12 else np.exp(1j * k * d)
    sq = np.sum((xi - eta) ** 2, axis=-1)
    return carrier / _root_i_lam_d(lam, d, D) * np.exp(1j * math.pi * sq / (lam * d))


def _excess(t2, dy, d):
    """sqrt((d + dy)² + t2) - d without cancellation; also returns the distance."""
    r = np.sqrt((d + dy) ** 2 + t2)
    return (t2 + dy * (2 * d + dy)) / (r + d), r


def voxel_positions(volume_shape, pitch, ndim: int):
    """Voxel centres relative to r_c as flat (x, y, z) arrays."""
    nx, ny, nz = volume_shape
    x = (np.arange(nx) - (nx - 1) / 2) * pitch
    y = (np.arange(ny) - (ny - 1) / 2) * pitch
    z = (np.arange(nz) - (nz - 1) / 2) * pitch
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    if ndim == 1:
        Z = np.zeros_like(Z)
    return X.ravel(), Y.ravel(), Z.ravel()


def h_target_exact(xi_t, eta, scene: Scene, spinor_volume: SpinorVolume, p: str) -> np.ndarray:
    """First-Born target-arm response from source points ``eta`` to detector point ``xi_t``.

    (i/λ)^(D/2) Σ_voxels exp[ik(r1 + r2)] / (r1 r2)^(D/2) · S^p · a^(D+1) with
    exact distances r1 = |r' - r0(η)|, r2 = |r_det - r'|. Phases are
    accumulated as k (r1 - d1 + r2 - d2) and the carrier exp(ik(d1 + d2))
    applied once.

    ``eta`` has shape (n, D) (or (D,) for one point); returns shape (n,).
    """
    g = scene.geometry
    D = scene.ndim
    eta = np.asarray(eta, float).reshape(-1, D)
    xi_t = np.asarray(xi_t, float).reshape(D)
    S = spinor_volume.component(p).ravel()
    a = spinor_volume.pitch
    X, Y, Z = voxel_positions(spinor_volume.up.shape, a, D)
    keep = S != 0
    if not np.any(keep):
        return np.zeros(len(eta), dtype=np.complex128)
    S, X, Y, Z = S[keep], X[keep], Y[keep], Z[keep]

    xt, zt = (xi_t[0], 0.0) if D == 1 else (xi_t[0], xi_t[1])
    e2, r2 = _excess((xt - X) ** 2 + (zt - Z) ** 2, -Y, g.d2)
    if np.any(r2 == 0):
        raise ValueError("voxel coincides with detector point")
    w2 = S * np.exp(1j * g.k * e2) / r2 ** (D / 2)

    out = np.empty(len(eta), dtype=np.complex128)
    step = max(1, CHUNK_ELEMENTS // len(S))
    for lo in range(0, len(eta), step):
        e = eta[lo:lo + step]
        ex = e[:, 0:1]
        ez = e[:, 1:2] if D == 2 else 0.0
        e1, r1 = _excess((X - ex) ** 2 + (Z - ez) ** 2, Y, g.d1)
        if np.any(r1 == 0):
            raise ValueError("voxel coincides with source point")
        out[lo:lo + step] = (np.exp(1j * g.k * e1) / r1 ** (D / 2) * w2).sum(axis=1)
    pref = (1j / g.lam) ** (D / 2) * a ** (D + 1) * _carrier(g.d1 + g.d2, g.lam)
    return pref * out


def h_target_paraxial(xi_t, eta, scene: Scene, projected: np.ndarray, pitch: float) -> np.ndarray:
    """Factorized paraxial response: Fresnel chirps around the projected image.

    (i/λ)^(D/2) / (d1 d2)^(D/2) · Σ_ζ exp[iπ(ζ-η)²/(λd1) + iπ(ξ_t-ζ)²/(λd2)] · P S(ζ) · a^D
    """
    g = scene.geometry
    D = scene.ndim
    eta = np.asarray(eta, float).reshape(-1, D)
    xi_t = np.asarray(xi_t, float).reshape(D)
    img = np.asarray(projected)
    if D == 1:
        img = img.reshape(img.shape[0], -1)[:, 0]
    coords = [(np.arange(n) - (n - 1) / 2) * pitch for n in img.shape]
    grids = np.meshgrid(*coords, indexing="ij")
    zeta = np.stack([c.ravel() for c in grids], axis=-1)
    vals = img.ravel()
    t2 = np.sum((xi_t - zeta) ** 2, axis=-1)
    w = vals * np.exp(1j * math.pi * t2 / (g.lam * g.d2))
    s2 = np.sum((zeta[None, :, :] - eta[:, None, :]) ** 2, axis=-1)
    total = (np.exp(1j * math.pi * s2 / (g.lam * g.d1)) * w).sum(axis=1)
    pref = (1j / g.lam) ** (D / 2) / (g.d1 * g.d2) ** (D / 2) * pitch**D * _carrier(g.d1 + g.d2, g.lam)
    return pref * total


# ---------------------------------------------------------------------------
# field propagation


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Complex field on a regular transverse grid (trailing D axes).

    Leading axes, if any, are a batch (e.g. speckle realizations).
    """

    values: np.ndarray
    origin: tuple
    pitch: tuple
    plane: float = 0.0
    spin: str = "up"

    @property
    def ndim(self) -> int:
        return len(self.pitch)

    @property
    def shape(self) -> tuple:
        return self.values.shape[-self.ndim:]

    def axis_points(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.shape[axis]) * self.pitch[axis]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "pitch", tuple(float(p) for p in self.pitch))


def _chirp_z_axis(values, axis, x0_in, dx_in, x0_out, dx_out, n_out, lam_d):
    """out[i] = Σ_j exp(iπ(ξ_i - η_j)²/(λd)) in[j] along one axis, by FFT convolution."""
    values = np.moveaxis(values, axis, -1)
    n_in = values.shape[-1]
    c = x0_out - x0_in
    f = math.pi / lam_d
    i = np.arange(n_out, dtype=float)
    j = np.arange(n_in, dtype=float)
    A = np.exp(1j * f * (c * c + 2 * c * i * dx_out + i * i * (dx_out**2 - dx_out * dx_in)))
    B = np.exp(1j * f * (-2 * c * j * dx_in + j * j * (dx_in**2 - dx_out * dx_in)))
    m = np.arange(-(n_in - 1), n_out, dtype=float)
    W = np.exp(1j * f * dx_out * dx_in * m * m)
    L = sfft.next_fast_len(n_in + len(m) - 1)
    conv = sfft.ifft(sfft.fft(values * B, L, axis=-1) * sfft.fft(W, L), axis=-1)
    out = A * conv[..., n_in - 1:n_in - 1 + n_out]
    return np.moveaxis(out, -1, axis)


def check_fresnel_sampling(field: FieldGrid, d: float, lam: float, out_origin, out_pitch, out_shape):
    for ax in range(field.ndim):
        eta = field.axis_points(ax)
        xi = out_origin[ax] + np.arange(out_shape[ax]) * out_pitch[ax]
        sep = max(abs(xi.max() - eta.min()), abs(xi.min() - eta.max()))
        bound = nyquist_bound(lam, abs(d), sep)
        if field.pitch[ax] > bound:
            raise GeometryError(
                f"Fresnel aliasing on axis {ax}: input pitch {field.pitch[ax]:.6g} > bound {bound:.6g} "
                f"(distance {d:.6g}, max separation {sep:.6g})")


def fresnel_propagate(field: FieldGrid, d: float, scene: Scene | None = None, *, lam: float | None = None,
                      out_origin=None, out_pitch=None, out_shape=None) -> FieldGrid:
    """out(ξ) = Σ_η fresnel_kernel(ξ, η, d) · in(η) · Δη^D.

    Each axis is a chirp-factored (Bluestein) convolution, so input and output
    grids may differ in origin, pitch and size. Negative ``d`` back-propagates.
    """
    if lam is None:
        if scene is None:
            raise ValueError("need a scene or lam")
        lam = scene.geometry.lam
    D = field.ndim
    out_origin = field.origin if out_origin is None else tuple(out_origin)
    out_pitch = field.pitch if out_pitch is None else tuple(out_pitch)
    out_shape = field.shape if out_shape is None else tuple(out_shape)
    check_fresnel_sampling(field, d, lam, out_origin, out_pitch, out_shape)
    vals = field.values
    nb = vals.ndim - D
    for ax in range(D):
        vals = _chirp_z_axis(vals, nb + ax, field.origin[ax], field.pitch[ax],
                             out_origin[ax], out_pitch[ax], out_shape[ax], lam * d)
    pref = _carrier(d, lam) / _root_i_lam_d(lam, d, D) * float(np.prod(field.pitch))
    return replace(field, values=pref * vals, origin=out_origin, pitch=out_pitch, plane=field.plane + d)


def fresnel_direct(field: FieldGrid, d: float, lam: float, out_origin=None, out_pitch=None, out_shape=None):
    """Direct O(N²) quadrature of the same sum; reference for tests."""
    D = field.ndim
    out_origin = field.origin if out_origin is None else tuple(out_origin)
    out_pitch = field.pitch if out_pitch is None else tuple(out_pitch)
    out_shape = field.shape if out_shape is None else tuple(out_shape)
    vals = field.values
    nb = vals.ndim - D
    for ax in range(D):
        eta = field.axis_points(ax)
        xi = out_origin[ax] + np.arange(out_shape[ax]) * out_pitch[ax]
        K = np.exp(1j * math.pi * (xi[:, None] - eta[None, :]) ** 2 / (lam * d))
        vals = np.moveaxis(np.tensordot(vals, K, axes=(nb + ax, 1)), -1, nb + ax)
    pref = _carrier(d, lam) / _root_i_lam_d(lam, d, D) * float(np.prod(field.pitch))
    return replace(field, values=pref * vals, origin=out_origin, pitch=out_pitch, plane=field.plane + d)
