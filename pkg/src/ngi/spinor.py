"""Probed sample functions S↑/S↓, beam-axis projection and the 5×4 unmixing matrix.

Spin is quantized along z and the incident beam is spin-up. For a spin-up
state, σ·V gives the spinor (V_z, V_x + i V_y), so with the transverse
magnetization M⊥ = M - (M·κ̂)κ̂:

    S↑ = β M⊥_z + A,    S↓ = β (M⊥_x + i M⊥_y)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import POSITIONS, SampleGrid

ROW_CHANNELS = (("P1", "up"), ("P1", "down"), ("P2", "down"), ("P3", "up"), ("P3", "down"))
CHANNEL_NAMES = ("S1_up", "S1_down", "S2_down", "S3_up", "S3_down")
COMPONENT_NAMES = ("Mx", "My", "Mz", "A")
THETA_FLOOR = 1e-3


def channel_name(label: str, spin: str) -> str:
    return f"S{label[1]}_{spin}"


def parse_channel(name: str) -> tuple[str, str]:
    """'S3_down' -> ('P3', 'down')."""
    head, spin = name.split("_")
    return f"P{head[1:]}", spin


@dataclass(frozen=True, eq=False)
class SpinorVolume:
    up: np.ndarray
    down: np.ndarray
    kappa_hat: np.ndarray
    position_label: str
    pitch: float

    def component(self, spin: str) -> np.ndarray:
        if spin not in ("up", "down"):
            raise ValueError(f"spin must be 'up' or 'down', got {spin!r}")
        return self.up if spin == "up" else self.down


@dataclass(frozen=True, eq=False)
class SpinorImage:
    """Beam-axis projections over (x', z'); in 1D-transverse mode Nz == 1."""

    up: np.ndarray
    down: np.ndarray
    pitch: float
    position_label: str

    def component(self, spin: str) -> np.ndarray:
        if spin not in ("up", "down"):
            raise ValueError(f"spin must be 'up' or 'down', got {spin!r}")
        return self.up if spin == "up" else self.down


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    entries: np.ndarray
    theta: float
    rows: tuple = CHANNEL_NAMES
    columns: tuple = ("beta*Mx", "beta*My", "beta*Mz", "A")

    def as_text(self) -> str:
        lines = [f"# theta = {self.theta:.15g}", "# columns: " + " ".join(self.columns)]
        for name, row in zip(self.rows, self.entries):
            cells = [f"({v.real:.15g}{v.imag:+.15g}j)" for v in row]
            lines.append(f"{name:8s} " + " ".join(cells))
        return "\n".join(lines) + "\n"


def _check_theta(theta: float, floor: float = 0.0):
    if not (floor < theta < math.pi / 2):
        if theta == 0.0:
            raise ValueError("theta = 0: scattering direction undefined")
        raise ValueError(f"theta must be in ({floor:g}, π/2), got {theta!r}")


def kappa_hat(theta: float, position_label: str) -> np.ndarray:
    """Unit scattering direction normalize(k̂_i - k̂_f) for incident k̂_i = ŷ.

    k̂_f points from the sample centre at scattering angle θ towards the
    detector position: (sin θ, cos θ, 0) for P1, mirrored in x for P2 and
    turned onto z for P3.
    """
    _check_theta(theta)
    s, c = math.sin(theta), math.cos(theta)
    if position_label == "P1":
        kf = (s, c, 0.0)
    elif position_label == "P2":
        kf = (-s, c, 0.0)
    elif position_label == "P3":
        kf = (0.0, c, s)
    else:
        raise ValueError(f"unknown detector position {position_label!r}")
    v = np.array([-kf[0], 1.0 - kf[1], -kf[2]])
    # |ŷ - k̂_f| = 2 sin(θ/2), exact and free of the 1 - cos θ cancellation
    v[1] = 2.0 * math.sin(theta / 2) ** 2
    return v / (2.0 * math.sin(theta / 2))


def spinor_components(A, M, khat, beta):
    """Closed-form (S↑, S↓) for arrays A (...) and M (..., 3)."""
    khat = np.asarray(khat, dtype=np.float64)
    if abs(np.linalg.norm(khat) - 1.0) > 1e-9:
        raise ValueError(f"khat must be a unit vector, |khat| = {np.linalg.norm(khat)!r}")
    M = np.asarray(M, dtype=np.float64)
    proj = M @ khat
    Mperp = M - proj[..., None] * khat
    up = beta * Mperp[..., 2] + np.asarray(A, dtype=np.float64)
    down = beta * (Mperp[..., 0] + 1j * Mperp[..., 1])
    return up.astype(np.complex128), down


def sample_function(grid: SampleGrid, khat, beta: float, position_label: str = "") -> SpinorVolume:
    up, down = spinor_components(grid.A, grid.M, khat, beta)
    return SpinorVolume(up=up, down=down, kappa_hat=np.asarray(khat, float),
                        position_label=position_label, pitch=grid.pitch)


def project_y(volume, pitch: float | None = None):
    """Integrate along the beam axis (axis 1): pixel(x, z) = pitch · Σ_y voxel(x, y, z).

    Accepts a SpinorVolume (returns a SpinorImage) or a plain array with
    ``pitch`` given; trailing axes beyond the third (e.g. vector components)
    are carried through.
    """
    if isinstance(volume, SpinorVolume):
        p = volume.pitch
        return SpinorImage(up=p * volume.up.sum(axis=1), down=p * volume.down.sum(axis=1),
                           pitch=p, position_label=volume.position_label)
    if pitch is None:
        raise ValueError("pitch required when projecting a plain array")
    return pitch * np.asarray(volume).sum(axis=1)


def coefficient_matrix(theta: float) -> CoefficientMatrix:
    _check_theta(theta)
    h = theta / 2
    s, c = math.sin(h), math.cos(h)
    em = complex(math.cos(h), -math.sin(h))  # e^{-iθ/2}
    ep = em.conjugate()
    sin_t = math.sin(theta)
    C = np.array([
        [0, 0, 1, 1],
        [1j * em * s, 1j * em * c, 0, 0],
        [-1j * ep * s, 1j * ep * c, 0, 0],
        [0, 0.5 * sin_t, s * s, 1],
        [1, 1j * c * c, 0.5j * sin_t, 0],
    ], dtype=np.complex128)
    return CoefficientMatrix(entries=C, theta=theta)


def forward_S_vector(Mx, My, Mz, A, theta: float, beta: float) -> np.ndarray:
    """Five S-channel values per pixel, stacked on a new leading axis."""
    C = coefficient_matrix(theta).entries
    x = np.stack(np.broadcast_arrays(beta * np.asarray(Mx, float), beta * np.asarray(My, float),
                                     beta * np.asarray(Mz, float), np.asarray(A, float)))
    return np.tensordot(C, x, axes=(1, 0))


def spinor_images(grid: SampleGrid, theta: float, beta: float, positions=POSITIONS) -> dict:
    """Projected SpinorImage per detector position."""
    return {lab: project_y(sample_function(grid, kappa_hat(theta, lab), beta, lab)) for lab in positions}


def channel_images(grid: SampleGrid, theta: float, beta: float) -> dict:
    """The five projected S-images in unmixing-row order, keyed by channel name."""
    imgs = spinor_images(grid, theta, beta)
    return {channel_name(lab, spin): imgs[lab].component(spin) for lab, spin in ROW_CHANNELS}
