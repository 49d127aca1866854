"""Per-pixel least-squares separation of the five S-channels into (Mx, My, Mz, A)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..spinor import CHANNEL_NAMES, COMPONENT_NAMES, THETA_FLOOR, coefficient_matrix


@dataclass(frozen=True, eq=False)
class ComponentMaps:
    Mx: np.ndarray
    My: np.ndarray
    Mz: np.ndarray
    A: np.ndarray
    residual: np.ndarray
    condition_number: float
    theta: float

    def component(self, name: str) -> np.ndarray:
        if name not in COMPONENT_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def stacked(self) -> np.ndarray:
        return np.stack([self.Mx, self.My, self.Mz, self.A])


def real_system(theta: float) -> np.ndarray:
    """The 10×4 real matrix [Re C; Im C] acting on (βMx, βMy, βMz, A)."""
    C = coefficient_matrix(theta).entries
    return np.vstack([C.real, C.imag])


def solve_components(S_images, theta: float, beta: float) -> ComponentMaps:
    """Solve the overdetermined 5×4 system pixel by pixel with real unknowns.

    ``S_images`` maps channel names (S1_up, S1_down, S2_down, S3_up, S3_down)
    to complex arrays, or is a sequence / stacked array in that order.
    """
    if not (THETA_FLOOR < theta < np.pi / 2):
        raise ValueError(f"theta must be in ({THETA_FLOOR:g}, π/2) for a usable condition number, got {theta!r}")
    if not beta > 0:
        raise ValueError("beta must be > 0")
    if isinstance(S_images, dict):
        missing = [c for c in CHANNEL_NAMES if c not in S_images]
        if missing:
            raise KeyError(f"missing channel(s): {missing}")
        imgs = [np.asarray(S_images[c], dtype=np.complex128) for c in CHANNEL_NAMES]
    else:
        imgs = [np.asarray(s, dtype=np.complex128) for s in S_images]
        if len(imgs) != 5:
            raise ValueError(f"expected 5 S-images, got {len(imgs)}")
    shape = imgs[0].shape
    if any(im.shape != shape for im in imgs):
        raise ValueError(f"S-image dimension mismatch: {[im.shape for im in imgs]}")

    R = real_system(theta)
    Q, T = np.linalg.qr(R)
    S = np.stack(imgs).reshape(5, -1)
    b = np.vstack([S.real, S.imag])  # (10, npix)
    x = np.linalg.solve(T, Q.T @ b)
    r = b - R @ x
    resid = np.sqrt(np.einsum("ij,ij->j", r, r)).reshape(shape)
    x = x.reshape((4,) + shape)
    return ComponentMaps(Mx=x[0] / beta, My=x[1] / beta, Mz=x[2] / beta, A=x[3], residual=resid,
                         condition_number=float(np.linalg.cond(R)), theta=float(theta))
