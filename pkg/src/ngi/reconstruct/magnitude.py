"""Fourier magnitudes from fermionic correlation maps."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..correlator import CorrelationMap
from ..errors import DataQualityWarning, StatisticsError


@dataclass(frozen=True, eq=False)
class MagnitudeImage:
    """|F[P S^p]| on a regular q grid (centred order, as in the source map)."""

    values: np.ndarray
    q_origin: tuple
    q_pitch: tuple
    spin: str
    position_label: str

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def q_axis(self, ax: int) -> np.ndarray:
        return self.q_origin[ax] + np.arange(self.shape[ax]) * self.q_pitch[ax]

    def fft_ordered(self) -> np.ndarray:
        """Values rearranged onto the DFT lattice (q = 0 first).

        Requires q = 0 at index n//2 on every axis.
        """
        for ax in range(self.values.ndim):
            q0 = self.q_axis(ax)[self.shape[ax] // 2]
            if abs(q0) > 1e-9 * max(abs(self.q_pitch[ax]), 1e-300):
                raise ValueError(f"q grid axis {ax} is not centred on q = 0 (q[n//2] = {q0:.3g})")
        return np.fft.ifftshift(self.values)

    def frame_pitch(self) -> tuple:
        """Real-space pixel pitch of the frame whose DFT lattice is this q grid."""
        return tuple(2 * math.pi / (n * dq) for n, dq in zip(self.shape, self.q_pitch))


def magnitude_from_correlation(cmap: CorrelationMap, scene=None) -> MagnitudeImage:
    """sqrt(max(0, -map)/χ′) with χ′ the normalization recorded in the map.

    Positive excursions beyond +3·stderr (or any positive value for maps
    without a standard error) raise a DataQualityWarning and are clamped.
    """
    if cmap.statistics != "fermion":
        raise StatisticsError(f"magnitude extraction needs a fermionic map, got {cmap.statistics!r}")
    norm = cmap.meta.get("norm")
    if norm is None or not norm > 0:
        raise StatisticsError("map metadata lacks the 'norm' normalization factor")
    vals = np.asarray(cmap.values, dtype=float)
    tol = 0.0 if cmap.stderr is None else 3.0 * np.asarray(cmap.stderr)
    bad = vals > tol
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} map pixel(s) positive beyond 3 stderr; clamped to 0",
                      DataQualityWarning, stacklevel=2)
    mag = np.sqrt(np.maximum(0.0, -vals) / norm)
    if scene is not None:
        lam, d2 = scene.geometry.lam, scene.geometry.d2
    else:
        lam, d2 = cmap.meta["lambda"], cmap.meta["d2"]
    dg = cmap.delta_grid
    s = 2 * math.pi / (lam * d2)
    return MagnitudeImage(values=mag, q_origin=tuple(o * s for o in dg.origin),
                          q_pitch=tuple(p * s for p in dg.pitch), spin=cmap.spin,
                          position_label=cmap.position_label)
