"""Counter-based random streams: stream ``index`` of a seed is a fixed Philox
counter block, so draws never depend on how work is split across workers."""
from __future__ import annotations

import numpy as np


def stream(seed: int, index: int) -> np.random.Generator:
    if seed < 0 or index < 0:
        raise ValueError("seed and stream index must be non-negative")
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, 0, int(index)])
    return np.random.Generator(bitgen)


def complex_gaussian(seed: int, index: int, shape, scale) -> np.ndarray:
    """Circular complex Gaussian with E|z|² = scale² (scale may be an array)."""
    g = stream(seed, index)
    re_im = g.standard_normal((2,) + tuple(shape))
    return (re_im[0] + 1j * re_im[1]) * (np.asarray(scale) / np.sqrt(2.0))
