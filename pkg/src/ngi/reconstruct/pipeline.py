"""Map-to-component reconstruction: magnitudes, phasing (oracle or retrieved), unmixing."""
from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from ..fourier import frame_inverse, ft_at
from .magnitude import MagnitudeImage
from .phase import RetrievalParams, align, phase_retrieve


def nrmse(est, truth) -> float:
    est, truth = np.asarray(est), np.asarray(truth)
    return float(np.linalg.norm(est - truth) / np.linalg.norm(truth))


def check_frame(mag: MagnitudeImage, pitch: float, image_shape) -> None:
    """The q grid must be the DFT lattice of a frame with the sample pitch, holding the image."""
    fp = mag.frame_pitch()
    for ax, (p, n, ns) in enumerate(zip(fp, mag.shape, image_shape)):
        if abs(p - pitch) > 1e-9 * pitch:
            raise GeometryError(f"q grid axis {ax} implies frame pitch {p:.9g}, sample pitch is {pitch:.9g}; "
                                f"set detector pitch = lambda*d2/(n_pixels*a)")
        if n < ns:
            raise GeometryError(f"frame of {n} pixels on axis {ax} cannot hold an image of {ns}")


def _origin_phase(mag: MagnitudeImage, image_shape, pitch):
    """exp(-i q·ζ0) for ζ0 the first-pixel centre of an image of ``image_shape``."""
    ph = np.ones(mag.shape, dtype=np.complex128)
    for ax, ns in enumerate(image_shape):
        z0 = -(ns - 1) / 2.0 * pitch
        shape = [1] * len(image_shape)
        shape[ax] = -1
        ph = ph * np.exp(-1j * mag.q_axis(ax) * z0).reshape(shape)
    return ph


def oracle_image(mag: MagnitudeImage, truth_image, pitch: float) -> np.ndarray:
    """Attach the phase of F[truth] to ``mag`` and invert onto the image lattice."""
    truth_image = np.asarray(truth_image, dtype=np.complex128)
    check_frame(mag, pitch, truth_image.shape)
    q_axes = [mag.q_axis(ax) for ax in range(mag.values.ndim)]
    F_true = ft_at(truth_image, pitch, q_axes)
    est = mag.values * np.exp(1j * np.angle(F_true)) * _origin_phase(mag, truth_image.shape, pitch)
    x = frame_inverse(np.fft.ifftshift(est), pitch)
    return x[tuple(slice(0, n) for n in truth_image.shape)]


def box_support(frame_shape, image_shape) -> np.ndarray:
    sup = np.zeros(frame_shape, bool)
    sup[tuple(slice(0, n) for n in image_shape)] = True
    return sup


def retrieved_image(mag: MagnitudeImage, image_shape, pitch: float, params: RetrievalParams,
                    truth_image=None):
    """Phase-retrieve one channel. S↑ is real, S↓ complex.

    With ``truth_image`` the result is aligned to it over the trivial
    ambiguities before cropping; otherwise the frame is cropped as retrieved
    and the ambiguity is left unresolved.
    """
    check_frame(mag, pitch, image_shape)
    constraint = "real" if mag.spin == "up" else "complex"
    p = RetrievalParams(**{**params.__dict__, "constraint": constraint})
    res = phase_retrieve(mag, box_support(mag.shape, image_shape), p)
    x = np.asarray(res.best, dtype=np.complex128)
    info = {"constraint": constraint, "residual": float(res.residuals[res.best_index]),
            "restart_residuals": [float(r) for r in res.residuals], "best_restart": res.best_index}
    if truth_image is not None:
        frame_truth = np.zeros(mag.shape, dtype=np.complex128)
        frame_truth[tuple(slice(0, n) for n in image_shape)] = truth_image
        al = align(x, frame_truth)
        x = al.aligned
        info.update({"phasing": "aligned_to_truth", "shift": list(al.shift), "flipped": al.flipped,
                     "global_phase": al.phase, "nrmse": al.nrmse})
    else:
        info["phasing"] = "unresolved: translation, global phase and conjugate flip are free per channel"
    return x[tuple(slice(0, n) for n in image_shape)], res, info


def truth_frame_pitch(lam: float, d2: float, n_pixels: int, pitch: float) -> float:
    """Detector pitch that puts the map q grid on the DFT lattice of an n-pixel frame of ``pitch``."""
    return lam * d2 / (n_pixels * pitch)
