"""Experiment geometry, sample voxel model, constants and config ingestion.

Lab frame: the beam travels along +y from the source plane (y = 0) to the
sample centre r_c = (0, d1, 0) and on to the detector plane y = d1 + d2.
Transverse coordinates are (x, z); in 1D-transverse mode only x is kept.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy import constants as sc

from .errors import ConfigError

POSITIONS = ("P1", "P2", "P3")
TOP_LEVEL_KEYS = {"geometry", "source", "detector", "sample", "constants", "mode"}
DEFAULT_FAR_FIELD_RATIO = 0.01


@dataclass(frozen=True)
class PhysicalConstants:
    m_n: float
    hbar: float
    r_e: float
    mu_B: float
    gamma: float = 1.913

    def __post_init__(self):
        for name in ("m_n", "hbar", "r_e", "mu_B", "gamma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"constant {name} must be finite and > 0, got {value!r}")

    @property
    def beta(self) -> float:
        return self.gamma * self.r_e / (2.0 * self.mu_B)

    @classmethod
    def codata(cls) -> "PhysicalConstants":
        return cls(
            m_n=sc.physical_constants["neutron mass"][0],
            hbar=sc.hbar,
            r_e=sc.physical_constants["classical electron radius"][0],
            mu_B=sc.physical_constants["Bohr magneton"][0],
        )

    @classmethod
    def normalized(cls, r_e: float = 1.0, mu_B: float = 1.0, gamma: float = 1.913):
        return cls(m_n=1.0, hbar=1.0, r_e=r_e, mu_B=mu_B, gamma=gamma)


@dataclass(frozen=True)
class Geometry:
    lam: float
    d1: float
    d2: float
    theta: float
    I0: float = 1.0
    transverse: str = "2d"
    far_field_ratio: float = DEFAULT_FAR_FIELD_RATIO

    def __post_init__(self):
        for name in ("lam", "d1", "d2", "I0"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                label = "lambda" if name == "lam" else name
                raise ConfigError(f"{label} must be > 0, got {value!r}")
        if not (0.0 < self.theta < math.pi / 2):
            raise ConfigError(f"theta must be in (0, π/2), got {self.theta!r}")
        if self.transverse not in ("1d", "2d"):
            raise ConfigError(f"transverse must be '1d' or '2d', got {self.transverse!r}")
        if not self.far_field_ratio > 0:
            raise ConfigError("far_field_ratio must be > 0")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.lam

    @property
    def d_r(self) -> float:
        return self.d1 + self.d2

    @property
    def ndim(self) -> int:
        return 1 if self.transverse == "1d" else 2


def _per_axis(value, ndim: int, name: str, cast=float) -> tuple:
    if np.isscalar(value):
        return (cast(value),) * ndim
    value = tuple(cast(v) for v in value)
    if len(value) != ndim:
        raise ConfigError(f"{name} needs {ndim} entries for {ndim}D-transverse mode, got {len(value)}")
    return value


@dataclass(frozen=True)
class SourceSpec:
    """Incoherent source aperture, sampled at pixel centres.

    ``taper`` is the fraction of the half-aperture over which the intensity
    rolls off with a raised cosine (0 = hard edge).
    """

    extent: tuple
    n_points: tuple
    taper: float = 0.0

    def __post_init__(self):
        if any(n < 2 for n in self.n_points):
            raise ConfigError(f"source n_points must be >= 2, got {self.n_points}")
        if any(not e > 0 for e in self.extent):
            raise ConfigError(f"source extent must be > 0, got {self.extent}")
        if not 0.0 <= self.taper <= 1.0:
            raise ConfigError(f"source taper must be in [0, 1], got {self.taper}")

    @property
    def pitch(self) -> tuple:
        return tuple(e / n for e, n in zip(self.extent, self.n_points))

    def axis_points(self, axis: int) -> np.ndarray:
        n, p = self.n_points[axis], self.pitch[axis]
        return (np.arange(n) - (n - 1) / 2.0) * p

    def axis_weights(self, axis: int) -> np.ndarray:
        u = np.abs(self.axis_points(axis)) / (self.extent[axis] / 2.0)
        if self.taper == 0.0:
            return np.ones_like(u)
        flat = 1.0 - self.taper
        t = np.clip((u - flat) / self.taper, 0.0, 1.0)
        return 0.5 * (1.0 + np.cos(np.pi * t))


@dataclass(frozen=True)
class DetectorSpec:
    """Reference-detector scan. ``center`` is 'target' (scan centred on the
    target detector, so Δξ = 0 is a pixel) or 'axis' (centred on ξ_r = 0)."""

    extent: tuple
    n_pixels: tuple
    center: str = "target"

    def __post_init__(self):
        if any(n < 1 for n in self.n_pixels):
            raise ConfigError("detector n_pixels must be >= 1")
        if any(not e > 0 for e in self.extent):
            raise ConfigError("detector extent must be > 0")
        if self.center not in ("target", "axis"):
            raise ConfigError(f"detector center must be 'target' or 'axis', got {self.center!r}")

    @property
    def pitch(self) -> tuple:
        return tuple(e / n for e, n in zip(self.extent, self.n_pixels))


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Voxelized nuclear density ``A`` (Nx, Ny, Nz) and magnetization ``M`` (Nx, Ny, Nz, 3)."""

    A: np.ndarray
    M: np.ndarray
    pitch: float

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        M = np.array(self.M, dtype=np.float64)
        if A.ndim != 3:
            raise ConfigError(f"A must be 3D (Nx, Ny, Nz), got shape {A.shape}")
        if M.shape != A.shape + (3,):
            raise ConfigError(f"M must have shape {A.shape + (3,)}, got {M.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(M))):
            raise ConfigError("sample values must be finite")
        if not self.pitch > 0:
            raise ConfigError("sample pitch must be > 0")
        A.flags.writeable = False
        M.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def dims(self) -> tuple:
        return self.A.shape

    @property
    def extent(self) -> float:
        return max(self.dims) * self.pitch

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return (np.arange(n) - (n - 1) / 2.0) * self.pitch

    def __eq__(self, other):
        if not isinstance(other, SampleGrid):
            return NotImplemented
        return (
            self.pitch == other.pitch
            and self.A.shape == other.A.shape
            and self.A.tobytes() == other.A.tobytes()
            and self.M.tobytes() == other.M.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class Scene:
    geometry: Geometry
    source: SourceSpec
    detector: DetectorSpec
    sample: SampleGrid
    constants: PhysicalConstants
    units: str = "normalized"
    sample_ref: Mapping = field(default_factory=dict, compare=True)

    @property
    def ndim(self) -> int:
        return self.geometry.ndim

    @property
    def velocity(self) -> float:
        return self.constants.hbar * self.geometry.k / self.constants.m_n


# ---------------------------------------------------------------------------
# operations


def chi(scene: Scene) -> float:
    """Overall constant relating the correlation map to |F[P S]|².

    For D transverse dimensions this is 4π²ħ²I0² / (m_n² λ^(2+D) d2^(2D));
    D = 2 is the physical case, D = 1 keeps the 1D-transverse paths consistent.
    """
    g, c = scene.geometry, scene.constants
    D = g.ndim
    return (4.0 * math.pi**2 * c.hbar**2 * g.I0**2) / (c.m_n**2 * g.lam ** (2 + D) * g.d2 ** (2 * D))


def transverse_offset(label: str, theta: float, d2: float) -> tuple[float, float]:
    """(x, z) offset of the target detector from the beam axis."""
    xi = d2 * math.sin(theta)
    if label == "P1":
        return (xi, 0.0)
    if label == "P2":
        return (-xi, 0.0)
    if label == "P3":
        return (0.0, xi)
    raise ValueError(f"unknown detector position {label!r}")


def detector_position(label: str, theta: float, d2: float, d1: float = 0.0) -> np.ndarray:
    x, z = transverse_offset(label, theta, d2)
    return np.array([x, d1 + d2, z])


def target_point(scene: Scene, label: str) -> np.ndarray:
    """Target detector transverse point in the scene's transverse dimensionality.

    In 1D-transverse mode the z offset of P3 is dropped; it still enters
    through the scattering direction.
    """
    x, z = transverse_offset(label, scene.geometry.theta, scene.geometry.d2)
    return np.array([x]) if scene.ndim == 1 else np.array([x, z])


def nyquist_bound(lam: float, d: float, max_sep: float) -> float:
    """Largest pitch resolving exp(iπ s²/(λ d)) up to |s| = max_sep."""
    if max_sep <= 0:
        return math.inf
    return lam * d / (2.0 * max_sep)


@dataclass(frozen=True)
class SamplingCheck:
    name: str
    axis: int
    pitch: float
    bound: float
    max_separation: float

    @property
    def passed(self) -> bool:
        return self.pitch <= self.bound

    @property
    def message(self) -> str:
        rel = "<=" if self.passed else ">"
        return (f"{self.name}[axis {self.axis}]: pitch {self.pitch:.6g} {rel} bound {self.bound:.6g} "
                f"(max separation {self.max_separation:.6g})")


@dataclass(frozen=True)
class SamplingReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "axis": c.axis, "pitch": c.pitch, "bound": c.bound,
                 "max_separation": c.max_separation, "passed": c.passed, "message": c.message}
                for c in self.checks
            ],
        }


def scan_points(scene: Scene, label: str, axis: int) -> np.ndarray:
    """Reference-detector coordinates ξ_r along one transverse axis."""
    det = scene.detector
    n, p = det.n_pixels[axis], det.pitch[axis]
    centre = target_point(scene, label)[axis] if det.center == "target" else 0.0
    return centre + (np.arange(n) - n // 2) * p


def validate_sampling(scene: Scene, positions=POSITIONS) -> SamplingReport:
    g, src, smp = scene.geometry, scene.source, scene.sample
    checks = []
    sample_axes = (0,) if scene.ndim == 1 else (0, 2)
    for axis in range(scene.ndim):
        eta = src.axis_points(axis)
        zeta_half = (smp.dims[sample_axes[axis]] - 1) / 2.0 * smp.pitch
        sep_ref = sep_tgt = 0.0
        for label in positions:
            xi = scan_points(scene, label, axis)
            sep_ref = max(sep_ref, abs(xi.max() - eta.min()), abs(xi.min() - eta.max()))
            xt = target_point(scene, label)[axis]
            sep_tgt = max(sep_tgt, abs(xt) + zeta_half)
        sep_src = np.abs(eta).max() + zeta_half
        checks.append(SamplingCheck("reference_chirp", axis, src.pitch[axis],
                                    nyquist_bound(g.lam, g.d_r, sep_ref), sep_ref))
        checks.append(SamplingCheck("target_chirp", axis, smp.pitch,
                                    nyquist_bound(g.lam, g.d2, sep_tgt), sep_tgt))
        checks.append(SamplingCheck("source_sample_chirp", axis, smp.pitch,
                                    nyquist_bound(g.lam, g.d1, sep_src), sep_src))
    return SamplingReport(tuple(checks))


# ---------------------------------------------------------------------------
# configuration


def _require(section: Mapping, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing field {where}.{key}")
    return section[key]


def _check_keys(section: Mapping, allowed: set, where: str):
    if not isinstance(section, Mapping):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _load_sample(spec: Mapping, base_dir: Path, ndim: int) -> SampleGrid:
    from . import io, phantoms

    _check_keys(spec, {"pitch", "A", "M", "phantom", "rotation"}, "sample")
    pitch = float(_require(spec, "pitch", "sample"))
    if "phantom" in spec:
        if "A" in spec or "M" in spec:
            raise ConfigError("sample takes either 'phantom' or 'A'/'M' files, not both")
        A, M = phantoms.build(spec["phantom"])
    else:
        a_path = base_dir / _require(spec, "A", "sample")
        A = io.read_array(a_path)
        if "M" in spec:
            M = io.read_array(base_dir / spec["M"])
        else:
            M = np.zeros(A.shape + (3,))
    grid = SampleGrid(A=A, M=M, pitch=pitch)
    if ndim == 1 and grid.dims[2] != 1:
        raise ConfigError(f"1D-transverse mode needs Nz == 1, got dims {grid.dims}")
    rot = spec.get("rotation")
    if rot:
        from .reconstruct.tomo import rotate_sample

        _check_keys(rot, {"axis", "angle"}, "sample.rotation")
        # config angles are in degrees, the library works in radians
        grid = rotate_sample(grid, math.radians(float(rot.get("angle", 0.0))), rot.get("axis", "z"))
    return grid


def build_scene(config: Mapping[str, Any], base_dir: str | Path = ".") -> Scene:
    """Validate a configuration document and return an immutable Scene."""
    _check_keys(config, TOP_LEVEL_KEYS, "config")
    base_dir = Path(base_dir)
    units = _require(config, "mode", "config")
    if units not in ("normalized", "physical"):
        raise ConfigError(f"mode must be 'normalized' or 'physical', got {units!r}")

    gsec = _require(config, "geometry", "config")
    _check_keys(gsec, {"lambda", "d1", "d2", "d_r", "theta", "I0", "transverse", "far_field_ratio"},
                "geometry")
    try:
        geometry = Geometry(
            lam=float(_require(gsec, "lambda", "geometry")),
            d1=float(_require(gsec, "d1", "geometry")),
            d2=float(_require(gsec, "d2", "geometry")),
            theta=float(_require(gsec, "theta", "geometry")),
            I0=float(gsec.get("I0", 1.0)),
            transverse=str(gsec.get("transverse", "2d")),
            far_field_ratio=float(gsec.get("far_field_ratio", DEFAULT_FAR_FIELD_RATIO)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad geometry value: {exc}") from exc
    if "d_r" in gsec and float(gsec["d_r"]) != geometry.d_r:
        raise ConfigError(f"d_r must equal d1+d2 ({geometry.d_r!r}), got {gsec['d_r']!r}")
    if geometry.far_field_ratio != DEFAULT_FAR_FIELD_RATIO:
        warnings.warn(f"far-field ratio overridden to {geometry.far_field_ratio}", stacklevel=2)
    D = geometry.ndim

    ssec = _require(config, "source", "config")
    _check_keys(ssec, {"extent", "n_points", "taper"}, "source")
    source = SourceSpec(
        extent=_per_axis(_require(ssec, "extent", "source"), D, "source.extent"),
        n_points=_per_axis(_require(ssec, "n_points", "source"), D, "source.n_points", int),
        taper=float(ssec.get("taper", 0.0)),
    )

    dsec = _require(config, "detector", "config")
    _check_keys(dsec, {"extent", "n_pixels", "center"}, "detector")
    detector = DetectorSpec(
        extent=_per_axis(_require(dsec, "extent", "detector"), D, "detector.extent"),
        n_pixels=_per_axis(_require(dsec, "n_pixels", "detector"), D, "detector.n_pixels", int),
        center=str(dsec.get("center", "target")),
    )

    csec = config.get("constants", {}) or {}
    _check_keys(csec, {"m_n", "hbar", "r_e", "mu_B", "gamma"}, "constants")
    if units == "normalized":
        for key in ("m_n", "hbar"):
            if key in csec and float(csec[key]) != 1.0:
                raise ConfigError(f"normalized mode fixes {key} = 1")
        consts = PhysicalConstants.normalized(
            r_e=float(csec.get("r_e", 1.0)), mu_B=float(csec.get("mu_B", 1.0)),
            gamma=float(csec.get("gamma", 1.913)))
    else:
        base = PhysicalConstants.codata()
        consts = PhysicalConstants(
            m_n=float(csec.get("m_n", base.m_n)), hbar=float(csec.get("hbar", base.hbar)),
            r_e=float(csec.get("r_e", base.r_e)), mu_B=float(csec.get("mu_B", base.mu_B)),
            gamma=float(csec.get("gamma", base.gamma)))

    sample_ref = _require(config, "sample", "config")
    sample = _load_sample(sample_ref, base_dir, D)
    limit = geometry.far_field_ratio * min(geometry.d1, geometry.d2)
    if sample.extent > limit:
        raise ConfigError(
            f"sample extent {sample.extent:.6g} must be <= {geometry.far_field_ratio}·min(d1, d2) = {limit:.6g}")

    return Scene(geometry=geometry, source=source, detector=detector, sample=sample,
                 constants=consts, units=units, sample_ref=_freeze(sample_ref))


def _freeze(obj):
    # JSON round trip gives a plain, comparable copy
    return json.loads(json.dumps(obj, sort_keys=True))


def scene_to_config(scene: Scene) -> dict:
    g, c = scene.geometry, scene.constants
    cfg = {
        "mode": scene.units,
        "geometry": {"lambda": g.lam, "d1": g.d1, "d2": g.d2, "theta": g.theta, "I0": g.I0,
                     "transverse": g.transverse, "far_field_ratio": g.far_field_ratio},
        "source": {"extent": list(scene.source.extent), "n_points": list(scene.source.n_points),
                   "taper": scene.source.taper},
        "detector": {"extent": list(scene.detector.extent), "n_pixels": list(scene.detector.n_pixels),
                     "center": scene.detector.center},
        "sample": _freeze(scene.sample_ref),
        "constants": {"r_e": c.r_e, "mu_B": c.mu_B, "gamma": c.gamma},
    }
    if scene.units == "physical":
        cfg["constants"].update({"m_n": c.m_n, "hbar": c.hbar})
    return cfg


def load_config(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh), path.parent
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def load_scene(path: str | Path) -> Scene:
    config, base = load_config(path)
    return build_scene(config, base)
