"""Built-in sample volumes for configs, tests and demos."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError


def _dims(spec) -> tuple:
    dims = tuple(int(n) for n in spec.get("dims", ()))
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"phantom dims must be three positive ints, got {spec.get('dims')}")
    return dims


def uniform(dims, A=1.0, M=(0.0, 0.0, 0.0)):
    Av = np.full(dims, float(A))
    Mv = np.broadcast_to(np.asarray(M, float), dims + (3,)).copy()
    return Av, Mv


def single_voxel(dims, A=1.0, M=(0.0, 0.0, 0.0), index=None):
    Av = np.zeros(dims)
    Mv = np.zeros(dims + (3,))
    idx = tuple(n // 2 for n in dims) if index is None else tuple(index)
    Av[idx] = A
    Mv[idx] = M
    return Av, Mv


def bars(dims, M=(0.0, 0.0, 0.0)):
    """Three slabs of different width and density across x, uniform in y and z."""
    nx = dims[0]
    profile = np.zeros(nx)
    edges = [(0.08, 0.23, 1.0), (0.47, 0.53, 2.0), (0.78, 0.94, 0.5)]
    for lo, hi, val in edges:
        profile[int(round(lo * nx)):max(int(round(hi * nx)), int(round(lo * nx)) + 1)] = val
    Av = np.broadcast_to(profile[:, None, None], dims).copy()
    Mv = Av[..., None] * np.asarray(M, float) / max(profile.max(), 1e-300)
    return Av, Mv


def domains(dims, seed=0):
    """Nuclear blob with magnetic domains of differing moment direction.

    Deterministic for a given seed. M is nonzero only inside the blob.
    """
    rng = np.random.default_rng(seed)
    nx, ny, nz = dims
    x = (np.arange(nx) - (nx - 1) / 2) / max(nx / 2, 1)
    y = (np.arange(ny) - (ny - 1) / 2) / max(ny / 2, 1)
    z = (np.arange(nz) - (nz - 1) / 2) / max(nz / 2, 1)
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    inside = (X / 0.8) ** 2 + (Y / 0.8) ** 2 + (Z / 0.7) ** 2 <= 1.0
    A = np.where(inside, 1.0 + 0.3 * (X > 0.2), 0.0)
    M = np.zeros(dims + (3,))
    n_dom = 4
    dirs = rng.normal(size=(n_dom, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    label = (X > 0).astype(int) * 2 + (Z > 0.1 * X).astype(int)
    for i in range(n_dom):
        sel = inside & (label == i)
        M[sel] = 0.5 * dirs[i]
    return A, M


# (value, a, b, x0, y0, phi_degrees) for the Toft-modified Shepp-Logan head
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def ellipse_image(n, ellipses=SHEPP_LOGAN, pitch=None, supersample=4):
    """Area-averaged rasterization on an n×n grid spanning [-1, 1]²  (pixel pitch 2/n).

    Axis 0 is x, axis 1 is y.
    """
    pitch = 2.0 / n if pitch is None else pitch
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    c = (np.arange(n) - (n - 1) / 2) * pitch
    xs = (c[:, None] + sub[None, :] * pitch).ravel()
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    img = np.zeros_like(X)
    for val, a, b, x0, y0, phi in ellipses:
        t = np.deg2rad(phi)
        u = (X - x0) * np.cos(t) + (Y - y0) * np.sin(t)
        v = -(X - x0) * np.sin(t) + (Y - y0) * np.cos(t)
        img[(u / a) ** 2 + (v / b) ** 2 <= 1.0] += val
    return img.reshape(n, supersample, n, supersample).mean(axis=(1, 3))


def ellipse_projection(s, angle, ellipses=SHEPP_LOGAN):
    """Exact line integrals of the ellipse phantom.

    Convention matches rotate-then-project along y: for rotation ``angle``
    about z, the ray with detector coordinate s is the line
    {(s cos φ + t sin φ, -s sin φ + t cos φ)}.
    """
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    # ray direction (sin φ, cos φ), normal (cos φ, -sin φ)
    nx, ny = np.cos(angle), -np.sin(angle)
    for val, a, b, x0, y0, phi in ellipses:
        t = np.deg2rad(phi)
        # project the normal onto the ellipse's own axes
        cu = nx * np.cos(t) + ny * np.sin(t)
        cv = -nx * np.sin(t) + ny * np.cos(t)
        a2 = (a * cu) ** 2 + (b * cv) ** 2
        sc = s - (x0 * nx + y0 * ny)
        inside = sc**2 < a2
        out[inside] += 2.0 * val * a * b * np.sqrt(a2 - sc[inside] ** 2) / a2
    return out


def shepp_logan(dims, scale=1.0):
    nx, ny, nz = dims
    if nx != ny:
        raise ConfigError("shepp_logan phantom needs Nx == Ny")
    sl = ellipse_image(nx) * scale
    A = np.repeat(sl[:, :, None], nz, axis=2)
    return A, np.zeros(dims + (3,))


def build(spec) -> tuple[np.ndarray, np.ndarray]:
    kind = spec.get("kind")
    dims = _dims(spec)
    if kind == "uniform":
        return uniform(dims, spec.get("A", 1.0), spec.get("M", (0, 0, 0)))
    if kind == "single_voxel":
        return single_voxel(dims, spec.get("A", 1.0), spec.get("M", (0, 0, 0)), spec.get("index"))
    if kind == "bars":
        return bars(dims, spec.get("M", (0, 0, 0)))
    if kind == "domains":
        return domains(dims, int(spec.get("seed", 0)))
    if kind == "shepp_logan":
        return shepp_logan(dims, float(spec.get("scale", 1.0)))
    raise ConfigError(f"unknown phantom kind {kind!r}")
