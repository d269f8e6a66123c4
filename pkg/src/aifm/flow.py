"""Dense 3D optical flow by polynomial expansion (Farneback-style).

Each neighbourhood is modelled as f(x) ~ x^T A x + b^T x + c0, fitted by
Gaussian-weighted least squares. A displacement d turns the expansion of the
first frame into that of the second, b2 = b1 - 2 A d, which gives one 3x3
linear system per voxel; systems are averaged over a Gaussian window and
solved coarse-to-fine with warping.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter, map_coordinates, zoom

from .errors import ConfigurationError
from .volume import DomainSpec, ScalarVolume, VectorVolume

# (a1, a2, a3) exponents of the ten quadratic basis monomials
MONOMIALS = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
             (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1))
SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 4
    pyramid_scale: float = 0.5
    window_radius: int = 4
    expansion_sigma: float = 1.5
    iterations_per_level: int = 3
    smoothing_sigma_flow: float = 1.0

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ConfigurationError("pyramid_levels must be >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise ConfigurationError("pyramid_scale must lie in (0, 1)")
        if self.window_radius < 1:
            raise ConfigurationError("window_radius must be >= 1")
        if self.iterations_per_level < 1:
            raise ConfigurationError("iterations_per_level must be >= 1")
        if not self.expansion_sigma > 0 or self.smoothing_sigma_flow < 0:
            raise ConfigurationError("expansion_sigma must be positive, flow smoothing non-negative")


@dataclass(frozen=True, eq=False)
class Expansion:
    """Per-voxel quadratic model: A (n1,n2,n3,3,3), b (n1,n2,n3,3), c0 (n1,n2,n3)."""

    A: np.ndarray
    b: np.ndarray
    c0: np.ndarray


def kernel_radius(sigma: float) -> int:
    return int(math.ceil(3 * sigma))


@functools.lru_cache(maxsize=16)
def _projection(sigma: float):
    """1D weighted monomial kernels and the inverse Gram matrix of the basis."""
    n = kernel_radius(sigma)
    t = np.arange(-n, n + 1, dtype=np.float64)
    w = np.exp(-t * t / (2 * sigma * sigma))
    kernels = [w * t**p for p in range(3)]
    # Gram matrix of the separable weight: sums of w * t^p factorise per axis
    mom = [float(np.sum(w * t**p)) for p in range(5)]
    G = np.empty((10, 10))
    for i, a in enumerate(MONOMIALS):
        for j, b in enumerate(MONOMIALS):
            G[i, j] = mom[a[0] + b[0]] * mom[a[1] + b[1]] * mom[a[2] + b[2]]
    return kernels, np.linalg.inv(G)


def poly_expansion(vol, sigma: float) -> Expansion:
    """Gaussian-weighted least-squares quadratic fit around every voxel.

    Coordinates are voxel offsets along (x1, x2, x3). Borders use replicate
    padding, so coefficients are exact for quadratic inputs only at least the
    kernel radius ceil(3 sigma) away from the edge.
    """
    f = vol.values if isinstance(vol, ScalarVolume) else np.asarray(vol, dtype=np.float64)
    n = kernel_radius(sigma)
    if f.ndim != 3 or min(f.shape) < 2 * n + 1:
        raise ConfigurationError(
            f"volume {f.shape} too small for expansion sigma {sigma}: need {2 * n + 1} per axis"
        )
    kernels, Ginv = _projection(float(sigma))
    # correlate with w(t) t^p along x3, then x2, then x1
    c3 = {p: correlate1d(f, kernels[p], axis=2, mode="nearest") for p in range(3)}
    c23 = {}
    for p3 in range(3):
        for p2 in range(3 - p3):
            c23[p2, p3] = correlate1d(c3[p3], kernels[p2], axis=1, mode="nearest")
    proj = np.empty((10,) + f.shape)
    for i, (a1, a2, a3) in enumerate(MONOMIALS):
        proj[i] = correlate1d(c23[a2, a3], kernels[a1], axis=0, mode="nearest")
    r = np.einsum("ij,j...->i...", Ginv, proj)
    A = np.empty(f.shape + (3, 3))
    A[..., 0, 0], A[..., 1, 1], A[..., 2, 2] = r[4], r[5], r[6]
    A[..., 0, 1] = A[..., 1, 0] = r[7] / 2
    A[..., 0, 2] = A[..., 2, 0] = r[8] / 2
    A[..., 1, 2] = A[..., 2, 1] = r[9] / 2
    b = np.stack([r[1], r[2], r[3]], axis=-1)
    return Expansion(A, b, r[0])


def _warp(arr: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample trailing-channel array ``arr`` (n1,n2,n3,...) at ``coords`` (3,n1,n2,n3)."""
    flat = arr.reshape(arr.shape[:3] + (-1,))
    out = np.empty_like(flat)
    for k in range(flat.shape[-1]):
        out[..., k] = map_coordinates(flat[..., k], coords, order=1, mode="nearest")
    return out.reshape(arr.shape)


def _ramp(dist: np.ndarray, border: int) -> np.ndarray:
    return np.clip((dist + 1.0) / (border + 1.0), 0.0, 1.0) * (dist >= 0)


def _certainty(grid, coords, shape, border: int) -> np.ndarray:
    """Confidence of each voxel's local system: expansions within ``border`` voxels
    of an edge are biased by padding, and a warped position outside the
    volume carries no information at all."""
    c = np.ones(shape)
    for k in range(3):
        hi = shape[k] - 1
        for pos in (grid[k], coords[k]):
            c *= _ramp(np.minimum(pos, hi - pos), border)
    return c


def _update(e1: Expansion, e2: Expansion, d: np.ndarray, radius: int, border: int,
            diag: dict) -> np.ndarray:
    shape = d.shape[:3]
    grid = np.indices(shape, dtype=np.float64)
    coords = grid + np.moveaxis(d, -1, 0)
    A2 = _warp(e2.A, coords)
    b2 = _warp(e2.b, coords)
    A = 0.5 * (e1.A + A2)
    db = -0.5 * (b2 - e1.b) + np.einsum("...ij,...j->...i", A, d)
    c = _certainty(grid, coords, shape, border)
    AtA = np.einsum("...ki,...kj->...ij", A, A) * c[..., None, None]
    Atb = np.einsum("...ki,...k->...i", A, db) * c[..., None]
    sw = radius / 2.0
    G = np.empty_like(AtA)
    for i in range(3):
        for j in range(i, 3):
            G[..., i, j] = gaussian_filter(AtA[..., i, j], sw, truncate=2.0, mode="nearest")
            G[..., j, i] = G[..., i, j]
    h = np.stack([gaussian_filter(Atb[..., i], sw, truncate=2.0, mode="nearest") for i in range(3)], -1)
    tr = np.trace(G, axis1=-2, axis2=-1)
    top = float(tr.max()) if tr.size else 0.0
    ok = np.isfinite(tr) & (tr > SINGULAR_RATIO * top) & (top > 0)
    diag["singular_voxels"] = diag.get("singular_voxels", 0) + int(ok.size - ok.sum())
    new = d.copy()
    if ok.any():
        Gs = G[ok] + (1e-6 * tr[ok])[:, None, None] * np.eye(3)
        new[ok] = np.linalg.solve(Gs, h[ok][..., None])[..., 0]
    return new


def _level_shapes(shape, params: FlowParams):
    need = 2 * kernel_radius(params.expansion_sigma) + 1
    shapes = [tuple(shape)]
    for _ in range(1, params.pyramid_levels):
        nxt = tuple(max(1, int(round(n * params.pyramid_scale))) for n in shapes[-1])
        if min(nxt) < need:
            break
        shapes.append(nxt)
    return shapes


def _resize(arr: np.ndarray, shape) -> np.ndarray:
    if arr.shape[:3] == tuple(shape):
        return arr
    factors = [t / s for t, s in zip(shape, arr.shape[:3])] + [1] * (arr.ndim - 3)
    return zoom(arr, factors, order=1, mode="nearest")


def _normalize(f: np.ndarray) -> np.ndarray:
    f = np.maximum(f, 0.0)
    top = f.max()
    return f / top if top > 0 else f


def estimate_flow(prev: ScalarVolume, next: ScalarVolume, params: FlowParams | None = None,
                  diagnostics: dict | None = None, normalize: bool = True) -> VectorVolume:
    """Displacement field (voxels per frame) carrying ``prev`` onto ``next``.

    Inputs are clamped at zero and scaled to unit maximum first (each frame
    separately) unless ``normalize`` is False. Voxels whose aggregated system
    is numerically zero keep the coarser estimate; their count is added to
    ``diagnostics["singular_voxels"]``.
    """
    params = params or FlowParams()
    if not prev.domain.matches(next.domain):
        raise ConfigurationError("flow frames must share a domain")
    diag = {} if diagnostics is None else diagnostics
    f1, f2 = prev.values, next.values
    if normalize:
        f1, f2 = _normalize(f1), _normalize(f2)
    shapes = _level_shapes(f1.shape, params)
    if min(f1.shape) < 2 * kernel_radius(params.expansion_sigma) + 1:
        raise ConfigurationError(f"volume {f1.shape} too small for the expansion kernel")
    diag["levels_used"] = len(shapes)
    d = None
    for lvl in range(len(shapes) - 1, -1, -1):
        shape = shapes[lvl]
        if lvl == 0:
            g1, g2 = f1, f2
        else:
            blur = 0.5 / params.pyramid_scale ** lvl
            g1 = _resize(gaussian_filter(f1, blur, mode="nearest"), shape)
            g2 = _resize(gaussian_filter(f2, blur, mode="nearest"), shape)
        e1 = poly_expansion(g1, params.expansion_sigma)
        e2 = poly_expansion(g2, params.expansion_sigma)
        if d is None:
            d = np.zeros(shape + (3,))
        else:
            old = d.shape[:3]
            d = _resize(d, shape)
            for k in range(3):
                d[..., k] *= (shape[k] - 1) / max(old[k] - 1, 1)
        for _ in range(params.iterations_per_level):
            d = _update(e1, e2, d, params.window_radius, kernel_radius(params.expansion_sigma), diag)
            if params.smoothing_sigma_flow > 0:
                for k in range(3):
                    d[..., k] = gaussian_filter(d[..., k], params.smoothing_sigma_flow, mode="nearest")
    if not np.all(np.isfinite(d)):
        raise ConfigurationError("optical flow produced non-finite displacements")
    return VectorVolume.from_array(prev.domain, np.moveaxis(d, -1, 0))


def average_flows(flows) -> VectorVolume:
    """Mean of per-pair displacement (or velocity) fields, summed in pair order."""
    flows = list(flows)
    if not flows:
        raise ConfigurationError("need at least one flow field to average")
    acc = np.zeros_like(flows[0].as_array())
    for fl in flows:
        acc += fl.as_array()
    return VectorVolume.from_array(flows[0].domain, acc / len(flows))


def displacement_to_velocity(d: VectorVolume, spacing: float, interval: float) -> VectorVolume:
    """v = d * spacing / interval, componentwise."""
    if not interval > 0:
        raise ConfigurationError("interval must be positive")
    return VectorVolume.from_array(d.domain, d.as_array() * (spacing / interval))


def flow_summary_csv(vol: VectorVolume, path, bins: int = 20, border: int = 0) -> None:
    """Mean vector and per-component histograms as CSV rows."""
    arr = vol.as_array()
    if border:
        arr = arr[:, border:-border, border:-border, border:-border]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "component", "bin_lo", "bin_hi", "value"])
        for k in range(3):
            w.writerow(["mean", f"v{k + 1}", "", "", repr(float(arr[k].mean()))])
        for k in range(3):
            counts, edges = np.histogram(arr[k], bins=bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow(["hist", f"v{k + 1}", repr(float(lo)), repr(float(hi)), int(c)])
