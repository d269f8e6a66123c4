"""Regular-grid domains and the scalar/vector fields that live on them.

Grid index ``(i1, i2, i3)`` maps to the physical point
``origin + spacing * (i1, i2, i3)``. Values are stored as C-ordered arrays of
shape ``(n1, n2, n3)``, so the flat offset of a node is
``i3 + n3 * (i2 + n2 * i1)`` (x3 varies fastest).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

_REL_TOL = 1e-9
MIN_POINTS = 5


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box sampled with a uniform spacing on every axis.

    ``extent_x1`` is the channel width, ``extent_x2`` the computational length
    along the flow, ``extent_x3`` the depth (x3 = 0 is the bed, x3 = extent_x3
    the free surface).
    """

    extent_x1: float
    extent_x2: float
    extent_x3: float
    spacing: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.origin) != 3:
            raise ConfigurationError("origin must have three coordinates")
        if not self.spacing > 0:
            raise ConfigurationError(f"spacing must be positive, got {self.spacing}")
        for name, ext in zip(("extent_x1", "extent_x2", "extent_x3"), self.extents):
            if not ext > 0:
                raise ConfigurationError(f"{name} must be positive, got {ext}")
            cells = ext / self.spacing
            if abs(cells - round(cells)) > _REL_TOL * max(1.0, cells):
                raise ConfigurationError(
                    f"{name}={ext} is not an integer multiple of spacing {self.spacing}"
                )
            if round(cells) + 1 < MIN_POINTS:
                raise ConfigurationError(
                    f"{name} yields {round(cells) + 1} grid points; need at least {MIN_POINTS}"
                )

    @classmethod
    def from_shape(cls, shape, spacing, origin=(0.0, 0.0, 0.0)) -> DomainSpec:
        n1, n2, n3 = (int(n) for n in shape)
        return cls((n1 - 1) * spacing, (n2 - 1) * spacing, (n3 - 1) * spacing, spacing, origin)

    @property
    def extents(self) -> tuple[float, float, float]:
        return (self.extent_x1, self.extent_x2, self.extent_x3)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(round(e / self.spacing)) + 1 for e in self.extents)

    @property
    def size(self) -> int:
        n1, n2, n3 = self.shape
        return n1 * n2 * n3

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def diagonal(self) -> float:
        return math.sqrt(sum(e * e for e in self.extents))

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.extents)

    def axis(self, k: int) -> np.ndarray:
        """Node coordinates along axis ``k``."""
        n = self.shape[k]
        return self.origin[k] + self.spacing * np.arange(n, dtype=np.float64)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays of shape (n1,1,1), (1,n2,1), (1,1,n3)."""
        x1, x2, x3 = (self.axis(k) for k in range(3))
        return x1[:, None, None], x2[None, :, None], x3[None, None, :]

    def contains(self, point, tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=np.float64)
        lo = np.asarray(self.origin)
        slack = tol * max(1.0, float(np.max(np.abs(self.upper))))
        return bool(np.all(p >= lo - slack) and np.all(p <= self.upper + slack))

    def matches(self, other: DomainSpec) -> bool:
        return self.shape == other.shape and math.isclose(
            self.spacing, other.spacing, rel_tol=_REL_TOL
        ) and np.allclose(self.origin, other.origin, rtol=0, atol=_REL_TOL * self.spacing)


def _check_values(domain: DomainSpec, values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.shape != domain.shape:
        if arr.size == domain.size:
            arr = arr.reshape(domain.shape)
        else:
            raise ConfigurationError(
                f"values have {arr.size} entries, domain needs {domain.size} {domain.shape}"
            )
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("volume values must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarVolume:
    domain: DomainSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.domain, self.values))

    @classmethod
    def zeros(cls, domain: DomainSpec) -> ScalarVolume:
        return cls(domain, np.zeros(domain.shape))

    @classmethod
    def from_function(cls, domain: DomainSpec, fn) -> ScalarVolume:
        """Evaluate ``fn(x1, x2, x3)`` on broadcast coordinate arrays."""
        vals = np.broadcast_to(fn(*domain.mesh()), domain.shape)
        return cls(domain, np.array(vals, dtype=np.float64))

    def with_values(self, values) -> ScalarVolume:
        return ScalarVolume(self.domain, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, alpha):
        return self.with_values(self.values * alpha)

    __rmul__ = __mul__

    def dot(self, other) -> float:
        return float(np.dot(self.values.ravel(), _vals(other).ravel()))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def _vals(x):
    return x.values if isinstance(x, ScalarVolume) else x


@dataclass(frozen=True, eq=False)
class VectorVolume:
    """Three scalar components on one domain, in meters per second (or voxels)."""

    domain: DomainSpec
    v1: ScalarVolume
    v2: ScalarVolume
    v3: ScalarVolume

    def __post_init__(self):
        for comp in self.components:
            if not comp.domain.matches(self.domain):
                raise ConfigurationError("vector components must share the vector's domain")

    @property
    def components(self) -> tuple[ScalarVolume, ScalarVolume, ScalarVolume]:
        return (self.v1, self.v2, self.v3)

    @classmethod
    def from_array(cls, domain: DomainSpec, arr) -> VectorVolume:
        """Build from an array of shape (3, n1, n2, n3)."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (3,) + domain.shape:
            raise ConfigurationError(f"expected shape {(3,) + domain.shape}, got {arr.shape}")
        return cls(domain, *(ScalarVolume(domain, arr[k]) for k in range(3)))

    def as_array(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])


@dataclass(frozen=True)
class SnapshotSchedule:
    """Snapshot times T_j = j * interval, each probed for ``probe_window`` seconds."""

    count: int
    interval: float
    probe_window: float

    def __post_init__(self):
        if self.count < 2:
            raise ConfigurationError(f"need at least 2 snapshots, got {self.count}")
        if not self.interval > 0 or not self.probe_window > 0:
            raise ConfigurationError("interval and probe_window must be positive")
        if self.probe_window > self.interval / 10:
            raise ConfigurationError(
                f"probe_window {self.probe_window} s exceeds interval/10 = {self.interval / 10} s"
            )

    @property
    def times(self) -> np.ndarray:
        return self.interval * np.arange(self.count)


@dataclass(frozen=True)
class TrilinearStencil:
    """Flat node indices and weights for sampling P points (shape (P, 8))."""

    index: np.ndarray
    weight: np.ndarray = field(repr=False)

    def sample(self, flat_values: np.ndarray) -> np.ndarray:
        return np.einsum("pk,pk->p", self.weight, flat_values[self.index])

    def spread(self, amplitudes: np.ndarray, size: int) -> np.ndarray:
        """Transpose of :meth:`sample`: scatter amplitudes onto the grid."""
        out = np.zeros(size)
        np.add.at(out, self.index.ravel(), (self.weight * amplitudes[:, None]).ravel())
        return out


def trilinear_stencil(domain: DomainSpec, points) -> TrilinearStencil:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != 3:
        raise ConfigurationError("points must have three coordinates")
    lo = np.asarray(domain.origin)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(domain.upper))))
    outside = np.any((pts < lo - slack) | (pts > domain.upper + slack), axis=1)
    if np.any(outside):
        p = pts[np.argmax(outside)]
        raise DomainError(f"point {tuple(p)} lies outside the domain box")
    shape = np.array(domain.shape)
    rel = (pts - np.asarray(domain.origin)) / domain.spacing
    base = np.clip(np.floor(rel).astype(np.int64), 0, shape - 2)
    frac = np.clip(rel - base, 0.0, 1.0)
    n1, n2, n3 = domain.shape
    idx = np.empty((len(pts), 8), dtype=np.int64)
    wts = np.empty((len(pts), 8))
    k = 0
    for a in (0, 1):
        wa = frac[:, 0] if a else 1.0 - frac[:, 0]
        for b in (0, 1):
            wb = frac[:, 1] if b else 1.0 - frac[:, 1]
            for c in (0, 1):
                wc = frac[:, 2] if c else 1.0 - frac[:, 2]
                i1, i2, i3 = base[:, 0] + a, base[:, 1] + b, base[:, 2] + c
                idx[:, k] = i3 + n3 * (i2 + n2 * i1)
                wts[:, k] = wa * wb * wc
                k += 1
    return TrilinearStencil(idx, wts)


def trilinear_sample(vol: ScalarVolume, point) -> float:
    """Trilinear interpolation of ``vol`` at a physical point inside the box."""
    st = trilinear_stencil(vol.domain, [point])
    return float(st.sample(vol.values.ravel())[0])


def flat_index(domain: DomainSpec, i1: int, i2: int, i3: int) -> int:
    n1, n2, n3 = domain.shape
    return i3 + n3 * (i2 + n2 * i1)
