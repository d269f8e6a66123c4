"""Ricker plane-wave sources and Fibonacci-lattice emission directions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..volume import DomainSpec

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class PlaneWaveSource:
    """Plane Ricker wave travelling along ``direction``.

    ``reference`` is the point where the travel-time term p.(x - reference)/c
    vanishes. The default (the coordinate origin) reproduces the closed form
    literally; :func:`entry_reference` picks the box corner the front reaches
    first, so that every node is illuminated after t = 0.
    """

    direction: tuple[float, float, float]
    central_frequency: float
    sound_speed: float
    reference: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        p = np.asarray(self.direction, dtype=np.float64)
        if p.shape != (3,):
            raise ConfigurationError("direction must be a 3-vector")
        if abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise ConfigurationError(f"direction must be a unit vector, |p| = {np.linalg.norm(p)}")
        if not self.central_frequency > 0 or not self.sound_speed > 0:
            raise ConfigurationError("central frequency and sound speed must be positive")
        object.__setattr__(self, "direction", tuple(float(x) for x in p))
        object.__setattr__(self, "reference", tuple(float(x) for x in self.reference))

    @property
    def delay(self) -> float:
        """Time offset 3 / (pi q0) that centres the wavelet."""
        return 3.0 / (math.pi * self.central_frequency)

    @property
    def duration(self) -> float:
        """Effective support length 6 / (pi q0)."""
        return 6.0 / (math.pi * self.central_frequency)

    def arrival_shift(self, x1, x2, x3):
        """Per-point shift s(x) such that lambda(x, t) = ricker(t - s(x))."""
        p, ref = self.direction, self.reference
        proj = p[0] * (x1 - ref[0]) + p[1] * (x2 - ref[1]) + p[2] * (x3 - ref[2])
        return proj / self.sound_speed + self.delay


def ricker(tau, central_frequency):
    arg = (math.pi * central_frequency * np.asarray(tau, dtype=np.float64)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def ricker_lambda(src: PlaneWaveSource, point, t):
    """Source field value at a point and time (closed-form Ricker plane wave)."""
    x1, x2, x3 = (np.asarray(c, dtype=np.float64) for c in point)
    tau = np.asarray(t, dtype=np.float64) - src.arrival_shift(x1, x2, x3)
    out = ricker(tau, src.central_frequency)
    return float(out) if np.ndim(out) == 0 else out


def fibonacci_directions(M: int) -> list[tuple[float, float, float]]:
    """M quasi-uniform unit vectors on the sphere, ordered by m = 1..M."""
    if int(M) != M or M < 1:
        raise ConfigurationError(f"need at least one direction, got M={M}")
    M = int(M)
    dirs = []
    for m in range(1, M + 1):
        p3 = (2 * m - 1) / M - 1
        rho = math.sqrt(1.0 - p3 * p3)
        ang = 2.0 * math.pi * m * GOLDEN_RATIO
        dirs.append((rho * math.cos(ang), rho * math.sin(ang), p3))
    return dirs


def entry_reference(domain: DomainSpec, direction) -> tuple[float, float, float]:
    """Box corner minimising p.x: the first point a plane front along p touches."""
    lo, hi = np.asarray(domain.origin), domain.upper
    corners = [np.array(c) for c in itertools.product(*zip(lo, hi))]
    best = min(corners, key=lambda c: float(np.dot(direction, c)))
    return tuple(float(x) for x in best)


@dataclass(frozen=True)
class SourceSet:
    sources: tuple[PlaneWaveSource, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) < 1:
            raise ConfigurationError("a source set needs at least one source")
        dirs = np.array([s.direction for s in self.sources])
        for i in range(len(dirs)):
            for j in range(i + 1, len(dirs)):
                if np.allclose(dirs[i], dirs[j], atol=1e-12):
                    raise ConfigurationError(f"sources {i} and {j} share a direction")

    def __len__(self):
        return len(self.sources)

    def __iter__(self):
        return iter(self.sources)

    def __getitem__(self, k):
        return self.sources[k]

    @classmethod
    def fibonacci(cls, M, central_frequency, sound_speed, domain: DomainSpec | None = None):
        """Fibonacci-lattice set; with a domain, each source enters at its first corner."""
        srcs = []
        for p in fibonacci_directions(M):
            ref = entry_reference(domain, p) if domain is not None else (0.0, 0.0, 0.0)
            srcs.append(PlaneWaveSource(p, central_frequency, sound_speed, ref))
        return cls(tuple(srcs))

    @property
    def max_delay(self) -> float:
        return max(s.delay for s in self.sources)
