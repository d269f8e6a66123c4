from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..volume import DomainSpec, TrilinearStencil, trilinear_stencil


class Layout(str, enum.Enum):
    ALL_AROUND_6 = "AllAround6"
    WALLS_AND_SURFACE_4 = "WallsAndSurface4"
    SIDEWALLS_2 = "Sidewalls2"
    EXPLICIT = "Explicit"


# (axis, side) with side 0 = low face, 1 = high face. x3 = 0 is the bed, x3 = L3 the surface.
FACES = {
    Layout.ALL_AROUND_6: ((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)),
    Layout.WALLS_AND_SURFACE_4: ((0, 0), (0, 1), (2, 0), (2, 1)),
    Layout.SIDEWALLS_2: ((0, 0), (0, 1)),
}


def face_grid(domain: DomainSpec, axis: int, side: int, resolution: int, inset: float) -> np.ndarray:
    lo, hi = np.asarray(domain.origin), domain.upper
    others = [k for k in range(3) if k != axis]
    axes = []
    for k in others:
        if resolution == 1:
            axes.append(np.array([(lo[k] + hi[k]) / 2]))
        else:
            axes.append(np.linspace(lo[k] + inset, hi[k] - inset, resolution))
    a, b = np.meshgrid(*axes, indexing="ij")
    pts = np.empty((a.size, 3))
    pts[:, axis] = lo[axis] + inset if side == 0 else hi[axis] - inset
    pts[:, others[0]] = a.ravel()
    pts[:, others[1]] = b.ravel()
    return pts


@dataclass(frozen=True, eq=False)
class ReceiverArray:
    """Receiver positions on the collection surface, ``inset`` meters inside the box."""

    layout: Layout
    resolution: int
    inset: float
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "layout", Layout(self.layout))
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) == 0:
            raise ConfigurationError("receiver positions must be a non-empty (N, 3) array")
        object.__setattr__(self, "positions", pos)
        if self.layout != Layout.EXPLICIT:
            expect = len(FACES[self.layout]) * self.resolution**2
            if len(pos) != expect:
                raise ConfigurationError(f"{self.layout.value} needs {expect} receivers, got {len(pos)}")

    @classmethod
    def build(cls, domain: DomainSpec, layout, resolution: int, inset: float | None = None):
        layout = Layout(layout)
        if layout == Layout.EXPLICIT:
            raise ConfigurationError("explicit layouts are built with ReceiverArray.explicit")
        if resolution < 1:
            raise ConfigurationError(f"receiver resolution must be >= 1, got {resolution}")
        inset = 2 * domain.spacing if inset is None else float(inset)
        if not 0 < inset < min(domain.extents) / 2:
            raise ConfigurationError(f"inset {inset} must lie in (0, min extent / 2)")
        pts = [face_grid(domain, ax, side, resolution, inset) for ax, side in FACES[layout]]
        return cls(layout, resolution, inset, np.concatenate(pts))

    @classmethod
    def explicit(cls, positions, inset: float = 0.0):
        pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        return cls(Layout.EXPLICIT, 0, inset, pos)

    def __len__(self):
        return len(self.positions)

    def validate(self, domain: DomainSpec) -> None:
        lo, hi = np.asarray(domain.origin), domain.upper
        tol = 1e-9 * domain.spacing
        dist = np.minimum(self.positions - lo, hi - self.positions)
        if np.any(dist <= 0):
            raise ConfigurationError("every receiver must lie strictly inside the domain")
        if self.layout != Layout.EXPLICIT and np.any(dist < self.inset - tol):
            raise ConfigurationError("receivers closer to a boundary than the inset")

    def stencil(self, domain: DomainSpec) -> TrilinearStencil:
        self.validate(domain)
        return trilinear_stencil(domain, self.positions)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "x1", "x2", "x3"])
            for s, (a, b, c) in enumerate(self.positions):
                w.writerow([s, repr(float(a)), repr(float(b)), repr(float(c))])
