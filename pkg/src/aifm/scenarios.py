"""Ground-truth flows, tracer particles and their rasterization into volumes f.

Velocity fields are evaluated in the coordinates of the measurement domain.
The T-junction surrogate is a divergence-free analytic stand-in for a CFD
solution; it is not a physical model of junction flow.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import gaussian_filter

from .container import KIND_VECTOR, read_header, read_vector_volume
from .errors import ConfigurationError, FormatError, IngestionError
from .volume import DomainSpec, ScalarVolume, VectorVolume, trilinear_stencil

MAIN_WIDTH = 5.0  # main channel width of the junction geometry, meters
RECOVERY_LENGTH = 5.0  # decay length of the junction disturbance, meters
FAST_FLOW = 10.0  # m/s; above this the snapshot interval halves


class ScenarioKind(str, enum.Enum):
    CONSTANT = "Constant"
    TAYLOR_GREEN = "TaylorGreen"
    TJUNCTION_IMPORT = "TJunctionImport"
    TJUNCTION_SURROGATE = "TJunctionSurrogate"


@dataclass(frozen=True)
class Particle:
    center: tuple[float, float, float]
    diameter: float

    @property
    def radius(self) -> float:
        return self.diameter / 2


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Scenario parameters. Only the fields of the chosen ``kind`` are used.

    ``theta`` is the junction angle in radians, ``width`` the branch width W,
    ``distance`` the offset L of the measurement region from the junction.
    ``field`` holds the ingested velocity volume for ``TJunctionImport``.
    """

    kind: ScenarioKind = ScenarioKind.CONSTANT
    velocity: tuple[float, float, float] = (0.0, 1.0, 0.0)
    amplitude: float = 3.0
    theta: float = math.pi / 2
    width: float = 0.5
    distance: float = 0.0
    inlet_speed: float = 20.0
    branch_fraction: float | None = None
    field_path: str | None = None
    field: VectorVolume | None = None
    particle_count: int = 200
    seed: int = 0
    diameter_range: tuple[float, float] = (0.06, 0.10)

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        if len(self.velocity) != 3:
            raise ConfigurationError("velocity must have three components")
        if self.particle_count < 1:
            raise ConfigurationError(f"particle_count must be >= 1, got {self.particle_count}")
        lo, hi = self.diameter_range
        if not 0 < lo <= hi:
            raise ConfigurationError(f"invalid diameter range {self.diameter_range}")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.kind in (ScenarioKind.TJUNCTION_IMPORT, ScenarioKind.TJUNCTION_SURROGATE):
            if not 0 < self.theta < math.pi:
                raise ConfigurationError(f"theta must lie in (0, pi), got {self.theta}")
            if not self.width > 0:
                raise ConfigurationError("branch width W must be positive")
            if self.distance < 0:
                raise ConfigurationError("distance L must be non-negative")
        if self.branch_fraction is not None and not 0 <= self.branch_fraction < 1:
            raise ConfigurationError("branch_fraction must lie in [0, 1)")

    @property
    def phi(self) -> float:
        """Fraction of the inlet flux leaving through the branch."""
        if self.branch_fraction is not None:
            return self.branch_fraction
        return self.width / (self.width + MAIN_WIDTH)

    def with_field(self, vol: VectorVolume) -> ScenarioSpec:
        return replace(self, field=vol)


def _surrogate(spec: ScenarioSpec, x1, x2):
    # Main channel downstream of the junction: the branch withdraws a fraction
    # phi of the flux near the wall x1 = 0, leaving a deficit that recovers
    # over RECOVERY_LENGTH. v1 is chosen so that div v = 0 exactly.
    u = spec.inlet_speed * (1.0 - spec.phi)
    s = spec.distance + x2
    amp = spec.phi * (1.0 + math.cos(spec.theta)) * np.exp(-s / RECOVERY_LENGTH)
    prof = np.exp(-x1 / spec.width)
    v1 = u * amp * prof * (spec.width / RECOVERY_LENGTH)
    v2 = u * (1.0 - amp * prof)
    return v1, v2


def velocity_at(spec: ScenarioSpec, point, t: float = 0.0) -> np.ndarray:
    """Velocity at one point (shape (3,)) or many points (shape (P, 3))."""
    pts = np.asarray(point, dtype=np.float64)
    flat = np.atleast_2d(pts)
    if flat.shape[-1] != 3:
        raise ConfigurationError("points must have three coordinates")
    x1, x2 = flat[:, 0], flat[:, 1]
    out = np.zeros_like(flat)
    kind = spec.kind
    if kind == ScenarioKind.CONSTANT:
        out[:] = spec.velocity
    elif kind == ScenarioKind.TAYLOR_GREEN:
        a = spec.amplitude
        out[:, 0] = a * np.sin(np.pi * x1) * np.cos(np.pi * x2)
        out[:, 1] = -a * np.cos(np.pi * x1) * np.sin(np.pi * x2)
    elif kind == ScenarioKind.TJUNCTION_SURROGATE:
        out[:, 0], out[:, 1] = _surrogate(spec, x1, x2)
    else:
        if spec.field is None:
            raise ConfigurationError("TJunctionImport needs an ingested field (see ingest_cfd_field)")
        fd = spec.field.domain
        # RK stages may step slightly outside the field; hold the boundary value there
        st = trilinear_stencil(fd, np.clip(flat, fd.origin, fd.upper))
        for k, comp in enumerate(spec.field.components):
            out[:, k] = st.sample(comp.values.ravel())
    return out[0] if pts.ndim == 1 else out


def velocity_field(spec: ScenarioSpec, domain: DomainSpec, t: float = 0.0) -> VectorVolume:
    """Sample the scenario's velocity at every grid node."""
    x1, x2, x3 = np.meshgrid(*(domain.axis(k) for k in range(3)), indexing="ij")
    pts = np.stack([x1.ravel(), x2.ravel(), x3.ravel()], axis=1)
    v = velocity_at(spec, pts, t)
    return VectorVolume.from_array(domain, v.T.reshape((3,) + domain.shape))


def snapshot_interval(max_speed: float) -> float:
    """Default interval between snapshots: 1 s for slow flows, 0.5 s from 10 m/s."""
    return 1.0 if max_speed < FAST_FLOW else 0.5


def _admissible(domain: DomainSpec, radius: float, inset: float):
    lo = np.asarray(domain.origin) + radius + inset
    hi = domain.upper - radius - inset
    return lo, hi


def seed_particles(spec: ScenarioSpec, domain: DomainSpec, inset: float | None = None) -> list[Particle]:
    """Uniformly placed spheres kept ``radius + inset`` away from the boundary."""
    inset = 2 * domain.spacing if inset is None else inset
    dmin, dmax = spec.diameter_range
    lo, hi = _admissible(domain, dmax / 2, inset)
    if np.any(hi < lo):
        raise ConfigurationError(
            f"no admissible particle centers: particles of diameter {dmax} m with inset "
            f"{inset} m do not fit in extents {domain.extents}"
        )
    rng = np.random.default_rng(spec.seed)
    centers = lo + (hi - lo) * rng.random((spec.particle_count, 3))
    diam = rng.uniform(dmin, dmax, spec.particle_count)
    return [Particle(tuple(float(x) for x in c), float(d)) for c, d in zip(centers, diam)]


def _rk4(spec, x, t, dt):
    k1 = velocity_at(spec, x, t)
    k2 = velocity_at(spec, x + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = velocity_at(spec, x + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = velocity_at(spec, x + dt * k3, t + dt)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def advect(particles, spec: ScenarioSpec, dt_snapshot: float, domain: DomainSpec | None = None,
           t: float = 0.0, rng=None, substeps: int = 1) -> list[Particle]:
    """Move particle centers with RK4 over ``dt_snapshot`` seconds.

    With a ``domain``, a particle whose center leaves the box re-enters through
    the opposite (inflow) face, displaced inward by its overshoot, with its
    remaining coordinates redrawn uniformly and a fresh diameter.
    """
    if not particles:
        return []
    x = np.array([p.center for p in particles], dtype=np.float64)
    h = dt_snapshot / substeps
    for k in range(substeps):
        x = _rk4(spec, x, t + k * h, h)
    diam = np.array([p.diameter for p in particles])
    if domain is not None:
        rng = np.random.default_rng(spec.seed) if rng is None else rng
        lo, hi = np.asarray(domain.origin), domain.upper
        ext = hi - lo
        dmin, dmax = spec.diameter_range
        for i in range(len(x)):
            out = (x[i] < lo) | (x[i] > hi)
            if not out.any():
                continue
            fresh = rng.uniform(dmin, dmax)
            plo, phi_ = _admissible(domain, fresh / 2, 0.0)
            new = plo + (phi_ - plo) * rng.random(3)
            for k in np.flatnonzero(out):
                over = (x[i, k] - hi[k]) if x[i, k] > hi[k] else (lo[k] - x[i, k])
                over = over % ext[k]
                new[k] = lo[k] + over if x[i, k] > hi[k] else hi[k] - over
            x[i] = new
            diam[i] = fresh
    return [Particle(tuple(float(v) for v in c), float(d)) for c, d in zip(x, diam)]


def rasterize(particles, domain: DomainSpec, smoothing: float | None = None) -> ScalarVolume:
    """Union of the spheres as a 0/1 indicator, blurred by a Gaussian of width ``smoothing``."""
    smoothing = domain.spacing if smoothing is None else smoothing
    if smoothing < 0:
        raise ConfigurationError("smoothing must be non-negative")
    ind = np.zeros(domain.shape)
    h = domain.spacing
    org = np.asarray(domain.origin)
    for p in particles:
        c = np.asarray(p.center)
        lo = np.maximum(np.floor((c - p.radius - org) / h).astype(int), 0)
        hi = np.minimum(np.ceil((c + p.radius - org) / h).astype(int) + 1, domain.shape)
        if np.any(hi <= lo):
            continue
        ax = [org[k] + h * np.arange(lo[k], hi[k]) - c[k] for k in range(3)]
        r2 = ax[0][:, None, None] ** 2 + ax[1][None, :, None] ** 2 + ax[2][None, None, :] ** 2
        sl = tuple(slice(lo[k], hi[k]) for k in range(3))
        ind[sl] = np.maximum(ind[sl], (r2 <= p.radius**2).astype(np.float64))
    if smoothing > 0:
        ind = gaussian_filter(ind, smoothing / h, mode="constant")
    return ScalarVolume(domain, ind)


CSV_COLUMNS = ("x1", "x2", "x3", "v1", "v2", "v3")
EXPECTED_UNITS = {"length_unit": "m", "velocity_unit": "m/s"}


def _read_csv_field(path: Path):
    units = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        s = line.strip()
        if s.startswith("#"):
            if ":" in s:
                key, val = s[1:].split(":", 1)
                units[key.strip()] = val.strip()
        elif s:
            body.append(s)
    if not body:
        raise IngestionError(f"{path}: no header line")
    for key, want in EXPECTED_UNITS.items():
        if key in units and units[key] != want:
            raise IngestionError(f"{path}: unit mismatch, {key} is '{units[key]}', expected '{want}'")
    rows = list(csv.reader(body))
    header = [c.strip() for c in rows[0]]
    for col in CSV_COLUMNS:
        if col not in header:
            raise IngestionError(f"{path}: missing column '{col}'")
    cols = [header.index(c) for c in CSV_COLUMNS]
    try:
        data = np.array([[float(r[c]) for c in cols] for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise IngestionError(f"{path}: malformed data row ({exc})") from None
    if len(data) == 0:
        raise IngestionError(f"{path}: no data rows")
    # structured grid, x1 slowest and x3 fastest, each axis strictly increasing
    axes = [np.unique(data[:, k]) for k in range(3)]
    n = tuple(len(a) for a in axes)
    if len(data) != n[0] * n[1] * n[2]:
        raise IngestionError(f"{path}: {len(data)} rows do not form a {n} structured grid")
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    if not np.array_equal(g, data[:, :3]):
        bad = int(np.argmax(np.any(g != data[:, :3], axis=1)))
        raise IngestionError(
            f"{path}: non-monotone coordinates at data row {bad + 1}; rows must vary x3 fastest "
            "and increase strictly along each axis"
        )
    vel = data[:, 3:].T.reshape((3,) + n)
    return axes, vel


def ingest_cfd_field(path, domain: DomainSpec) -> VectorVolume:
    """Load an external velocity field and resample it trilinearly onto ``domain``.

    Accepts a CSV with a header line naming x1,x2,x3,v1,v2,v3 (optional
    ``# length_unit: m`` / ``# velocity_unit: m/s`` comment lines) on a tensor
    grid, or a vector-volume container file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"velocity field file {path} does not exist")
    is_container = False
    try:
        is_container = read_header(path)["kind"] == KIND_VECTOR
    except FormatError:
        pass
    if is_container:
        src = read_vector_volume(path)
        axes = [src.domain.axis(k) for k in range(3)]
        vel = src.as_array()
    else:
        axes, vel = _read_csv_field(path)
    if any(len(a) < 2 for a in axes):
        raise IngestionError(f"{path}: need at least two samples along every axis")
    tol = 1e-9 * domain.spacing
    for k in range(3):
        t = domain.axis(k)
        if t[0] < axes[k][0] - tol or t[-1] > axes[k][-1] + tol:
            raise IngestionError(
                f"{path}: coverage gap along x{k + 1}: field spans [{axes[k][0]}, {axes[k][-1]}], "
                f"target needs [{t[0]}, {t[-1]}]"
            )
    x1, x2, x3 = np.meshgrid(*(np.clip(domain.axis(k), axes[k][0], axes[k][-1]) for k in range(3)),
                             indexing="ij")
    pts = np.stack([x1, x2, x3], axis=-1)
    out = np.empty((3,) + domain.shape)
    for k in range(3):
        out[k] = RegularGridInterpolator(axes, vel[k], method="linear")(pts)
    return VectorVolume.from_array(domain, out)


def write_csv_field(path, vol: VectorVolume) -> None:
    """Export a vector volume in the CSV layout accepted by :func:`ingest_cfd_field`."""
    d = vol.domain
    x1, x2, x3 = np.meshgrid(*(d.axis(k) for k in range(3)), indexing="ij")
    arr = vol.as_array()
    with open(path, "w", newline="") as fh:
        fh.write("# length_unit: m\n# velocity_unit: m/s\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in zip(x1.ravel(), x2.ravel(), x3.ravel(), arr[0].ravel(), arr[1].ravel(), arr[2].ravel()):
            w.writerow([repr(float(v)) for v in row])
