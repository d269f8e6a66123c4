"""Finite-difference wave propagation with surface (Dirichlet) and wall (Neumann) boundaries.

Second-order leapfrog in time, centered even-order stencil in space. The
forward model records every solver step at every receiver; the adjoint
injects residuals through the transpose of the same trilinear sampling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericError
from ..volume import DomainSpec, ScalarVolume
from . import _kernels as K
from .receivers import ReceiverArray
from .sources import PlaneWaveSource, SourceSet

DEFAULT_SOUND_SPEED = 1500.0
FACE_NAMES = ("x1_lo", "x1_hi", "x2_lo", "x2_hi", "x3_lo", "x3_hi")


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    spatial_order: int = 4
    cfl_safety: float = 0.6

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.spatial_order not in (2, 4, 8):
            raise ConfigurationError(f"spatial_order must be 2, 4 or 8, got {self.spatial_order}")
        if not 0 < self.cfl_safety < 1:
            raise ConfigurationError(f"cfl_safety must lie in (0, 1), got {self.cfl_safety}")

    @staticmethod
    def max_stable_dt(spacing: float, c_max: float, cfl_safety: float = 0.6) -> float:
        return cfl_safety * spacing / (c_max * math.sqrt(3.0))

    @classmethod
    def for_domain(cls, domain: DomainSpec, c_max=DEFAULT_SOUND_SPEED, spatial_order=4, cfl_safety=0.6):
        return cls(cls.max_stable_dt(domain.spacing, c_max, cfl_safety), spatial_order, cfl_safety)

    def courant_number(self, spacing: float, c_max: float) -> float:
        return c_max * self.dt * math.sqrt(3.0) / spacing

    def validate(self, domain: DomainSpec, c_max: float) -> None:
        limit = self.max_stable_dt(domain.spacing, c_max, self.cfl_safety)
        if self.dt > limit * (1 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt:.6g} s violates the CFL bound {limit:.6g} s "
                f"(h={domain.spacing}, c_max={c_max}, safety={self.cfl_safety})"
            )


@dataclass(frozen=True)
class BoundaryMap:
    """Boundary kind per face plus an optional damping sponge on the x2 faces."""

    faces: dict = field(default_factory=lambda: {"x3_hi": "dirichlet"})
    sponge_width: float = 0.0
    sponge_strength: float = 0.0

    def __post_init__(self):
        for name, kind in self.faces.items():
            if name not in FACE_NAMES:
                raise ConfigurationError(f"unknown face {name!r}; expected one of {FACE_NAMES}")
            if kind not in ("dirichlet", "neumann"):
                raise ConfigurationError(f"face {name}: kind must be dirichlet or neumann")
        if self.sponge_width < 0 or self.sponge_strength < 0:
            raise ConfigurationError("sponge width and strength must be non-negative")

    def codes(self) -> np.ndarray:
        return np.array(
            [1 if self.faces.get(n, "neumann") == "dirichlet" else 0 for n in FACE_NAMES],
            dtype=np.int64,
        )

    @property
    def has_sponge(self) -> bool:
        return self.sponge_width > 0 and self.sponge_strength > 0


def default_probe_window(domain: DomainSpec, c: float, central_frequency: float) -> float:
    """Two traversals of the box diagonal plus the full wavelet duration."""
    return 2.0 * domain.diagonal / c + 6.0 / (math.pi * central_frequency)


def step_count(window: float, dt: float) -> int:
    return max(2, int(math.ceil(window / dt - 1e-9)))


@dataclass(frozen=True, eq=False)
class TraceSet:
    sample_interval: float
    samples: np.ndarray  # (M, N, n_t)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 3:
            raise ConfigurationError("trace samples must have shape (M, N, n_t)")
        if not np.all(np.isfinite(s)):
            raise NumericError("trace samples contain non-finite values")
        object.__setattr__(self, "samples", s)

    @property
    def shape(self):
        return self.samples.shape

    def dot(self, other: TraceSet) -> float:
        """Discrete L2(0,T) product, left-endpoint rule, summed over sources and receivers."""
        return float(np.sum(self.samples * other.samples) * self.sample_interval)

    def decimate(self, factor: int) -> TraceSet:
        return TraceSet(self.sample_interval * factor, self.samples[:, :, ::factor])


def boundary_weights(domain: DomainSpec, codes: np.ndarray):
    """Trapezoid weights W (1/2 per Neumann boundary index) and W^-1 (0 on Dirichlet nodes)."""
    w_axes, winv_axes = [], []
    for ax, n in enumerate(domain.shape):
        w = np.ones(n)
        winv = np.ones(n)
        for side, idx in ((0, 0), (1, n - 1)):
            if codes[2 * ax + side] == 0:
                w[idx] *= 0.5
                winv[idx] *= 2.0
            else:
                winv[idx] = 0.0
        w_axes.append(w)
        winv_axes.append(winv)
    W = w_axes[0][:, None, None] * w_axes[1][None, :, None] * w_axes[2][None, None, :]
    Winv = winv_axes[0][:, None, None] * winv_axes[1][None, :, None] * winv_axes[2][None, None, :]
    return np.ascontiguousarray(W), np.ascontiguousarray(Winv)


def _sponge_profile(domain: DomainSpec, bmap: BoundaryMap) -> np.ndarray:
    x2 = domain.axis(1) - domain.origin[1]
    d = np.minimum(x2, domain.extent_x2 - x2)
    sig = np.where(d < bmap.sponge_width, bmap.sponge_strength * ((bmap.sponge_width - d) / bmap.sponge_width) ** 2, 0.0)
    return np.broadcast_to(sig[None, :, None], domain.shape)


class WaveOperator:
    """Linear map from a particle volume f to receiver traces, for a fixed setup.

    Holds everything that does not depend on f: stencils, receiver sampling,
    boundary weights and per-source arrival-time orderings.
    """

    def __init__(self, domain: DomainSpec, sources: SourceSet, receivers: ReceiverArray,
                 solver: SolverConfig, probe_window: float, boundary: BoundaryMap | None = None,
                 sound_speed: ScalarVolume | float = DEFAULT_SOUND_SPEED):
        self.domain = domain
        self.sources = sources if isinstance(sources, SourceSet) else SourceSet(tuple(sources))
        self.receivers = receivers
        self.solver = solver
        self.boundary = boundary or BoundaryMap()
        self.sound_speed = sound_speed
        if isinstance(sound_speed, ScalarVolume):
            if not sound_speed.domain.matches(domain):
                raise ConfigurationError("sound speed volume must share the domain")
            c = sound_speed.values
        else:
            c = np.full(domain.shape, float(sound_speed))
        if np.any(c <= 0):
            raise ConfigurationError("sound speed must be positive")
        self.c_max = float(c.max())
        solver.validate(domain, self.c_max)
        if not probe_window > 0:
            raise ConfigurationError("probe window must be positive")
        self.probe_window = probe_window
        self.dt = solver.dt
        self.nsteps = step_count(probe_window, solver.dt)
        self.coef = K.laplacian_coefficients(solver.spatial_order)
        r = len(self.coef) - 1
        if min(domain.shape) <= r:
            raise ConfigurationError(f"grid too small for a stencil of order {solver.spatial_order}")
        self.codes = self.boundary.codes()
        h = domain.spacing
        self.uniform = bool(np.all(c == c.flat[0]))
        self.c2 = np.ascontiguousarray(c * c)
        c2dt2 = self.c2 * self.dt**2
        self.k2 = c2dt2 / h**2
        self.kadj = np.full(domain.shape, self.dt**2 / h**2)
        self.W, self.Winv = boundary_weights(domain, self.codes)
        self.sponge = self.boundary.has_sponge
        if self.sponge:
            eta = 0.5 * self.dt * _sponge_profile(domain, self.boundary)
            a_full = 1.0 / (1.0 + eta)
            self.a = np.ascontiguousarray(a_full)
            self.b = np.ascontiguousarray((1.0 - eta) / (1.0 + eta))
        else:
            a_full = np.ones(domain.shape)
            self.a = np.ones((1, 1, 1))
            self.b = np.ones((1, 1, 1))
        self.c2a = np.ascontiguousarray(self.c2 * a_full)
        self._padded = tuple(n + 2 * r for n in domain.shape)
        self.stencil = receivers.stencil(domain)
        self.rec_pad = self._pad_index(self.stencil.index)
        self.inj_w = np.ascontiguousarray(self.stencil.weight * self.Winv.ravel()[self.stencil.index])
        fwd_w = (c2dt2 * a_full).ravel()
        adj_w = (c2dt2 * a_full * self.W).ravel()
        self._orders = []
        x1, x2, x3 = domain.mesh()
        for src in self.sources:
            shift = np.broadcast_to(src.arrival_shift(x1, x2, x3), domain.shape).ravel()
            order = np.argsort(shift, kind="stable").astype(np.int64)
            self._orders.append({
                "unpad": order,
                "pad": self._pad_index(order),
                "shift": np.ascontiguousarray(shift[order]),
                "fwd_w": np.ascontiguousarray(fwd_w[order]),
                "adj_w": np.ascontiguousarray(adj_w[order]),
            })

    def _pad_index(self, flat):
        r = len(self.coef) - 1
        i, j, l = np.unravel_index(flat, self.domain.shape)
        return np.ravel_multi_index((i + r, j + r, l + r), self._padded).astype(np.int64)

    @property
    def trace_shape(self):
        return (len(self.sources), len(self.receivers), self.nsteps)

    def _src_args(self, m):
        pq = math.pi * self.sources[m].central_frequency
        return pq, math.sqrt(K.RICKER_CUT_ARG) / pq, self._orders[m]

    def forward_one(self, f: np.ndarray, m: int, snapshot_steps=(), energy=False):
        """Traces (N, n_t) for source m; optional field snapshots and energy history."""
        pq, tcut, src = self._src_args(m)
        n1, n2, n3 = self.domain.shape
        snap_steps = np.array(sorted(set(int(s) for s in snapshot_steps)), dtype=np.int64)
        snaps = np.zeros((len(snap_steps), n1, n2, n3))
        en = np.zeros(self.nsteps if energy else 1)
        w_over_c2 = self.W / self.c2 if energy else self.W
        fsrc = np.ascontiguousarray(f, dtype=np.float64).ravel()
        traces, bad = K.forward_loop(
            K.UPDATES[self.solver.spatial_order], self.nsteps, self.dt, pq, tcut, self.coef,
            self.codes, n1, n2, n3, self.k2, self.a, self.b, self.sponge,
            src["pad"], src["unpad"], src["shift"], src["fwd_w"], fsrc,
            self.rec_pad, self.stencil.weight, snap_steps, snaps, en,
            w_over_c2, self.W, 1.0 / self.domain.spacing**2, bool(energy),
        )
        if bad >= 0:
            raise NumericError(f"wave field blew up at step {bad} (source {m})", step=bad)
        extra = {}
        if len(snap_steps):
            extra["snapshots"] = dict(zip(snap_steps.tolist(), snaps))
        if energy:
            # entry n holds E^{n+1/2}
            extra["energy"] = en[: self.nsteps - 1] * self.domain.cell_volume
        return traces, extra

    def forward(self, f) -> TraceSet:
        f = f.values if isinstance(f, ScalarVolume) else np.asarray(f)
        out = np.empty(self.trace_shape)

        def one(m):
            try:
                out[m], _ = self.forward_one(f, m)
            except NumericError as exc:
                raise NumericError(f"source {m}: {exc}", step=exc.step) from exc

        _each_source(one, len(self.sources))
        return TraceSet(self.dt, out)

    def adjoint_one(self, resid: np.ndarray, m: int) -> np.ndarray:
        """Transpose of forward_one under the dt-weighted trace product."""
        pq, tcut, src = self._src_args(m)
        n1, n2, n3 = self.domain.shape
        weighted = np.ascontiguousarray(resid * self.dt)
        grad, bad = K.adjoint_loop(
            K.UPDATES[self.solver.spatial_order], self.nsteps, self.dt, pq, tcut, self.coef,
            self.codes, n1, n2, n3, self.k2, self.kadj, self.c2a, self.a, self.b,
            self.sponge, self.uniform, src["pad"], src["unpad"], src["shift"], src["adj_w"],
            self.rec_pad, self.inj_w, weighted,
        )
        if bad >= 0:
            raise NumericError(f"adjoint field blew up at step {bad} (source {m})", step=bad)
        return grad

    def adjoint(self, traces) -> np.ndarray:
        """Sum over sources, accumulated in source order."""
        samples = traces.samples if isinstance(traces, TraceSet) else np.asarray(traces)
        if samples.shape != self.trace_shape:
            raise ConfigurationError(f"trace shape {samples.shape} != expected {self.trace_shape}")
        parts = _each_source(lambda m: self.adjoint_one(samples[m], m), len(self.sources))
        g = np.zeros(self.domain.shape)
        for part in parts:
            g += part
        return g


_workers = 1


def set_workers(n: int) -> None:
    """Number of sources solved concurrently (the kernels release the GIL)."""
    global _workers
    if n < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {n}")
    _workers = int(n)


def _each_source(fn, count: int) -> list:
    # results come back in source order whatever the scheduling, so sums are reproducible
    if _workers == 1 or count == 1:
        return [fn(m) for m in range(count)]
    with ThreadPoolExecutor(max_workers=min(_workers, count)) as pool:
        return list(pool.map(fn, range(count)))


def propagate(f: ScalarVolume, src: PlaneWaveSource, cfg: SolverConfig, bc: BoundaryMap | None,
              T: float, recv: ReceiverArray, snapshot_steps=(), energy=False,
              sound_speed=DEFAULT_SOUND_SPEED):
    """Single-source run. Returns (traces (N, n_t), extras dict)."""
    op = WaveOperator(f.domain, SourceSet((src,)), recv, cfg, T, bc, sound_speed)
    return op.forward_one(f.values, 0, snapshot_steps=snapshot_steps, energy=energy)


def forward_all(f: ScalarVolume, sources: SourceSet, cfg: SolverConfig, recv: ReceiverArray,
                T: float, bc: BoundaryMap | None = None, sound_speed=DEFAULT_SOUND_SPEED) -> TraceSet:
    return WaveOperator(f.domain, sources, recv, cfg, T, bc, sound_speed).forward(f)
