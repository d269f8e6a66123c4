"""Least-squares reconstruction of the particle volume from receiver traces.

The forward map f -> traces is linear, so the multi-source misfit

    J(f) = 1/2 sum_m sum_s || F_s(f; lambda_m) - U_data,s ||^2_{L2(0,T)}

is minimized with conjugate gradients on the normal equations (CGNR). Each
iteration costs one forward and one adjoint solve per source.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .acoustics.receivers import ReceiverArray
from .acoustics.solver import (
    DEFAULT_SOUND_SPEED,
    BoundaryMap,
    SolverConfig,
    TraceSet,
    WaveOperator,
)
from .acoustics.sources import SourceSet
from .errors import ConfigurationError, NumericError
from .volume import DomainSpec, ScalarVolume

STOP_RATIO = 1e-12


@dataclass(frozen=True, eq=False)
class InversionProblem:
    sources: SourceSet
    receivers: ReceiverArray
    observed: TraceSet
    solver: SolverConfig
    domain: DomainSpec
    probe_window: float
    boundary: BoundaryMap = field(default_factory=BoundaryMap)
    sound_speed: float | ScalarVolume = DEFAULT_SOUND_SPEED

    def __post_init__(self):
        if self.observed.shape != self.operator.trace_shape:
            raise ConfigurationError(
                f"observed traces {self.observed.shape} do not match "
                f"(sources, receivers, steps) = {self.operator.trace_shape}"
            )
        if not np.isclose(self.observed.sample_interval, self.solver.dt, rtol=1e-12):
            raise ConfigurationError("observed sample interval differs from the solver dt")

    @functools.cached_property
    def operator(self) -> WaveOperator:
        return WaveOperator(self.domain, self.sources, self.receivers, self.solver,
                            self.probe_window, self.boundary, self.sound_speed)

    @classmethod
    def from_operator(cls, op: WaveOperator, observed: TraceSet) -> InversionProblem:
        """Wrap an already-built operator so its stencils are not recomputed."""
        prob = cls.__new__(cls)
        prob.__dict__.update(sources=op.sources, receivers=op.receivers, observed=observed,
                             solver=op.solver, domain=op.domain, probe_window=op.probe_window,
                             boundary=op.boundary, sound_speed=op.sound_speed, operator=op)
        prob.__post_init__()
        return prob


@dataclass(frozen=True, eq=False)
class InversionResult:
    f_hat: ScalarVolume
    objective_history: list
    iterations: int
    gradient_norm_history: list

    def report_lines(self) -> list[str]:
        lines = ["# iteration objective gradient_norm"]
        for k, (j, g) in enumerate(zip(self.objective_history, self.gradient_norm_history)):
            lines.append(f"{k} {j!r} {g!r}")
        return lines

    def write_report(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.report_lines()) + "\n")


def _values(problem: InversionProblem, f) -> np.ndarray:
    if isinstance(f, ScalarVolume):
        if not f.domain.matches(problem.domain):
            raise ConfigurationError("f is not on the problem domain")
        return f.values
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != problem.domain.shape:
        raise ConfigurationError(f"f has shape {arr.shape}, expected {problem.domain.shape}")
    return arr


def residual(problem: InversionProblem, f) -> TraceSet:
    pred = problem.operator.forward(_values(problem, f))
    return TraceSet(pred.sample_interval, pred.samples - problem.observed.samples)


def objective(problem: InversionProblem, f) -> float:
    """Half the squared trace misfit, integrated in time with the left-endpoint rule."""
    r = residual(problem, f)
    return 0.5 * r.dot(r)


def gradient(problem: InversionProblem, f) -> ScalarVolume:
    """Adjoint-state gradient of :func:`objective` with respect to the nodal values of f."""
    r = residual(problem, f)
    return ScalarVolume(problem.domain, problem.operator.adjoint(r))


def invert(problem: InversionProblem, iterations: int = 100, f0: ScalarVolume | None = None,
           tikhonov: float = 0.0, nonnegative: bool = False, callback=None) -> InversionResult:
    """CGNR on (A^T A + tikhonov I) f = A^T d.

    ``objective_history[0]`` is J(f0); one entry follows per completed update.
    Stops early once the normal-equation residual falls below 1e-12 of its
    initial norm; ``iterations`` is then the index of the iteration whose
    stopping test fired. With ``nonnegative`` the iterate is clipped at zero
    after every update and the search direction restarts.
    """
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    if tikhonov < 0:
        raise ConfigurationError("tikhonov weight must be non-negative")
    op = problem.operator
    dt = op.dt
    x = np.zeros(problem.domain.shape) if f0 is None else _values(problem, f0).copy()
    obs = problem.observed.samples
    r = obs - op.forward(x).samples if np.any(x) else obs.copy()

    def misfit(res, xx):
        return 0.5 * float(np.sum(res * res)) * dt + 0.5 * tikhonov * float(np.sum(xx * xx))

    s = op.adjoint(r) - tikhonov * x
    p = s.copy()
    gamma = float(np.sum(s * s))
    g0 = np.sqrt(gamma)
    history = [misfit(r, x)]
    gnorms = [g0]
    done = 0
    for k in range(1, iterations + 1):
        done = k
        gnorm = np.sqrt(gamma)
        if gnorm == 0.0 or gnorm < STOP_RATIO * g0:
            break
        q = op.forward(p).samples
        delta = float(np.sum(q * q)) * dt + tikhonov * float(np.sum(p * p))
        if not np.isfinite(delta) or delta <= 0:
            raise NumericError(f"degenerate search direction at iteration {k}", step=k)
        alpha = gamma / delta
        x += alpha * p
        r -= alpha * q
        if nonnegative:
            np.maximum(x, 0.0, out=x)
            r = obs - op.forward(x).samples
        s = op.adjoint(r) - tikhonov * x
        gamma_new = float(np.sum(s * s))
        if nonnegative:
            p = s.copy()
        else:
            p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        J = misfit(r, x)
        if not np.isfinite(J):
            raise NumericError(f"objective became non-finite at iteration {k}", step=k)
        history.append(J)
        gnorms.append(np.sqrt(gamma))
        if callback is not None:
            callback(k, J, np.sqrt(gamma))
    return InversionResult(ScalarVolume(problem.domain, x), history, done, gnorms)
