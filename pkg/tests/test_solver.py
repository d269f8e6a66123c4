from __future__ import annotations

import numpy as np
import pytest
from conftest import C, Q0, blob, make_operator

from aifm.acoustics import (
    BoundaryMap,
    PlaneWaveSource,
    ReceiverArray,
    SolverConfig,
    SourceSet,
    WaveOperator,
    forward_all,
    propagate,
    set_workers,
)
from aifm.acoustics._kernels import RICKER_CUT_ARG
from aifm.errors import ConfigurationError, DomainError
from aifm.volume import DomainSpec, ScalarVolume


def dot_test(op, rng):
    f = rng.standard_normal(op.domain.shape)
    d = rng.standard_normal(op.trace_shape)
    lhs = op.forward(f).samples.ravel() @ d.ravel() * op.dt
    rhs = f.ravel() @ op.adjoint(d).ravel()
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


@pytest.mark.parametrize("layout", ["AllAround6", "WallsAndSurface4", "Sidewalls2"])
@pytest.mark.parametrize("M", [1, 2, 3])
def test_dot_product_layouts(layout, M, rng):
    assert dot_test(make_operator(M=M, layout=layout), rng) <= 1e-10


@pytest.mark.parametrize("order", [2, 4, 8])
def test_dot_product_orders(order, rng):
    assert dot_test(make_operator(M=2, order=order), rng) <= 1e-10


@pytest.mark.parametrize("bmap", [
    BoundaryMap({"x3_hi": "dirichlet", "x1_lo": "dirichlet", "x2_hi": "dirichlet"}),
    BoundaryMap({}),
    BoundaryMap({"x3_hi": "dirichlet"}, sponge_width=0.04, sponge_strength=2000.0),
])
def test_dot_product_boundaries(bmap, rng):
    assert dot_test(make_operator(M=2, boundary=bmap), rng) <= 1e-10


def test_dot_product_heterogeneous_speed(rng):
    dom = DomainSpec.from_shape((17, 17, 17), 0.01)
    c = ScalarVolume(dom, 1400.0 + 200.0 * rng.random(dom.shape))
    cfg = SolverConfig.for_domain(dom, 1600.0)
    op = WaveOperator(dom, SourceSet.fibonacci(2, Q0, C, dom), ReceiverArray.build(dom, "AllAround6", 4),
                      cfg, 3e-4, BoundaryMap(), c)
    assert dot_test(op, rng) <= 1e-10


def test_zero_source_gives_zero_traces(op17):
    assert not np.any(op17.forward(np.zeros(op17.domain.shape)).samples)


def test_linearity(op17, rng):
    f, g = rng.standard_normal((2,) + op17.domain.shape)
    a, b = 1.7, -0.4
    lhs = op17.forward(a * f + b * g).samples
    rhs = a * op17.forward(f).samples + b * op17.forward(g).samples
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)


def test_single_source_matches_propagate(rng):
    op = make_operator(M=1)
    f = ScalarVolume(op.domain, rng.random(op.domain.shape))
    tr, _ = propagate(f, op.sources[0], op.solver, op.boundary, op.probe_window, op.receivers)
    assert np.array_equal(tr, op.forward(f).samples[0])
    all_ = forward_all(f, op.sources, op.solver, op.receivers, op.probe_window, op.boundary)
    assert np.array_equal(all_.samples, op.forward(f).samples)


def test_source_permutation_permutes_rows(op17, rng):
    f = rng.random(op17.domain.shape)
    perm = [2, 0, 1]
    op2 = WaveOperator(op17.domain, SourceSet(tuple(op17.sources[k] for k in perm)), op17.receivers,
                       op17.solver, op17.probe_window, op17.boundary, C)
    assert np.array_equal(op2.forward(f).samples, op17.forward(f).samples[perm])


def test_mirror_symmetry():
    dom = DomainSpec.from_shape((17, 17, 17), 0.01)
    L = dom.extent_x1
    srcs = SourceSet((PlaneWaveSource((1.0, 0.0, 0.0), Q0, C, (0.0, 0.0, 0.0)),
                      PlaneWaveSource((-1.0, 0.0, 0.0), Q0, C, (L, 0.0, 0.0))))
    rec = ReceiverArray.explicit([[0.03, 0.08, 0.05], [L - 0.03, 0.08, 0.05]])
    op = WaveOperator(dom, srcs, rec, SolverConfig.for_domain(dom, C), 3e-4, BoundaryMap(), C)
    f = blob(dom, (0.05, 0.08, 0.09), 0.015) + blob(dom, (L - 0.05, 0.08, 0.09), 0.015)
    tr = op.forward(f).samples
    scale = np.abs(tr).max()
    assert scale > 0
    assert np.max(np.abs(tr[0, 0] - tr[1, 1])) <= 1e-10 * scale
    assert np.max(np.abs(tr[0, 1] - tr[1, 0])) <= 1e-10 * scale


def test_causality():
    dom = DomainSpec.from_shape((49, 25, 25), 0.01)
    src = PlaneWaveSource((0.0, 0.0, 1.0), Q0, C)
    xb = np.array([0.09, 0.12, 0.12])
    rec = ReceiverArray.explicit([xb + [0.3, 0.0, 0.0]])
    cfg = SolverConfig.for_domain(dom, C)
    T = 4e-4
    f = blob(dom, xb, 0.005)
    f[f < 1e-14] = 0.0
    tr, _ = propagate(ScalarVolume(dom, f), src, cfg, None, T, rec)
    t = np.arange(tr.shape[1]) * cfg.dt
    t_peak = src.arrival_shift(*xb)  # pulse peak at the blob
    support = 0.005 * np.sqrt(2 * np.log(1e14))
    first = t[np.argmax(np.abs(tr[0]) > 1e-3 * np.abs(tr[0]).max())]
    assert first >= t_peak - src.duration / 2 + (0.3 - support) / C - src.duration
    assert first >= (0.3 - support) / C


def test_cfl_validator():
    dom = DomainSpec(1.0, 1.0, 1.0, 0.01)
    SolverConfig(2.3e-6).validate(dom, 1500.0)
    assert SolverConfig(2.3e-6).courant_number(0.01, 1500.0) < 0.6
    with pytest.raises(ConfigurationError, match="CFL"):
        SolverConfig(2.4e-6).validate(dom, 1500.0)


def test_operator_rejects_cfl_violation():
    dom = DomainSpec.from_shape((17, 17, 17), 0.01)
    with pytest.raises(ConfigurationError):
        WaveOperator(dom, SourceSet.fibonacci(1, Q0, C, dom), ReceiverArray.build(dom, "Sidewalls2", 3),
                     SolverConfig(3e-6), 1e-4)


def test_receiver_outside_rejected():
    dom = DomainSpec.from_shape((17, 17, 17), 0.01)
    with pytest.raises((ConfigurationError, DomainError)):
        ReceiverArray.explicit([[0.5, 0.05, 0.05]]).stencil(dom)


def test_receiver_counts():
    dom = DomainSpec.from_shape((17, 17, 17), 0.01)
    assert len(ReceiverArray.build(dom, "AllAround6", 5)) == 150
    assert len(ReceiverArray.build(dom, "WallsAndSurface4", 5)) == 100
    assert len(ReceiverArray.build(dom, "Sidewalls2", 5)) == 50


def test_energy_conserved_after_source():
    op = make_operator(n=17, M=1, window=1200 * 2.3e-6)
    f = blob(op.domain, (0.08, 0.08, 0.08), 0.02)
    _, extra = op.forward_one(f, 0, energy=True)
    E = extra["energy"]
    src = op.sources[0]
    cut = np.sqrt(RICKER_CUT_ARG) / (np.pi * src.central_frequency)
    quiet = int(np.ceil((np.max(src.arrival_shift(*op.domain.mesh())) + cut) / op.dt)) + 1
    tail = E[quiet:]
    assert len(tail) > 500 and tail[0] > 0
    growth = np.diff(tail) / tail[:-1]
    assert growth.max() <= 1e-8


def test_thread_count_does_not_change_bits(op17, rng):
    f = rng.random(op17.domain.shape)
    d = rng.standard_normal(op17.trace_shape)
    try:
        set_workers(1)
        a, ga = op17.forward(f).samples, op17.adjoint(d)
        set_workers(3)
        b, gb = op17.forward(f).samples, op17.adjoint(d)
    finally:
        set_workers(1)
    assert a.tobytes() == b.tobytes() and ga.tobytes() == gb.tobytes()
