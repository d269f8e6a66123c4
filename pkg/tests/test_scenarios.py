from __future__ import annotations

import math

import numpy as np
import pytest

from aifm.container import write_vector_volume
from aifm.errors import ConfigurationError, IngestionError
from aifm.scenarios import (
    Particle,
    ScenarioSpec,
    advect,
    ingest_cfd_field,
    rasterize,
    seed_particles,
    snapshot_interval,
    velocity_at,
    velocity_field,
    write_csv_field,
)
from aifm.volume import DomainSpec, VectorVolume

UNIT = DomainSpec(1.0, 1.0, 1.0, 0.05)
TG = ScenarioSpec("TaylorGreen", amplitude=3.0)


def test_constant_velocity():
    spec = ScenarioSpec("Constant", velocity=(0.0, 1.0, 0.0))
    assert np.array_equal(velocity_at(spec, (0.3, 0.2, 0.9)), [0.0, 1.0, 0.0])


def test_taylor_green_values():
    assert np.allclose(velocity_at(TG, (0.5, 0.5, 0.3)), 0.0, atol=1e-15)
    assert np.allclose(velocity_at(TG, (0.5, 0.0, 0.7)), [3.0, 0.0, 0.0], atol=1e-15)


def test_taylor_green_whole_domain_mean_vanishes():
    v = velocity_field(TG, UNIT).as_array()
    assert np.abs(v.reshape(3, -1).mean(axis=1)).max() < 1e-12


def test_snapshot_interval_rule():
    assert snapshot_interval(1.0) == 1.0
    assert snapshot_interval(20.0) == 0.5


def test_seeding_deterministic_and_inside():
    spec = ScenarioSpec(particle_count=200, seed=7)
    a, b = seed_particles(spec, UNIT), seed_particles(spec, UNIT)
    assert a == b and len(a) == 200
    inset = 2 * UNIT.spacing
    for p in a:
        c = np.asarray(p.center)
        assert np.all(c - p.radius >= inset - 1e-12) and np.all(c + p.radius <= 1.0 - inset + 1e-12)
        assert 0.06 <= p.diameter <= 0.10
    assert seed_particles(ScenarioSpec(particle_count=200, seed=8), UNIT) != a


def test_seeding_rejects_tiny_domain():
    d = DomainSpec(0.2, 0.2, 0.2, 0.05)
    with pytest.raises(ConfigurationError):
        seed_particles(ScenarioSpec(particle_count=1), d)


def test_advect_constant_translates():
    spec = ScenarioSpec("Constant", velocity=(0.0, 1.0, 0.0))
    ps = [Particle((0.2, 0.3, 0.4), 0.08), Particle((0.6, 0.1, 0.5), 0.07)]
    moved = advect(ps, spec, 0.1)
    for p, q in zip(ps, moved):
        assert np.allclose(np.subtract(q.center, p.center), [0.0, 0.1, 0.0], atol=1e-15)
        assert q.diameter == p.diameter


def test_advect_zero_field_is_identity():
    spec = ScenarioSpec("Constant", velocity=(0.0, 0.0, 0.0))
    ps = seed_particles(ScenarioSpec(particle_count=5), UNIT)
    assert advect(ps, spec, 1.0, UNIT) == ps


def test_advect_rk4_matches_fine_euler():
    x = np.array([0.25, 0.25, 0.5])
    ref = x.copy()
    for _ in range(100):
        ref = ref + 1e-5 * velocity_at(TG, ref)
    got = np.asarray(advect([Particle(tuple(x), 0.08)], TG, 1e-3)[0].center)
    assert np.max(np.abs(got - ref)) <= 1e-6


def test_advect_rk4_fourth_order():
    x = (0.3, 0.2, 0.5)
    exact = np.asarray(advect([Particle(x, 0.08)], TG, 0.1, substeps=256)[0].center)
    errs = [np.linalg.norm(np.asarray(advect([Particle(x, 0.08)], TG, 0.1, substeps=s)[0].center) - exact)
            for s in (2, 4)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.25)


def test_advect_reentry_through_inflow_face():
    spec = ScenarioSpec("Constant", velocity=(0.0, 1.0, 0.0), seed=3)
    p = Particle((0.5, 0.95, 0.5), 0.08)
    q = advect([p], spec, 0.1, UNIT, rng=np.random.default_rng(0))[0]
    assert q.center[1] == pytest.approx(0.05, abs=1e-12)
    assert UNIT.contains(q.center)


def test_rasterize_empty():
    assert not np.any(rasterize([], UNIT).values)


def test_rasterize_sphere_count():
    d = DomainSpec(0.32, 0.32, 0.32, 0.01)
    p = Particle((0.153, 0.161, 0.149), 0.08)
    vol = rasterize([p], d, smoothing=0.0).values
    x1, x2, x3 = d.mesh()
    inside = (x1 - 0.153) ** 2 + (x2 - 0.161) ** 2 + (x3 - 0.149) ** 2 <= 0.04**2
    assert np.count_nonzero(vol == 1.0) == np.count_nonzero(inside)
    assert np.count_nonzero(vol) == np.count_nonzero(inside)


def test_rasterize_disjoint_spheres_add():
    d = DomainSpec(0.32, 0.32, 0.32, 0.01)
    a, b = Particle((0.08, 0.08, 0.08), 0.06), Particle((0.22, 0.22, 0.22), 0.08)
    for s in (0.0, 0.01):
        both = rasterize([a, b], d, s).values
        assert np.allclose(both, rasterize([a], d, s).values + rasterize([b], d, s).values, atol=1e-15)


def test_surrogate_limits_and_divergence():
    spec = ScenarioSpec("TJunctionSurrogate", branch_fraction=0.0, inlet_speed=20.0)
    assert np.allclose(velocity_at(spec, (0.1, 0.3, 0.4)), [0.0, 20.0, 0.0])
    spec = ScenarioSpec("TJunctionSurrogate", theta=math.radians(60), width=0.5, distance=1.0)
    v = velocity_at(spec, (0.1, 0.3, 0.4))
    assert v[2] == 0.0 and v[0] > 0.0 and 0 < v[1] < 20.0
    # central-difference divergence of the analytic field
    e, x = 1e-5, np.array([0.2, 0.4, 0.5])
    div = sum((velocity_at(spec, x + e * np.eye(3)[k])[k] - velocity_at(spec, x - e * np.eye(3)[k])[k])
              / (2 * e) for k in range(3))
    assert abs(div) < 1e-6


def test_surrogate_validates_angle():
    with pytest.raises(ConfigurationError):
        ScenarioSpec("TJunctionSurrogate", theta=0.0)


def test_ingest_csv_round_trip(tmp_path):
    spec = ScenarioSpec("Constant", velocity=(0.1, 1.0, -0.2))
    d = DomainSpec(1.0, 1.0, 1.0, 0.25)
    write_csv_field(tmp_path / "f.csv", velocity_field(spec, d))
    back = ingest_cfd_field(tmp_path / "f.csv", UNIT).as_array()
    assert np.allclose(back, np.array([0.1, 1.0, -0.2])[:, None, None, None], atol=1e-6)


def test_ingest_container_and_import_scenario(tmp_path):
    d = DomainSpec(1.0, 1.0, 1.0, 0.25)
    write_vector_volume(velocity_field(TG, d), tmp_path / "f.aifm")
    vol = ingest_cfd_field(tmp_path / "f.aifm", d)
    spec = ScenarioSpec("TJunctionImport").with_field(vol)
    assert np.allclose(velocity_at(spec, (0.5, 0.0, 0.5)), [3.0, 0.0, 0.0], atol=1e-6)


def test_ingest_linear_field_exact(tmp_path):
    coarse = DomainSpec(1.0, 1.0, 1.0, 0.1)
    fine = DomainSpec(1.0, 1.0, 1.0, 0.01)

    def lin(dom):
        x1, x2, x3 = dom.mesh()
        b = np.broadcast_arrays(x1, x2, x3)
        return np.stack([1 + 2 * b[0] - b[2], 0.5 * b[1] + b[0], 3 * b[2] - b[1]])

    write_csv_field(tmp_path / "lin.csv", VectorVolume.from_array(coarse, lin(coarse)))
    got = ingest_cfd_field(tmp_path / "lin.csv", fine).as_array()
    assert np.max(np.abs(got - lin(fine))) <= 1e-9


def _csv(tmp_path, header, rows, comments=()):
    p = tmp_path / "bad.csv"
    p.write_text("\n".join([*comments, header, *rows]) + "\n")
    return p


def _grid_rows(order=(0, 1, 2)):
    rows = []
    for a in (0.0, 1.0):
        for b in (0.0, 1.0):
            for c in (0.0, 1.0):
                x = (a, b, c)
                rows.append(",".join(str(x[k]) for k in order) + ",0,1,0")
    return rows


def test_ingest_missing_column(tmp_path):
    p = _csv(tmp_path, "x1,x2,v1,v2,v3", ["0,0,0,1,0"])
    with pytest.raises(IngestionError, match="x3"):
        ingest_cfd_field(p, UNIT)


def test_ingest_non_monotone(tmp_path):
    p = _csv(tmp_path, "x1,x2,x3,v1,v2,v3", _grid_rows(order=(2, 1, 0)))
    with pytest.raises(IngestionError, match="non-monotone"):
        ingest_cfd_field(p, UNIT)


def test_ingest_coverage_gap(tmp_path):
    p = _csv(tmp_path, "x1,x2,x3,v1,v2,v3", _grid_rows())
    with pytest.raises(IngestionError, match="coverage gap"):
        ingest_cfd_field(p, DomainSpec(2.0, 1.0, 1.0, 0.25))


def test_ingest_unit_mismatch(tmp_path):
    p = _csv(tmp_path, "x1,x2,x3,v1,v2,v3", _grid_rows(), comments=["# length_unit: mm"])
    with pytest.raises(IngestionError, match="unit"):
        ingest_cfd_field(p, UNIT)
    p = _csv(tmp_path, "x1,x2,x3,v1,v2,v3", _grid_rows(), comments=["# length_unit: m"])
    assert np.allclose(ingest_cfd_field(p, UNIT).v2.values, 1.0)
