from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aifm.metrics import (
    ErrorReport,
    directional_error,
    evaluate,
    particle_support,
    relative_l2,
    whole_domain,
)
from aifm.scenarios import Particle, ScenarioSpec, rasterize, velocity_field
from aifm.volume import DomainSpec, VectorVolume

D = DomainSpec(1.0, 1.0, 1.0, 0.1)


def uniform(vec):
    return VectorVolume.from_array(D, np.broadcast_to(np.asarray(vec, float)[:, None, None, None],
                                                     (3,) + D.shape))


@pytest.fixture(scope="module")
def truth():
    v = velocity_field(ScenarioSpec("Constant", velocity=(0.2, 1.0, 0.1)), D)
    v = VectorVolume.from_array(D, v.as_array() + 0.3 * np.sin(np.indices(D.shape)[0])[None])
    f = rasterize([Particle((0.4, 0.5, 0.5), 0.3), Particle((0.7, 0.3, 0.6), 0.25)], D, 0.1)
    return v, f


def test_relative_l2_examples(truth):
    v, _ = truth
    assert relative_l2(v, v) == 0.0
    assert relative_l2(uniform((0, 0, 0)), v) == pytest.approx(1.0, abs=1e-15)
    scaled = VectorVolume.from_array(D, 1.1 * v.as_array())
    assert abs(relative_l2(scaled, v) - 0.1) <= 1e-12


def test_relative_l2_undefined_for_zero_truth():
    assert relative_l2(uniform((1, 0, 0)), uniform((0, 0, 0))) is None


def test_directional_examples(truth):
    v, _ = truth
    assert directional_error(v, v) == 0.0
    got = directional_error(uniform((0.3, 0.98, 0.0)), uniform((0.0, 1.0, 0.0)))
    assert got == pytest.approx(0.02, abs=1e-12)


def test_taylor_green_directional_undefined():
    tg = velocity_field(ScenarioSpec("TaylorGreen"), D)
    assert directional_error(tg, tg) is None
    assert directional_error(tg, tg, whole_domain(D, 0).mask) is None


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100.0))
def test_scale_invariance(truth, alpha):
    v, f = truth
    rec = VectorVolume.from_array(D, v.as_array() * 0.9 + 0.05)
    base = evaluate(rec, v, f)
    sc = evaluate(VectorVolume.from_array(D, alpha * rec.as_array()),
                  VectorVolume.from_array(D, alpha * v.as_array()), f)
    for k in ("re1", "re2", "re3", "re4"):
        assert abs(getattr(base, k) - getattr(sc, k)) <= 1e-12


def test_evaluate_perfect_and_scaled(truth):
    v, f = truth
    rep = evaluate(v, v, f, border=1)
    assert (rep.re1, rep.re2, rep.re3, rep.re4) == (0.0, 0.0, 0.0, 0.0)
    rep = evaluate(VectorVolume.from_array(D, 1.1 * v.as_array()), v, f)
    for k in ("re1", "re2", "re3", "re4"):
        assert abs(getattr(rep, k) - 0.1) <= 1e-12


def test_evaluate_taylor_green_undefined():
    tg = velocity_field(ScenarioSpec("TaylorGreen"), D)
    f = rasterize([Particle((0.3, 0.3, 0.5), 0.3)], D, 0.1)
    rep = evaluate(VectorVolume.from_array(D, 0.8 * tg.as_array()), tg, f)
    assert rep.re1 == pytest.approx(0.2) and rep.re2 == pytest.approx(0.2)
    assert rep.re3 is None and rep.re4 is None and rep.flow_direction is None


def test_particle_support_masks(truth):
    _, f = truth
    m = particle_support(f, 0.5)
    assert 0 < m.count < D.size
    assert np.array_equal(m.mask, f.values > 0.5 * f.values.max())
    assert particle_support(f, 0.5, border=2).count <= m.count
    both = particle_support([f, f], 0.5)
    assert np.array_equal(both.mask, m.mask)
    assert whole_domain(D, 1).count == 9**3


def test_report_json_and_csv(tmp_path, truth):
    v, f = truth
    rep = evaluate(v, v, f)
    rep.re4 = None
    back = ErrorReport.from_json(rep.to_json())
    assert back.to_dict() == rep.to_dict()
    rep.append_csv(tmp_path / "r.csv", "abc", 5, {"preset": "x"})
    rep.append_csv(tmp_path / "r.csv", "abc", 6, {"preset": "x"})
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 2 and rows[0]["re4"] == "undefined" and rows[1]["seed"] == "6"
