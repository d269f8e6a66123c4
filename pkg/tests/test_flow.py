from __future__ import annotations

import numpy as np
import pytest
from conftest import periodic_blobs

from aifm.errors import ConfigurationError
from aifm.flow import (
    FlowParams,
    average_flows,
    displacement_to_velocity,
    estimate_flow,
    flow_summary_csv,
    kernel_radius,
    poly_expansion,
)
from aifm.volume import DomainSpec, ScalarVolume, VectorVolume

SIGMA = 1.5
R = kernel_radius(SIGMA)
GRID = DomainSpec.from_shape((40, 40, 40), 1.0)
INNER = (slice(R, -R),) * 3


def test_expansion_constant():
    e = poly_expansion(np.full((15, 15, 15), 2.5), SIGMA)
    assert np.allclose(e.A[INNER], 0, atol=1e-9)
    assert np.allclose(e.b[INNER], 0, atol=1e-9)
    assert np.allclose(e.c0[INNER], 2.5, atol=1e-9)


def test_expansion_linear():
    f = np.broadcast_to(np.arange(15.0)[None, :, None], (15, 15, 15)).copy()
    e = poly_expansion(f, SIGMA)
    assert np.allclose(e.b[INNER], [0.0, 1.0, 0.0], atol=1e-8)
    assert np.allclose(e.A[INNER], 0, atol=1e-8)


def test_expansion_quadratic_matches_dense_least_squares(rng):
    n = 17
    x1 = np.arange(n, dtype=float)[:, None, None]
    f = np.broadcast_to(x1**2, (n, n, n)).copy()
    e = poly_expansion(f, SIGMA)
    assert np.allclose(e.A[INNER][..., 0, 0], 1.0, atol=1e-6)
    mask = np.ones((3, 3), bool)
    mask[0, 0] = False
    assert np.allclose(e.A[INNER][..., mask], 0.0, atol=1e-6)
    # dense weighted least squares at random interior voxels (no padding involved)
    t = np.arange(-R, R + 1, dtype=float)
    o = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    w = np.exp(-(o**2).sum(1) / (2 * SIGMA**2))
    basis = np.stack([np.ones(len(o)), o[:, 0], o[:, 1], o[:, 2], o[:, 0] ** 2, o[:, 1] ** 2, o[:, 2] ** 2,
                      o[:, 0] * o[:, 1], o[:, 0] * o[:, 2], o[:, 1] * o[:, 2]], 1)
    g = rng.standard_normal((n, n, n))
    eg = poly_expansion(g, SIGMA)
    for p in rng.integers(R, n - R, size=(5, 3)):
        vals = g[p[0] - R:p[0] + R + 1, p[1] - R:p[1] + R + 1, p[2] - R:p[2] + R + 1].ravel()
        sw = np.sqrt(w)
        coef = np.linalg.lstsq(basis * sw[:, None], vals * sw, rcond=None)[0]
        i = tuple(p)
        assert eg.c0[i] == pytest.approx(coef[0], abs=1e-9)
        assert np.allclose(eg.b[i], coef[1:4], atol=1e-9)
        assert np.allclose(np.diag(eg.A[i]), coef[4:7], atol=1e-9)
        assert np.allclose([2 * eg.A[i][0, 1], 2 * eg.A[i][0, 2], 2 * eg.A[i][1, 2]], coef[7:], atol=1e-9)


def test_expansion_too_small():
    with pytest.raises(ConfigurationError):
        poly_expansion(np.zeros((5, 5, 5)), SIGMA)


@pytest.fixture(scope="module")
def pattern():
    return periodic_blobs()


def _mean_interior(fl, border=10):
    return fl[:, border:-border, border:-border, border:-border].reshape(3, -1).mean(1)


def test_identical_frames_zero(pattern):
    f, _ = pattern
    v = ScalarVolume(GRID, f)
    assert np.abs(estimate_flow(v, v).as_array()).max() <= 1e-6


def test_integer_shift(pattern):
    f, shifted = pattern
    fl = estimate_flow(ScalarVolume(GRID, f), ScalarVolume(GRID, shifted((2, 0, 0)))).as_array()
    assert np.allclose(_mean_interior(fl), [2.0, 0.0, 0.0], atol=0.2)


def test_subvoxel_shift(pattern):
    f, shifted = pattern
    fl = estimate_flow(ScalarVolume(GRID, f), ScalarVolume(GRID, shifted((0.5, 0.5, 0)))).as_array()
    assert np.allclose(_mean_interior(fl), [0.5, 0.5, 0.0], atol=0.25)


def test_axis_permutation_equivariance(pattern):
    f, shifted = pattern
    g = shifted((0, 1.5, 0))
    a = estimate_flow(ScalarVolume(GRID, f), ScalarVolume(GRID, g)).as_array()
    perm = (1, 0, 2)
    b = estimate_flow(ScalarVolume(GRID, f.transpose(perm)), ScalarVolume(GRID, g.transpose(perm))).as_array()
    b_back = b[list(perm)].transpose((0,) + tuple(p + 1 for p in perm))
    assert np.allclose(a, b_back, atol=1e-6)


def test_singular_voxels_reported():
    z = ScalarVolume(GRID, np.zeros(GRID.shape))
    diag = {}
    fl = estimate_flow(z, z, FlowParams(pyramid_levels=1), diag)
    assert not np.any(fl.as_array())
    assert diag["singular_voxels"] == GRID.size * FlowParams().iterations_per_level


def test_displacement_to_velocity():
    d = DomainSpec.from_shape((5, 5, 5), 0.01)
    one = VectorVolume.from_array(d, np.broadcast_to(np.array([1.0, 0, 0])[:, None, None, None], (3, 5, 5, 5)))
    assert np.allclose(displacement_to_velocity(one, 0.01, 1.0).as_array()[0], 0.01)
    hundred = VectorVolume.from_array(d, np.broadcast_to(np.array([0, 100.0, 0])[:, None, None, None],
                                                         (3, 5, 5, 5)))
    v = displacement_to_velocity(hundred, 0.01, 1.0).as_array()
    assert np.allclose(v[1], 1.0) and not np.any(v[0]) and not np.any(v[2])
    zero = VectorVolume.from_array(d, np.zeros((3, 5, 5, 5)))
    assert not np.any(displacement_to_velocity(zero, 0.01, 1.0).as_array())


def test_average_and_summary(tmp_path):
    d = DomainSpec.from_shape((5, 5, 5), 1.0)
    a = VectorVolume.from_array(d, np.ones((3, 5, 5, 5)))
    b = VectorVolume.from_array(d, 3 * np.ones((3, 5, 5, 5)))
    assert np.allclose(average_flows([a, b]).as_array(), 2.0)
    flow_summary_csv(a, tmp_path / "s.csv", bins=4)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("kind") and len(lines) == 1 + 3 + 12


def test_params_validation():
    with pytest.raises(ConfigurationError):
        FlowParams(pyramid_scale=1.0)
    with pytest.raises(ConfigurationError):
        FlowParams(window_radius=0)
