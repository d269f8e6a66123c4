from __future__ import annotations

import math

import numpy as np
import pytest

from aifm.acoustics import PlaneWaveSource, SourceSet, entry_reference, fibonacci_directions, ricker, ricker_lambda
from aifm.errors import ConfigurationError
from aifm.volume import DomainSpec

Q0 = 20000.0


def test_ricker_peak_and_root():
    assert ricker(0.0, Q0) == 1.0
    assert abs(ricker(1.0 / (math.sqrt(2) * math.pi * Q0), Q0)) <= 1e-12


def test_ricker_plane_wave_at_origin():
    src = PlaneWaveSource((0.0, 0.0, 1.0), Q0, 1500.0)
    t = 3.0 / (math.pi * Q0)
    assert t == pytest.approx(47.746e-6, abs=1e-9)
    assert ricker_lambda(src, (0.0, 0.0, 0.0), t) == pytest.approx(1.0, abs=1e-15)


def test_ricker_travels_with_sound_speed():
    p = np.array([0.6, 0.0, 0.8])
    src = PlaneWaveSource(tuple(p), Q0, 1500.0)
    x = np.array([0.3, 0.7, 0.2])
    t_peak = p @ x / 1500.0 + src.delay
    assert ricker_lambda(src, x, t_peak) == pytest.approx(1.0, abs=1e-15)


def test_plane_wave_requires_unit_direction():
    with pytest.raises(ConfigurationError):
        PlaneWaveSource((1.0, 1.0, 0.0), Q0, 1500.0)


@pytest.mark.parametrize("M", [1, 2, 10, 20])
def test_fibonacci_formula(M):
    dirs = np.array(fibonacci_directions(M))
    assert dirs.shape == (M, 3)
    for m in range(1, M + 1):
        assert dirs[m - 1, 2] == (2 * m - 1) / M - 1
    assert np.all(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) <= 1e-12)


def test_fibonacci_examples():
    assert fibonacci_directions(1)[0][2] == 0.0
    assert sorted(p[2] for p in fibonacci_directions(2)) == [-0.5, 0.5]
    assert np.allclose(sorted(p[2] for p in fibonacci_directions(10)), np.arange(-0.9, 1.0, 0.2), atol=1e-15)


def test_fibonacci_rejects_zero():
    with pytest.raises(ConfigurationError):
        fibonacci_directions(0)


def test_entry_reference_is_first_corner():
    d = DomainSpec(1.0, 2.0, 1.0, 0.1)
    assert entry_reference(d, (1.0, 0.0, 0.0))[0] == 0.0
    ref = entry_reference(d, (-0.6, -0.8, 0.0))
    assert ref[:2] == (1.0, 2.0)
    # every node sees the wavelet peak at or after the nominal delay
    src = SourceSet.fibonacci(7, Q0, 1500.0, d)
    x1, x2, x3 = d.mesh()
    for s in src:
        assert np.min(s.arrival_shift(x1, x2, x3)) == pytest.approx(s.delay, abs=1e-15)


def test_source_set_rejects_duplicates():
    s = PlaneWaveSource((0.0, 1.0, 0.0), Q0, 1500.0)
    with pytest.raises(ConfigurationError):
        SourceSet((s, s))
