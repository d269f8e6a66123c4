"""Relative errors RE1-RE4 between reconstructed and true velocity fields.

RE1/RE2 are relative L2 errors over the whole domain and over the particle
support; RE3/RE4 compare mean velocities projected on the mean flow
direction over the same two regions. An error that cannot be defined (zero
truth) is reported as ``None``.
"""

from __future__ import annotations

import csv
import enum
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .volume import DomainSpec, ScalarVolume, VectorVolume

EPS_DIR = 1e-9  # m/s; below this mean speed the flow direction is undefined


class Provenance(str, enum.Enum):
    WHOLE_DOMAIN = "WholeDomain"
    PARTICLE_SUPPORT = "ParticleSupport"


@dataclass(frozen=True, eq=False)
class RegionMask:
    mask: np.ndarray
    provenance: Provenance
    threshold: float | None = None
    border: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def describe(self) -> dict:
        return {"provenance": self.provenance.value, "threshold": self.threshold,
                "border": self.border, "voxels": self.count}


def _interior(shape, border: int) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    if all(n > 2 * border for n in shape):
        m[tuple(slice(border, n - border) for n in shape)] = True
    return m


def whole_domain(domain: DomainSpec, border: int = 0) -> RegionMask:
    """All nodes except an outer shell ``border`` voxels thick."""
    return RegionMask(_interior(domain.shape, border), Provenance.WHOLE_DOMAIN, None, border)


def particle_support(f_true, threshold: float = 0.5, border: int = 0) -> RegionMask:
    """Nodes where the true particle volume exceeds ``threshold`` times its maximum.

    ``f_true`` may be one volume or a sequence; a sequence is reduced by its
    pointwise maximum first, so the mask covers every frame's particles.
    """
    if not 0 < threshold < 1:
        raise ConfigurationError(f"particle threshold must lie in (0, 1), got {threshold}")
    vols = [f_true] if isinstance(f_true, ScalarVolume) else list(f_true)
    if not vols:
        raise ConfigurationError("particle support needs at least one truth volume")
    f = vols[0].values
    for v in vols[1:]:
        f = np.maximum(f, v.values)
    top = float(f.max())
    m = (f > threshold * top) & _interior(f.shape, border) if top > 0 else np.zeros(f.shape, bool)
    return RegionMask(m, Provenance.PARTICLE_SUPPORT, threshold, border)


def _arr(v):
    return v.as_array() if isinstance(v, VectorVolume) else np.asarray(v, dtype=np.float64)


def _mask(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    return mask.mask if isinstance(mask, RegionMask) else np.asarray(mask, dtype=bool)


def _cell(v) -> float:
    return v.domain.cell_volume if isinstance(v, VectorVolume) else 1.0


def relative_l2(v_rec, v_true, mask=None) -> float | None:
    """||v_rec - v_true|| / ||v_true|| over the mask, or None if the truth vanishes there."""
    a, b = _arr(v_rec), _arr(v_true)
    if a.shape != b.shape:
        raise ConfigurationError(f"field shapes differ: {a.shape} vs {b.shape}")
    m = _mask(mask, b.shape[1:])
    w = _cell(v_true)
    den = float(np.sum(b[:, m] ** 2)) * w
    if den == 0.0:
        return None
    num = float(np.sum((a[:, m] - b[:, m]) ** 2)) * w
    return float(np.sqrt(num / den))


def mean_velocity(v, mask=None) -> np.ndarray:
    a = _arr(v)
    m = _mask(mask, a.shape[1:])
    if not m.any():
        return np.full(3, np.nan)
    return a[:, m].mean(axis=1)


def flow_direction(v_true, mask=None) -> np.ndarray | None:
    mean = mean_velocity(v_true, mask)
    norm = float(np.linalg.norm(mean))
    if not np.isfinite(norm) or norm < EPS_DIR:
        return None
    return mean / norm


def directional_error(v_rec, v_true, mask=None, direction_mask=None) -> float | None:
    """Relative error of the mean velocity projected on the mean flow direction.

    The direction is the normalized mean of ``v_true`` over ``direction_mask``
    (default: ``mask``); means being compared are taken over ``mask``.
    Returns None when the direction or the projected true mean vanishes.
    """
    dmask = mask if direction_mask is None else direction_mask
    d = flow_direction(v_true, dmask)
    if d is None:
        return None
    true_p = float(mean_velocity(v_true, mask) @ d)
    if not np.isfinite(true_p) or abs(true_p) < EPS_DIR:
        return None
    rec_p = float(mean_velocity(v_rec, mask) @ d)
    return abs(rec_p - true_p) / abs(true_p)


@dataclass
class ErrorReport:
    re1: float | None
    re2: float | None
    re3: float | None
    re4: float | None
    flow_direction: list | None
    masks: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)
    per_pair: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> ErrorReport:
        return cls(**json.loads(text))

    def append_csv(self, path, config_hash: str, seed: int, extra: dict | None = None) -> None:
        """Append one row keyed by config hash and seed, writing a header for a new file."""
        extra = extra or {}
        cols = ["config_hash", "seed", "re1", "re2", "re3", "re4"] + sorted(extra)
        new = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(cols)
            row = [config_hash, seed] + [_fmt(x) for x in (self.re1, self.re2, self.re3, self.re4)]
            w.writerow(row + [extra[k] for k in sorted(extra)])


def _fmt(x):
    return "undefined" if x is None else repr(float(x))


def _pair_errors(v_rec, v_true, whole, support):
    return {"re1": relative_l2(v_rec, v_true, whole), "re2": relative_l2(v_rec, v_true, support),
            "re3": directional_error(v_rec, v_true, whole),
            "re4": directional_error(v_rec, v_true, support, direction_mask=whole)}


def evaluate(v_rec: VectorVolume, v_true: VectorVolume, f_true, threshold: float = 0.5,
             border: int = 0, pair_flows=None, pairs=None) -> ErrorReport:
    """RE1-RE4 of the reported flow against the truth sampled on the grid.

    RE3 and RE4 both project on the mean true direction over the whole
    (border-trimmed) domain, so they are undefined together when that mean
    vanishes. ``pair_flows`` adds per-pair errors as diagnostics.
    """
    if not v_rec.domain.matches(v_true.domain):
        raise ConfigurationError("reconstructed and true flows live on different domains")
    whole = whole_domain(v_true.domain, border)
    support = particle_support(f_true, threshold, border)
    errs = _pair_errors(v_rec, v_true, whole, support)
    d = flow_direction(v_true, whole)
    per_pair = [_pair_errors(fl, v_true, whole, support) for fl in (pair_flows or [])]
    return ErrorReport(errs["re1"], errs["re2"], errs["re3"], errs["re4"],
                       None if d is None else [float(x) for x in d],
                       {"whole_domain": whole.describe(), "particle_support": support.describe()},
                       [list(p) for p in (pairs or [])], per_pair)
