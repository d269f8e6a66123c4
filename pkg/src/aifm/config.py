"""Experiment configuration: a versioned YAML document with validated sections.

A config is kept as a plain nested dict (merged over :data:`DEFAULTS`) so it
can be hashed, diffed and overridden by dotted paths; typed objects are built
on demand by the ``build_*`` helpers.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .acoustics.receivers import ReceiverArray
from .acoustics.solver import BoundaryMap, SolverConfig, default_probe_window
from .acoustics.sources import SourceSet
from .errors import ConfigurationError
from .flow import FlowParams
from .scenarios import ScenarioSpec, snapshot_interval, velocity_field
from .volume import DomainSpec, SnapshotSchedule

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "domain": {"extents": [1.0, 1.0, 1.0], "spacing": 0.01, "origin": [0.0, 0.0, 0.0]},
    "solver": {"dt": None, "spatial_order": 4, "cfl_safety": 0.6, "sound_speed": 1500.0},
    "boundary": {"faces": {"x3_hi": "dirichlet"}, "sponge_width": 0, "sponge_strength": 0.0},
    "source": {"count": 10, "central_frequency": 20000.0, "reference": "entry"},
    "receivers": {"layout": "AllAround6", "resolution": 101, "inset": None},
    "scenario": {
        "kind": "Constant", "velocity": [0.0, 1.0, 0.0], "amplitude": 3.0,
        "theta": math.pi / 2, "width": 0.5, "distance": 0.0, "inlet_speed": 20.0,
        "branch_fraction": None, "field_path": None, "particle_count": 200,
        "diameter_range": [0.06, 0.10], "smoothing": None,
    },
    "schedule": {"count": 10, "interval": None, "probe_window": None, "advection_substeps": 4},
    "inversion": {"iterations": 100, "tikhonov": 0.0, "nonnegative": False, "noise_snr_db": None},
    "flow": {f.name: f.default for f in fields(FlowParams)},
    "metrics": {"particle_threshold": 0.5, "border": None},
    "output": {"dir": "runs/default"},
}

# sections whose keys are free-form (not checked against DEFAULTS)
FREE_SECTIONS = {("boundary", "faces")}


def _merge(base: dict, upd: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for key, val in upd.items():
        where = path + (key,)
        if key not in base and path not in FREE_SECTIONS:
            raise ConfigurationError(f"unknown config key '{'.'.join(where)}'")
        if isinstance(val, dict) and isinstance(base.get(key), dict) and where not in FREE_SECTIONS:
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _plain(x):
    """Convert tuples and numpy scalars so the dict is YAML/JSON clean."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, upd: dict | None = None) -> ExperimentConfig:
        upd = _plain(upd or {})
        version = upd.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
        return cls(_merge(DEFAULTS, upd))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    def get(self, dotted: str):
        node = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigurationError(f"unknown config key '{dotted}'")
            node = node[part]
        return node

    def with_overrides(self, overrides) -> ExperimentConfig:
        """Apply ``{"a.b": value}`` pairs or ``"a.b=value"`` strings (values parsed as YAML)."""
        items = overrides.items() if isinstance(overrides, dict) else [_split(o) for o in overrides]
        data = copy.deepcopy(self.data)
        for key, val in items:
            parts = key.split(".")
            upd = val
            for part in reversed(parts):
                upd = {part: upd}
            data = _merge(data, _plain(upd))
        return ExperimentConfig(data)

    def hash(self) -> str:
        """Content hash of everything that influences results (the output dir does not)."""
        d = {k: v for k, v in self.data.items() if k != "output"}
        return sha256_json(d)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output"]["dir"])


def _split(text: str):
    if "=" not in text:
        raise ConfigurationError(f"override '{text}' is not of the form key=value")
    key, val = text.split("=", 1)
    try:
        parsed = yaml.safe_load(val)
    except yaml.YAMLError:
        parsed = val
    return key.strip(), parsed


def sha256_json(obj) -> str:
    text = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_domain(cfg: ExperimentConfig) -> DomainSpec:
    d = cfg.data["domain"]
    ext = d["extents"]
    return DomainSpec(float(ext[0]), float(ext[1]), float(ext[2]), float(d["spacing"]),
                      tuple(float(x) for x in d["origin"]))


def build_solver(cfg: ExperimentConfig, domain: DomainSpec) -> SolverConfig:
    s = cfg.data["solver"]
    if s["dt"] is None:
        return SolverConfig.for_domain(domain, float(s["sound_speed"]), int(s["spatial_order"]),
                                       float(s["cfl_safety"]))
    return SolverConfig(float(s["dt"]), int(s["spatial_order"]), float(s["cfl_safety"]))


def build_boundary(cfg: ExperimentConfig) -> BoundaryMap:
    b = cfg.data["boundary"]
    return BoundaryMap(dict(b["faces"]), int(b["sponge_width"]), float(b["sponge_strength"]))


def build_sources(cfg: ExperimentConfig, domain: DomainSpec) -> SourceSet:
    s = cfg.data["source"]
    ref = s["reference"]
    if ref not in ("entry", "origin"):
        raise ConfigurationError(f"source.reference must be 'entry' or 'origin', got {ref!r}")
    return SourceSet.fibonacci(int(s["count"]), float(s["central_frequency"]),
                               float(cfg.data["solver"]["sound_speed"]),
                               domain if ref == "entry" else None)


def build_receivers(cfg: ExperimentConfig, domain: DomainSpec) -> ReceiverArray:
    r = cfg.data["receivers"]
    rec = ReceiverArray.build(domain, r["layout"], int(r["resolution"]), r["inset"])
    rec.validate(domain)
    return rec


def build_scenario(cfg: ExperimentConfig) -> ScenarioSpec:
    s = cfg.data["scenario"]
    return ScenarioSpec(
        kind=s["kind"], velocity=tuple(s["velocity"]), amplitude=float(s["amplitude"]),
        theta=float(s["theta"]), width=float(s["width"]), distance=float(s["distance"]),
        inlet_speed=float(s["inlet_speed"]), branch_fraction=s["branch_fraction"],
        field_path=s["field_path"], particle_count=int(s["particle_count"]), seed=cfg.seed,
        diameter_range=tuple(float(x) for x in s["diameter_range"]),
    )


def build_flow_params(cfg: ExperimentConfig) -> FlowParams:
    return FlowParams(**cfg.data["flow"])


def probe_window(cfg: ExperimentConfig, domain: DomainSpec) -> float:
    pw = cfg.data["schedule"]["probe_window"]
    if pw is not None:
        return float(pw)
    return default_probe_window(domain, float(cfg.data["solver"]["sound_speed"]),
                                float(cfg.data["source"]["central_frequency"]))


def build_schedule(cfg: ExperimentConfig, domain: DomainSpec, scenario: ScenarioSpec | None = None,
                   ) -> SnapshotSchedule:
    s = cfg.data["schedule"]
    interval = s["interval"]
    if interval is None:
        scenario = scenario or build_scenario(cfg)
        if scenario.field is None and scenario.kind.value == "TJunctionImport":
            raise ConfigurationError("schedule.interval must be set explicitly for imported fields")
        speed = float(np.sqrt((velocity_field(scenario, domain).as_array() ** 2).sum(0)).max())
        interval = snapshot_interval(speed)
    return SnapshotSchedule(int(s["count"]), float(interval), probe_window(cfg, domain))


def validate(cfg: ExperimentConfig) -> dict:
    """Check cross-field consistency before any compute; returns the built objects."""
    if cfg.data["schema_version"] != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {cfg.data['schema_version']}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    domain = build_domain(cfg)
    solver = build_solver(cfg, domain)
    c = float(cfg.data["solver"]["sound_speed"])
    if not c > 0:
        raise ConfigurationError("sound speed must be positive")
    solver.validate(domain, c)
    boundary = build_boundary(cfg)
    sources = build_sources(cfg, domain)
    receivers = build_receivers(cfg, domain)
    scenario = build_scenario(cfg)
    inset = receivers.inset
    dmax = scenario.diameter_range[1]
    if np.any(np.asarray(domain.extents) < dmax + 2 * inset):
        raise ConfigurationError(
            f"particles of diameter {dmax} m do not fit inside the receiver inset {inset} m "
            f"of a domain with extents {domain.extents}"
        )
    inv = cfg.data["inversion"]
    if int(inv["iterations"]) < 1:
        raise ConfigurationError("inversion.iterations must be >= 1")
    if float(inv["tikhonov"]) < 0:
        raise ConfigurationError("inversion.tikhonov must be non-negative")
    if int(cfg.data["schedule"]["advection_substeps"]) < 1:
        raise ConfigurationError("schedule.advection_substeps must be >= 1")
    if scenario.kind.value == "TJunctionImport" and not scenario.field_path:
        raise ConfigurationError("TJunctionImport needs scenario.field_path")
    schedule = None
    if scenario.kind.value != "TJunctionImport":
        schedule = build_schedule(cfg, domain, scenario)
    elif cfg.data["schedule"]["interval"] is not None:
        schedule = SnapshotSchedule(int(cfg.data["schedule"]["count"]),
                                    float(cfg.data["schedule"]["interval"]), probe_window(cfg, domain))
    flow = build_flow_params(cfg)
    thr = float(cfg.data["metrics"]["particle_threshold"])
    if not 0 < thr < 1:
        raise ConfigurationError("metrics.particle_threshold must lie in (0, 1)")
    smoothing = cfg.data["scenario"]["smoothing"]
    if smoothing is not None and float(smoothing) < 0:
        raise ConfigurationError("scenario.smoothing must be non-negative")
    return {"domain": domain, "solver": solver, "boundary": boundary, "sources": sources,
            "receivers": receivers, "scenario": scenario, "schedule": schedule, "flow": flow}
