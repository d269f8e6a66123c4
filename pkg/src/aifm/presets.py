"""Named experiment configurations.

Every study exists at full scale (101^3 nodes, 1 cm spacing) and as a ``-desk``
variant sized for a laptop: at most 49^3 nodes, 6 directions, 21 receivers
per face edge and 5 snapshots. Desk particle counts keep the full-scale
number density (particles per cubic meter) on the smaller box.
"""

from __future__ import annotations

import copy
import math

from .config import ExperimentConfig
from .errors import ConfigurationError

FULL = {
    "domain": {"extents": [1.0, 1.0, 1.0], "spacing": 0.01},
    "solver": {"dt": 2.3e-6},
    "source": {"count": 10, "central_frequency": 20000.0},
    "receivers": {"layout": "AllAround6", "resolution": 101},
    "scenario": {"kind": "Constant", "particle_count": 200},
    "schedule": {"count": 10},
    "inversion": {"iterations": 100},
}

# 0.32 m cube at the full-scale spacing, so particles keep their size in voxels
DESK = {
    "domain": {"extents": [0.32, 0.32, 0.32], "spacing": 0.01},
    "solver": {"dt": None},
    "source": {"count": 4},
    "receivers": {"layout": "WallsAndSurface4", "resolution": 21},
    "scenario": {"kind": "Constant", "particle_count": 7},
    "schedule": {"count": 5},
}

# unit cube at 1/48 m spacing, for flows defined on [0, 1]^3
DESK_UNIT = {
    "domain": {"extents": [1.0, 1.0, 1.0], "spacing": 1.0 / 48},
    "solver": {"dt": None},
    "source": {"count": 4},
    "receivers": {"layout": "WallsAndSurface4", "resolution": 21},
    "schedule": {"count": 5},
}

DESK_VOXELS_PER_FRAME = 4
TJ_DISTANCES = [1.0, 2.0, 3.0, 4.0, 5.0]
TJ_WIDTHS = (0.5, 1.0)
TJ_ANGLES = (60, 90, 120)
DESK_INLET = 2.0  # m/s


def _deep_update(base: dict, upd: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _desk_count(n: int, extents) -> int:
    vol = extents[0] * extents[1] * extents[2]
    return max(1, round(n * vol))


def _interval(spacing: float, speed: float) -> float:
    return DESK_VOXELS_PER_FRAME * spacing / speed


def _studies() -> dict:
    """name -> (full-scale overrides, desk overrides, description)."""
    s = {}
    for m, m_desk in ((10, 3), (20, 6)):
        s[f"directions-{m}"] = ({"source": {"count": m}}, {"source": {"count": m_desk}},
                                f"{m} emission directions")
    for r, r_desk in ((101, 21), (51, 11), (21, 5)):
        s[f"receivers-4x{r}"] = (
            {"receivers": {"layout": "WallsAndSurface4", "resolution": r}},
            {"receivers": {"layout": "WallsAndSurface4", "resolution": r_desk}},
            f"4 faces with {r}x{r} receivers",
        )
    for layout in ("AllAround6", "WallsAndSurface4", "Sidewalls2"):
        s[f"layout-{layout}"] = ({"receivers": {"layout": layout}}, {"receivers": {"layout": layout}},
                                 f"receiver layout {layout}")
    for n in (10, 50, 200):
        s[f"particles-{n}"] = (
            {"scenario": {"particle_count": n}},
            {"scenario": {"particle_count": _desk_count(n, DESK["domain"]["extents"])}},
            f"{n} particles per cubic meter",
        )
    h_desk = DESK_UNIT["domain"]["spacing"]
    s["constant"] = (
        {"scenario": {"kind": "Constant", "velocity": [0.0, 1.0, 0.0]}},
        {"scenario": {"kind": "Constant", "velocity": [0.0, 1.0, 0.0]},
         "schedule": {"interval": _interval(DESK["domain"]["spacing"], 1.0)}},
        "uniform flow (0, 1, 0) m/s",
    )
    s["taylor-green"] = (
        {"scenario": {"kind": "TaylorGreen", "amplitude": 3.0}},
        _deep_update(DESK_UNIT, {"scenario": {"kind": "TaylorGreen", "amplitude": 3.0,
                                              "particle_count": 200},
                                 "schedule": {"interval": _interval(h_desk, 3.0)}}),
        "Taylor-Green vortex of amplitude 3 m/s",
    )
    for w in TJ_WIDTHS:
        for deg in TJ_ANGLES:
            theta = math.radians(deg)
            scen = {"kind": "TJunctionSurrogate", "theta": theta, "width": w, "distance": TJ_DISTANCES[0]}
            full = {"domain": {"extents": [w, 1.0, 1.0]}, "scenario": scen,
                    "sweep": {"scenario.distance": TJ_DISTANCES}}
            # the surrogate is linear in the inlet speed; desk runs slow it down so
            # that 4 voxels per frame still leaves room for a full probe window
            speed = DESK_INLET * (1 - w / (w + 5.0))
            desk = _deep_update(DESK_UNIT, {
                "domain": {"extents": [w, 1.0, 1.0]},
                "scenario": dict(scen, particle_count=_desk_count(200, [w, 1.0, 1.0]),
                                 inlet_speed=DESK_INLET),
                "schedule": {"interval": _interval(h_desk, speed)},
                "sweep": {"scenario.distance": TJ_DISTANCES},
            })
            s[f"tjunction-w{w:g}-theta{deg}"] = (full, desk, f"T-junction surrogate, W={w:g} m, "
                                                 f"theta={deg} deg, swept over L")
    return s


STUDIES = _studies()


def names() -> list[str]:
    out = []
    for name in STUDIES:
        out += [name, name + "-desk"]
    return out


def preset(name: str) -> tuple[ExperimentConfig, dict]:
    """Config and sweep grid (``{dotted key: values}``, possibly empty) for a preset."""
    desk = name.endswith("-desk")
    base_name = name[: -len("-desk")] if desk else name
    if base_name not in STUDIES:
        raise ConfigurationError(f"unknown preset '{name}'; available: {', '.join(names())}")
    full, desk_upd, _ = STUDIES[base_name]
    data = _deep_update(FULL, full)
    if desk:
        data = _deep_update(data, DESK)
        data = _deep_update(data, desk_upd)
    sweep = data.pop("sweep", {})
    data["output"] = {"dir": f"runs/{name}"}
    return ExperimentConfig.from_dict(data), sweep


def describe(name: str) -> str:
    base_name = name[: -len("-desk")] if name.endswith("-desk") else name
    if base_name not in STUDIES:
        raise ConfigurationError(f"unknown preset '{name}'; available: {', '.join(names())}")
    return STUDIES[base_name][2] + (" (desk scale)" if name.endswith("-desk") else "")
