"""Staged experiment runner: generate -> probe -> invert -> flow -> evaluate.

Each stage writes into its own subdirectory of the run directory together
with a ``stage.json`` recording the stage key (a hash of every input that
influences it) and the sha256 of each artifact. A stage whose key and
artifacts are unchanged is skipped. Stages always read their inputs back
from disk, so a cached and a fresh run see identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import shutil
import time
from pathlib import Path

import numba
import numpy as np
import scipy
import yaml

from . import __version__
from .acoustics.solver import TraceSet, WaveOperator
from .config import ExperimentConfig, build_schedule, probe_window, sha256_json, validate
from .container import (
    read_traces,
    read_vector_volume,
    read_volume,
    write_traces,
    write_vector_volume,
    write_volume,
)
from .errors import AIFMError, ConfigurationError, PipelineError
from .flow import average_flows, displacement_to_velocity, estimate_flow, flow_summary_csv
from .inversion import InversionProblem, invert
from .metrics import ErrorReport, evaluate
from .scenarios import Particle, advect, ingest_cfd_field, rasterize, seed_particles, velocity_field
from .volume import ScalarVolume

log = logging.getLogger(__name__)

STAGES = ("generate", "probe", "invert", "flow", "evaluate")
RESULTS_LEDGER = "results.csv"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


class Run:
    """One pipeline execution bound to a config and an output directory."""

    def __init__(self, cfg: ExperimentConfig, out: str | os.PathLike | None = None):
        self.cfg = cfg
        self.out = Path(out) if out is not None else cfg.output_dir
        self.objs = validate(cfg)
        self.timings: dict[str, float] = {}
        self.cache_hits: dict[str, bool] = {}
        self._keys: dict[str, str] = {}

    # stage keys ----------------------------------------------------------------
    def key(self, stage: str) -> str:
        if stage in self._keys:
            return self._keys[stage]
        d = self.cfg.data
        base = {"version": __version__, "seed": self.cfg.seed}
        if stage == "generate":
            field_hash = None
            if d["scenario"]["field_path"] and d["scenario"]["kind"] == "TJunctionImport":
                field_hash = file_sha256(d["scenario"]["field_path"])
            parts = dict(base, domain=d["domain"], scenario=d["scenario"], field=field_hash,
                         schedule={k: d["schedule"][k] for k in ("count", "interval", "advection_substeps")})
        elif stage == "probe":
            parts = dict(base, up=self.key("generate"), solver=d["solver"], boundary=d["boundary"],
                         source=d["source"], receivers=d["receivers"],
                         probe_window=d["schedule"]["probe_window"],
                         noise=d["inversion"]["noise_snr_db"])
        elif stage == "invert":
            inv = {k: v for k, v in d["inversion"].items() if k != "noise_snr_db"}
            parts = dict(base, up=self.key("probe"), inversion=inv)
        elif stage == "flow":
            parts = dict(base, up=self.key("invert"), flow=d["flow"])
        else:
            parts = dict(base, up=self.key("flow"), truth=self.key("generate"), metrics=d["metrics"])
        self._keys[stage] = sha256_json(parts)
        return self._keys[stage]

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def _cached(self, stage: str) -> bool:
        meta = self.stage_dir(stage) / "stage.json"
        if not meta.exists():
            return False
        try:
            info = json.loads(meta.read_text())
        except json.JSONDecodeError:
            return False
        if info.get("key") != self.key(stage):
            return False
        for name, digest in info.get("artifacts", {}).items():
            p = self.stage_dir(stage) / name
            if not p.exists() or file_sha256(p) != digest:
                return False
        return True

    def _finish(self, stage: str, names) -> None:
        sd = self.stage_dir(stage)
        arts = {n: file_sha256(sd / n) for n in sorted(names)}
        (sd / "stage.json").write_text(json.dumps({"stage": stage, "key": self.key(stage),
                                                   "artifacts": arts}, indent=2, sort_keys=True) + "\n")

    # stages ----------------------------------------------------------------------
    def _generate(self, sd: Path) -> list[str]:
        o = self.objs
        domain, scen = o["domain"], o["scenario"]
        if scen.kind.value == "TJunctionImport":
            scen = scen.with_field(ingest_cfd_field(scen.field_path, domain))
            if o["schedule"] is None:
                o["schedule"] = build_schedule(self.cfg, domain, scen)
        sched = o["schedule"]
        smoothing = self.cfg.data["scenario"]["smoothing"]
        substeps = int(self.cfg.data["schedule"]["advection_substeps"])
        inset = o["receivers"].inset
        parts = seed_particles(scen, domain, inset)
        names = []
        for j, t in enumerate(sched.times):
            if j > 0:
                parts = advect(parts, scen, sched.interval, domain, t=float(sched.times[j - 1]),
                               rng=_rng(self.cfg.seed, 1, j), substeps=substeps)
            f = rasterize(parts, domain, smoothing)
            write_volume(f, sd / f"f_true_{j:02d}.aifm")
            with open(sd / f"particles_{j:02d}.csv", "w") as fh:
                fh.write("x1,x2,x3,diameter\n")
                for p in parts:
                    fh.write(",".join(repr(float(v)) for v in (*p.center, p.diameter)) + "\n")
            names += [f"f_true_{j:02d}.aifm", f"particles_{j:02d}.csv"]
        write_vector_volume(velocity_field(scen, domain), sd / "v_true.aifm")
        o["receivers"].to_csv(sd / "receivers.csv")
        return names + ["v_true.aifm", "receivers.csv"]

    def _operator(self) -> WaveOperator:
        if "operator" not in self.objs:
            o = self.objs
            self.objs["operator"] = WaveOperator(
                o["domain"], o["sources"], o["receivers"], o["solver"],
                probe_window(self.cfg, o["domain"]), o["boundary"],
                float(self.cfg.data["solver"]["sound_speed"]))
        return self.objs["operator"]

    def _count(self) -> int:
        return int(self.cfg.data["schedule"]["count"])

    def _probe(self, sd: Path) -> list[str]:
        op = self._operator()
        snr = self.cfg.data["inversion"]["noise_snr_db"]
        names = []
        for j in range(self._count()):
            f = read_volume(self.stage_dir("generate") / f"f_true_{j:02d}.aifm")
            tr = op.forward(f.values).samples
            if snr is not None:
                rms = float(np.sqrt(np.mean(tr * tr)))
                sigma = rms * 10.0 ** (-float(snr) / 20.0)
                tr = tr + sigma * _rng(self.cfg.seed, 2, j).standard_normal(tr.shape)
            write_traces(tr, op.dt, sd / f"traces_{j:02d}.aifm")
            names.append(f"traces_{j:02d}.aifm")
        return names

    def _invert(self, sd: Path) -> list[str]:
        op = self._operator()
        inv = self.cfg.data["inversion"]
        names = []
        for j in range(self._count()):
            samples, dt = read_traces(self.stage_dir("probe") / f"traces_{j:02d}.aifm")
            prob = InversionProblem.from_operator(op, TraceSet(dt, samples))
            res = invert(prob, int(inv["iterations"]), tikhonov=float(inv["tikhonov"]),
                         nonnegative=bool(inv["nonnegative"]))
            write_volume(res.f_hat, sd / f"f_hat_{j:02d}.aifm")
            res.write_report(sd / f"report_{j:02d}.txt")
            names += [f"f_hat_{j:02d}.aifm", f"report_{j:02d}.txt"]
            log.info("snapshot %d: J %.3e -> %.3e", j, res.objective_history[0], res.objective_history[-1])
        return names

    def _interval(self) -> float:
        sched = self.objs["schedule"]
        if sched is None:
            scen = self.objs["scenario"].with_field(read_vector_volume(self.stage_dir("generate") / "v_true.aifm"))
            sched = self.objs["schedule"] = build_schedule(self.cfg, self.objs["domain"], scen)
        return sched.interval

    def _flow(self, sd: Path) -> list[str]:
        params = self.objs["flow"]
        frames = [read_volume(self.stage_dir("invert") / f"f_hat_{j:02d}.aifm") for j in range(self._count())]
        names, pairs, diags = [], [], []
        for j in range(len(frames) - 1):
            diag = {}
            d = estimate_flow(frames[j], frames[j + 1], params, diag)
            write_vector_volume(d, sd / f"displacement_{j:02d}.aifm")
            names.append(f"displacement_{j:02d}.aifm")
            pairs.append(d)
            diags.append(dict(pair=[j, j + 1], **diag))
        dom = self.objs["domain"]
        # average the stored (float32) fields so cached and fresh runs agree
        stored = [read_vector_volume(sd / n) for n in names]
        vel = displacement_to_velocity(average_flows(stored), dom.spacing, self._interval())
        write_vector_volume(vel, sd / "velocity.aifm")
        flow_summary_csv(vel, sd / "flow_summary.csv", border=params.window_radius)
        (sd / "diagnostics.json").write_text(json.dumps(diags, indent=2, sort_keys=True) + "\n")
        return names + ["velocity.aifm", "flow_summary.csv", "diagnostics.json"]

    def _evaluate(self, sd: Path) -> list[str]:
        n = self._count()
        gen, fl = self.stage_dir("generate"), self.stage_dir("flow")
        v_rec = read_vector_volume(fl / "velocity.aifm")
        v_true = read_vector_volume(gen / "v_true.aifm")
        truths = [read_volume(gen / f"f_true_{j:02d}.aifm") for j in range(n - 1)]
        dom = self.objs["domain"]
        interval = self._interval()
        pair_vel = [displacement_to_velocity(read_vector_volume(fl / f"displacement_{j:02d}.aifm"),
                                             dom.spacing, interval) for j in range(n - 1)]
        m = self.cfg.data["metrics"]
        border = m["border"] if m["border"] is not None else self.objs["flow"].window_radius
        rep = evaluate(v_rec, v_true, truths, float(m["particle_threshold"]), int(border),
                       pair_vel, [(j, j + 1) for j in range(n - 1)])
        rep.write_json(sd / "report.json")
        rep.append_csv(self.out / RESULTS_LEDGER, self.cfg.hash(), self.cfg.seed)
        return ["report.json"]

    # driver ----------------------------------------------------------------------
    def execute(self, until: str = "evaluate") -> Path:
        if until not in STAGES:
            raise ConfigurationError(f"unknown stage '{until}'; stages are {', '.join(STAGES)}")
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg.save(self.out / "config.yaml")
        for stage in STAGES[: STAGES.index(until) + 1]:
            t0 = time.perf_counter()
            if self._cached(stage):
                self.cache_hits[stage] = True
                log.info("stage %s: cache hit", stage)
            else:
                self.cache_hits[stage] = False
                sd = self.stage_dir(stage)
                if sd.exists():
                    shutil.rmtree(sd)
                sd.mkdir(parents=True)
                try:
                    names = getattr(self, "_" + stage)(sd)
                except AIFMError as exc:
                    raise PipelineError(stage, exc) from exc
                except (OSError, ArithmeticError, ValueError) as exc:
                    raise PipelineError(stage, exc) from exc
                self._finish(stage, names)
            self.timings[stage] = time.perf_counter() - t0
        self.write_manifest()
        return self.out

    def write_manifest(self) -> None:
        arts = {}
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                arts[p.relative_to(self.out).as_posix()] = file_sha256(p)
        manifest = {
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "stage_keys": {s: self.key(s) for s in self.timings},
            "cache_hits": self.cache_hits,
            "timings_s": self.timings,
            "versions": {"aifm": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "numba": numba.__version__, "pyyaml": yaml.__version__},
            "artifacts": arts,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_pipeline(cfg: ExperimentConfig, out=None, until: str = "evaluate") -> Path:
    return Run(cfg, out).execute(until)


def load_report(run_dir) -> ErrorReport:
    return ErrorReport.from_json((Path(run_dir) / "evaluate" / "report.json").read_text())


def load_truth(run_dir, j: int) -> ScalarVolume:
    return read_volume(Path(run_dir) / "generate" / f"f_true_{j:02d}.aifm")


def load_particles(run_dir, j: int) -> list[Particle]:
    rows = (Path(run_dir) / "generate" / f"particles_{j:02d}.csv").read_text().splitlines()[1:]
    out = []
    for r in rows:
        a, b, c, d = (float(x) for x in r.split(","))
        out.append(Particle((a, b, c), d))
    return out
