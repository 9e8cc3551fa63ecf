"""Stage orchestration with a hash-checked manifest.

Each stage reads artifacts written by earlier stages and writes its own into
the output directory. ``manifest.json`` records, per stage, the hash of the
configuration sections the stage depends on, the input and output file
hashes and the wall time. A stage refuses to run when an upstream stage is
missing (dependency error) or was produced under a different configuration
or has been modified since (staleness error).
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from . import evaluation as ev
from . import io
from .calibration import CalibrationProblem, default_bounds, optimize
from .config import RunConfig
from .errors import DependencyError, StalenessError
from .hazard import CatalogEvent, event_noise_seed, simulate_catalog, synthesize_motion
from .masked_net.network import SourceNetwork, TargetNetwork
from .masked_net.training import params_checksum, predict_target, train_source, train_target
from .selection import FeaturePoint, partition_pools
from .signals import (NormalizationStats, Waveform, apply_normalization, fit_normalization,
                      intensity_measures)
from .solver import SDOFParams, eigen_analysis, newmark_mdof, newmark_sdof

log = logging.getLogger(__name__)

STAGES = ("catalog", "synth", "select", "simulate-target", "calibrate", "simulate-source",
          "train-source", "train-target", "evaluate", "exceedance")

UPSTREAM = {
    "catalog": (),
    "synth": ("catalog",),
    "select": ("synth",),
    "simulate-target": ("synth", "select"),
    "calibrate": ("simulate-target",),
    "simulate-source": ("synth", "select", "calibrate"),
    "train-source": ("simulate-source",),
    "train-target": ("train-source", "simulate-target"),
    "evaluate": ("train-target",),
    "exceedance": ("catalog", "synth", "train-target"),
}

# config sections each stage reads directly; the stage hash also covers upstream sections
SECTIONS = {
    "catalog": ("hazard",),
    "synth": ("synthesizer",),
    "select": ("selection",),
    "simulate-target": ("target_model",),
    "calibrate": ("calibration", "source_model"),
    "simulate-source": (),
    "train-source": ("network", "loss", "training"),
    "train-target": (),
    "evaluate": ("evaluation",),
    "exceedance": ("evaluation",),
}

RESPONSES = {"accel": "rel_accel", "IDR": "idr"}


def _all_sections(stage: str) -> List[str]:
    out, todo = [], [stage]
    while todo:
        s = todo.pop()
        out.extend(SECTIONS[s])
        todo.extend(UPSTREAM[s])
    return sorted(set(out))


def stage_hash(cfg: RunConfig, stage: str) -> str:
    d = cfg.to_dict()
    sub = {k: d[k] for k in _all_sections(stage)}
    return hashlib.sha256(json.dumps(sub, sort_keys=True).encode()).hexdigest()


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """An output directory plus its manifest."""

    def __init__(self, cfg: RunConfig, out_dir):
        self.cfg = cfg.validate()
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
        else:
            self.manifest = {"stages": {}}
        self._inputs: Dict[str, str] = {}
        self._outputs: Dict[str, str] = {}

    # -- bookkeeping -----------------------------------------------------------------
    def path(self, name: str) -> Path:
        return self.out / name

    def is_current(self, stage: str) -> bool:
        """True when ``stage`` ran under this configuration and its outputs are intact."""
        try:
            self._check_upstream(stage)
        except DependencyError:
            return False
        rec = self.manifest["stages"].get(stage)
        if rec is None or rec["config_hash"] != stage_hash(self.cfg, stage):
            return False
        return all(self.path(n).exists() and file_hash(self.path(n)) == d
                   for n, d in rec["outputs"].items())

    def _check_upstream(self, stage: str):
        for up in UPSTREAM[stage]:
            rec = self.manifest["stages"].get(up)
            if rec is None:
                raise DependencyError(f"stage {stage!r} needs {up!r}, which has not run")
            if rec["config_hash"] != stage_hash(self.cfg, up):
                raise StalenessError(f"stage {up!r} ran under a different configuration; rerun it")
            for name, digest in rec["outputs"].items():
                p = self.path(name)
                if not p.exists():
                    raise DependencyError(f"artifact {name} of stage {up!r} is missing")
                if file_hash(p) != digest:
                    raise StalenessError(f"artifact {name} changed after stage {up!r} wrote it")

    def read(self, name: str) -> Path:
        """Register ``name`` as an input of the running stage."""
        p = self.path(name)
        if not p.exists():
            raise DependencyError(f"missing input artifact {name}")
        self._inputs[name] = file_hash(p)
        return p

    def wrote(self, *names: str):
        for n in names:
            self._outputs[n] = file_hash(self.path(n))

    def run_stage(self, stage: str):
        if stage not in STAGES:
            raise DependencyError(f"unknown stage {stage!r}")
        self._check_upstream(stage)
        self._inputs, self._outputs = {}, {}
        t0 = time.perf_counter()
        STAGE_FUNCS[stage](self)
        rec = {"config_hash": stage_hash(self.cfg, stage), "inputs": dict(sorted(self._inputs.items())),
               "outputs": dict(sorted(self._outputs.items())),
               "seed": _stage_seed(self.cfg, stage), "wall_time_s": time.perf_counter() - t0}
        self.manifest["stages"][stage] = rec
        # downstream records are no longer valid once an upstream stage reruns
        for s in STAGES[STAGES.index(stage) + 1:]:
            if stage in _ancestors(s):
                self.manifest["stages"].pop(s, None)
        self.manifest["config"] = self.cfg.to_dict()
        self.manifest["config_hash"] = self.cfg.hash()
        self.manifest_path.write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")
        log.info("stage %s done in %.1fs", stage, rec["wall_time_s"])
        return rec

    def run_all(self, stages=STAGES, skip_current: bool = False):
        for s in stages:
            if skip_current and self.is_current(s):
                log.info("stage %s is current; skipped", s)
                continue
            self.run_stage(s)


def _ancestors(stage: str) -> set:
    out, todo = set(), list(UPSTREAM[stage])
    while todo:
        s = todo.pop()
        if s not in out:
            out.add(s)
            todo.extend(UPSTREAM[s])
    return out


def _stage_seed(cfg: RunConfig, stage: str):
    return {"catalog": cfg.hazard.seed, "synth": cfg.hazard.seed,
            "calibrate": cfg.calibration.seed, "train-source": cfg.training.source_seed,
            "train-target": cfg.training.target_seed}.get(stage)


# -- helpers -----------------------------------------------------------------------

def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_catalog(run: Run) -> List[CatalogEvent]:
    import csv
    with open(run.read("catalog.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CatalogEvent(int(r["window_index"]), float(r["time_years"]), float(r["mw"]),
                         float(r["r_epi_km"]), float(r["r_rup_km"]), int(r["event_index"]))
            for r in rows]


def _motions(run: Run) -> Dict[str, Waveform]:
    return {w.id: w for w in io.load_waveforms(run.read("motions.qswf"))}


def _selection(run: Run) -> dict:
    return json.loads(run.read("selection.json").read_text())


def target_sets(sel: dict):
    """``(N, replicate_key, motion_ids)`` for every target training set."""
    for n, sets in sorted(sel["target_train"].items(), key=lambda kv: int(kv[0])):
        for rep, ids in sets.items():
            yield int(n), rep, ids


def _target_ckpt_name(n: int, rep: str, resp: str) -> str:
    return f"target_N{n:03d}_{rep}_{resp}.qsck"


# -- stages --------------------------------------------------------------------------

def stage_catalog(run: Run):
    events = simulate_catalog(run.cfg.hazard)
    rows = [[e.window_index, e.event_index, e.time_years, e.mw, e.r_epi_km, e.r_rup_km,
             e.motion_id] for e in events]
    ev.write_csv(run.path("catalog.csv"), ["window_index", "event_index", "time_years", "mw",
                                           "r_epi_km", "r_rup_km", "motion_id"], rows)
    run.wrote("catalog.csv")


def stage_synth(run: Run):
    cfg = run.cfg
    events = _read_catalog(run)
    waves = [synthesize_motion(e, cfg.synthesizer, cfg.hazard.n_steps, cfg.hazard.dt_s,
                               event_noise_seed(cfg.hazard.seed, e)) for e in events]
    io.save_waveforms(run.path("motions.qswf"), waves)
    rows = []
    for w in waves:
        im = intensity_measures(w)
        rows.append([w.id, im.pga, im.pgv])
    ev.write_csv(run.path("intensity.csv"), ["motion_id", "pga", "pgv"], rows)
    run.wrote("motions.qswf", "motions.qswf.index.csv", "intensity.csv")


def stage_select(run: Run):
    import csv
    with open(run.read("intensity.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = [FeaturePoint(float(r["pga"]), float(r["pgv"]), r["motion_id"]) for r in rows]
    part = partition_pools(pts, run.cfg.selection)
    ids = [p.motion_id for p in pts]
    sel = {"source_train": [ids[i] for i in part.source_train],
           "validation": [ids[i] for i in part.validation],
           "target_train": {str(n): {str(k): [ids[i] for i in v] for k, v in sets.items()}
                            for n, sets in part.target_train.items()}}
    _write_json(run.path("selection.json"), sel)
    run.wrote("selection.json")


def _target_motion_ids(sel: dict) -> List[str]:
    ids = set(sel["validation"])
    for _, _, s in target_sets(sel):
        ids.update(s)
    return sorted(ids)


def stage_simulate_target(run: Run):
    """High-fidelity runs for the target sets and the validation motions only."""
    sel = _selection(run)
    motions = _motions(run)
    building = run.cfg.target_model.build()
    hist = [newmark_mdof(building, motions[m]) for m in _target_motion_ids(sel)]
    io.save_histories(run.path("target_histories.qswf"), hist)
    _write_json(run.path("building.json"), {"params": asdict(building),
                                            "periods_s": eigen_analysis(building).tolist()})
    run.wrote("target_histories.qswf", "target_histories.qswf.index.csv", "building.json")


def _histories(run: Run, name: str):
    run.read(name + ".index.csv")
    return {h.id: h for h in io.load_histories(run.read(name))}


def stage_calibrate(run: Run):
    cfg = run.cfg
    out = run.path("sdof.json")
    if not cfg.calibration.enabled:
        _write_json(out, {"params": asdict(cfg.source_model), "calibrated": False})
        run.wrote("sdof.json")
        return
    sel = _selection(run)
    motions = _motions(run)
    hist = _histories(run, "target_histories.qswf")
    # calibrate on the largest target set, which is already simulated
    largest = max(target_sets(sel), key=lambda t: t[0])[2]
    ids = largest[:cfg.calibration.n_motions]
    T1 = json.loads(run.read("building.json").read_text())["periods_s"][0]
    problem = CalibrationProblem([motions[m] for m in ids],
                                 [hist[m].rel_disp[-1] for m in ids], default_bounds(T1))
    res = optimize(problem, budget=cfg.calibration.budget, seed=cfg.calibration.seed)
    _write_json(out, {"params": asdict(res.best.params), "calibrated": True,
                      "objective": res.best.objective_value, "motions": ids})
    ev.write_csv(run.path("calibration_trials.csv"),
                 ["trial", "phase", "period_s", "damping_ratio", "yield_force_N",
                  "post_yield_ratio", "objective"],
                 [[t.index, t.phase, t.params.period_s, t.params.damping_ratio,
                   t.params.yield_force_N, t.params.post_yield_ratio, t.objective_value]
                  for t in res.trials])
    run.wrote("sdof.json", "calibration_trials.csv")


def stage_simulate_source(run: Run):
    sel = _selection(run)
    motions = _motions(run)
    p = SDOFParams(**json.loads(run.read("sdof.json").read_text())["params"])
    ids = sel["source_train"] + sel["validation"]
    hist = [newmark_sdof(p, motions[m]) for m in ids]
    io.save_histories(run.path("source_histories.qswf"), hist)
    n = len(sel["source_train"])
    norm = fit_normalization([motions[m] for m in ids[:n]], hist[:n])
    _write_json(run.path("normalization.json"), norm.to_dict())
    run.wrote("source_histories.qswf", "source_histories.qswf.index.csv", "normalization.json")


def _source_arrays(run: Run, ids, motions, hist, norm: NormalizationStats):
    gi, ro = apply_normalization(norm, [motions[m] for m in ids], [hist[m] for m in ids])
    x = np.array([w.samples for w in gi])[:, None, :]
    y = np.array([r.sdof_channels() for r in ro])
    return x, y


def stage_train_source(run: Run):
    cfg = run.cfg
    sel = _selection(run)
    motions = _motions(run)
    hist = _histories(run, "source_histories.qswf")
    norm = NormalizationStats.from_dict(json.loads(run.read("normalization.json").read_text()))
    xs, ys = _source_arrays(run, sel["source_train"], motions, hist, norm)
    xv, yv = _source_arrays(run, sel["validation"], motions, hist, norm)
    scales = [norm.response_scales[k] for k in ("rel_accel", "rel_vel", "rel_disp",
                                                "restoring_force")]
    net = SourceNetwork(cfg.network, seed=cfg.training.network_seed)
    t = cfg.training
    res = train_source(net, xs, ys, epochs=t.source_epochs, lr=t.source_lr, batch=t.source_batch,
                       seed=t.source_seed, loss_cfg=cfg.loss, channel_scales=scales,
                       x_val=xv, y_val=yv)
    history = {"train_loss": res.train_loss, "val_loss": res.val_loss}
    io.save_checkpoint(run.path("source.qsck"), net, res.optimizer, norm,
                       stage_hash(cfg, "train-source"), history)
    ev.write_csv(run.path("source_progress.csv"), ["epoch", "train_loss", "val_loss"], res.rows())
    run.wrote("source.qsck", "source_progress.csv")


def _target_arrays(ids, motions, hist, resp: str, input_scale: float):
    x = np.array([motions[m].samples / input_scale for m in ids])[:, None, :]
    y = np.array([getattr(hist[m], RESPONSES[resp]) for m in ids])
    return x, y


def stage_train_target(run: Run):
    cfg = run.cfg
    sel = _selection(run)
    motions = _motions(run)
    hist = _histories(run, "target_histories.qswf")
    src = run.read("source.qsck")
    t = cfg.training
    summary = []
    for n, rep, ids in target_sets(sel):
        for resp in RESPONSES:
            ck = io.load_checkpoint(src, expected=cfg.network, kind="source")
            norm = ck.normalization
            backbone_sum = params_checksum(ck.net)
            x, y = _target_arrays(ids, motions, hist, resp, norm.input_scale)
            xv, yv = _target_arrays(sel["validation"], motions, hist, resp, norm.input_scale)
            # per-family scale fitted on the N training histories only
            scale = float(np.max(np.abs(y)))
            net = TargetNetwork(ck.net, cfg.network, seed=t.network_seed)
            res = train_target(net, x, y / scale, lr=t.target_lr, max_epochs=t.target_max_epochs,
                               patience=t.target_patience, batch=t.target_batch,
                               seed=t.target_seed, x_val=xv, y_val=yv / scale)
            if params_checksum(ck.net) != backbone_sum:
                raise StalenessError("backbone parameters changed during transfer training")
            tnorm = NormalizationStats(norm.input_scale, {RESPONSES[resp]: scale})
            name = _target_ckpt_name(n, rep, resp)
            io.save_checkpoint(run.path(name), net, res.optimizer, tnorm,
                               stage_hash(cfg, "train-target"),
                               {"train_loss": res.train_loss, "val_loss": res.val_loss,
                                "best_epoch": res.best_epoch, "motions": ids})
            summary.append([n, rep, resp, len(res.train_loss), res.best_epoch,
                            min(res.val_loss) if res.val_loss else math.nan, backbone_sum])
            run.wrote(name)
    ev.write_csv(run.path("target_training.csv"),
                 ["n_train", "replicate", "response", "epochs", "best_epoch", "best_val_loss",
                  "backbone_sha256"], summary)
    run.wrote("target_training.csv")


def _load_targets(run: Run, sel: dict):
    for n, rep, ids in target_sets(sel):
        for resp in RESPONSES:
            name = _target_ckpt_name(n, rep, resp)
            ck = io.load_checkpoint(run.read(name), expected=run.cfg.network, kind="target")
            yield n, rep, resp, ck


def _predict(ck, waves: List[Waveform]) -> np.ndarray:
    norm = ck.normalization
    x = np.array([w.samples / norm.input_scale for w in waves])[:, None, :]
    (fam, scale), = norm.response_scales.items()
    return predict_target(ck.net, x) * scale


def stage_evaluate(run: Run):
    cfg = run.cfg
    sel = _selection(run)
    motions = _motions(run)
    hist = _histories(run, "target_histories.qswf")
    val = sel["validation"]
    corr_rows, box_rows, scatter_rows, ex_rows = [], [], [], []
    groups: Dict[str, Dict[str, list]] = {r: {} for r in RESPONSES}
    for n, rep, resp, ck in _load_targets(run, sel):
        pred = _predict(ck, [motions[m] for m in val])
        true = np.array([getattr(hist[m], RESPONSES[resp]) for m in val])
        r = ev.correlations(true, pred)  # (n_val, floors)
        rbar = r.mean(axis=1)
        for i, m in enumerate(val):
            for k in range(r.shape[1]):
                corr_rows.append([n, rep, resp, m, k, float(r[i, k])])
        b = ev.box_stats(rbar)
        box_rows.append([n, rep, resp, b.median, b.q1, b.q3, b.whisker_low, b.whisker_high,
                         len(b.outliers)])
        groups[resp][f"{n}/{rep}"] = rbar.tolist()
        pk_t = np.max(np.abs(true), axis=-1)
        pk_p = np.max(np.abs(pred), axis=-1)
        for i, m in enumerate(val):
            for k in range(pk_t.shape[1]):
                scatter_rows.append([n, rep, resp, m, k, float(pk_t[i, k]), float(pk_p[i, k])])
        for level, idx in zip(cfg.evaluation.percentile_levels,
                              ev.percentile_exemplars(rbar, cfg.evaluation.percentile_levels)):
            ex_rows.append([n, rep, resp, level, val[idx], float(rbar[idx])])
            if cfg.evaluation.plots:
                from . import plots
                name = f"exemplar_N{n:03d}_{rep}_{resp}_p{level:02d}.svg"
                t_axis = np.arange(true.shape[-1]) * cfg.hazard.dt_s
                plots.histories(run.path(name), t_axis, true[idx], pred[idx],
                                f"{resp}, N={n}, {level}th percentile")
                run.wrote(name)
    ev.write_csv(run.path("correlations.csv"),
                 ["n_train", "replicate", "response", "motion_id", "floor", "r"], corr_rows)
    ev.write_csv(run.path("box_stats.csv"),
                 ["n_train", "replicate", "response", "median", "q1", "q3", "whisker_low",
                  "whisker_high", "n_outliers"], box_rows)
    ev.write_csv(run.path("peak_scatter.csv"),
                 ["n_train", "replicate", "response", "motion_id", "floor", "true_peak",
                  "pred_peak"], scatter_rows)
    ev.write_csv(run.path("exemplars.csv"),
                 ["n_train", "replicate", "response", "percentile", "motion_id", "r_bar"], ex_rows)
    run.wrote("correlations.csv", "box_stats.csv", "peak_scatter.csv", "exemplars.csv")
    if cfg.evaluation.plots:
        from . import plots
        for resp, g in groups.items():
            name = f"correlation_box_{resp}.svg"
            plots.correlation_boxes(run.path(name), g, ylabel=f"mean r ({resp})")
            run.wrote(name)


def stage_exceedance(run: Run):
    """Per-window peak EDPs over the whole catalog: building runs vs the surrogate.

    The surrogate is the transfer model with the largest N (first replicate).
    """
    cfg = run.cfg
    events = _read_catalog(run)
    motions = _motions(run)
    sel = _selection(run)
    n_max = max(n for n, _, _ in target_sets(sel))
    rep = next(r for n, r, _ in target_sets(sel) if n == n_max)
    building = cfg.target_model.build()
    waves = [motions[e.motion_id] for e in events]
    true_pk = {"accel": [], "IDR": []}
    for w in waves:
        h = newmark_mdof(building, w)
        edp = ev.peak_edp(h, w.samples, absolute=cfg.evaluation.absolute_accel)
        true_pk["accel"].append(edp["pfa"])
        true_pk["IDR"].append(edp["idr"])
    rows = []
    curves = {}
    for resp in RESPONSES:
        name = _target_ckpt_name(n_max, rep, resp)
        ck = io.load_checkpoint(run.read(name), expected=cfg.network, kind="target")
        pred = np.concatenate([_predict(ck, waves[s:s + 256]) for s in range(0, len(waves), 256)])
        if resp == "accel" and cfg.evaluation.absolute_accel:
            pred = pred + np.array([w.samples for w in waves])[:, None, :]
        pk_p = np.max(np.abs(pred), axis=-1) if len(waves) else np.zeros((0, cfg.network.n_floors))
        pk_t = np.array(true_pk[resp]).reshape(len(waves), -1)
        # building-wide maximum over floors per event, then per window
        ev_t, ev_p = pk_t.max(axis=1), pk_p.max(axis=1)
        win = [e.window_index for e in events]
        wt = ev.window_maxima(win, ev_t, cfg.hazard.n_windows)
        wp = ev.window_maxima(win, ev_p, cfg.hazard.n_windows)
        hi = max([v for v in wt + wp if v is not None], default=1.0)
        x = np.linspace(0.0, hi, cfg.evaluation.n_thresholds)
        ct = ev.exceedance_curve(wt, x)
        cp = ev.exceedance_curve(wp, x)
        rows.extend([resp, float(a), float(b), float(c)]
                    for a, b, c in zip(x, ct.probabilities, cp.probabilities))
        curves[resp] = {"true": (x, ct.probabilities), "predicted": (x, cp.probabilities)}
    ev.write_csv(run.path("exceedance.csv"), ["response", "threshold", "p_true", "p_pred"], rows)
    run.wrote("exceedance.csv")
    if cfg.evaluation.plots:
        from . import plots
        for resp, c in curves.items():
            name = f"exceedance_{resp}.svg"
            label = "peak floor acceleration (m/s2)" if resp == "accel" else "peak IDR"
            plots.exceedance(run.path(name), c, label)
            run.wrote(name)


STAGE_FUNCS: Dict[str, Callable[[Run], None]] = {
    "catalog": stage_catalog, "synth": stage_synth, "select": stage_select,
    "simulate-target": stage_simulate_target, "calibrate": stage_calibrate,
    "simulate-source": stage_simulate_source, "train-source": stage_train_source,
    "train-target": stage_train_target, "evaluate": stage_evaluate,
    "exceedance": stage_exceedance,
}
