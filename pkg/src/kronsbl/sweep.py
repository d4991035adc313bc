"""Monte-Carlo SNR sweeps comparing the estimators on identical data.

Every (snr, trial) cell synthesizes one channel + measurement set from a
seed sequence keyed by (master seed, snr index, trial index), runs every
configured estimator on the same data under a single-threaded BLAS
limit, and appends one CSV row per estimator as soon as it finishes.
Results are therefore reproducible for a fixed spec regardless of the
worker count, and an interrupted run can be resumed.
"""

from __future__ import annotations

import csv
import datetime
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._kernels import BACKEND
from .channel import SystemConfig, build_dictionary, gen_measurements, synth_channels
from .errors import ConfigError, SolverDiverged
from .metrics import nmse, ser_experiment, srr
from .solvers import SolverConfig, estimate
from ._io import dump_json, load_json

RECORD_FIELDS = ("snr_db", "trial", "estimator", "nmse", "srr", "ser",
                 "elapsed_s", "iterations", "converged", "flagged", "notes")
METRIC_FIELDS = ("nmse", "srr", "ser", "iterations")
PANELS = ("nmse", "srr", "ser", "runtime")


@dataclass
class TrialRecord:
    snr_db: float
    trial: int
    estimator: str
    nmse: float
    srr: float
    ser: float
    elapsed_s: float
    iterations: int
    converged: bool
    flagged: bool
    notes: str = ""

    def to_row(self) -> list[str]:
        return [repr(float(self.snr_db)), str(self.trial), self.estimator,
                repr(float(self.nmse)), repr(float(self.srr)), repr(float(self.ser)),
                repr(float(self.elapsed_s)), str(self.iterations),
                str(bool(self.converged)), str(bool(self.flagged)), self.notes]

    @classmethod
    def from_row(cls, row) -> "TrialRecord":
        return cls(snr_db=float(row[0]), trial=int(row[1]), estimator=row[2],
                   nmse=float(row[3]), srr=float(row[4]), ser=float(row[5]),
                   elapsed_s=float(row[6]), iterations=int(row[7]),
                   converged=row[8] == "True", flagged=row[9] == "True",
                   notes=row[10] if len(row) > 10 else "")


@dataclass
class SweepSpec:
    """Everything needed to reproduce a sweep."""

    system: SystemConfig
    snr_db: tuple
    trials: int
    solvers: dict                    # name -> SolverConfig, order = output order
    n_ser_symbols: int = 4000
    omp_sparsity: int | None = None  # None -> P_MS * P_BS

    def validate(self) -> "SweepSpec":
        self.system.validate()
        if len(self.snr_db) == 0:
            raise ConfigError("snr_db grid is empty")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.solvers:
            raise ConfigError("no estimators configured")
        for name, scfg in self.solvers.items():
            scfg.validate()
        if self.n_ser_symbols < 1:
            raise ConfigError("n_ser_symbols must be >= 1")
        return self

    def to_json(self) -> dict:
        return {
            "system": self.system.to_json(),
            "solvers": {name: scfg.to_json() for name, scfg in self.solvers.items()},
            "sweep": {
                "snr_db": list(self.snr_db),
                "trials": self.trials,
                "n_ser_symbols": self.n_ser_symbols,
                "omp_sparsity": self.omp_sparsity,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SweepSpec":
        sw = obj.get("sweep", {})
        return cls(
            system=SystemConfig.from_json(obj["system"]),
            snr_db=tuple(sw["snr_db"]),
            trials=int(sw["trials"]),
            solvers={name: SolverConfig.from_json(sc)
                     for name, sc in obj["solvers"].items()},
            n_ser_symbols=int(sw.get("n_ser_symbols", 4000)),
            omp_sparsity=sw.get("omp_sparsity"),
        ).validate()


def trial_rng(seed: int, snr_idx: int, trial: int, stream: int = 0):
    """Independent generator for one cell; stream 1 is the SER channel use."""
    key = (snr_idx, trial) if stream == 0 else (snr_idx, trial, stream)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def run_trial(spec: SweepSpec, snr_idx: int, trial: int) -> list[TrialRecord]:
    """Synthesize one cell and run every estimator on the same data."""
    cfg = spec.system
    snr = float(spec.snr_db[snr_idx])
    rng = trial_rng(cfg.seed, snr_idx, trial)
    truth = synth_channels(cfg, rng)
    meas = gen_measurements(cfg, truth, rng, snr_db=snr)
    dic = build_dictionary(cfg, meas.x, meas.theta)
    k_omp = spec.omp_sparsity if spec.omp_sparsity else cfg.P_MS * cfg.P_BS

    records = []
    for name, scfg in spec.solvers.items():
        notes = []
        try:
            with threadpool_limits(limits=1):
                res = estimate(dic, meas.y_tilde, meas.sigma2, scfg, sparsity_k=k_omp)
        except SolverDiverged as exc:
            records.append(TrialRecord(
                snr_db=snr, trial=trial, estimator=name,
                nmse=float("nan"), srr=float("nan"), ser=float("nan"),
                elapsed_s=float("nan"), iterations=getattr(exc, "iteration", 0) or 0,
                converged=False, flagged=True, notes="diverged"))
            continue
        notes.extend(sorted(res.flags))
        rec_nmse = nmse(truth, res.g_hat, dic, meas.theta)
        rec_srr = srr(truth.g, res.g_hat)
        rng_ser = trial_rng(cfg.seed, snr_idx, trial, stream=1)
        rec_ser, ser_flags = ser_experiment(
            truth, res.g_hat, dic, cfg, spec.n_ser_symbols, rng_ser, meas.sigma2)
        notes.extend(sorted(ser_flags))
        records.append(TrialRecord(
            snr_db=snr, trial=trial, estimator=name,
            nmse=rec_nmse, srr=rec_srr, ser=rec_ser,
            elapsed_s=res.elapsed, iterations=res.iterations,
            converged=res.converged, flagged=False, notes=";".join(notes)))
    return records


def _append_records(path, records, write_header):
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if write_header:
            w.writerow(RECORD_FIELDS)
        for rec in records:
            w.writerow(rec.to_row())
        fh.flush()
        os.fsync(fh.fileno())


def read_records(path) -> list[TrialRecord]:
    records = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or list(header)[:3] != ["snr_db", "trial", "estimator"]:
            raise ConfigError(f"{path} is not a sweep record file")
        for row in r:
            if row:
                records.append(TrialRecord.from_row(row))
    return records


def summarize(records: list[TrialRecord], spec: SweepSpec) -> dict:
    """Per-cell medians/means over unflagged records."""
    cells = []
    names = list(spec.solvers.keys())
    for snr in spec.snr_db:
        for name in names:
            rows = [r for r in records
                    if r.estimator == name and r.snr_db == float(snr)]
            ok = [r for r in rows if not r.flagged]
            cell = {"snr_db": float(snr), "estimator": name,
                    "n": len(rows), "n_flagged": len(rows) - len(ok)}
            if ok:
                for fieldname in ("nmse", "srr", "ser", "elapsed_s", "iterations"):
                    vals = np.array([getattr(r, fieldname) for r in ok], dtype=float)
                    cell[f"{fieldname}_median"] = float(np.median(vals))
                    cell[f"{fieldname}_mean"] = float(np.mean(vals))
                cell["n_converged"] = sum(1 for r in ok if r.converged)
            cells.append(cell)
    return {"cells": cells}


def write_plotdata(out_dir, records, spec: SweepSpec):
    """One CSV per result panel: x = snr_db, one column per estimator."""
    plot_dir = os.path.join(out_dir, "plotdata")
    os.makedirs(plot_dir, exist_ok=True)
    names = list(spec.solvers.keys())
    panel_field = {"nmse": "nmse", "srr": "srr", "ser": "ser", "runtime": "elapsed_s"}
    paths = {}
    for panel in PANELS:
        fieldname = panel_field[panel]
        path = os.path.join(plot_dir, f"{panel}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snr_db"] + names)
            for snr in spec.snr_db:
                row = [repr(float(snr))]
                for name in names:
                    vals = [getattr(r, fieldname) for r in records
                            if r.estimator == name and r.snr_db == float(snr)
                            and not r.flagged]
                    row.append(repr(float(np.median(vals))) if vals else "nan")
                w.writerow(row)
        paths[panel] = path
    return paths


def _sort_key(spec):
    snr_pos = {float(s): i for i, s in enumerate(spec.snr_db)}
    est_pos = {name: i for i, name in enumerate(spec.solvers.keys())}
    def key(rec):
        return (snr_pos.get(rec.snr_db, len(snr_pos)), rec.trial,
                est_pos.get(rec.estimator, len(est_pos)))
    return key


def write_manifest(out_dir, spec: SweepSpec, status: str, extra=None):
    obj = spec.to_json()
    obj["meta"] = {
        "package": f"kronsbl {__version__}",
        "kernel_backend": BACKEND,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "status": status,
        "records": "records.csv",
    }
    if extra:
        obj["meta"].update(extra)
    dump_json(os.path.join(out_dir, "manifest.json"), obj)


def run_sweep(spec: SweepSpec, out_dir, jobs: int = 1, resume: bool = False,
              log=None) -> list[TrialRecord]:
    """Run (or resume) the full sweep and write all artifacts to out_dir.

    Artifacts: manifest.json (re-runnable as a config file), records.csv
    (one row per estimator per trial, appended incrementally, rewritten
    sorted at the end), summary.json, and plotdata/{nmse,srr,ser,runtime}.csv.
    """
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    records_path = os.path.join(out_dir, "records.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")

    done = set()
    records: list[TrialRecord] = []
    if resume and os.path.exists(records_path):
        if os.path.exists(manifest_path):
            old = load_json(manifest_path)
            old.pop("meta", None)
            if old != spec.to_json():
                raise ConfigError(
                    f"{out_dir} holds a sweep with a different spec; "
                    "refusing to resume into it")
        records = read_records(records_path)
        done = {(r.snr_db, r.trial, r.estimator) for r in records}
    elif os.path.exists(records_path) and not resume:
        raise ConfigError(
            f"{records_path} already exists; pass resume=True to continue it")

    write_manifest(out_dir, spec, status="running")
    names = list(spec.solvers.keys())
    todo = [(si, t) for si in range(len(spec.snr_db)) for t in range(spec.trials)
            if any((float(spec.snr_db[si]), t, n) not in done for n in names)]
    write_header = not os.path.exists(records_path)

    def consume(batch):
        nonlocal write_header
        fresh = [r for r in batch if (r.snr_db, r.trial, r.estimator) not in done]
        _append_records(records_path, fresh, write_header)
        write_header = False
        records.extend(fresh)
        if log:
            for r in fresh:
                log(f"snr={r.snr_db:g} trial={r.trial} {r.estimator}: "
                    f"nmse={r.nmse:.3e} srr={r.srr:.3f} ser={r.ser:.4f} "
                    f"iters={r.iterations} t={r.elapsed_s:.2f}s"
                    + (" FLAGGED" if r.flagged else ""))

    if jobs <= 1:
        for si, t in todo:
            consume(run_trial(spec, si, t))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(run_trial, spec, si, t): (si, t) for si, t in todo}
            for fut in as_completed(futs):
                consume(fut.result())

    records.sort(key=_sort_key(spec))
    with open(records_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for rec in records:
            w.writerow(rec.to_row())

    dump_json(os.path.join(out_dir, "summary.json"), summarize(records, spec))
    write_plotdata(out_dir, records, spec)
    write_manifest(out_dir, spec, status="complete",
                   extra={"n_records": len(records)})
    return records
