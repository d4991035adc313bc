"""Command-line front end: synth, estimate, sweep, report.

All commands accept --config pointing at a JSON file with optional
"system", "solvers" and "sweep" sections; anything omitted falls back
to defaults, and command-line flags override the file.  Outputs land
under $KRONSBL_OUT_ROOT (default ./runs) unless --out is given.

Exit codes: 0 success, 1 usage or configuration problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

import numpy as np

from . import __version__
from .channel import (
    SystemConfig,
    build_dictionary,
    gen_measurements,
    load_problem,
    save_problem,
    synth_channels,
)
from .errors import ConfigError, KronSBLError
from .metrics import nmse, srr
from .solvers import VARIANTS, SolverConfig, estimate
from .sweep import SweepSpec, read_records, run_sweep, summarize, write_plotdata
from ._io import dump_json, load_json


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this project reserves 2 for
    runtime failures, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def out_root() -> str:
    return os.environ.get("KRONSBL_OUT_ROOT", "runs")


def load_config(path) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = load_json(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return obj


def system_from_config(raw: dict, seed=None) -> SystemConfig:
    section = dict(raw.get("system", {}))
    unknown = set(section) - set(SystemConfig().__dict__)
    if unknown:
        raise ConfigError(f"unknown system config fields: {sorted(unknown)}")
    cfg = SystemConfig(**section)
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()


def solvers_from_config(raw: dict, only=None) -> dict:
    """Estimator table; defaults to all four variants in standard order."""
    section = raw.get("solvers")
    solvers: dict[str, SolverConfig] = {}
    if section is None:
        for name in VARIANTS:
            solvers[name] = SolverConfig(variant=name)
    else:
        for name, body in section.items():
            body = dict(body)
            body.setdefault("variant", name if name in VARIANTS else None)
            if body["variant"] not in VARIANTS:
                raise ConfigError(
                    f"solver {name!r} needs a valid 'variant' (one of {VARIANTS})")
            solvers[name] = SolverConfig(**body).validate()
    if only:
        missing = [n for n in only if n not in solvers]
        if missing:
            raise ConfigError(f"estimators not in config: {missing}")
        solvers = {n: solvers[n] for n in only}
    return solvers


def spec_from_config(raw: dict, seed=None, snr=None, trials=None, only=None) -> SweepSpec:
    sweep_sec = dict(raw.get("sweep", {}))
    grid = snr if snr is not None else sweep_sec.get("snr_db", [0, 5, 10, 15, 20, 25, 30])
    n_trials = trials if trials is not None else sweep_sec.get("trials", 50)
    return SweepSpec(
        system=system_from_config(raw, seed=seed),
        snr_db=tuple(float(s) for s in grid),
        trials=int(n_trials),
        solvers=solvers_from_config(raw, only=only),
        n_ser_symbols=int(sweep_sec.get("n_ser_symbols", 4000)),
        omp_sparsity=sweep_sec.get("omp_sparsity"),
    ).validate()


def _parse_snr_list(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --snr value {text!r}: {exc}") from exc


def cmd_synth(args) -> int:
    raw = load_config(args.config)
    cfg = system_from_config(raw, seed=args.seed)
    rng = np.random.default_rng(cfg.seed)
    truth = synth_channels(cfg, rng)
    meas = gen_measurements(cfg, truth, rng, snr_db=args.snr)
    out = args.out or os.path.join(out_root(), "problem.json")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_problem(out, cfg, truth, meas)
    print(f"wrote {out}: B={cfg.B} M={cfg.M} L={cfg.L} N={cfg.N} "
          f"K_I={cfg.K_I} K_P={cfg.K_P} support={truth.support.size} "
          f"sigma2={meas.sigma2:.4e}"
          + (f" snr={args.snr:g}dB" if args.snr is not None else ""))
    return 0


def cmd_estimate(args) -> int:
    raw = load_config(args.config)
    if not os.path.exists(args.problem):
        raise ConfigError(f"problem file not found: {args.problem}")
    cfg, truth, meas = load_problem(args.problem)
    solvers = solvers_from_config(raw)
    if args.variant not in solvers:
        solvers[args.variant] = SolverConfig(variant=args.variant)
    scfg = solvers[args.variant]
    if scfg.variant != args.variant:
        scfg = SolverConfig(**{**scfg.to_json(), "variant": args.variant})
    dic = build_dictionary(cfg, meas.x, meas.theta)
    res = estimate(dic, meas.y_tilde, meas.sigma2, scfg,
                   sparsity_k=cfg.P_MS * cfg.P_BS)
    m_nmse = nmse(truth, res.g_hat, dic, meas.theta)
    m_srr = srr(truth.g, res.g_hat)
    out = args.out or os.path.join(out_root(), "estimate.json")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    obj = res.to_json()
    obj["metrics"] = {"nmse": m_nmse, "srr": m_srr}
    dump_json(out, obj)
    print(f"{args.variant}: nmse={m_nmse:.4e} srr={m_srr:.3f} "
          f"iters={res.iterations} converged={res.converged} "
          f"elapsed={res.elapsed:.2f}s -> {out}")
    return 0


def cmd_sweep(args) -> int:
    raw = load_config(args.config)
    only = args.variant.split(",") if args.variant else None
    spec = spec_from_config(raw, seed=args.seed,
                            snr=_parse_snr_list(args.snr) if args.snr else None,
                            trials=args.trials, only=only)
    out = args.out or os.path.join(out_root(), "sweep")
    log = None if args.quiet else print
    records = run_sweep(spec, out, jobs=args.jobs, resume=args.resume, log=log)
    print(f"sweep complete: {len(records)} records in {out}")
    return 0


def cmd_report(args) -> int:
    records_path = os.path.join(args.results, "records.csv")
    manifest_path = os.path.join(args.results, "manifest.json")
    if not os.path.exists(records_path):
        raise ConfigError(f"no records.csv under {args.results}")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"no manifest.json under {args.results}")
    spec = SweepSpec.from_json(load_json(manifest_path))
    records = read_records(records_path)
    summary = summarize(records, spec)
    dump_json(os.path.join(args.results, "summary.json"), summary)
    write_plotdata(args.results, records, spec)

    names = list(spec.solvers.keys())
    print(f"{'snr_db':>7}  " + "".join(f"{n:>24}" for n in names))
    print(f"{'':7}  " + "".join(f"{'nmse / srr / ser':>24}" for _ in names))
    for snr in spec.snr_db:
        line = f"{snr:>7g}  "
        for name in names:
            cell = next(c for c in summary["cells"]
                        if c["snr_db"] == float(snr) and c["estimator"] == name)
            if cell.get("nmse_median") is None:
                line += f"{'-':>24}"
            else:
                line += (f"{cell['nmse_median']:>10.3e} "
                         f"{cell['srr_median']:>5.2f} "
                         f"{cell['ser_median']:>7.4f}")
        print(line)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="kronsbl",
                description="Kronecker-structured SBL channel estimation")
    p.add_argument("--version", action="version", version=f"kronsbl {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("synth", help="synthesize one problem instance")
    ps.add_argument("--config", default=None)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--snr", type=float, default=None,
                    help="set noise from this SNR (dB) instead of sigma2")
    ps.add_argument("--out", default=None)
    ps.set_defaults(func=cmd_synth)

    pe = sub.add_parser("estimate", help="run one estimator on a problem file")
    pe.add_argument("problem", help="problem JSON from 'synth'")
    pe.add_argument("--config", default=None)
    pe.add_argument("--variant", choices=VARIANTS, default="am")
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_estimate)

    pw = sub.add_parser("sweep", help="run a Monte-Carlo SNR sweep")
    pw.add_argument("--config", default=None)
    pw.add_argument("--seed", type=int, default=None)
    pw.add_argument("--snr", default=None, help="comma-separated grid, e.g. 0,10,20,30")
    pw.add_argument("--trials", type=int, default=None)
    pw.add_argument("--variant", default=None,
                    help="comma-separated subset of configured estimators")
    pw.add_argument("--jobs", type=int, default=1)
    pw.add_argument("--out", default=None)
    pw.add_argument("--resume", action="store_true",
                    help="continue an interrupted sweep in the same directory")
    pw.add_argument("--quiet", action="store_true")
    pw.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("report", help="aggregate a sweep directory")
    pr.add_argument("results", help="directory written by 'sweep'")
    pr.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"kronsbl: error: {exc}", file=sys.stderr)
        return 1
    except KronSBLError as exc:
        print(f"kronsbl: solver failure: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
