"""Command-line front end: ``bpmm gen|run|compare|interference-check``.

Exit codes: 0 success, 1 usage or input error, 2 scheduler feasibility abort.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import json
import math
import os
import sys

import numpy as np

from . import network, sim
from .channel import evaluate_interference
from .schedulers import InfeasibleSchedule, SchedulerKind

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 1, 2
SCHEDULER_NAMES = [k.value for k in SchedulerKind]
POLICY_NAMES = ["single_dest", "over_power", "split_power", "waterfilling"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_drop(path):
    try:
        with open(path) as fh:
            return network.loads(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load drop {path}: {exc}") from exc


_CFG_FLAGS = {  # flag dest -> SimConfig field
    "scheduler": "scheduler", "frames": "frames", "sim_seed": "seed", "arrival_mode": "arrival_mode",
    "record_interval": "record_interval", "exhaustive_max_n": "exhaustive_max_n",
    "mp_max_iters": "mp_max_iters", "mp_policy": "mp_policy", "milp_method": "milp_method",
    "v_factor": "v_factor",
}


def build_config(args, base: dict | None = None) -> sim.SimConfig:
    """Config file values (if any) overridden by explicitly given flags."""
    d = dict(base or {})
    if getattr(args, "config", None):
        d.update(_read_json(args.config))
    for dest, fld in _CFG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            d[fld] = v
    try:
        return sim.SimConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _add_sim_flags(p, scheduler_default=None):
    p.add_argument("--scheduler", choices=SCHEDULER_NAMES, default=scheduler_default,
                   help="scheduling algorithm (default: exactmbp, or the config file value)")
    p.add_argument("--frames", type=int, help="number of frames to simulate (default 200000)")
    p.add_argument("--config", help="JSON file with SimConfig fields; flags override it")
    p.add_argument("--sim-seed", type=int, dest="sim_seed", help="seed of the simulation random stream (default 0)")
    p.add_argument("--arrival-mode", choices=["fluid", "poisson"], help="arrival process (default fluid)")
    p.add_argument("--record-interval", type=int, help="frames between rows of frames.csv (default 1)")
    p.add_argument("--exhaustive-max-n", type=int, help="node limit of the exact searches (default 20)")
    p.add_argument("--mp-max-iters", type=int, help="message-passing iteration cap (default 100)")
    p.add_argument("--mp-policy", choices=POLICY_NAMES,
                   help="power policy of message-passing schedulers (default: the scheduler's own)")
    p.add_argument("--milp-method", choices=["roles", "bnb"],
                   help="MILP solver: exact role search or LP branch and bound (default roles)")
    p.add_argument("--v-factor", type=float, help="congestion control V as a multiple of C_max^2 (default 10)")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bpmm", description="Back-pressure scheduling simulator for mmWave relay networks.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a random drop and write it as JSON")
    g.add_argument("--seed", type=int, default=0, help="drop seed (default 0)")
    g.add_argument("--n-ue", type=int, default=10, help="number of UEs (default 10)")
    g.add_argument("--radius", type=float, default=200.0, help="UE disk radius in meters (default 200)")
    g.add_argument("--out", required=True, help="output drop file")
    g.add_argument("--no-fading", action="store_true", help="omit fading matrices (smaller file)")

    r = sub.add_parser("run", help="simulate one drop with one scheduler")
    r.add_argument("drop", help="drop file written by 'gen'")
    _add_sim_flags(r)
    r.add_argument("--out-dir", default=".", help="directory of the output files (default .)")
    r.add_argument("--summary-path", help="summary JSON path (default OUT_DIR/summary.json)")
    r.add_argument("--frames-path", help="per-frame CSV path (default OUT_DIR/frames.csv)")
    r.add_argument("--histogram-path", help="schedule histogram CSV path (default OUT_DIR/histogram.csv)")

    c = sub.add_parser("compare", help="run every (drop seed, scheduler) cell of a manifest")
    c.add_argument("manifest", help="JSON with 'seeds', 'schedulers', optional 'config', 'out_dir', 'n_ue', "
                                    "'radius'")
    c.add_argument("--out-dir", help="output directory (overrides the manifest)")
    c.add_argument("--workers", type=int, help="parallel cells (default: BPMM_THREADS or CPU count)")

    i = sub.add_parser("interference-check", help="compare interference-free and SINR link rates")
    i.add_argument("drop", help="drop file written by 'gen' (with fading)")
    _add_sim_flags(i, scheduler_default="sfwbf")
    i.add_argument("--warmup", type=int, default=None, help="frames skipped before sampling (default frames/2)")
    i.add_argument("--out", help="per-link CSV output path")
    return ap


# -- commands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.n_ue < 1:
        raise UsageError("--n-ue must be at least 1")
    topo = network.generate_drop(args.seed, n_ue=args.n_ue, radius=args.radius)
    try:
        sim.atomic_write(args.out, network.dumps(topo, include_fading=not args.no_fading))
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from exc
    diag = network.validate(topo)
    print(f"wrote {args.out}: {topo.n_nodes} nodes, {len(topo.channels)} links, omega_max {diag.omega_max}"
          + ("" if diag.ok else f", flags: {', '.join(diag.flags)}"))
    return EXIT_OK


def _run_checked(topo, cfg):
    diag = network.validate(topo)
    if not diag.ok:
        print(f"warning: drop diagnostics: {', '.join(diag.flags)}", file=sys.stderr)
    return sim.run(topo, cfg)


def cmd_run(args) -> int:
    topo = _load_drop(args.drop)
    cfg = build_config(args)
    try:
        res = _run_checked(topo, cfg)
    except InfeasibleSchedule as exc:
        print(f"feasibility auditor abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    names = {}
    for key, flag in (("summary_name", args.summary_path), ("frames_name", args.frames_path),
                      ("histogram_name", args.histogram_path)):
        if flag:
            names[key] = os.path.abspath(flag)
    try:
        paths = sim.write_outputs(res, args.out_dir, **names)
    except OSError as exc:
        raise UsageError(f"cannot write outputs: {exc}") from exc
    s = res.summary
    print(f"{s.scheduler}: sum_rate {s.sum_rate:.6g} bits/frame, utility {s.utility:.6g}, "
          f"coverage95 {s.coverage95} -> {paths['summary']}")
    return EXIT_OK


def _cell(job):
    seed, kind, index, cfg_dict, n_ue, radius = job
    d = dict(cfg_dict, scheduler=kind, seed=seed ^ index)
    try:
        topo = network.generate_drop(seed, n_ue=n_ue, radius=radius)
        s = sim.run(topo, sim.SimConfig.from_dict(d)).summary
        return {"seed": seed, "scheduler": kind, "status": "ok", "sum_rate": s.sum_rate, "utility": s.utility,
                "fairness_violation": s.fairness_violation, "coverage95": s.coverage95,
                "final_max_queue": s.final_max_queue, "error": ""}
    except Exception as exc:  # a failed cell is recorded, the comparison goes on
        return {"seed": seed, "scheduler": kind, "status": "failed", "sum_rate": math.nan, "utility": math.nan,
                "fairness_violation": "", "coverage95": "", "final_max_queue": math.nan,
                "error": f"{type(exc).__name__}: {exc}"}


CELL_COLUMNS = ["row", "seed", "scheduler", "status", "sum_rate", "utility", "fairness_violation", "coverage95",
                "final_max_queue", "error"]
DOMINANCE_CHAIN = ("mfwlinop", "sfwbf", "mwm")


def compare_tables(cells: list, schedulers: list, seeds: list):
    """Cell rows, per-scheduler mean/std rows, dominance rows and a summary dict."""
    rows = [dict(c, row="cell") for c in cells]
    by = {(c["seed"], c["scheduler"]): c for c in cells}
    means = {}
    for kind in schedulers:
        ok = [c for c in cells if c["scheduler"] == kind and c["status"] == "ok"]
        sr = np.array([c["sum_rate"] for c in ok])
        ut = np.array([c["utility"] for c in ok])
        # utilities of starved drops are -inf, whose spread is nan
        with np.errstate(invalid="ignore"):
            stats = {"mean": (sr.mean() if sr.size else math.nan, ut.mean() if ut.size else math.nan),
                     "std": (sr.std() if sr.size else math.nan, ut.std() if ut.size else math.nan)}
        means[kind] = stats["mean"][0]
        for name, (a, b) in stats.items():
            rows.append({"row": name, "seed": "", "scheduler": kind, "status": f"n={len(ok)}", "sum_rate": a,
                         "utility": b, "fairness_violation": "", "coverage95": "", "final_max_queue": "",
                         "error": ""})
    chain = [k for k in DOMINANCE_CHAIN if k in schedulers]
    dominance = []
    violations = []
    for seed in seeds:
        row = {"seed": seed}
        for hi, lo in zip(chain, chain[1:]):
            a, b = by.get((seed, hi)), by.get((seed, lo))
            if a is None or b is None or a["status"] != "ok" or b["status"] != "ok":
                row[f"{hi}_ge_{lo}"] = ""
                continue
            holds = a["sum_rate"] >= b["sum_rate"]
            row[f"{hi}_ge_{lo}"] = holds
            if not holds:
                violations.append({"seed": seed, "pair": [hi, lo]})
        dominance.append(row)
    summary = {"mean_sum_rate": means, "dominance_violations": violations,
               "failed_cells": [c for c in cells if c["status"] != "ok"]}
    if "sfwmp" in means and "mwm" in means and means["mwm"] > 0:
        summary["sfwmp_over_mwm"] = means["sfwmp"] / means["mwm"]
    if "sfwbf" in means and "mwm" in means and means["mwm"] > 0:
        summary["sfwbf_over_mwm"] = means["sfwbf"] / means["mwm"]
    dom_cols = ["seed"] + [f"{hi}_ge_{lo}" for hi, lo in zip(chain, chain[1:])]
    return rows, dominance, dom_cols, summary


def _workers(explicit, n_jobs):
    if explicit:
        return max(1, min(explicit, n_jobs))
    env = os.environ.get("BPMM_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def cmd_compare(args) -> int:
    man = _read_json(args.manifest)
    seeds = man.get("seeds") or []
    schedulers = man.get("schedulers") or []
    if not seeds or not schedulers:
        raise UsageError("manifest needs at least one seed and one scheduler")
    bad = [k for k in schedulers if k not in SCHEDULER_NAMES]
    if bad:
        raise UsageError(f"unknown schedulers in manifest: {bad}")
    cfg = man.get("config") or {}
    if isinstance(cfg, str):
        cfg = _read_json(os.path.join(os.path.dirname(os.path.abspath(args.manifest)), cfg))
    try:
        cfg_dict = sim.SimConfig.from_dict(dict(cfg, scheduler=schedulers[0])).to_dict()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    cfg_dict.pop("scheduler")
    cfg_dict.pop("seed")
    out_dir = args.out_dir or man.get("out_dir") or "."
    jobs = [(int(seed), kind, idx, cfg_dict, int(man.get("n_ue", 10)), float(man.get("radius", 200.0)))
            for idx, (seed, kind) in enumerate((s, k) for s in seeds for k in schedulers)]
    n_workers = _workers(args.workers, len(jobs))
    if n_workers == 1:
        cells = [_cell(j) for j in jobs]
    else:
        with cf.ProcessPoolExecutor(max_workers=n_workers) as pool:
            cells = list(pool.map(_cell, jobs))
    rows, dominance, dom_cols, summary = compare_tables(cells, schedulers, [int(s) for s in seeds])
    sim.atomic_write(os.path.join(out_dir, "comparison.csv"),
                     sim._csv_text(CELL_COLUMNS, ([r[c] for c in CELL_COLUMNS] for r in rows)))
    sim.atomic_write(os.path.join(out_dir, "dominance.csv"),
                     sim._csv_text(dom_cols, ([r[c] for c in dom_cols] for r in dominance)))
    sim.atomic_write(os.path.join(out_dir, "compare_summary.json"),
                     json.dumps(summary, indent=2, default=str) + "\n")
    print(f"{len(cells)} cells ({len(summary['failed_cells'])} failed), "
          f"{len(summary['dominance_violations'])} dominance violations -> {out_dir}")
    for k in ("sfwbf_over_mwm", "sfwmp_over_mwm"):
        if k in summary:
            print(f"{k}: {summary[k]:.3f}")
    return EXIT_OK


def interference_study(topo, cfg: sim.SimConfig, warmup: int):
    """Per-link interference reports of every schedule after ``warmup`` frames."""
    reports = []

    def on_frame(t, sch):
        if t >= warmup and sch.active_links:
            reports.append(evaluate_interference(sch, topo))

    sim.run(topo, cfg, on_frame=on_frame)
    return reports


def cmd_interference(args) -> int:
    topo = _load_drop(args.drop)
    if any(ch.fading is None for ch in topo.channels.values()):
        raise UsageError("the drop has no fading matrices; regenerate it without --no-fading")
    cfg = build_config(args, base={"frames": 2000})
    warmup = cfg.frames // 2 if args.warmup is None else args.warmup
    try:
        reports = interference_study(topo, cfg, warmup)
    except InfeasibleSchedule as exc:
        print(f"feasibility auditor abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    rows = []
    for k, rep in enumerate(reports):
        for j, (n, m) in enumerate(rep.links):
            rows.append([k, n, m, rep.if_rate[j], rep.sinr_rate[j], rep.inr[j], rep.rate_gap[j]])
    gaps = np.array([r[-1] for r in rows])
    med = float(np.median(gaps)) if gaps.size else 0.0
    if args.out:
        sim.atomic_write(args.out, sim._csv_text(["sample", "tx", "rx", "if_rate", "sinr_rate", "inr", "rate_gap"],
                                                 rows))
    print(f"{len(rows)} link samples over {len(reports)} schedules: median rate gap {med:.4%}, "
          f"mean {float(gaps.mean()) if gaps.size else 0.0:.4%}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare, "interference-check": cmd_interference}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"bpmm {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
