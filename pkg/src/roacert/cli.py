"""Command-line front end: train, verify, baseline, report, systems.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Defaults mirror
the benchmark setup (512 hidden units, lr 5e-4, 50x50 grid,
delta = 1e-6 * grid step, eps = 1e-4 clamped to the derived origin
radius), so train + verify + report with only --system reproduces the
reference experiment shape.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys as _sys

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import figures
from .lyapunov import load_model, save_model
from .train import TrainConfig, make_grid, roa_membership_hard, train, \
    train_quadratic_baseline, write_training_log
from .verify import VerifyConfig, certify, write_report_csv, \
    write_summary_json

QUARTIC_UNSTABLE_EQUILIBRIA = [(0.0, 1.0), (1.0, 0.0), (-1.0, 0.0)]


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _load_system_arg(spec: str) -> dyn.DynSystem:
    if os.path.exists(spec):
        with open(spec) as fh:
            return dyn.load_system(fh.read())
    return dyn.load_builtin(spec)


def _outpath(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_manifest(args, files: dict, system: str, config_echo: dict):
    path = _outpath(args, "run_manifest.json")
    doc = {"tool_version": __version__, "system": system,
           "config": config_echo, "files": files}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return path


def cmd_systems(_args) -> int:
    for name in sorted(dyn.BUILTIN_CONFIGS):
        print(name)
    return 0


def cmd_train(args) -> int:
    system = _load_system_arg(args.system)
    cfg = TrainConfig(hidden=args.hidden, lr=args.lr, epochs=args.epochs,
                      grid_per_dim=args.grid, eps_vdot=args.eps_vdot,
                      sigmoid_k=args.sigmoid_k, beta=args.beta,
                      seed=args.seed)
    result = train(system, cfg)
    model_path = args.out or _outpath(args, f"{system.name}.model")
    meta = {"seed": cfg.seed, "epochs": cfg.epochs, "lr": cfg.lr,
            "grid_per_dim": cfg.grid_per_dim, "eps_vdot": cfg.eps_vdot,
            "sigmoid_k": cfg.sigmoid_k, "beta": cfg.beta,
            "best_epoch": result.best_epoch,
            "best_cardinality": result.best_cardinality}
    save_model(model_path, result.candidate, meta)
    log_path = args.log or model_path + ".log.csv"
    write_training_log(log_path, result.log)
    _write_manifest(args, {"model": model_path, "log": log_path},
                    system.name, meta)
    print(f"trained {system.name}: best hard cardinality "
          f"{result.best_cardinality} at epoch {result.best_epoch}")
    print(f"model: {model_path}")
    print(f"log:   {log_path}")
    return 0


def _run_verify(args, candidate, metadata, model_path):
    grid_per_dim = args.grid or metadata.get("grid_per_dim", 50)
    grid = make_grid(candidate.sys.domain, grid_per_dim)
    eps_vdot = metadata.get("eps_vdot", 1e-3)
    eps = args.eps
    if eps > candidate.origin.eps:
        print(f"warning: requested eps {eps:g} exceeds the derived "
              f"origin-decay radius {candidate.origin.eps:g}; clamping")
        eps = candidate.origin.eps
    cfg = VerifyConfig(delta_sat=args.delta_scale * grid.step,
                       eps_ball=eps, gamma=grid.step,
                       max_boxes=args.max_boxes, workers=args.workers)
    mask = roa_membership_hard(candidate, grid, eps_vdot)
    report = certify(candidate, mask, grid, cfg)
    stem = os.path.splitext(os.path.basename(model_path))[0]
    report_path = args.report or _outpath(args, f"{stem}.report.csv")
    summary_path = args.summary or _outpath(args, f"{stem}.summary.json")
    write_report_csv(report_path, report, grid)
    write_summary_json(summary_path, report)
    print(f"members {report.counts['members']}, certified "
          f"{report.counts['certified']}, counterexamples "
          f"{report.counts['counterexample'] + report.counts['delta_counterexample']}"
          f", c_max {report.c_max_empirical:g}")
    print(f"report:  {report_path}")
    print(f"summary: {summary_path}")
    return report, report_path, summary_path


def cmd_verify(args) -> int:
    candidate, metadata = load_model(args.model)
    _, report_path, summary_path = _run_verify(args, candidate, metadata,
                                               args.model)
    _write_manifest(args, {"model": args.model, "report": report_path,
                           "summary": summary_path},
                    candidate.sys.name,
                    {"delta_scale": args.delta_scale, "eps": args.eps,
                     "workers": args.workers})
    return 0


def cmd_baseline(args) -> int:
    system = _load_system_arg(args.system)
    cfg = TrainConfig(hidden=1, lr=args.lr, epochs=args.epochs,
                      grid_per_dim=args.grid or 50, eps_vdot=args.eps_vdot,
                      sigmoid_k=args.sigmoid_k, beta=args.beta,
                      seed=args.seed)
    result = train_quadratic_baseline(system, cfg,
                                      optimize=(args.kind == "optimized"))
    model_path = args.out or _outpath(args,
                                      f"{system.name}.{args.kind}.model")
    meta = {"kind": args.kind, "seed": cfg.seed, "epochs": cfg.epochs,
            "lr": cfg.lr, "grid_per_dim": cfg.grid_per_dim,
            "eps_vdot": cfg.eps_vdot,
            "best_cardinality": result.best_cardinality}
    save_model(model_path, result.candidate, meta)
    log_path = model_path + ".log.csv"
    write_training_log(log_path, result.log)
    report, report_path, summary_path = _run_verify(args, result.candidate,
                                                    meta, model_path)
    _write_manifest(args, {"model": model_path, "log": log_path,
                           "report": report_path, "summary": summary_path},
                    system.name, meta)
    return 0


def _read_report_masks(path: str):
    members, certified, idx = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            idx.append(int(row["grid_index"]))
            members.append(int(row["member_before"]))
            certified.append(int(row["certified"]))
    order = np.argsort(idx)
    return (np.array(members, dtype=bool)[order],
            np.array(certified, dtype=bool)[order])


def cmd_report(args) -> int:
    candidate, metadata = load_model(args.model)
    system = candidate.sys
    grid = make_grid(system.domain, args.grid or
                     metadata.get("grid_per_dim", 50))
    members, certified = _read_report_masks(args.report)
    dom = [(iv.lo, iv.hi) for iv in system.domain.intervals]

    xs, ys, ZV = figures.render_field(candidate.V_batch, dom, args.res)
    _, _, ZD = figures.render_field(candidate.Vdot_batch, dom, args.res)
    green = figures.cell_union_outline(certified, grid.points, grid.shape,
                                       grid.step)
    blue = figures.cell_union_outline(members, grid.points, grid.shape,
                                      grid.step)
    empty_note = [] if certified.any() else ["empty certified set"]

    name = system.name
    v_path = _outpath(args, f"{name}_V.svg")
    with open(v_path, "w") as fh:
        fh.write(figures.contour_figure(
            f"{name}: Lyapunov function", dom, xs, ys, ZV,
            figures.quantile_levels(ZV),
            overlays=[(green, figures.COLOR_VERIFIED)],
            annotations=empty_note))
    vd_path = _outpath(args, f"{name}_Vdot.svg")
    with open(vd_path, "w") as fh:
        fh.write(figures.contour_figure(
            f"{name}: Lyapunov function derivative", dom, xs, ys, ZD,
            figures.quantile_levels(ZD) + [0.0],
            overlays=[(green, figures.COLOR_VERIFIED)],
            annotations=empty_note))

    overlays = [(blue, figures.COLOR_TRAINED),
                (green, figures.COLOR_VERIFIED)]
    legend = [("trained estimate", figures.COLOR_TRAINED),
              ("verified inner approx.", figures.COLOR_VERIFIED)]
    for label, model_arg, summary_arg, color in (
            ("quadratic", args.quadratic_model, args.quadratic_summary,
             figures.COLOR_QUAD),
            ("optimized quadratic", args.optimized_model,
             args.optimized_summary, figures.COLOR_QUAD_OPT)):
        if not model_arg or not summary_arg:
            continue
        qcand, _ = load_model(model_arg)
        with open(summary_arg) as fh:
            c_max = json.load(fh)["c_max_empirical"]
        _, _, ZQ = figures.render_field(qcand.V_batch, dom, args.res)
        overlays.append((figures.marching_squares(xs, ys, ZQ, c_max), color))
        legend.append((label, color))

    markers = []
    if name == "quartic_interaction":
        markers = [(pt, "black") for pt in QUARTIC_UNSTABLE_EQUILIBRIA]
    trajectories = []
    seeds_per_dim = 12
    for sx in np.linspace(dom[0][0], dom[0][1], seeds_per_dim + 2)[1:-1]:
        for sy in np.linspace(dom[1][0], dom[1][1], seeds_per_dim + 2)[1:-1]:
            try:
                traj = dyn.integrate_rk4(system, [sx, sy], 0.02, 8.0)
            except dyn.SystemError_:
                continue
            pts = traj.states[::4]
            trajectories.append([(float(a), float(b)) for a, b in pts])
    roa_path = _outpath(args, f"{name}_roa.svg")
    with open(roa_path, "w") as fh:
        fh.write(figures.phase_portrait_figure(
            f"{name}: region of attraction estimates", dom, trajectories,
            overlays=overlays, markers=markers, annotations=empty_note,
            legend=legend))

    fields_path = _outpath(args, f"{name}_fields.csv")
    with open(fields_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "V", "Vdot"])
        for i in range(len(xs)):
            for j in range(len(ys)):
                w.writerow([repr(float(xs[i])), repr(float(ys[j])),
                            repr(float(ZV[i, j])), repr(float(ZD[i, j]))])
    _write_manifest(args, {"V": v_path, "Vdot": vd_path, "roa": roa_path,
                           "fields": fields_path}, name, {})
    for p in (v_path, vd_path, roa_path, fields_path):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="roacert",
        description="Learn and certify neural Lyapunov RoA estimates")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--workers", type=_positive_int, default=1)

    p = sub.add_parser("systems", help="list builtin systems")
    common(p)
    p.set_defaults(func=cmd_systems)

    p = sub.add_parser("train", help="train a neural Lyapunov candidate")
    common(p)
    p.add_argument("--system", required=True,
                   help="builtin name or config file path")
    p.add_argument("--hidden", type=_positive_int, default=512)
    p.add_argument("--lr", type=_positive_float, default=5e-4)
    p.add_argument("--grid", type=_positive_int, default=50)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--eps-vdot", type=_positive_float, default=1e-3)
    p.add_argument("--sigmoid-k", type=_positive_float, default=50.0)
    p.add_argument("--beta", type=_positive_float, default=1.2)
    p.add_argument("--out", help="model file path")
    p.add_argument("--log", help="training log CSV path")
    p.set_defaults(func=cmd_train)

    def verify_flags(p):
        p.add_argument("--delta-scale", type=_positive_float, default=1e-6,
                       help="delta_sat = delta-scale * grid step")
        p.add_argument("--eps", type=_positive_float, default=1e-4,
                       help="origin exclusion radius (clamped to derived)")
        p.add_argument("--max-boxes", type=_positive_int, default=1_000_000)
        p.add_argument("--grid", type=_positive_int, default=None)
        p.add_argument("--report", help="report CSV path")
        p.add_argument("--summary", help="summary JSON path")

    p = sub.add_parser("verify", help="certify a trained model")
    common(p)
    p.add_argument("--model", required=True)
    verify_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("baseline", help="quadratic baseline certificates")
    common(p)
    p.add_argument("--system", required=True)
    p.add_argument("--kind", choices=["quadratic", "optimized"],
                   default="quadratic")
    p.add_argument("--lr", type=_positive_float, default=5e-4)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--eps-vdot", type=_positive_float, default=1e-3)
    p.add_argument("--sigmoid-k", type=_positive_float, default=50.0)
    p.add_argument("--beta", type=_positive_float, default=1.2)
    p.add_argument("--out", help="model file path")
    verify_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="emit SVG figures and data CSV")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True, help="verify report CSV")
    p.add_argument("--quadratic-model")
    p.add_argument("--quadratic-summary")
    p.add_argument("--optimized-model")
    p.add_argument("--optimized-summary")
    p.add_argument("--grid", type=_positive_int, default=None)
    p.add_argument("--res", type=_positive_int, default=200)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    _sys.exit(main())
