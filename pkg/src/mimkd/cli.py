"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
arguments. MIMKD_THREADS caps numeric-kernel parallelism.
"""

import argparse
import csv
import itertools
import os
import sys

if "MIMKD_THREADS" in os.environ:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, os.environ["MIMKD_THREADS"])

from .config import ConfigError, build_train_config, load_dataset, parse_config, write_resolved
from .estimators import GaussianPairSpec, estimate_mi_synthetic, write_benchmark_csv
from .trainer import distill, train_teacher


def _write_summary(out_dir, mode, acc, seed):
    with open(os.path.join(out_dir, "run.summary"), "w") as f:
        f.write(f"mode={mode}\nstudent_acc={acc:.4f}\nseed={seed}\n")


def cmd_train_teacher(args):
    values = parse_config(args.config)
    cfg = build_train_config(values, mode="teacher")
    train_handle, test_handle = load_dataset(values)
    os.makedirs(args.out, exist_ok=True)
    write_resolved(values, os.path.join(args.out, "config.resolved"))
    record = train_teacher(cfg, train_handle, test_handle, out_dir=args.out)
    print(f"teacher_acc={record.final_acc:.4f}")
    return 0


def cmd_distill(args):
    values = parse_config(args.config)
    cfg = build_train_config(values, mode=args.mode)
    train_handle, test_handle = load_dataset(values)
    os.makedirs(args.out, exist_ok=True)
    write_resolved(values, os.path.join(args.out, "config.resolved"))
    record = distill(cfg, args.teacher, train_handle, test_handle, out_dir=args.out)
    _write_summary(args.out, cfg.mode, record.final_acc, cfg.seed)
    print(f"student_acc={record.final_acc:.4f}")
    return 0


def cmd_estimate_mi(args):
    spec = GaussianPairSpec(dim=args.dim, rho=args.rho, seed=args.seed)
    spec.validate()
    trace = estimate_mi_synthetic(
        spec, kind=args.estimator, width=args.width, steps=args.steps,
        negatives=args.negatives, batch=args.batch, lr=args.lr,
    )
    if args.out:
        write_benchmark_csv(args.out, args.estimator, spec, args.negatives, trace)
    print(
        f"estimator={args.estimator} rho={args.rho} dim={args.dim} "
        f"M={args.negatives} raw={trace.estimate.raw:.6f} "
        f"centered={trace.estimate.value:.6f} analytic={trace.analytic:.6f}"
    )
    return 0


def cmd_ablate(args):
    values = parse_config(args.config)
    grid = [float(v) for v in args.grid.split(",")]
    if any(v < 0 for v in grid):
        raise ConfigError("grid values must be >= 0")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for lg, ll, lf in itertools.product(grid, repeat=3):
        sub = dict(values)
        sub.update({
            "loss.alpha": "1",
            "loss.lambda_g": repr(lg),
            "loss.lambda_l": repr(ll),
            "loss.lambda_f": repr(lf),
        })
        tag = f"g{lg:g}_l{ll:g}_f{lf:g}"
        sub_dir = os.path.join(args.out, tag)
        try:
            cfg = build_train_config(sub, mode="mimkd")
            train_handle, test_handle = load_dataset(sub)
            os.makedirs(sub_dir, exist_ok=True)
            write_resolved(sub, os.path.join(sub_dir, "config.resolved"))
            record = distill(cfg, args.teacher, train_handle, test_handle,
                             out_dir=sub_dir, run_id=tag)
            rows.append((lg, ll, lf, f"{record.final_acc:.4f}"))
        except Exception as exc:  # record failure, keep the grid going
            print(f"grid point {tag} failed: {exc}", file=sys.stderr)
            rows.append((lg, ll, lf, "failed"))
    with open(os.path.join(args.out, "ablation.csv"), "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["lambda_g", "lambda_l", "lambda_f", "final_acc"])
        writer.writerows(rows)
    print(f"ablation_rows={len(rows)}")
    return 0


def cmd_report(args):
    runs = []
    for run_dir in args.runs:
        summary = os.path.join(run_dir, "run.summary")
        if not os.path.isfile(summary):
            continue
        kv = {}
        with open(summary) as f:
            for line in f:
                if "=" in line:
                    k, v = line.strip().split("=", 1)
                    kv[k] = v
        runs.append((os.path.basename(os.path.normpath(run_dir)), kv))
    if not runs:
        print("no runs found", file=sys.stderr)
        return 2
    runs.sort(key=lambda r: r[0])
    ce_acc = None
    for _, kv in runs:
        if kv.get("mode") == "ce":
            ce_acc = float(kv["student_acc"])
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["run", "mode", "student_acc", "delta_vs_ce"])
        for name, kv in runs:
            acc = float(kv["student_acc"])
            delta = "" if ce_acc is None or kv.get("mode") == "ce" else f"{acc - ce_acc:.4f}"
            writer.writerow([name, kv.get("mode", ""), f"{acc:.4f}", delta])
    print(f"report_rows={len(runs)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mimkd")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="cross-entropy pretraining of the teacher")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("distill", help="train a student against a teacher checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--mode", choices=["mimkd", "kd", "ce"], default="mimkd")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("estimate-mi", help="synthetic Gaussian benchmark")
    p.add_argument("--estimator", choices=["jsd", "infonce"], default="jsd")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_estimate_mi)

    p = sub.add_parser("ablate", help="Cartesian grid over the three MI weights")
    p.add_argument("--config", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--grid", required=True, help='e.g. "0,0.5,1"')
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("report", help="summarize run directories into one CSV")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
