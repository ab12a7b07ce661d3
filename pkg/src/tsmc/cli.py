"""Command-line interface: ``tsmc {fit,forecast,evaluate,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import data as D
from .evaluation import (
    METHODS,
    evaluate,
    reports_to_json,
    synthesize,
    write_clusters_csv,
    write_patterns_csv,
)
from .solver import (
    BudgetError,
    FitConfig,
    SolverError,
    denormalize,
    fit,
    model_from_json,
    model_to_json,
    update_z,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
SYNTH_EPOCH = (2010, 1)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def build_parser():
    p = _Parser(prog="tsmc", description="Budget-constrained expense forecasting.")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_opts(sp):
        sp.add_argument("--rank", type=int, default=3)
        sp.add_argument("--max-iters", type=int, default=100)
        sp.add_argument("--tol", type=float, default=1e-4)
        sp.add_argument("--seed", type=int, default=42)

    def data_opts(sp):
        sp.add_argument("--data", required=True, help="expenses CSV")
        sp.add_argument("--meta", required=True, help="projects CSV")
        sp.add_argument("--horizon", type=int, default=None)

    sp = sub.add_parser("fit", help="fit a model and write forecasts")
    data_opts(sp)
    solver_opts(sp)
    sp.add_argument("--model", required=True, help="model JSON to write")
    sp.add_argument("--out", required=True, help="forecasts CSV to write")
    sp.add_argument("--cutoff", default=None, help="YYYY-MM or month index")

    sp = sub.add_parser("forecast", help="forecasts from a saved model")
    data_opts(sp)
    sp.add_argument("--model", required=True, help="model JSON to read")
    sp.add_argument("--out", required=True, help="forecasts CSV to write")
    sp.add_argument("--cutoff", default=None, help="YYYY-MM or month index")

    sp = sub.add_parser("evaluate", help="temporal train/test comparison")
    data_opts(sp)
    solver_opts(sp)
    sp.add_argument("--cutoff", required=True, help="YYYY-MM or month index")
    sp.add_argument("--methods", default=",".join(METHODS))
    sp.add_argument("--knn-k", type=int, default=10)
    sp.add_argument("--out", required=True, help="report JSON to write")

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--horizon", type=int, default=36, help="months per project (M)")
    sp.add_argument("--n-projects", type=int, default=200)
    sp.add_argument("--rank", type=int, default=3)
    sp.add_argument("--missing-rate", type=float, default=0.4)
    sp.add_argument("--seed", type=int, default=42)
    return p


def _fit_config(args):
    try:
        return FitConfig(rank=args.rank, max_iters=args.max_iters, tol=args.tol, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cutoff_index(text, ledger):
    if text is None:
        return None
    text = text.strip()
    if "-" in text.lstrip("-"):
        year, month = D.parse_month(text)
        if ledger.epoch is None:
            raise UsageError("date cutoff needs a dated expenses CSV")
        idx = (year - ledger.epoch[0]) * 12 + (month - ledger.epoch[1])
    else:
        try:
            idx = int(text)
        except ValueError:
            raise UsageError("bad cutoff %r" % text) from None
    if not any(r.month_index < idx for r in ledger):
        raise D.DataError("no training samples before cutoff %s" % text)
    return idx


def _load(args, cutoff_text=None):
    ledger = D.read_expenses_csv(args.data)
    meta = D.read_projects_csv(args.meta)
    cutoff = _cutoff_index(cutoff_text, ledger)
    align = "start" if ledger.epoch is not None else "none"
    return D.assemble(ledger, meta, horizon=args.horizon, cutoff=cutoff, align=align)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_forecasts(path, Z, matrix):
    Y = denormalize(Z, matrix.budgets)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["project_id", "month_index", "predicted_expense", "is_observed"])
        for n, pid in enumerate(matrix.project_ids):
            for m in range(Y.shape[0]):
                w.writerow([pid, m, repr(float(Y[m, n])), int(matrix.mask[m, n])])


def _side_path(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def _write_reports(out, W, H, project_ids):
    with open(_side_path(out, ".patterns.csv"), "w", encoding="utf-8", newline="") as fh:
        write_patterns_csv(fh, W)
    with open(_side_path(out, ".clusters.csv"), "w", encoding="utf-8", newline="") as fh:
        write_clusters_csv(fh, H, project_ids)


def cmd_fit(args):
    config = _fit_config(args)
    matrix = _load(args, args.cutoff)
    result = fit(matrix.X, matrix.mask, matrix.budgets, config)
    _write_text(args.model, model_to_json(result, matrix.budgets, matrix.project_ids))
    _write_forecasts(args.out, result.Z, matrix)
    _write_reports(args.out, result.W, result.H, matrix.project_ids)
    print("iterations: %d" % result.iterations)
    print("objective: %.6g" % result.objective_trace[-1])
    print("converged: %s" % str(result.converged).lower())
    return EXIT_OK


def cmd_forecast(args):
    with open(args.model, encoding="utf-8") as fh:
        model, _, ids, _, _ = model_from_json(fh.read())
    matrix = _load(args, args.cutoff)
    if matrix.project_ids != ids:
        raise D.DataError("projects CSV does not match the model's project_ids")
    if matrix.horizon != model.W.shape[0]:
        raise D.DataError(
            "horizon %d does not match the model's %d months"
            % (matrix.horizon, model.W.shape[0])
        )
    Z = update_z(model.W, model.H, matrix.X, matrix.mask)
    _write_forecasts(args.out, Z, matrix)
    _write_reports(args.out, model.W, model.H, ids)
    return EXIT_OK


def cmd_evaluate(args):
    config = _fit_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = sorted(set(methods) - set(METHODS))
    if unknown or not methods:
        raise UsageError("unknown method(s): %s" % ", ".join(unknown or ["<none>"]))
    if args.knn_k < 1:
        raise UsageError("--knn-k must be >= 1")
    matrix = _load(args, args.cutoff)
    if not matrix.test_mask.any():
        raise D.DataError("no test samples after cutoff %s" % args.cutoff)
    reports = evaluate(
        matrix.X, matrix.mask, matrix.budgets, matrix.heldout, matrix.test_mask,
        methods=methods, config=config, knn_k=args.knn_k,
    )
    _write_text(args.out, reports_to_json(reports))
    for r in reports:
        print("%-8s rmse=%.6g relative_rmse=%.4f n_test=%d"
              % (r.method, r.rmse, r.relative_rmse, r.n_test))
    return EXIT_OK


def cmd_synth(args):
    try:
        inst = synthesize(args.horizon, args.n_projects, args.rank, args.missing_rate, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    M, N = inst.X_full.shape
    # calendar start months, so a date cutoff splits projects at different ages
    starts = np.random.default_rng([args.seed, 1]).integers(0, M, size=N)
    ids = ["P%04d" % n for n in range(N)]
    Y = denormalize(inst.X_full, inst.budgets)

    observed, truth = [], []
    for n, pid in enumerate(ids):
        for m in range(M):
            rec = D.ExpenseRecord(pid, int(starts[n]) + m, float(Y[m, n]))
            truth.append(rec)
            if inst.mask[m, n]:
                observed.append(rec)
    meta = [D.ProjectMeta(pid, float(b), None, "ongoing") for pid, b in zip(ids, inst.budgets)]

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "expenses.csv"), "w", encoding="utf-8", newline="") as fh:
        D.write_expenses_csv(fh, observed, epoch=SYNTH_EPOCH)
    with open(os.path.join(args.out, "truth.csv"), "w", encoding="utf-8", newline="") as fh:
        D.write_expenses_csv(fh, truth, epoch=SYNTH_EPOCH)
    with open(os.path.join(args.out, "projects.csv"), "w", encoding="utf-8", newline="") as fh:
        D.write_projects_csv(fh, meta)
    print("wrote %d projects x %d months to %s" % (N, M, args.out))
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (D.DataError, BudgetError, OSError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
