"""Command-line interface: ``anchorlstm {generate,train,predict,evaluate}``."""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path

import numpy as np

from .archive import load_model, save_model
from .config import load_generator_spec, load_run_config
from .data import generate_synthetic, load_csv, write_csv
from .estimator import METHODS
from .exceptions import AnchorLSTMError, SchemaError
from .metrics import report_json, report_text
from .workflow import SPLITS, evaluate_frame, fit_frame, predict_frame


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error[usage]: {message}", file=sys.stderr)
        raise SystemExit(2)


def _warning_line(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def cmd_generate(args) -> int:
    cycle, noise, vehicle = load_generator_spec(args.config)
    frame = generate_synthetic(cycle, noise, args.seed if args.seed is not None else 0, vehicle)
    write_csv(frame, args.out)
    print(f"rows = {len(frame)}")
    return 0


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    if args.method:
        run.method = args.method
    if args.seed is not None:
        run.seed = args.seed
    run.validate()
    frame = load_csv(args.data, run.features, run.target)
    estimator, stats, _ = fit_frame(frame, run, split=args.split, verbose=0 if args.quiet else 1)
    save_model(args.model, estimator, stats, run)
    metrics, calib = evaluate_frame(estimator, stats, frame, run.features, run.alpha, split=args.split)
    print(f"model = {args.model}")
    print(report_text(metrics, calib))
    return 0


def _load_for_model(path, run):
    """Load the model's feature columns; the target column is optional."""
    with Path(path).open(encoding="utf-8") as fh:
        header = next(csv.reader(line for line in fh if not line.startswith("#")), [])
    has_target = run.target in [h.strip() for h in header]
    if has_target:
        return load_csv(path, run.features, run.target), True
    missing = [c for c in run.features if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    # stand-in target column so the frame is well formed; never reported
    frame = load_csv(path, run.features[1:], run.features[0])
    frame.columns[run.target] = np.zeros(len(frame))
    frame.target = run.target
    return frame, False


def cmd_predict(args) -> int:
    archive = load_model(args.model)
    run = archive.run_config
    frame, has_target = _load_for_model(args.data, run)
    pred = predict_frame(archive.estimator, archive.stats, frame, run.features, args.alpha, args.split, has_target)
    s = pred.summary
    header = ["t_index"] + (["y_true"] if has_target else []) + ["mu", "lo", "hi", "au", "eu"]
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(pred.t_index)):
            row = [int(pred.t_index[i])]
            if has_target:
                row.append(repr(float(pred.y_true[i])))
            row += [repr(float(v[i])) for v in (s.mean, s.lo, s.hi, s.aleatoric, s.epistemic)]
            writer.writerow(row)
    print(f"rows = {len(pred.t_index)}")
    return 0


def cmd_evaluate(args) -> int:
    archive = load_model(args.model)
    run = archive.run_config
    frame = load_csv(args.data, run.features, run.target)
    metrics, calib = evaluate_frame(archive.estimator, archive.stats, frame, run.features, args.alpha, args.split)
    print(report_json(metrics, calib) if args.json else report_text(metrics, calib))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anchorlstm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic drive-cycle CSV")
    p.add_argument("--config", help="generator spec (INI with [cycle], [noise], [vehicle])")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an ensemble and write a model archive")
    p.add_argument("--config", help="run config (INI)")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output archive path")
    p.add_argument("--method", choices=sorted(METHODS))
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=("all", "train"), default="train",
                   help="rows to train on (default: first 70%%)")
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch progress")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("predict", cmd_predict, "write per-window predictions and intervals"),
        ("evaluate", cmd_evaluate, "print accuracy and calibration reports"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--alpha", type=float, default=0.1)
        p.add_argument("--split", choices=SPLITS, default="all")
        if name == "predict":
            p.add_argument("--out", required=True)
        else:
            p.add_argument("--json", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.formatwarning = _warning_line
    try:
        return args.func(args)
    except AnchorLSTMError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error[{exc.category}]: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
