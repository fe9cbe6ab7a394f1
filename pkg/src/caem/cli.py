"""Command line: ``caem <command> [--config PATH] [--seed N] [--variant NAME] [--out DIR]``.

Commands
--------
generate   write the synthetic benchmark CSV to ``OUT/data.csv``
train      fit a model; writes config.json, split.json, checkpoint.bin, trace.csv
detect     score windows with a checkpoint; writes report.csv and summary.json
evaluate   recompute metrics from a report.csv
report     summarize a trace.csv (convergence epoch, best epoch, final losses)
gradcheck  finite-difference suite on the miniature model
ablate     train and detect for one variant (or ``all``); appends to ablation.csv

Any config field can be overridden with ``--set section.key=value``. Log
verbosity comes from ``CAEM_LOG_LEVEL`` (default WARNING); run logs with
timestamps go to ``OUT/run.log`` only, so every other output is a pure
function of config and seed. Config and data errors exit with status 2 and
a one-line message.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import config as C
from . import pipeline as P
from .detector import evaluate, read_report
from .errors import CaemError, SignalCountMismatch
from .trainer import TrainTrace

CONFIG_FILE = "config.json"
CHECKPOINT_FILE = "checkpoint.bin"
TRACE_FILE = "trace.csv"
REPORT_FILE = "report.csv"
SUMMARY_FILE = "summary.json"
SPLIT_FILE = "split.json"
LOG_FILE = "run.log"
DATA_FILE = "data.csv"
ABLATION_FILE = "ablation.csv"
ABLATION_COLUMNS = ("variant", "mPre", "mRec", "mF1", "threshold", "epochs", "best_epoch")

log = logging.getLogger("caem")


class UsageError(CaemError):
    pass


def _setup_logging(out_dir=None):
    level = os.environ.get("CAEM_LOG_LEVEL", "WARNING").upper()
    root = logging.getLogger("caem")
    root.handlers.clear()
    root.setLevel(logging.DEBUG)
    root.propagate = False
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(getattr(logging, level, logging.WARNING))
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(console)
    if out_dir is not None:
        fh = logging.FileHandler(os.path.join(out_dir, LOG_FILE), mode="w", encoding="utf-8")
        fh.setLevel(logging.INFO)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(fh)


def _load_config(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.variant is not None and args.variant != "all":
        overrides.append(f"variant={json.dumps(args.variant)}")
    return C.load_config(args.config, overrides)


def _out_dir(args, default="run"):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ---------------------------------------------------------------------
def cmd_generate(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    frame = P.load_frame(C.override(cfg, "data.path=null"))
    path = os.path.join(out, DATA_FILE)
    frame.write_csv(path)
    print(path)
    return 0


def train_into(cfg, out):
    """Train per ``cfg`` and write the run directory; returns the TrainedRun."""
    with open(os.path.join(out, CONFIG_FILE), "w", encoding="utf-8") as fh:
        fh.write(C.dumps(cfg))
    prepared = P.prepare(cfg)
    _write_json(os.path.join(out, SPLIT_FILE), {**prepared.split.to_dict(), "noisy_train": prepared.noisy.tolist()})
    run = P.train(cfg, prepared)
    P.save_run_checkpoint(os.path.join(out, CHECKPOINT_FILE), cfg, run)
    run.trace.write_csv(os.path.join(out, TRACE_FILE))
    return run


def cmd_train(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    _setup_logging(out)
    run = train_into(cfg, out)
    print(f"trained {len(run.trace.records)} epochs (best {run.trace.best_epoch}); "
          f"threshold {run.threshold.thr:.6g}; checkpoint {os.path.join(out, CHECKPOINT_FILE)}")
    return 0


def _write_report(report, out):
    report.write_csv(os.path.join(out, REPORT_FILE))
    report.write_summary(os.path.join(out, SUMMARY_FILE))


def cmd_detect(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    _setup_logging(out)
    ckpt = args.checkpoint or os.path.join(out, CHECKPOINT_FILE)
    loaded = P.load_model(ckpt)
    source = args.input or cfg["data"]["detect_path"]
    if source is not None:
        report = P.detect_frame(loaded, P.read_frame(source, cfg["data"]["signals"], cfg["data"]["max_gap"]))
    else:
        # the test part of the configured split, normalized with the checkpoint's statistics
        prepared = P.prepare(cfg)
        if prepared.names != loaded.signals:
            raise SignalCountMismatch(f"config data has signals {prepared.names}, checkpoint {loaded.signals}")
        report = P.detect(loaded.model, loaded.threshold, prepared.test, prepared.test_truth, prepared.test_origins)
    _write_report(report, out)
    line = f"{len(report.scores)} windows, {int(report.labels.sum())} flagged (threshold {loaded.threshold.thr:.6g})"
    if report.metrics is not None:
        line += f"; mPre={report.metrics['mPre']:.4f} mRec={report.metrics['mRec']:.4f} mF1={report.metrics['mF1']:.4f}"
    print(line)
    return 0


def cmd_evaluate(args):
    path = args.report or os.path.join(args.out or "run", REPORT_FILE)
    if not os.path.isfile(path):
        raise UsageError(f"report not found: {path}")
    _, labels, truth = read_report(path)
    if truth is None:
        raise UsageError(f"{path} has no ground-truth column values")
    metrics = evaluate(labels, truth)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_report(args):
    path = args.trace or os.path.join(args.out or "run", TRACE_FILE)
    if not os.path.isfile(path):
        raise UsageError(f"trace not found: {path}")
    trace = TrainTrace.read_csv(path)
    if not trace.records:
        raise UsageError(f"{path} holds no epochs")
    last = trace.records[-1]
    totals = trace.val_totals()
    print(f"epochs: {len(trace.records)}")
    print(f"best epoch: {trace.best_epoch} (validation total {min(totals):.6g})")
    print(f"within 5% of best at epoch: {trace.epochs_to_within(0.05)}")
    print("final train terms: " + " ".join(f"{k}={v:.6g}" for k, v in last.train.items()))
    return 0


def cmd_gradcheck(args):
    from .gradsuite import run_suite
    results, seconds = run_suite(args.seed or 0)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  max_rel_error={r.max_rel_error:.3e}  tol={r.tol:.0e}  "
              f"{'PASS' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in results)
    print(f"{'all checks passed' if ok else 'gradient check FAILED'} in {seconds:.1f}s")
    return 0 if ok else 1


def cmd_ablate(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    _setup_logging(out)
    variants = C.VARIANTS if args.variant == "all" else (cfg["variant"],)
    rows = []
    for v in variants:
        vcfg = C.override(cfg, f"variant={json.dumps(v)}")
        vdir = os.path.join(out, v)
        os.makedirs(vdir, exist_ok=True)
        run = train_into(vcfg, vdir)
        p = run.prepared
        report = P.detect(run.model, run.threshold, p.test, p.test_truth, p.test_origins)
        _write_report(report, vdir)
        m = report.metrics or {"mPre": float("nan"), "mRec": float("nan"), "mF1": float("nan")}
        rows.append([v, m["mPre"], m["mRec"], m["mF1"], run.threshold.thr, len(run.trace.records),
                     run.trace.best_epoch])
    path = os.path.join(out, ABLATION_FILE)
    new = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(ABLATION_COLUMNS)
        for row in rows:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:5]] + row[5:])
    for row in rows:
        print(f"{row[0]:<12} mPre={row[1]:.4f} mRec={row[2]:.4f} mF1={row[3]:.4f}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="caem", description="CAE-M multi-sensor anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--variant", help="model variant (ablate also accepts 'all')")
        p.add_argument("--out", help="run directory (default ./run)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config field")
        if name == "detect":
            p.add_argument("--checkpoint", help="checkpoint file (default OUT/checkpoint.bin)")
            p.add_argument("--input", help="CSV to score (default: test part of the configured split)")
        if name == "evaluate":
            p.add_argument("--report", help="report CSV (default OUT/report.csv)")
        if name == "report":
            p.add_argument("--trace", help="trace CSV (default OUT/trace.csv)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command not in ("train", "detect", "ablate"):
        _setup_logging()
    try:
        return COMMANDS[args.command](args)
    except (CaemError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"caem {args.command}: error: {msg}", file=sys.stderr)
        return 2
    finally:
        for h in list(logging.getLogger("caem").handlers):
            h.close()
            logging.getLogger("caem").removeHandler(h)


if __name__ == "__main__":
    sys.exit(main())
