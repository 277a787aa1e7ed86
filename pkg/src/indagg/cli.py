"""Command line interface.

Each subcommand runs one stage on files written by the previous one, and
``pipeline`` runs them all. Failures print ``error [stage]: message`` on
stderr and exit with the stage's code (see ``StageError.codes``).
"""
import argparse
import json
import logging
import sys

import numpy as np

from . import __version__, backend
from .errors import IndaggError, StageError
from .experiment import DEFAULT_SEED, STREAM_DATASET, ExperimentConfig, derive_seed, run_experiment
from .forest import ForestParams, load_forest, oob_estimate, predict_many, save_forest, train_forest
from .indicators import build_grid, compute_matrix, read_matrix, write_matrix
from .selection import mrmr_rank, read_ranking, write_ranking
from .signals import DatasetSpec, gen_dataset, read_dataset, write_dataset
from .stattests import TestKind, run_test

log = logging.getLogger("indagg")


def _parse_counts(text):
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        kind, _, value = item.partition("=")
        out[kind.strip()] = int(value)
    return out


def _read_numbers(text):
    try:
        with open(text) as fh:
            text = fh.read()
    except OSError:
        pass
    return np.array([float(t) for t in text.replace(",", " ").split()])


def _emit(obj):
    print(json.dumps(obj, indent=2))


def _matrix_for_model(forest, matrix):
    if matrix.config_ids == forest.config_ids:
        return matrix
    try:
        return matrix.columns(matrix.column_index(forest.config_ids))
    except KeyError as exc:
        raise IndaggError(f"matrix lacks indicator {exc.args[0]!r} used by the model") from exc


# -------------------------------------------------------------- commands

def cmd_simulate(args):
    spec = DatasetSpec.scaled(args.family, 0, 0.2) if args.quick else DatasetSpec(args.family)
    counts = {**spec.counts, **_parse_counts(args.counts)}
    spec = DatasetSpec(args.family, derive_seed(args.seed, args.family, STREAM_DATASET), counts, args.sin_phase)
    signals = gen_dataset(spec)
    write_dataset(args.out, signals, spec)
    log.info("wrote %d signals to %s", len(signals), args.out)


def cmd_test(args):
    x, y = _read_numbers(args.x), _read_numbers(args.y)
    res = run_test(TestKind.parse(args.kind), x, y)
    _emit({"test": TestKind.parse(args.kind).label, "statistic": res.statistic, "p_value": res.p_value,
           "n1": res.n1, "n2": res.n2})


def cmd_indicators(args):
    _, signals = read_dataset(args.data)
    mat = compute_matrix(signals, build_grid(args.grid), args.workers)
    write_matrix(args.out, mat)
    log.info("wrote %d x %d matrix to %s", mat.n_rows, mat.n_features, args.out)


def cmd_select(args):
    mat = read_matrix(args.matrix)
    ranking = mrmr_rank(mat, args.count or mat.n_features, args.method)
    write_ranking(args.out, ranking)
    for e in ranking.top(10):
        print(f"{e.rank:3d}  {e.config_id}")


def cmd_train(args):
    mat = read_matrix(args.matrix)
    if args.ranking:
        ids = read_ranking(args.ranking).ids
        mat = mat.columns(mat.column_index(ids[: args.top] if args.top else ids))
    params = ForestParams(n_trees=args.trees, mtry=args.mtry, seed=args.seed, workers=args.workers)
    forest = train_forest(mat, params)
    save_forest(args.out, forest)
    _emit({"trees": forest.n_trees, "features": forest.n_features, "rows": forest.n_train,
           "oob_accuracy": oob_estimate(forest, mat).accuracy})


def cmd_predict(args):
    forest = load_forest(args.model)
    mat = _matrix_for_model(forest, read_matrix(args.matrix))
    classes, frac = predict_many(forest, mat.bits)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("signal_id\tpredicted\tvote_anomalous\n")
        for sid, c, f in zip(mat.signal_ids, classes, frac):
            out.write(f"{sid}\t{int(c)}\t{float(f)!r}\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_oob(args):
    forest = load_forest(args.model)
    est = oob_estimate(forest, _matrix_for_model(forest, read_matrix(args.matrix)))
    _emit({"oob_accuracy": est.accuracy, "coverage": est.coverage})


def cmd_evaluate(args):
    forest = load_forest(args.model)
    mat = _matrix_for_model(forest, read_matrix(args.matrix))
    classes, _ = predict_many(forest, mat.bits)
    correct = classes == mat.labels
    result = {"rows": mat.n_rows, "accuracy": float(correct.mean())}
    if args.split:
        with open(args.split) as fh:
            groups = json.load(fh)["groups"]
        accs = [float(correct[np.asarray(g)].mean()) for g in groups]
        result.update(group_accuracies=accs, mean=float(np.mean(accs)),
                      std=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0)
    _emit(result)


def cmd_pipeline(args):
    if args.config and args.quick:
        raise IndaggError("--quick and --config are mutually exclusive")
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.quick:
        cfg = ExperimentConfig.quick(args.family or "A")
    else:
        cfg = ExperimentConfig(family=args.family or "A")
    if args.family:
        cfg.family = args.family
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers:
        cfg.workers = args.workers
    if args.no_intermediate:
        cfg.save_intermediate = False
    cfg.out_dir = args.out
    report = run_experiment(cfg)
    sys.stdout.write(report.summary())


# ---------------------------------------------------------------- parser

STAGE_OF = {"simulate": "simulate", "indicators": "indicators", "select": "select", "train": "train",
            "predict": "evaluate", "oob": "evaluate", "evaluate": "evaluate", "test": "config"}


def build_parser():
    p = argparse.ArgumentParser(prog="indagg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({backend.NAME} kernels)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a labelled dataset")
    s.add_argument("--family", choices=["A", "B"], default="A")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--quick", action="store_true", help="one fifth of the default class counts")
    s.add_argument("--counts", help="override class counts, e.g. none=100,mean=50")
    s.add_argument("--sin-phase", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("test", help="run one two-sample test")
    s.add_argument("--kind", required=True, help="u, ks or f")
    s.add_argument("--x", required=True, help="file or comma/space separated numbers")
    s.add_argument("--y", required=True)
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("indicators", help="compute the indicator matrix of a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--grid", default=None, help="manifest path (default: the shipped 810 grid)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_indicators)

    s = sub.add_parser("select", help="mRMR ranking of a (training) matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--count", type=int, default=0, help="indicators to rank (default all)")
    s.add_argument("--method", choices=["mid", "miq"], default="mid")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("train", help="train a forest")
    s.add_argument("--matrix", required=True)
    s.add_argument("--ranking", help="restrict to ranked indicators")
    s.add_argument("--top", type=int, default=0)
    s.add_argument("--trees", type=int, default=500)
    s.add_argument("--mtry", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("predict", cmd_predict, "classify the rows of a matrix"),
                                 ("oob", cmd_oob, "out-of-bag accuracy on the training matrix"),
                                 ("evaluate", cmd_evaluate, "accuracy on a labelled matrix")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--model", required=True)
        s.add_argument("--matrix", required=True)
        if name == "predict":
            s.add_argument("--out")
        if name == "evaluate":
            s.add_argument("--split", help="split.json whose groups index the matrix rows")
        s.set_defaults(func=func)

    s = sub.add_parser("pipeline", help="run the whole experiment")
    s.add_argument("--config", help="JSON experiment config")
    s.add_argument("--family", choices=["A", "B"], default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--quick", action="store_true")
    s.add_argument("--workers", type=int, default=0)
    s.add_argument("--no-intermediate", action="store_true", help="skip dataset/matrix/model files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BrokenPipeError:
        # downstream closed the pipe (e.g. ``| head``); nothing left to report
        sys.stderr.close()
        return 0
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return exc.exit_code
    except (IndaggError, ValueError, OSError, KeyError) as exc:
        stage = STAGE_OF.get(args.command, "config")
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return StageError.codes.get(stage, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
