"""End-to-end protocol: simulate, build indicators, split, train, rank, and
evaluate the forward curve.

All randomness descends from one root seed. ``derive_seed(root, family,
stream)`` gives the dataset (stream 0), split (stream 1) and forest
(stream 2) seeds, so a config file fully determines every artifact.
"""
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import backend
from .errors import SplitError, StageError
from .forest import ForestParams, accuracy, oob_estimate, predict_many, save_forest, train_forest
from .indicators import build_grid, compute_matrix, write_manifest, write_matrix
from .selection import default_schedule, forward_curve, mrmr_rank, write_ranking
from .signals import NORMAL_KINDS, SHIFT_KINDS, DatasetSpec, gen_dataset, write_dataset

log = logging.getLogger(__name__)

STREAM_DATASET, STREAM_SPLIT, STREAM_FOREST = 0, 1, 2
DEFAULT_SEED = 2014


def derive_seed(root, family, stream):
    ss = np.random.SeedSequence([int(root), ord(family.upper())], spawn_key=(stream,))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


@dataclass
class SplitSpec:
    train_size: int = 1000
    normal_fraction: float = 0.5
    n_groups: int = 10
    group_size: int = 500
    stratify_groups: bool = False


@dataclass
class ExperimentConfig:
    family: str = "A"
    seed: int = DEFAULT_SEED
    counts: dict = field(default_factory=dict)
    grid: str | None = None
    split: SplitSpec = field(default_factory=SplitSpec)
    forest: ForestParams = field(default_factory=ForestParams)
    schedule: list | None = None
    topk: int = 10
    mrmr_method: str = "mid"
    sin_phase: float = 0.0
    workers: int = 1
    out_dir: str | None = None
    save_intermediate: bool = True

    @classmethod
    def quick(cls, family="A", seed=DEFAULT_SEED, **kw):
        """CI-sized preset: 1200 signals, 300 for training, 9 test groups of 100."""
        counts = DatasetSpec.scaled(family, seed, 0.2).counts
        kw.setdefault("split", SplitSpec(train_size=300, n_groups=9, group_size=100))
        kw.setdefault("forest", ForestParams(n_trees=200))
        kw.setdefault("schedule", [5, 10, 20, 40, 100, 810])
        return cls(family=family, seed=seed, counts=counts, **kw)

    def to_dict(self):
        d = asdict(self)
        d.pop("out_dir")
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "split" in d:
            d["split"] = SplitSpec(**d["split"])
        if "forest" in d:
            d["forest"] = ForestParams(**d["forest"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ------------------------------------------------------------------ split

def _largest_remainder(total, weights):
    weights = np.asarray(weights, dtype=float)
    if total == 0 or weights.sum() == 0:
        return [0] * len(weights)
    raw = total * weights / weights.sum()
    base = np.floor(raw).astype(int)
    # leftover units go to the largest remainders, earliest kind first on ties
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[: total - base.sum()]:
        base[i] += 1
    return base.tolist()


def split_quotas(kinds, spec):
    """Training quota per kind: normals in proportion, shift kinds evenly."""
    kinds = list(kinds)
    n_normal = int(round(spec.train_size * spec.normal_fraction))
    n_anom = spec.train_size - n_normal
    normal = [k.value for k in NORMAL_KINDS if k.value in kinds]
    shifts = [k.value for k in SHIFT_KINDS if k.value in kinds]
    quotas = {}
    for k, q in zip(normal, _largest_remainder(n_normal, [kinds.count(k) for k in normal])):
        quotas[k] = q
    for k, q in zip(shifts, _largest_remainder(n_anom, [1] * len(shifts))):
        quotas[k] = q
    if n_normal and not normal:
        raise SplitError("no normal signals to draw the training quota from")
    if n_anom and not shifts:
        raise SplitError("no anomalous signals to draw the training quota from")
    return quotas


def split_dataset(kinds, spec, seed):
    """Stratified training rows plus disjoint test groups, as index arrays.

    ``kinds`` holds each signal's kind (an ``AnomalyKind`` value or a
    signal). Rows left over after the groups are filled stay unused.
    """
    kinds = [getattr(k, "label", k) for k in kinds]
    kinds = [getattr(k, "value", k) for k in kinds]
    rng = np.random.Generator(np.random.PCG64(seed))
    kinds_arr = np.array(kinds)
    train = []
    for kind, quota in split_quotas(kinds, spec).items():
        pool = np.flatnonzero(kinds_arr == kind)
        if quota > pool.size:
            raise SplitError(f"need {quota} '{kind}' signals for training, only {pool.size} available")
        train.extend(rng.choice(pool, quota, replace=False).tolist())
    train = np.sort(np.array(train, dtype=np.int64))
    rest = np.setdiff1d(np.arange(len(kinds)), train)
    needed = spec.n_groups * spec.group_size
    if needed > rest.size:
        raise SplitError(f"{spec.n_groups} groups of {spec.group_size} need {needed} rows, "
                         f"only {rest.size} remain after training")
    rest = rng.permutation(rest)
    if spec.stratify_groups:
        # deal kind by kind so every group gets a near-equal share of each
        rest = rest[np.argsort(kinds_arr[rest], kind="stable")][:needed]
        groups = [np.sort(rest[g::spec.n_groups]) for g in range(spec.n_groups)]
    else:
        groups = [np.sort(rest[g * spec.group_size:(g + 1) * spec.group_size]) for g in range(spec.n_groups)]
    return train, groups


# ----------------------------------------------------------------- report

def parse_config_id(cid):
    parts = cid.split(" / ")
    smoothed = len(parts) == 5
    return {"type": parts[0], "level": parts[1], "length": parts[2],
            "smoothed": "yes" if smoothed else "no", "step": parts[-1]}


def emit_topk_table(ranking, k=10):
    """Top-``k`` rows: type, level, window length, smoothed, window step."""
    if k > len(ranking):
        raise ValueError(f"ranking has {len(ranking)} entries, asked for {k}")
    rows = []
    for e in ranking.top(k):
        row = parse_config_id(e.config_id)
        row["rank"] = e.rank
        row["config_id"] = e.config_id
        rows.append(row)
    return rows


def format_topk_table(rows):
    cols = ["type", "level", "length", "smoothed", "step"]
    head = ["type of indicator", "level", "window length", "smoothed", "window step"]
    widths = [max(len(h), *(len(str(r[c])) for r in rows)) if rows else len(h) for h, c in zip(head, cols)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(w) for c, w in zip(cols, widths)))
    return "\n".join(lines)


def emit_curve_data(records):
    """Plot-ready rows: train, OOB and test quartiles per number of indicators."""
    if not records:
        raise ValueError("no forward records")
    rows = []
    for r in records:
        t = np.asarray(r.test_accuracies, dtype=float)
        row = {"k": r.k, "train": r.train_accuracy, "oob": r.oob_accuracy}
        if t.size:
            q = np.percentile(t, [0, 25, 50, 75, 100])
            row.update(test_min=q[0], test_q1=q[1], test_median=q[2], test_q3=q[3], test_max=q[4],
                       test_mean=float(t.mean()))
        rows.append({k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return rows


def write_tsv(path, rows):
    if not rows:
        open(path, "w").close()
        return
    cols = list(rows[0])
    with open(path, "w") as fh:
        fh.write("\t".join(cols) + "\n")
        for r in rows:
            fh.write("\t".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")


def family_count(rows, family="f"):
    """Number of rows whose indicator type is built on the given test."""
    def test_of(t):
        if t.endswith(" test") or t.endswith(" Test"):
            return t.split()[0].lower()[0]
        return t.split("(")[0][-1]
    return sum(1 for r in rows if test_of(r["type"]) == family)


@dataclass
class ExperimentReport:
    config: dict
    backend: str
    dataset: dict
    full: dict
    topk_table: list
    topk_result: dict
    forward: list
    warnings: list

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    def summary(self):
        f = self.full
        lines = [
            f"family {self.dataset['family']}  seed {self.config['seed']}  signals {self.dataset['size']}"
            f"  indicators {f['n_features']}  backend {self.backend}",
            f"full grid: train {f['train_accuracy']:.3f}  OOB {f['oob_accuracy']:.3f}"
            f"  test {f['test_mean']:.3f} ({f['test_std']:.4f})",
        ]
        if self.topk_result:
            t = self.topk_result
            lines.append(f"top-{t['k']} mRMR: train {t['train_accuracy']:.3f}  OOB {t['oob_accuracy']:.3f}"
                         f"  test {t['test_mean']:.3f}")
        lines += ["", format_topk_table(self.topk_table)]
        if self.warnings:
            lines += ["", f"{len(self.warnings)} warning(s), see report.json"]
        return "\n".join(lines) + "\n"


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError(name, exc) from exc


def _test_summary(accs):
    a = np.asarray(accs, dtype=float)
    return {"test_accuracies": a.tolist(), "test_mean": float(a.mean()) if a.size else float("nan"),
            "test_std": float(a.std(ddof=1)) if a.size > 1 else 0.0}


def run_experiment(config):
    """Run the full protocol; writes artifacts when ``config.out_dir`` is set."""
    timings = {}
    out = config.out_dir
    if out:
        os.makedirs(out, exist_ok=True)

    def timed(name, fn, *args, **kw):
        t0 = time.perf_counter()
        res = _stage(name, fn, *args, **kw)
        timings[name] = time.perf_counter() - t0
        return res

    seed_data = derive_seed(config.seed, config.family, STREAM_DATASET)
    seed_split = derive_seed(config.seed, config.family, STREAM_SPLIT)
    seed_forest = derive_seed(config.seed, config.family, STREAM_FOREST)
    spec = _stage("config", DatasetSpec, config.family, seed_data, dict(config.counts), config.sin_phase)
    signals = timed("simulate", gen_dataset, spec)
    grid = _stage("config", build_grid, config.grid)
    matrix = timed("indicators", compute_matrix, signals, grid, config.workers)
    train_idx, groups = timed("split", split_dataset, [s.label for s in signals], config.split, seed_split)
    train = matrix.rows(train_idx)
    tests = [matrix.rows(g) for g in groups]

    params = ForestParams(**{**asdict(config.forest), "seed": seed_forest, "workers": config.workers})
    forest = timed("train", train_forest, train, params)
    oob = _stage("train", oob_estimate, forest, train)
    preds = []
    test_accs = []
    for gi, g in enumerate(tests):
        cls, frac = predict_many(forest, g.bits)
        test_accs.append(float(np.mean(cls == g.labels)))
        preds.extend((gi, sid, int(lab), int(c), float(fr)) for sid, lab, c, fr in zip(g.signal_ids, g.labels, cls, frac))
    full = {"n_features": matrix.n_features, "n_train": train.n_rows,
            "train_accuracy": accuracy(forest, train), "oob_accuracy": oob.accuracy,
            "oob_coverage": oob.coverage, **_test_summary(test_accs)}

    ranking = timed("select", mrmr_rank, train, matrix.n_features, config.mrmr_method)
    schedule = sorted(set(config.schedule or default_schedule(matrix.n_features)) | {min(config.topk, matrix.n_features)})
    schedule = [k for k in schedule if 1 <= k <= matrix.n_features]
    records = timed("forward", forward_curve, train, ranking, schedule, params, tests)
    forward_rows = emit_curve_data(records)
    topk_rows = emit_topk_table(ranking, min(config.topk, len(ranking)))
    top = next(r for r in records if r.k == min(config.topk, matrix.n_features))
    topk_result = {"k": top.k, "train_accuracy": top.train_accuracy, "oob_accuracy": top.oob_accuracy,
                   **_test_summary(top.test_accuracies)}

    report = ExperimentReport(
        config=config.to_dict(),
        backend=backend.NAME,
        dataset={**spec.to_dict(), "size": len(signals), "generator_seeds": {
            "dataset": seed_data, "split": seed_split, "forest": seed_forest}},
        full=full,
        topk_table=topk_rows,
        topk_result=topk_result,
        forward=forward_rows,
        warnings=matrix.coverage_warnings(),
    )
    if out:
        def write_all():
            with open(os.path.join(out, "report.json"), "w") as fh:
                fh.write(report.to_json())
            with open(os.path.join(out, "summary.txt"), "w") as fh:
                fh.write(report.summary())
            write_tsv(os.path.join(out, "curve.tsv"), forward_rows)
            write_tsv(os.path.join(out, "topk.tsv"), topk_rows)
            write_ranking(os.path.join(out, "ranking.tsv"), ranking)
            with open(os.path.join(out, "predictions.tsv"), "w") as fh:
                fh.write("group\tsignal_id\tlabel\tpredicted\tvote_anomalous\n")
                for row in preds:
                    fh.write("\t".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
            with open(os.path.join(out, "split.json"), "w") as fh:
                json.dump({"train": train_idx.tolist(), "groups": [g.tolist() for g in groups]}, fh)
            if config.save_intermediate:
                write_dataset(os.path.join(out, "dataset.jsonl"), signals, spec)
                write_manifest(os.path.join(out, "grid.txt"), grid)
                write_matrix(os.path.join(out, "matrix.tsv"), matrix)
                save_forest(os.path.join(out, "model.json"), forest)
            with open(os.path.join(out, "timings.json"), "w") as fh:
                json.dump(timings, fh, indent=2)
        _stage("report", write_all)
    report.timings = timings
    return report
