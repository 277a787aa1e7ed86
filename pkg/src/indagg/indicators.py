"""Binary anomaly indicators built from sliding-window two-sample tests.

A window of total length ``L`` slides along the signal. At each position the
first ``L // 2`` observations are tested against the remaining ones, i.e. a
change is tested for at the window centre. A test at level ``alpha`` gives a
decision bit per position, and an aggregation rule reduces the decision
sequence to one indicator bit:

* ``base``       - any window rejects
* ``rate(b)``    - at least a fraction ``b`` of the ``m`` windows reject
* ``run(b)``     - some run of consecutive rejections covers ``ceil(b*m)`` windows
* ``kofn(k,n)``  - some ``n`` consecutive windows hold at least ``k`` rejections

Window length ``auto`` resolves per signal to ``min(n_eff - 2, 100)`` where
``n_eff`` is the length after optional 5-point smoothing.
"""
import itertools
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import backend
from .errors import EmptyPlanError, InsufficientWindowsError, ManifestError, ShapeError
from .stattests import TestKind, moving_average

log = logging.getLogger(__name__)

AUTO_CAP = 100
SMOOTH_WIDTH = 5
DEFAULT_GRID = "grid-810"

RULE_CODES = {"base": 0, "rate": 1, "run": 2, "kofn": 3}


@dataclass(frozen=True)
class AggregationRule:
    kind: str = "base"
    beta: float = 0.0
    k: int = 0
    n: int = 0

    def __post_init__(self):
        if self.kind not in RULE_CODES:
            raise ValueError(f"unknown aggregation rule {self.kind!r}")
        if self.kind in ("rate", "run") and not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.kind == "kofn" and not 1 <= self.k <= self.n:
            raise ValueError(f"k-of-n rule needs 1 <= k <= n, got ({self.k}, {self.n})")

    @classmethod
    def base(cls):
        return cls("base")

    @classmethod
    def rate(cls, beta):
        return cls("rate", beta=float(beta))

    @classmethod
    def run(cls, beta):
        return cls("run", beta=float(beta))

    @classmethod
    def kofn(cls, k, n):
        return cls("kofn", k=int(k), n=int(n))

    @property
    def code(self):
        return RULE_CODES[self.kind]

    def token(self):
        if self.kind == "base":
            return "base"
        if self.kind == "kofn":
            return f"kofn({self.k},{self.n})"
        return f"{self.kind}({self.beta:g})"

    def label(self, test):
        """Indicator type name in the style ``confu(2,3)``, ``ratef(0.1)``."""
        test = TestKind(test)
        if self.kind == "base":
            return test.label
        prefix = {"rate": "rate", "run": "lseq", "kofn": "conf"}[self.kind]
        args = f"{self.k},{self.n}" if self.kind == "kofn" else f"{self.beta:g}"
        return f"{prefix}{test.short}({args})"

    _pattern = re.compile(r"^(base|rate|run|kofn)(?:\(([^)]*)\))?$")

    @classmethod
    def parse(cls, token):
        mt = cls._pattern.match(token.strip().lower())
        if not mt:
            raise ValueError(f"bad rule {token!r}")
        kind, args = mt.groups()
        if kind == "base":
            if args:
                raise ValueError("base rule takes no parameters")
            return cls.base()
        if args is None:
            raise ValueError(f"rule {kind} needs parameters")
        if kind == "kofn":
            k, n = (int(a) for a in args.split(","))
            return cls.kofn(k, n)
        return cls(kind, beta=float(args))


@dataclass(frozen=True)
class WindowPlan:
    length: int | None = None  # None means auto
    step: int = 1

    def __post_init__(self):
        if self.length is not None and self.length < 4:
            raise ValueError("window length must be at least 4")
        if self.step < 1:
            raise ValueError("window step must be positive")

    def resolve(self, n_eff):
        if self.length is None:
            return min(n_eff - 2, AUTO_CAP)
        return self.length

    def window_count(self, n_eff):
        length = self.resolve(n_eff)
        if length < 4 or n_eff < length:
            return 0
        return (n_eff - length) // self.step + 1

    def length_text(self):
        return str(AUTO_CAP) if self.length is None else str(self.length)


@dataclass(frozen=True)
class IndicatorConfig:
    test: TestKind
    level: float
    plan: WindowPlan
    smoothed: bool = False
    rule: AggregationRule = field(default_factory=AggregationRule)

    @property
    def id(self):
        parts = [self.rule.label(self.test), f"{self.level:g}", self.plan.length_text()]
        if self.smoothed:
            parts.append("smoothed")
        parts.append(str(self.plan.step))
        return " / ".join(parts)

    @property
    def type_label(self):
        return self.rule.label(self.test)

    def manifest_line(self):
        length = "auto" if self.plan.length is None else str(self.plan.length)
        return (f"{self.test.short.upper()} {self.level:g} {length} {self.plan.step} "
                f"{'yes' if self.smoothed else 'no'} {self.rule.token()}")


@dataclass
class DecisionSequence:
    bits: np.ndarray

    @property
    def m(self):
        return int(self.bits.size)


# -------------------------------------------------------------- decisions

def window_decisions(values, test, plan, level):
    """Per-window rejection bits (``p < level``) of ``test`` along ``values``."""
    v = np.asarray(values, dtype=float)
    length = plan.resolve(v.size)
    if length < 4 or v.size < length:
        raise EmptyPlanError(f"signal of length {v.size} too short for window length {length}")
    p = backend.kernels.window_pvalues(v, int(TestKind(test)), length)
    return DecisionSequence(p[::plan.step] < level)


def _need(beta, m):
    # guard against beta * m landing a hair above an integer
    return int(math.ceil(beta * m - 1e-9))


def aggregate(decisions, rule):
    """Reduce a decision sequence to one indicator bit."""
    d = np.asarray(getattr(decisions, "bits", decisions), dtype=bool)
    m = d.size
    if m < 1:
        raise EmptyPlanError("no windows to aggregate")
    if rule.kind == "base":
        return int(d.any())
    if rule.kind == "rate":
        return int(int(d.sum()) >= _need(rule.beta, m))
    if rule.kind == "run":
        best = run = 0
        for bit in d:
            run = run + 1 if bit else 0
            best = max(best, run)
        return int(best >= _need(rule.beta, m))
    if m < rule.n:
        raise InsufficientWindowsError(f"k-of-n rule needs {rule.n} windows, got {m}")
    counts = np.convolve(d.astype(int), np.ones(rule.n, dtype=int), mode="valid")
    return int(counts.max() >= rule.k)


# --------------------------------------------------------------- manifest

def default_manifest():
    """Text of the shipped 810-indicator manifest."""
    tests = [TestKind.MannWhitneyU, TestKind.KolmogorovSmirnov2, TestKind.FVariance]
    lengths = ["30", "50", "auto"]
    lines = [
        "# indagg indicator manifest: test level length step smoothed rule",
        "# test: U | KS | F; length: integer or auto = min(n_eff - 2, 100)",
        "# 162 base indicators: 3 tests x 3 lengths x levels {0.005, 0.1, 0.5}",
        "#   x steps {1, 5, 10} x smoothing {no, yes}",
        "# 648 aggregated indicators: 9 rules {rate, run} x beta {0.1, 0.3, 0.5} + kofn",
        "#   {(2,3), (3,5), (4,5)} x 3 tests x 3 lengths x levels {0.005, 0.1}",
        "#   x steps {1, 5} x smoothing {no, yes}",
    ]
    for smooth, test, length, level, step in itertools.product(
            ["no", "yes"], tests, lengths, ["0.005", "0.1", "0.5"], ["1", "5", "10"]):
        lines.append(f"{test.short.upper()} {level} {length} {step} {smooth} base")
    rules = ["rate(0.1)", "rate(0.3)", "rate(0.5)", "run(0.1)", "run(0.3)", "run(0.5)",
             "kofn(2,3)", "kofn(3,5)", "kofn(4,5)"]
    for rule, smooth, test, length, level, step in itertools.product(
            rules, ["no", "yes"], tests, lengths, ["0.005", "0.1"], ["1", "5"]):
        lines.append(f"{test.short.upper()} {level} {length} {step} {smooth} {rule}")
    return "\n".join(lines) + "\n"


def _test_token(token):
    table = {"U": TestKind.MannWhitneyU, "K": TestKind.KolmogorovSmirnov2,
             "KS": TestKind.KolmogorovSmirnov2, "F": TestKind.FVariance}
    if token.upper() not in table:
        raise ValueError(f"unknown test {token!r}")
    return table[token.upper()]


def _parse_line(line):
    fields = line.split()
    if len(fields) != 6:
        raise ValueError(f"expected 6 fields, got {len(fields)}")
    test, level, length, step, smooth, rule = fields
    level = float(level)
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if smooth.lower() not in ("yes", "no"):
        raise ValueError(f"smoothed must be yes or no, got {smooth!r}")
    plan = WindowPlan(None if length.lower() == "auto" else int(length), int(step))
    return IndicatorConfig(_test_token(test), level, plan, smooth.lower() == "yes",
                           AggregationRule.parse(rule))


def parse_manifest(text):
    """Parse manifest text into configs, reporting every bad line at once."""
    configs, problems, seen = [], [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            cfg = _parse_line(line)
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}: {raw.strip()!r}")
            continue
        if cfg.id in seen:
            problems.append(f"line {lineno}: duplicate of line {seen[cfg.id]} ({cfg.id})")
            continue
        seen[cfg.id] = lineno
        configs.append(cfg)
    if problems:
        raise ManifestError("invalid manifest:\n  " + "\n  ".join(problems))
    return configs


def load_manifest_text(name_or_path=None):
    if name_or_path in (None, DEFAULT_GRID):
        return resources.files("indagg").joinpath(f"data/{DEFAULT_GRID}.txt").read_text()
    with open(name_or_path) as fh:
        return fh.read()


def build_grid(manifest=None):
    """Ordered indicator grid from a manifest.

    ``manifest`` may be ``None``/``"grid-810"`` (the shipped default), a path,
    manifest text, or an iterable of :class:`IndicatorConfig`.
    """
    if manifest is None or isinstance(manifest, str):
        if isinstance(manifest, str) and "\n" in manifest:
            return parse_manifest(manifest)
        if manifest == "":
            return []
        return parse_manifest(load_manifest_text(manifest))
    configs = list(manifest)
    return parse_manifest("\n".join(c.manifest_line() for c in configs))


def write_manifest(path, grid):
    with open(path, "w") as fh:
        fh.write("# test level length step smoothed rule\n")
        for cfg in grid:
            fh.write(cfg.manifest_line() + "\n")


# ------------------------------------------------------------ compilation

class CompiledGrid:
    """Grid flattened into the integer arrays the kernels consume.

    Configs sharing (smoothing, test, length) share one p-value sequence.
    """

    def __init__(self, grid):
        self.configs = list(grid)
        if not self.configs:
            raise ValueError("indicator grid is empty")
        self.ids = [c.id for c in self.configs]
        groups = {}
        c_group = []
        for cfg in self.configs:
            key = (int(cfg.smoothed), int(cfg.test), cfg.plan.length or 0)
            c_group.append(groups.setdefault(key, len(groups)))
        keys = list(groups)
        self.g_smoothed = np.array([k[0] for k in keys], dtype=np.int64)
        self.g_test = np.array([k[1] for k in keys], dtype=np.int64)
        self.g_length = np.array([k[2] for k in keys], dtype=np.int64)
        self.c_group = np.array(c_group, dtype=np.int64)
        self.c_step = np.array([c.plan.step for c in self.configs], dtype=np.int64)
        self.c_level = np.array([c.level for c in self.configs], dtype=np.float64)
        self.c_rule = np.array([c.rule.code for c in self.configs], dtype=np.int64)
        self.c_beta = np.array([c.rule.beta for c in self.configs], dtype=np.float64)
        self.c_k = np.array([c.rule.k for c in self.configs], dtype=np.int64)
        self.c_n = np.array([c.rule.n for c in self.configs], dtype=np.int64)
        self.needs_smoothing = bool(self.g_smoothed.any())

    def __len__(self):
        return len(self.configs)

    def evaluate(self, values, kernels=None):
        kernels = kernels or backend.kernels
        v = np.ascontiguousarray(values, dtype=np.float64)
        sm = moving_average(v, SMOOTH_WIDTH) if self.needs_smoothing and v.size >= SMOOTH_WIDTH else v[:0]
        return kernels.indicator_vector(v, sm, self.g_smoothed, self.g_test, self.g_length,
                                        self.c_group, self.c_step, self.c_level, self.c_rule,
                                        self.c_beta, self.c_k, self.c_n, AUTO_CAP)


def _compiled(grid):
    return grid if isinstance(grid, CompiledGrid) else CompiledGrid(grid)


def compute_indicator_vector(signal, grid, kernels=None):
    """Indicator bits of one signal; infeasible configs yield 0 with a warning."""
    cg = _compiled(grid)
    values = getattr(signal, "values", signal)
    bits, flags = cg.evaluate(values, kernels)
    if flags.any():
        sid = getattr(signal, "id", "?")
        log.warning("signal %s: %d indicator(s) infeasible for length %d, set to 0",
                    sid, int(np.count_nonzero(flags)), len(values))
    return bits


# ----------------------------------------------------------------- matrix

@dataclass
class IndicatorMatrix:
    bits: np.ndarray  # (signals, indicators) uint8
    labels: np.ndarray  # 1 = anomalous
    config_ids: list
    signal_ids: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    infeasible: np.ndarray | None = None  # per-config count of signals degraded to 0

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.bits.ndim != 2:
            raise ShapeError("indicator bits must be two-dimensional")
        if self.bits.shape[0] != self.labels.size:
            raise ShapeError(f"{self.bits.shape[0]} rows but {self.labels.size} labels")
        if self.bits.shape[1] != len(self.config_ids):
            raise ShapeError(f"{self.bits.shape[1]} columns but {len(self.config_ids)} config ids")
        if not self.signal_ids:
            self.signal_ids = [str(i) for i in range(self.n_rows)]
        if not self.kinds:
            self.kinds = ["" for _ in range(self.n_rows)]

    @property
    def n_rows(self):
        return int(self.bits.shape[0])

    @property
    def n_features(self):
        return int(self.bits.shape[1])

    def rows(self, index):
        index = np.asarray(index)
        return IndicatorMatrix(self.bits[index], self.labels[index], list(self.config_ids),
                               [self.signal_ids[i] for i in index], [self.kinds[i] for i in index],
                               None)

    def columns(self, index):
        index = list(index)
        return IndicatorMatrix(self.bits[:, index], self.labels, [self.config_ids[i] for i in index],
                               list(self.signal_ids), list(self.kinds), None)

    def column_index(self, ids):
        pos = {cid: i for i, cid in enumerate(self.config_ids)}
        return [pos[c] for c in ids]

    def coverage_warnings(self):
        if self.infeasible is None:
            return []
        return [f"{cid}: infeasible on {int(k)} of {self.n_rows} signals"
                for cid, k in zip(self.config_ids, self.infeasible) if k]


def compute_matrix(dataset, grid, workers=1, kernels=None):
    """Indicator matrix of a dataset, rows in dataset order."""
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    cg = _compiled(grid)

    def one(sig):
        return cg.evaluate(sig.values, kernels)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, dataset))
    else:
        results = [one(s) for s in dataset]
    bits = np.vstack([r[0] for r in results])
    flags = np.vstack([r[1] for r in results])
    infeasible = np.count_nonzero(flags, axis=0)
    labels = np.array([int(s.is_anomalous) for s in dataset], dtype=np.uint8)
    mat = IndicatorMatrix(bits, labels, list(cg.ids), [s.id for s in dataset],
                          [s.label.value for s in dataset], infeasible)
    degraded = mat.coverage_warnings()
    if degraded:
        log.warning("%d indicator(s) degraded to 0 on some signals (too few windows)", len(degraded))
        for w in degraded:
            log.debug("coverage: %s", w)
    return mat


MATRIX_MAGIC = "#indagg-matrix v1"


def write_matrix(path, mat):
    """Tab-separated: id, label, kind, then one 0/1 column per indicator."""
    with open(path, "w") as fh:
        fh.write(MATRIX_MAGIC + "\n")
        fh.write("\t".join(["signal_id", "label", "kind", *mat.config_ids]) + "\n")
        for sid, lab, kind, row in zip(mat.signal_ids, mat.labels, mat.kinds, mat.bits):
            fh.write(f"{sid}\t{int(lab)}\t{kind}\t" + "\t".join("1" if b else "0" for b in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        if fh.readline().rstrip("\n") != MATRIX_MAGIC:
            raise ValueError(f"{path}: not an indicator matrix file")
        header = fh.readline().rstrip("\n").split("\t")
        if header[:3] != ["signal_id", "label", "kind"]:
            raise ValueError(f"{path}: malformed matrix header")
        ids, labels, kinds, rows = [], [], [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise ShapeError(f"{path}: row has {len(parts)} fields, expected {len(header)}")
            ids.append(parts[0])
            labels.append(int(parts[1]))
            kinds.append(parts[2])
            rows.append([1 if b == "1" else 0 for b in parts[3:]])
    bits = np.array(rows, dtype=np.uint8).reshape(len(rows), len(header) - 3)
    return IndicatorMatrix(bits, np.array(labels, dtype=np.uint8), header[3:], ids, kinds)
