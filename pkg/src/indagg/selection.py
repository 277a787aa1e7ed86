"""mRMR ranking of binary indicators and the forward evaluation curve."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import NoSignalError, ShapeError
from .forest import ForestParams, accuracy, oob_accuracy, train_forest

log = logging.getLogger(__name__)

SCORE_TIE_TOL = 1e-12


def _mi_from_counts(n00, n01, n10, n11):
    """Plug-in mutual information (bits) of 2x2 count tables, elementwise."""
    n00, n01, n10, n11 = (np.asarray(c, dtype=np.float64) for c in (n00, n01, n10, n11))
    total = n00 + n01 + n10 + n11
    px = ((n00 + n01) / total, (n10 + n11) / total)
    py = ((n00 + n10) / total, (n01 + n11) / total)
    out = np.zeros(np.broadcast(n00, n01, n10, n11).shape)
    for a, b, c in ((0, 0, n00), (0, 1, n01), (1, 0, n10), (1, 1, n11)):
        pj = c / total
        denom = px[a] * py[b]
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(pj > 0, pj * np.log2(pj / np.where(denom > 0, denom, 1.0)), 0.0)
        out = out + term
    # rounding can leave tiny negatives for independent columns
    return np.maximum(out, 0.0)


def mutual_information(x, y):
    """Mutual information in bits between two binary columns."""
    x = np.asarray(x).astype(np.int64).ravel()
    y = np.asarray(y).astype(np.int64).ravel()
    if x.size != y.size:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 1:
        raise ShapeError("empty columns")
    c = np.bincount(2 * x + y, minlength=4)
    return float(_mi_from_counts(c[0], c[1], c[2], c[3]))


def mi_against(bits, column):
    """MI between every column of ``bits`` and one binary ``column``."""
    bits = np.asarray(bits, dtype=np.float64)
    col = np.asarray(column, dtype=np.float64)
    n = bits.shape[0]
    n11 = col @ bits
    ones_x = bits.sum(axis=0)
    ones_y = col.sum()
    n10 = ones_x - n11
    n01 = ones_y - n11
    n00 = n - n11 - n10 - n01
    return _mi_from_counts(n00, n01, n10, n11)


@dataclass
class RankEntry:
    rank: int
    index: int
    config_id: str
    relevance: float
    redundancy: float
    score: float


@dataclass
class Ranking:
    entries: list
    method: str = "mid"

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self):
        return [e.config_id for e in self.entries]

    @property
    def indices(self):
        return [e.index for e in self.entries]

    def top(self, k):
        return self.entries[:k]


def mrmr_rank(matrix, count, method="mid"):
    """Greedy mRMR ranking of ``count`` indicators against the class label.

    ``mid`` scores a candidate by relevance minus mean redundancy with the
    already selected set, ``miq`` by their ratio. Ties go to the earliest
    column.
    """
    bits, labels = matrix.bits, matrix.labels
    p = bits.shape[1]
    if not 1 <= count <= p:
        raise ValueError(f"count must be in [1, {p}], got {count}")
    if np.unique(labels).size < 2:
        raise NoSignalError("labels contain a single class")
    if method not in ("mid", "miq"):
        raise ValueError(f"method must be 'mid' or 'miq', got {method!r}")
    relevance = mi_against(bits, labels)
    red_sum = np.zeros(p)
    chosen = np.zeros(p, dtype=bool)
    entries = []
    for step in range(count):
        if step == 0:
            redundancy = np.zeros(p)
            score = relevance.copy()
        else:
            redundancy = red_sum / step
            if method == "mid":
                score = relevance - redundancy
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = np.where(redundancy > 0, relevance / redundancy, np.inf)
        score[chosen] = -np.inf
        # scores equal up to rounding count as tied; the earliest column wins
        best = int(np.flatnonzero(score >= score.max() - SCORE_TIE_TOL)[0])
        chosen[best] = True
        entries.append(RankEntry(step + 1, best, matrix.config_ids[best], float(relevance[best]),
                                 float(redundancy[best]), float(score[best])))
        if step + 1 < count:
            red_sum += mi_against(bits, bits[:, best])
    return Ranking(entries, method)


def write_ranking(path, ranking):
    with open(path, "w") as fh:
        fh.write("rank\tindex\tconfig_id\trelevance\tredundancy\tscore\n")
        for e in ranking:
            fh.write(f"{e.rank}\t{e.index}\t{e.config_id}\t{e.relevance!r}\t{e.redundancy!r}\t{e.score!r}\n")


def read_ranking(path):
    entries = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:3] != ["rank", "index", "config_id"]:
            raise ValueError(f"{path}: not a ranking file")
        for line in fh:
            r, i, cid, rel, red, score = line.rstrip("\n").split("\t")
            entries.append(RankEntry(int(r), int(i), cid, float(rel), float(red), float(score)))
    return Ranking(entries)


# ---------------------------------------------------------- forward curve

def default_schedule(p):
    ks = list(range(1, 21)) + list(range(25, 101, 5)) + list(range(150, p, 50)) + [p]
    return sorted({k for k in ks if k <= p})


@dataclass
class ForwardRecord:
    k: int
    train_accuracy: float
    oob_accuracy: float
    test_accuracies: list


def forward_curve(train, ranking, schedule, params=None, test_groups=(), kernels=None):
    """Forests on the top-``k`` ranked indicators for each ``k`` of ``schedule``."""
    params = params or ForestParams()
    if any(k < 1 or k > len(ranking) for k in schedule):
        raise ValueError(f"schedule values must lie in [1, {len(ranking)}]")
    cols = train.column_index(ranking.ids)
    records = []
    for k in schedule:
        sub = train.columns(cols[:k])
        forest = train_forest(sub, params, kernels)
        tests = [accuracy(forest, g.columns(g.column_index(sub.config_ids)), kernels) for g in test_groups]
        records.append(ForwardRecord(k, accuracy(forest, sub, kernels), oob_accuracy(forest, sub, kernels), tests))
        log.info("forward k=%d train=%.4f oob=%.4f test=%.4f", k, records[-1].train_accuracy,
                 records[-1].oob_accuracy, float(np.mean(tests)) if tests else float("nan"))
    return records
