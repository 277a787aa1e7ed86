"""Random forest over binary indicators, with out-of-bag estimates.

Trees are grown to purity on bootstrap samples; each node draws ``mtry``
candidate features without replacement (continuing past features that are
constant in the node) and keeps the best Gini split. Ties between equally
good splits go to the lowest feature index, tied votes go to class 0.
"""
import base64
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import backend
from .errors import DegenerateTrainingError, ShapeError, WrongMatrixError

MAX_TRAIN_ROWS = 15000  # keeps the exact integer split comparison inside int64
MODEL_FORMAT = "indagg-forest"
MODEL_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None  # default ceil(sqrt(p))
    max_depth: int | None = None
    min_leaf: int = 1
    seed: int = 0
    workers: int = 1

    def resolved_mtry(self, p):
        m = math.ceil(math.sqrt(p)) if self.mtry is None else int(self.mtry)
        if not 1 <= m <= p:
            raise ValueError(f"mtry must be in [1, {p}], got {m}")
        return m


@dataclass
class Forest:
    params: ForestParams
    config_ids: list
    n_train: int
    fingerprint: str
    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    improvement: np.ndarray
    offsets: np.ndarray
    inbag: np.ndarray  # (n_trees, n_train) bool
    leaf_class: np.ndarray = field(init=False)

    def __post_init__(self):
        self.leaf_class = (self.value[:, 1] > self.value[:, 0]).astype(np.uint8)

    @property
    def n_trees(self):
        return len(self.offsets) - 1

    @property
    def n_features(self):
        return len(self.config_ids)

    def tree_depths(self):
        depths = []
        for t in range(self.n_trees):
            off = self.offsets[t]
            size = self.offsets[t + 1] - off
            depth = np.zeros(size, dtype=int)
            for node in range(size):
                if self.feature[off + node] >= 0:
                    depth[self.left[off + node]] = depth[node] + 1
                    depth[self.right[off + node]] = depth[node] + 1
            depths.append(int(depth.max()))
        return depths


def matrix_fingerprint(bits, labels):
    h = hashlib.sha256()
    h.update(np.asarray(bits.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(bits, dtype=np.uint8).tobytes())
    h.update(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
    return h.hexdigest()


def _tree_streams(seed, t, n):
    ss = np.random.SeedSequence(int(seed), spawn_key=(t,))
    rng = np.random.Generator(np.random.PCG64(ss))
    weights = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.int64)
    tree_seed = int(rng.integers(0, 2 ** 64, dtype=np.uint64))
    return weights, tree_seed


def train_forest(matrix, params=None, kernels=None):
    """Fit a forest on an :class:`~indagg.indicators.IndicatorMatrix`."""
    params = params or ForestParams()
    kernels = kernels or backend.kernels
    bits, labels = matrix.bits, matrix.labels
    n, p = bits.shape
    if p < 1:
        raise DegenerateTrainingError("no features to train on")
    if n > MAX_TRAIN_ROWS:
        raise ValueError(f"at most {MAX_TRAIN_ROWS} training rows are supported, got {n}")
    if np.unique(labels).size < 2:
        raise DegenerateTrainingError("training labels contain a single class")
    if params.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    mtry = params.resolved_mtry(p)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    xt = np.ascontiguousarray(bits.T)

    def grow(t):
        weights, tree_seed = _tree_streams(params.seed, t, n)
        tree = kernels.build_tree(xt, labels, weights, mtry, max_depth, params.min_leaf, tree_seed)
        return tree, weights > 0

    if params.workers and params.workers > 1:
        with ThreadPoolExecutor(params.workers) as pool:
            grown = list(pool.map(grow, range(params.n_trees)))
    else:
        grown = [grow(t) for t in range(params.n_trees)]
    sizes = [g[0][0].size for g in grown]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return Forest(
        params=params,
        config_ids=list(matrix.config_ids),
        n_train=n,
        fingerprint=matrix_fingerprint(bits, labels),
        feature=np.concatenate([g[0][0] for g in grown]),
        left=np.concatenate([g[0][1] for g in grown]),
        right=np.concatenate([g[0][2] for g in grown]),
        value=np.concatenate([g[0][3] for g in grown]),
        improvement=np.concatenate([g[0][4] for g in grown]),
        offsets=offsets,
        inbag=np.vstack([g[1] for g in grown]),
    )


def tree_votes(forest, bits, kernels=None):
    """Class voted by every tree for every row, shape (n_trees, n_rows)."""
    kernels = kernels or backend.kernels
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    if bits.shape[1] != forest.n_features:
        raise ShapeError(f"expected {forest.n_features} indicators, got {bits.shape[1]}")
    return kernels.predict_trees(bits, forest.feature, forest.left, forest.right,
                                 forest.leaf_class, forest.offsets)


def predict_many(forest, bits, kernels=None):
    """Majority-vote classes and the fraction of trees voting anomalous."""
    votes = tree_votes(forest, bits, kernels)
    ones = votes.sum(axis=0, dtype=np.int64)
    classes = (2 * ones > forest.n_trees).astype(np.uint8)
    return classes, ones / forest.n_trees


def predict(forest, vector, kernels=None):
    """Class of one indicator vector and the share of trees that agree with it."""
    vector = np.asarray(vector)
    if vector.ndim != 1:
        raise ShapeError("predict takes a single indicator vector")
    classes, frac = predict_many(forest, vector[None, :], kernels)
    cls = int(classes[0])
    return cls, float(frac[0] if cls == 1 else 1.0 - frac[0])


def accuracy(forest, matrix, kernels=None):
    classes, _ = predict_many(forest, matrix.bits, kernels)
    return float(np.mean(classes == matrix.labels))


@dataclass
class OOBEstimate:
    accuracy: float
    coverage: float  # share of training rows left out by at least one tree
    predictions: np.ndarray  # -1 where no tree left the row out


def oob_estimate(forest, matrix, kernels=None):
    if matrix.n_rows != forest.n_train or matrix_fingerprint(matrix.bits, matrix.labels) != forest.fingerprint:
        raise WrongMatrixError("matrix is not the one this forest was trained on")
    votes = tree_votes(forest, matrix.bits, kernels)
    out = ~forest.inbag
    n_out = out.sum(axis=0)
    ones = (votes.astype(bool) & out).sum(axis=0)
    pred = np.where(n_out > 0, (2 * ones > n_out).astype(int), -1)
    covered = n_out > 0
    acc = float(np.mean(pred[covered] == matrix.labels[covered])) if covered.any() else float("nan")
    return OOBEstimate(acc, float(covered.mean()), pred)


def oob_accuracy(forest, matrix, kernels=None):
    """Out-of-bag accuracy on the training matrix (rows never out of bag skipped)."""
    return oob_estimate(forest, matrix, kernels).accuracy


def feature_importance(forest):
    """Mean decrease in Gini impurity per feature, normalised to sum to 1."""
    internal = forest.feature >= 0
    imp = np.bincount(forest.feature[internal], weights=forest.improvement[internal],
                      minlength=forest.n_features)
    total = imp.sum()
    if total <= 0:
        return np.full(forest.n_features, 1.0 / forest.n_features)
    return imp / total


# ------------------------------------------------------------------ files

def _pack(mask):
    return base64.b64encode(np.packbits(mask, axis=None).tobytes()).decode("ascii")


def save_forest(path, forest):
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "params": asdict(forest.params),
        "config_ids": forest.config_ids,
        "n_train": forest.n_train,
        "fingerprint": forest.fingerprint,
        "offsets": forest.offsets.tolist(),
        "feature": forest.feature.tolist(),
        "left": forest.left.tolist(),
        "right": forest.right.tolist(),
        "value": forest.value.tolist(),
        "improvement": forest.improvement.tolist(),
        "inbag": _pack(forest.inbag),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_forest(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not an {MODEL_FORMAT} model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    n_trees = len(doc["offsets"]) - 1
    raw = np.frombuffer(base64.b64decode(doc["inbag"]), dtype=np.uint8)
    inbag = np.unpackbits(raw, count=n_trees * doc["n_train"]).astype(bool).reshape(n_trees, doc["n_train"])
    return Forest(
        params=ForestParams(**doc["params"]),
        config_ids=doc["config_ids"],
        n_train=doc["n_train"],
        fingerprint=doc["fingerprint"],
        feature=np.asarray(doc["feature"], dtype=np.int32),
        left=np.asarray(doc["left"], dtype=np.int32),
        right=np.asarray(doc["right"], dtype=np.int32),
        value=np.asarray(doc["value"], dtype=np.int64).reshape(-1, 2),
        improvement=np.asarray(doc["improvement"], dtype=np.float64),
        offsets=np.asarray(doc["offsets"], dtype=np.int64),
        inbag=inbag,
    )
