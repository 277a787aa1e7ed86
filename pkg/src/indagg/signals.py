"""Benchmark signals with a single change point.

Family A: standard Gaussian residuals, length 100-200, with variance, mean or
slope shifts. Family B: chi-square(4) noise, length 100-150, the same shift
kinds (variance shift becomes a change of degrees of freedom), plus normal
signals corrupted by a slow sinusoid.

Every signal draws from its own PCG64 stream keyed by ``(seed, family,
index)``, so a dataset is reproducible regardless of generation order.
"""
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLengthError, WrongFamilyError

GENERATOR = "numpy.PCG64(SeedSequence(seed, spawn_key=(family, index)))"

LENGTHS = {"A": (100, 200), "B": (100, 150)}
SIGMA_RANGE = (1.01, 5.0)
MEAN_RANGE = (1.01, 5.0)
SLOPE_RANGE = (0.02, 3.0)
B_NOISE_DF = 4
B_SHIFT_DF = (8, 16)
SIN_AMPLITUDE = 1.0
SIN_PERIOD_FRACTION = 2.0 / 3.0


class AnomalyKind(str, enum.Enum):
    NONE = "none"
    CORRUPTED_NONE = "corrupted"
    VARIANCE_SHIFT = "variance"
    MEAN_SHIFT = "mean"
    SLOPE_SHIFT = "slope"

    @property
    def anomalous(self):
        return self not in (AnomalyKind.NONE, AnomalyKind.CORRUPTED_NONE)


SHIFT_KINDS = (AnomalyKind.VARIANCE_SHIFT, AnomalyKind.MEAN_SHIFT, AnomalyKind.SLOPE_SHIFT)
NORMAL_KINDS = (AnomalyKind.NONE, AnomalyKind.CORRUPTED_NONE)
KIND_ORDER = NORMAL_KINDS + SHIFT_KINDS


@dataclass
class LabeledSignal:
    id: str
    family: str
    label: AnomalyKind
    values: np.ndarray
    change_point: int | None = None
    magnitude: float | None = None

    @property
    def n(self):
        return int(self.values.size)

    @property
    def is_anomalous(self):
        return self.label.anomalous


def _default_counts(family):
    if family == "A":
        return {"none": 3000, "corrupted": 0, "variance": 1000, "mean": 1000, "slope": 1000}
    return {"none": 1800, "corrupted": 1200, "variance": 1000, "mean": 1000, "slope": 1000}


@dataclass
class DatasetSpec:
    family: str = "A"
    seed: int = 0
    counts: dict = field(default_factory=dict)
    sin_phase: float = 0.0

    def __post_init__(self):
        self.family = self.family.upper()
        if self.family not in LENGTHS:
            raise WrongFamilyError(f"family must be 'A' or 'B', got {self.family!r}")
        merged = _default_counts(self.family)
        if self.counts:
            unknown = set(self.counts) - set(merged)
            if unknown:
                raise ValueError(f"unknown kinds in counts: {sorted(unknown)}")
            merged = {k: int(self.counts.get(k, 0)) for k in merged}
        if any(v < 0 for v in merged.values()):
            raise ValueError("class counts must be non-negative")
        if self.family == "A" and merged["corrupted"]:
            raise WrongFamilyError("corrupted normal signals only exist in family B")
        self.counts = merged

    @property
    def total(self):
        return sum(self.counts.values())

    def kinds(self):
        """Label of every signal, in dataset order."""
        out = []
        for kind in KIND_ORDER:
            out.extend([kind] * self.counts[kind.value])
        return out

    def to_dict(self):
        return {"family": self.family, "seed": int(self.seed), "counts": dict(self.counts),
                "sin_phase": self.sin_phase}

    @classmethod
    def scaled(cls, family, seed, fraction):
        base = _default_counts(family.upper())
        return cls(family, seed, {k: int(round(v * fraction)) for k, v in base.items()})


def signal_rng(seed, family, index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(ord(family), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_change_point(n, rng):
    """Index of the first post-change observation, uniform on [ceil(2n/10), floor(8n/10)]."""
    if n < 10:
        raise InvalidLengthError(f"signal length must be at least 10, got {n}")
    lo = -(-2 * n // 10)
    hi = 8 * n // 10
    return int(rng.integers(lo, hi + 1))


def _kind(kind):
    return kind if isinstance(kind, AnomalyKind) else AnomalyKind(kind)


def gen_signal_a(kind, rng, magnitude=None, n=None, id=""):
    """One family-A signal. ``magnitude`` overrides the random shift size."""
    kind = _kind(kind)
    if kind is AnomalyKind.CORRUPTED_NONE:
        raise WrongFamilyError("corrupted normal signals only exist in family B")
    if n is None:
        n = int(rng.integers(LENGTHS["A"][0], LENGTHS["A"][1] + 1))
    values = rng.standard_normal(n)
    if kind is AnomalyKind.NONE:
        return LabeledSignal(id, "A", kind, values)
    tau = sample_change_point(n, rng)
    lo, hi = {AnomalyKind.VARIANCE_SHIFT: SIGMA_RANGE, AnomalyKind.MEAN_SHIFT: MEAN_RANGE,
              AnomalyKind.SLOPE_SHIFT: SLOPE_RANGE}[kind]
    mag = float(rng.uniform(lo, hi)) if magnitude is None else float(magnitude)
    if kind is AnomalyKind.VARIANCE_SHIFT:
        values[tau:] *= mag
    elif kind is AnomalyKind.MEAN_SHIFT:
        values[tau:] += mag
    else:
        values[tau:] += mag * np.arange(n - tau)
    return LabeledSignal(id, "A", kind, values, tau, mag)


def gen_signal_b(kind, rng, magnitude=None, n=None, sin_phase=0.0, id=""):
    """One family-B signal; the variance shift magnitude is the post-change df."""
    kind = _kind(kind)
    if n is None:
        n = int(rng.integers(LENGTHS["B"][0], LENGTHS["B"][1] + 1))
    values = rng.chisquare(B_NOISE_DF, n)
    if kind is AnomalyKind.NONE:
        return LabeledSignal(id, "B", kind, values)
    if kind is AnomalyKind.CORRUPTED_NONE:
        period = SIN_PERIOD_FRACTION * n
        values = values + SIN_AMPLITUDE * np.sin(2.0 * math.pi * np.arange(n) / period + sin_phase)
        return LabeledSignal(id, "B", kind, values)
    tau = sample_change_point(n, rng)
    if kind is AnomalyKind.VARIANCE_SHIFT:
        df = int(rng.integers(B_SHIFT_DF[0], B_SHIFT_DF[1] + 1)) if magnitude is None else magnitude
        values[tau:] = rng.chisquare(df, n - tau)
        return LabeledSignal(id, "B", kind, values, tau, float(df))
    lo, hi = MEAN_RANGE if kind is AnomalyKind.MEAN_SHIFT else SLOPE_RANGE
    mag = float(rng.uniform(lo, hi)) if magnitude is None else float(magnitude)
    if kind is AnomalyKind.MEAN_SHIFT:
        values[tau:] += mag
    else:
        values[tau:] += mag * np.arange(n - tau)
    return LabeledSignal(id, "B", kind, values, tau, mag)


def gen_dataset(spec):
    """All signals of ``spec`` in class order (see ``KIND_ORDER``)."""
    out = []
    for i, kind in enumerate(spec.kinds()):
        rng = signal_rng(spec.seed, spec.family, i)
        sid = f"{spec.family}-{i:05d}"
        if spec.family == "A":
            out.append(gen_signal_a(kind, rng, id=sid))
        else:
            out.append(gen_signal_b(kind, rng, sin_phase=spec.sin_phase, id=sid))
    return out


# ------------------------------------------------------------------ files

FORMAT = "indagg-dataset"
VERSION = 1


def write_dataset(path, signals, spec):
    header = {"format": FORMAT, "version": VERSION, "generator": GENERATOR, **spec.to_dict(),
              "size": len(signals)}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in signals:
            rec = {"id": s.id, "family": s.family, "label": s.label.value,
                   "change_point": s.change_point, "magnitude": s.magnitude,
                   "values": s.values.tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path):
    """Return ``(header, signals)`` from a dataset file."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != FORMAT:
            raise ValueError(f"{path}: not an {FORMAT} file")
        if header.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported dataset version {header.get('version')}")
        signals = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            signals.append(LabeledSignal(rec["id"], rec["family"], AnomalyKind(rec["label"]),
                                         np.asarray(rec["values"], dtype=float),
                                         rec["change_point"], rec["magnitude"]))
    return header, signals
