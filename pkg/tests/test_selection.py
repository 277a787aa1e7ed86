import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indagg.errors import NoSignalError, ShapeError
from indagg.forest import ForestParams
from indagg.indicators import IndicatorMatrix
from indagg.selection import (default_schedule, forward_curve, mrmr_rank, mutual_information, read_ranking,
                              write_ranking)


def oracle_mi(x, y):
    """Plug-in MI written out term by term."""
    n = len(x)
    total = 0.0
    for a in (0, 1):
        for b in (0, 1):
            pab = sum(1 for u, v in zip(x, y) if u == a and v == b) / n
            pa = sum(1 for u in x if u == a) / n
            pb = sum(1 for v in y if v == b) / n
            if pab > 0:
                total += pab * math.log2(pab / (pa * pb))
    return total


def oracle_mrmr(bits, labels, count):
    p = bits.shape[1]
    rel = [oracle_mi(bits[:, j], labels) for j in range(p)]
    chosen = []
    for _ in range(count):
        scores = {}
        for j in range(p):
            if j in chosen:
                continue
            red = sum(oracle_mi(bits[:, j], bits[:, z]) for z in chosen) / len(chosen) if chosen else 0.0
            scores[j] = rel[j] - red
        top = max(scores.values())
        chosen.append(min(j for j, s in scores.items() if s >= top - 1e-12))
    return chosen


def matrix(bits, labels):
    return IndicatorMatrix(np.asarray(bits), np.asarray(labels), [f"c{i}" for i in range(np.shape(bits)[1])])


# ---------------------------------------------------------------- MI

def test_mi_examples():
    assert mutual_information(np.ones(10), np.r_[np.zeros(5), np.ones(5)]) == 0.0
    y = np.r_[np.zeros(50), np.ones(50)]
    assert mutual_information(y, y) == pytest.approx(1.0, abs=1e-15)
    x = np.r_[np.zeros(50), np.ones(50)]
    y = np.r_[np.zeros(40), np.ones(10), np.zeros(10), np.ones(40)]
    assert mutual_information(x, y) == pytest.approx(1 + 0.8 * math.log2(0.8) + 0.2 * math.log2(0.2), abs=1e-12)
    assert mutual_information(x, y) == pytest.approx(0.2781, abs=5e-5)


def test_mi_shape_errors():
    with pytest.raises(ShapeError):
        mutual_information([0, 1], [0, 1, 1])
    with pytest.raises(ShapeError):
        mutual_information([], [])


bit_pairs = st.integers(1, 80).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                        st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=300, deadline=None)
@given(bit_pairs)
def test_mi_symmetric_nonnegative_and_matches_oracle(pair):
    x, y = pair
    mxy, myx = mutual_information(x, y), mutual_information(y, x)
    assert mxy >= 0.0
    assert abs(mxy - myx) <= 1e-12
    assert mxy == pytest.approx(oracle_mi(x, y), abs=1e-12)


def test_mi_zero_for_factorising_table():
    # counts 6/2/3/1 factorise as (8/12, 4/12) x (9/12, 3/12)
    x = [0] * 8 + [1] * 4
    y = [0] * 6 + [1] * 2 + [0] * 3 + [1] * 1
    assert mutual_information(x, y) == 0.0


# -------------------------------------------------------------- mRMR

def test_label_copy_ranks_first(rng):
    labels = rng.integers(0, 2, 200)
    bits = rng.integers(0, 2, (200, 6))
    bits[:, 4] = labels
    assert mrmr_rank(matrix(bits, labels), 1).indices == [4]


def test_duplicate_of_best_is_not_second(rng):
    labels = rng.integers(0, 2, 400)
    best = labels ^ (rng.random(400) < 0.1)
    other = labels ^ (rng.random(400) < 0.3)
    bits = np.column_stack([best, best, other])
    ranking = mrmr_rank(matrix(bits, labels), 3)
    assert ranking.indices[0] == 0
    assert ranking.indices[1] == 2
    # the duplicate's redundancy equals its relevance, so its MID score is zero
    assert ranking.entries[2].score == pytest.approx(ranking.entries[2].relevance - ranking.entries[2].redundancy)


def test_full_ranking_is_permutation(rng):
    labels = rng.integers(0, 2, 100)
    ranking = mrmr_rank(matrix(rng.integers(0, 2, (100, 15)), labels), 15)
    assert sorted(ranking.indices) == list(range(15))
    assert len(set(ranking.ids)) == 15


def test_single_class_and_bad_arguments(rng):
    bits = rng.integers(0, 2, (20, 3))
    with pytest.raises(NoSignalError):
        mrmr_rank(matrix(bits, np.zeros(20)), 2)
    with pytest.raises(ValueError):
        mrmr_rank(matrix(bits, np.r_[np.zeros(10), np.ones(10)]), 4)
    with pytest.raises(ValueError):
        mrmr_rank(matrix(bits, np.r_[np.zeros(10), np.ones(10)]), 2, method="maxrel")


def test_greedy_matches_brute_force_oracle():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(40, 200))
        labels = rng.integers(0, 2, n)
        dens = rng.uniform(0.1, 0.9, 12)
        noise = rng.uniform(0.05, 0.5, 12)
        bits = np.where(rng.random((n, 12)) < noise, rng.random((n, 12)) < dens, labels[:, None]).astype(np.uint8)
        assert mrmr_rank(matrix(bits, labels), 12).indices == oracle_mrmr(bits, labels, 12)


def test_first_pick_invariant_to_column_order(rng):
    labels = rng.integers(0, 2, 300)
    bits = np.where(rng.random((300, 10)) < rng.uniform(0.1, 0.6, 10), rng.integers(0, 2, (300, 10)),
                    labels[:, None])
    first = matrix(bits, labels).config_ids[mrmr_rank(matrix(bits, labels), 1).indices[0]]
    perm = rng.permutation(10)
    shuffled = IndicatorMatrix(bits[:, perm], labels, [f"c{i}" for i in perm])
    assert mrmr_rank(shuffled, 1).ids == [first]


def test_ranking_is_deterministic_and_round_trips(rng, tmp_path):
    labels = rng.integers(0, 2, 150)
    mat = matrix(rng.integers(0, 2, (150, 20)), labels)
    a, b = mrmr_rank(mat, 20), mrmr_rank(mat, 20)
    assert a == b
    write_ranking(tmp_path / "r.tsv", a)
    back = read_ranking(tmp_path / "r.tsv")
    assert back.ids == a.ids and [e.score for e in back] == [e.score for e in a]


def test_miq_variant_prefers_low_redundancy(rng):
    labels = rng.integers(0, 2, 400)
    best = labels ^ (rng.random(400) < 0.1)
    other = labels ^ (rng.random(400) < 0.3)
    ranking = mrmr_rank(matrix(np.column_stack([best, best, other]), labels), 3, method="miq")
    assert ranking.indices[:2] == [0, 2] and ranking.method == "miq"


# ------------------------------------------------------------ forward curve

def test_default_schedule():
    s = default_schedule(810)
    assert s[:20] == list(range(1, 21)) and 25 in s and 100 in s and 150 in s and s[-1] == 810
    assert default_schedule(12) == list(range(1, 13))


def test_forward_curve_shape(rng):
    labels = rng.integers(0, 2, 200)
    bits = np.where(rng.random((200, 8)) < 0.3, rng.integers(0, 2, (200, 8)), labels[:, None])
    train = matrix(bits[:150], labels[:150])
    tests = [matrix(bits[150:175], labels[150:175]), matrix(bits[175:], labels[175:])]
    ranking = mrmr_rank(train, 8)
    records = forward_curve(train, ranking, [1, 3, 8], ForestParams(n_trees=30, seed=1), tests)
    assert [r.k for r in records] == [1, 3, 8]
    assert all(len(r.test_accuracies) == 2 for r in records)
    with pytest.raises(ValueError):
        forward_curve(train, ranking, [9], ForestParams(n_trees=5))
