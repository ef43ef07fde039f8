import itertools

import numpy as np
import pytest

from nswlab.errors import InputError
from nswlab.matroids import (
    ExplicitMatroid,
    GraphicMatroid,
    PartitionMatroid,
    UniformMatroid,
    is_independent,
    polytope_check,
    rank,
    rank_constraint_rows,
    weighted_rank,
)

TRIANGLE = GraphicMatroid(3, ((0, 1), (1, 2), (2, 0)))


def brute_rank(matroid, S):
    """Oracle: max size over all independent subsets of S."""
    S = list(S)
    best = 0
    for r in range(len(S) + 1):
        for combo in itertools.combinations(S, r):
            if matroid.is_independent(combo):
                best = max(best, r)
    return best


def test_uniform_independence():
    M = UniformMatroid(3, 2)
    assert is_independent(M, {0, 1})
    assert not is_independent(M, {0, 1, 2})


def test_graphic_cycle_dependent():
    assert not is_independent(TRIANGLE, {0, 1, 2})
    assert is_independent(TRIANGLE, {0, 1})
    assert rank(TRIANGLE, {0, 1, 2}) == 2


def test_rank_empty_and_partition():
    assert rank(UniformMatroid(5, 3), []) == 0
    P = PartitionMatroid(3, ((0, 1), (2,)), (1, 1))
    assert rank(P, {0, 1, 2}) == 2


def test_weighted_rank_examples():
    assert weighted_rank(UniformMatroid(3, 2), (3, 2, 1), {0, 1, 2}) == 5
    assert weighted_rank(TRIANGLE, (1, 1, 1), []) == 0
    E = ExplicitMatroid.from_sets(2, [[], [0], [1]])
    assert weighted_rank(E, (2, 5), {0, 1}) == 5


def test_weighted_rank_rejects_negative():
    with pytest.raises(InputError):
        weighted_rank(UniformMatroid(2, 1), (-1, 2), {0})


def test_out_of_range_element():
    with pytest.raises(InputError):
        rank(UniformMatroid(2, 1), {5})


def test_explicit_axiom_checks():
    # fine: the graphic matroid of a path
    ExplicitMatroid.from_sets(2, [[], [0], [1], [0, 1]])
    with pytest.raises(InputError):  # not downward closed
        ExplicitMatroid.from_sets(2, [[], [0, 1]])
    with pytest.raises(InputError):  # exchange fails: {2} cannot grow into {0,1}
        ExplicitMatroid.from_sets(3, [[], [0], [1], [2], [0, 1]])
    with pytest.raises(InputError):  # missing empty set
        ExplicitMatroid.from_sets(1, [[0]])


def test_greedy_rank_matches_exhaustive_on_explicit():
    rng = np.random.default_rng(0)
    for _ in range(30):
        m = int(rng.integers(2, 6))
        # random graphic matroid (loops allowed), then relist it explicitly
        base = GraphicMatroid(
            4, tuple((int(rng.integers(0, 4)), int(rng.integers(0, 4))) for _ in range(m))
        )
        sets = [
            [j for j in range(m) if mask >> j & 1]
            for mask in range(1 << m)
            if base.is_independent([j for j in range(m) if mask >> j & 1])
        ]
        M = ExplicitMatroid.from_sets(m, sets)
        for mask in range(1 << m):
            S = [j for j in range(m) if mask >> j & 1]
            assert M.rank(S) == brute_rank(M, S)


@pytest.mark.parametrize(
    "matroid",
    [
        UniformMatroid(5, 2),
        PartitionMatroid(5, ((0, 1), (2, 3, 4)), (1, 2)),
        GraphicMatroid(4, ((0, 1), (1, 2), (2, 0), (2, 3), (3, 0))),
    ],
)
def test_rank_is_monotone_submodular(matroid):
    m = matroid.ground_size
    ranks = {mask: matroid.rank([j for j in range(m) if mask >> j & 1]) for mask in range(1 << m)}
    for mask in range(1 << m):
        for e in range(m):
            if mask >> e & 1:
                continue
            assert ranks[mask | 1 << e] >= ranks[mask]
    for small in range(1 << m):
        for big in range(1 << m):
            if small & big != small:
                continue
            for e in range(m):
                if (big >> e & 1) or (small >> e & 1):
                    continue
                gain_small = ranks[small | 1 << e] - ranks[small]
                gain_big = ranks[big | 1 << e] - ranks[big]
                assert gain_small >= gain_big


def test_polytope_check_examples():
    ok, _ = polytope_check(UniformMatroid(3, 2), (0.5, 0.5, 0.5), 1.0)
    assert ok
    ok, S = polytope_check(UniformMatroid(3, 2), (1, 1, 0.5), 1.0)
    assert not ok and S == (0, 1, 2)
    ok, S = polytope_check(UniformMatroid(2, 1), (0.4, 0.4), 0.5)
    assert not ok and S == (0, 1)


def test_polytope_contains_independent_indicators():
    for matroid in (TRIANGLE, PartitionMatroid(4, ((0, 2), (1, 3)), (1, 1)), UniformMatroid(4, 2)):
        m = matroid.ground_size
        for mask in range(1 << m):
            S = [j for j in range(m) if mask >> j & 1]
            if matroid.is_independent(S):
                point = np.zeros(m)
                point[S] = 1.0
                ok, _ = polytope_check(matroid, point, 1.0)
                assert ok


@pytest.mark.parametrize(
    "matroid",
    [
        UniformMatroid(4, 2),
        PartitionMatroid(5, ((0, 1, 2), (3, 4)), (2, 1)),
        GraphicMatroid(4, ((0, 1), (1, 2), (2, 0), (2, 3))),
    ],
)
def test_rank_rows_equal_polytope(matroid):
    """The pruned row description agrees with exhaustive membership."""
    rng = np.random.default_rng(1)
    rows = rank_constraint_rows(matroid)
    m = matroid.ground_size
    for _ in range(200):
        x = rng.uniform(0, 1.1, m)
        by_rows = all(x[list(S)].sum() <= rhs + 1e-12 for S, rhs in rows) and (x <= 1 + 1e-12).all()
        by_check = polytope_check(matroid, x, 1.0)[0] and (x <= 1 + 1e-12).all()
        assert by_rows == by_check
