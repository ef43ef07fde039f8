import itertools

import numpy as np
import pytest

from nswlab.contention import (
    PARTITION_EXACT,
    RANDOM_ORDER_GREEDY,
    RANK1_EXACT,
    UNIFORM_QUOTA,
    CrsSpec,
    auto_scheme,
    check_monotone,
    estimate_marginal,
    fair_pick_probabilities,
    resolve,
    survival_probability,
)
from nswlab.errors import InputError
from nswlab.matroids import GraphicMatroid, PartitionMatroid, UniformMatroid


def product_law(x, A):
    """P[R(x) = A] under independent activation."""
    p = 1.0
    for k in range(len(x)):
        p *= x[k] if k in A else 1.0 - x[k]
    return p


def test_fair_pick_marginals_exact():
    """Summed over active sets, the fair pick reproduces x'_j exactly."""
    rng = np.random.default_rng(0)
    for _ in range(40):
        m = int(rng.integers(1, 6))
        x = rng.random(m)
        x = x / x.sum() * rng.uniform(0.1, 1.0)
        for j in range(m):
            marg = 0.0
            for size in range(1, m + 1):
                for A in itertools.combinations(range(m), size):
                    if j not in A:
                        continue
                    marg += product_law(x, set(A)) * fair_pick_probabilities(x, A)[j]
            target = x[j] / x.sum() * (1 - np.prod(1 - x))
            assert marg == pytest.approx(target, abs=1e-12)


def test_fair_pick_is_distribution():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.05, 0.3, 4)
    for size in range(1, 5):
        for A in itertools.combinations(range(4), size):
            probs = fair_pick_probabilities(x, A)
            assert sum(probs.values()) == pytest.approx(1.0)
            assert all(p >= 0 for p in probs.values())


def test_resolve_requires_positive_marginal():
    crs = CrsSpec(UniformMatroid(2, 1), np.array([0.5, 0.0]), 1.0, RANK1_EXACT)
    with pytest.raises(InputError):
        resolve(crs, [1], np.random.default_rng(0))


def test_resolve_empty_and_determinism():
    crs = CrsSpec(UniformMatroid(3, 1), np.array([0.2, 0.3, 0.4]), 1.0, RANK1_EXACT)
    assert resolve(crs, [], np.random.default_rng(0)) == frozenset()
    a = resolve(crs, [0, 2], np.random.default_rng(42))
    b = resolve(crs, [0, 2], np.random.default_rng(42))
    assert a == b and len(a) == 1


def test_quota_returns_small_active_unchanged():
    crs = CrsSpec(UniformMatroid(5, 2), np.full(5, 0.4), 1.0, UNIFORM_QUOTA)
    assert resolve(crs, [1, 3], np.random.default_rng(0)) == frozenset({1, 3})
    out = resolve(crs, [0, 1, 3, 4], np.random.default_rng(0))
    assert len(out) == 2 and out <= {0, 1, 3, 4}


def test_outputs_always_independent():
    rng = np.random.default_rng(7)
    specs = [
        CrsSpec(UniformMatroid(4, 1), np.full(4, 0.25), 1.0, RANK1_EXACT),
        CrsSpec(
            PartitionMatroid(4, ((0, 1), (2, 3)), (1, 1)),
            np.array([0.5, 0.5, 0.3, 0.6]),
            1.0,
            PARTITION_EXACT,
        ),
        CrsSpec(UniformMatroid(5, 2), np.full(5, 0.39), 1.0, UNIFORM_QUOTA),
        CrsSpec(
            GraphicMatroid(3, ((0, 1), (1, 2), (2, 0))),
            np.full(3, 1 / 3),
            1.0,
            RANDOM_ORDER_GREEDY,
        ),
    ]
    for crs in specs:
        m = crs.matroid.ground_size
        for _ in range(3000):
            active = [j for j in range(m) if rng.random() < crs.x[j]]
            out = resolve(crs, active, rng)
            assert out <= set(active)
            assert crs.matroid.is_independent(out)


def test_rank1_conditional_value():
    crs = CrsSpec(UniformMatroid(2, 1), np.array([0.5, 0.5]), 1.0, RANK1_EXACT)
    est = estimate_marginal(crs, 0, 40_000, np.random.default_rng(5))
    assert abs(est.mean - 0.75) <= 3 * est.stderr


def test_single_element_marginal_is_one():
    crs = CrsSpec(UniformMatroid(1, 1), np.array([0.3]), 1.0, RANK1_EXACT)
    est = estimate_marginal(crs, 0, 1000, np.random.default_rng(0))
    assert est.mean == 1.0


def test_greedy_triangle_beats_inv_e():
    crs = CrsSpec(
        GraphicMatroid(3, ((0, 1), (1, 2), (2, 0))), np.full(3, 1 / 3), 1.0, RANDOM_ORDER_GREEDY
    )
    est = estimate_marginal(crs, 0, 20_000, np.random.default_rng(3))
    assert est.mean >= (1 - 1 / np.e) - 3 * est.stderr


def test_exact_monotonicity_no_violations():
    for crs in (
        CrsSpec(UniformMatroid(4, 1), np.array([0.1, 0.2, 0.3, 0.35]), 1.0, RANK1_EXACT),
        CrsSpec(
            PartitionMatroid(5, ((0, 1, 2), (3, 4)), (1, 1)),
            np.array([0.3, 0.3, 0.3, 0.5, 0.5]),
            1.0,
            PARTITION_EXACT,
        ),
        CrsSpec(UniformMatroid(6, 2), np.full(6, 1 / 3), 1.0, UNIFORM_QUOTA),
    ):
        rep = check_monotone(crs)
        assert rep["exact"] and rep["monotone"], rep


def test_monotone_equal_sets_tie():
    crs = CrsSpec(UniformMatroid(2, 1), np.array([0.4, 0.4]), 1.0, RANK1_EXACT)
    assert survival_probability(crs, [0, 1], 0) == survival_probability(crs, [0, 1], 0)


def test_survival_closed_forms():
    crs = CrsSpec(UniformMatroid(2, 1), np.array([0.8, 0.2]), 1.0, RANK1_EXACT)
    # pairwise fair split: the rarer element wins more often
    assert survival_probability(crs, [0, 1], 0) == pytest.approx(0.2)
    assert survival_probability(crs, [0, 1], 1) == pytest.approx(0.8)
    assert survival_probability(crs, [0], 0) == 1.0
    quota = CrsSpec(UniformMatroid(4, 2), np.full(4, 0.5), 1.0, UNIFORM_QUOTA)
    assert survival_probability(quota, [0, 1, 2, 3], 1) == pytest.approx(0.5)


def test_balancedness_at_half_scale():
    # b = 1/2: conditional marginal must clear 2(1 - e^{-1/2}) for exact schemes
    bound = 2 * (1 - np.exp(-0.5))
    crs = CrsSpec(UniformMatroid(2, 1), np.array([0.25, 0.25]), 0.5, RANK1_EXACT)
    est = estimate_marginal(crs, 0, 40_000, np.random.default_rng(11))
    assert est.mean >= bound - 3 * est.stderr


def test_scheme_matroid_compatibility():
    with pytest.raises(InputError):
        CrsSpec(UniformMatroid(3, 2), np.full(3, 0.3), 1.0, RANK1_EXACT)
    with pytest.raises(InputError):
        CrsSpec(PartitionMatroid(2, ((0, 1),), (2,)), np.full(2, 0.5), 1.0, PARTITION_EXACT)
    with pytest.raises(InputError):  # marginals outside b*P
        CrsSpec(UniformMatroid(2, 1), np.array([0.8, 0.8]), 1.0, RANK1_EXACT)


def test_auto_scheme():
    assert auto_scheme(UniformMatroid(3, 1)) == RANK1_EXACT
    assert auto_scheme(UniformMatroid(3, 2)) == UNIFORM_QUOTA
    assert auto_scheme(PartitionMatroid(2, ((0,), (1,)), (1, 1))) == PARTITION_EXACT
    assert auto_scheme(PartitionMatroid(2, ((0, 1),), (2,))) == RANDOM_ORDER_GREEDY
    assert auto_scheme(GraphicMatroid(3, ((0, 1), (1, 2)))) == RANDOM_ORDER_GREEDY


def test_unconditional_selection_example():
    # x = (0.5, 0.5): unconditional win probability of each element is 0.375
    x = np.array([0.5, 0.5])
    marg = 0.0
    for A in ([0], [0, 1]):
        p = product_law(x, set(A))
        marg += p * fair_pick_probabilities(x, A)[0]
    assert marg == pytest.approx(0.375)


@pytest.mark.slow
def test_independence_certain_100k_per_scheme():
    rng = np.random.default_rng(99)
    specs = [
        CrsSpec(UniformMatroid(4, 1), np.full(4, 0.25), 1.0, RANK1_EXACT),
        CrsSpec(
            PartitionMatroid(4, ((0, 1), (2, 3)), (1, 1)),
            np.array([0.5, 0.5, 0.3, 0.6]),
            1.0,
            PARTITION_EXACT,
        ),
        CrsSpec(UniformMatroid(5, 2), np.full(5, 0.39), 1.0, UNIFORM_QUOTA),
        CrsSpec(
            GraphicMatroid(3, ((0, 1), (1, 2), (2, 0))),
            np.full(3, 1 / 3),
            1.0,
            RANDOM_ORDER_GREEDY,
        ),
    ]
    for crs in specs:
        m = crs.matroid.ground_size
        xs = crs.x
        draws = rng.random((100_000, m)) < xs[None, :]
        for t in range(100_000):
            active = list(np.flatnonzero(draws[t]))
            out = resolve(crs, active, rng)
            assert crs.matroid.is_independent(out)
