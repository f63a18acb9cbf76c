import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergochain.counterexample import seq_distance
from ergochain.metric import (EmpiricalMeasure, FiniteSetIndex, TestFunction,
                              TestFunctionDictionary, bl_distance, build_dictionary,
                              dist_to_finite_set, distance, lipschitz_estimate,
                              mc_error_bound)
from ergochain.points import INFINITY, MetricError, RealVector, SeqState, Space

R1 = Space("real", 1)
finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def rv(*c):
    return RealVector(tuple(float(v) for v in c))


def test_distance_examples():
    assert distance(rv(1, 2), rv(1, 2)) == 0.0
    assert distance(rv(0, 0), rv(3, -4)) == 4.0
    assert distance(rv(0, 0), rv(3, -4), norm="euclid") == 5.0
    assert distance(rv(2.5), rv(-1)) == 3.5


def test_distance_rejects_mismatch():
    with pytest.raises(MetricError):
        distance(rv(0), rv(0, 0))
    with pytest.raises(MetricError):
        distance(rv(0), SeqState(1, 1, 1))


def test_points_validate():
    with pytest.raises(MetricError):
        RealVector((math.nan,))
    with pytest.raises(MetricError):
        SeqState(0, 1, 1)
    assert str(SeqState(1, 2, INFINITY)) == "(1,2,inf)"


@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3),
       st.lists(finite, min_size=3, max_size=3))
def test_real_metric_axioms(a, b, c):
    a, b, c = RealVector(tuple(a)), RealVector(tuple(b)), RealVector(tuple(c))
    assert distance(a, a) == 0.0
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12 * (1 + distance(a, c))


def test_dist_to_finite_set_examples():
    assert dist_to_finite_set(rv(0), [rv(1), rv(3)]) == 1.0
    assert dist_to_finite_set(rv(1), [rv(1)]) == 0.0
    assert dist_to_finite_set(rv(0, 0), [rv(0, 2), rv(5, 0)]) == 2.0
    with pytest.raises(MetricError):
        dist_to_finite_set(rv(0), [])


def test_dist_zero_iff_member():
    rng = np.random.default_rng(0)
    pts = [RealVector(tuple(v)) for v in rng.normal(size=(50, 2))]
    for p in pts[:10]:
        assert dist_to_finite_set(p, pts) == 0.0
    q = RealVector((pts[0].coords[0] + 1e-9, pts[0].coords[1]))
    assert dist_to_finite_set(q, pts) > 0.0


@pytest.mark.parametrize("norm", ["sup", "euclid"])
def test_finite_set_index_matches_brute_force_real(norm):
    rng = np.random.default_rng(1)
    space = Space("real", 3, norm)
    K = rng.normal(size=(200, 3))
    xs = rng.normal(size=(300, 3))
    got = FiniteSetIndex(space, K).query(xs)
    want = np.array([space.distances(K, x).min() for x in xs])
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_finite_set_index_matches_brute_force_seq():
    rng = np.random.default_rng(2)
    space = Space("seq")

    def sample(m):
        i = rng.integers(1, 4, m)
        j = rng.integers(1, 6, m)
        k = rng.integers(1, 8, m)
        k[rng.random(m) < 0.1] = space.raw(SeqState(1, 1, INFINITY))[2]
        return np.stack([i, j, k], axis=1)

    K, xs = sample(80), sample(200)
    K = K[K[:, 0] < 3]  # leave i = 3 unmatched
    got = FiniteSetIndex(space, K).query(xs)
    want = np.array([space.distances(K, x).min() for x in xs])
    np.testing.assert_array_equal(got, want)


def test_empirical_measure_weights():
    mu = EmpiricalMeasure(R1, [[0.0], [1.0]], [0.25, 0.75])
    assert mu.total_weight == 1.0
    assert mu.mean()[0] == 0.75
    with pytest.raises(MetricError):
        EmpiricalMeasure(R1, [[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(MetricError):
        EmpiricalMeasure(R1, [[0.0]], [-1.0])
    with pytest.raises(MetricError):
        EmpiricalMeasure(R1, np.empty((0, 1)))
    nu = EmpiricalMeasure(R1, [[0.0], [1.0]], [1.0, 3.0], normalize=True)
    assert np.allclose(nu.weights, [0.25, 0.75])


def clamp01():
    return TestFunction(lambda p: np.clip(p[:, 0], 0, 1), 1.0, 1.0, True, "clamp")


def test_bl_distance_examples():
    d = TestFunctionDictionary([clamp01()])
    mu = EmpiricalMeasure.dirac(rv(0))
    nu = EmpiricalMeasure.dirac(rv(1))
    assert bl_distance(mu, mu, d) == 0.0
    assert bl_distance(mu, nu, d) == 1.0
    with pytest.raises(MetricError):
        bl_distance(mu, EmpiricalMeasure.dirac(rv(0, 0)), d)


def test_test_function_rescaling():
    f = TestFunction(lambda p: 3.0 * p[:, 0], sup_norm=3.0, lipschitz=3.0, vectorized=True)
    vals = f.evaluate(R1, np.array([[1.0]]))
    assert vals[0] == 1.0
    assert f.evaluate(R1, np.array([[1.0]]), scaled=False)[0] == 3.0


def test_dictionary_is_seeded_and_admissible():
    rng = np.random.default_rng(3)
    mu = EmpiricalMeasure(R1, rng.random((500, 1)))
    nu = EmpiricalMeasure(R1, rng.random((500, 1)) + 0.3)
    d1 = build_dictionary([mu, nu], seed=5)
    d2 = build_dictionary([mu, nu], seed=5)
    assert d1.provenance == d2.provenance
    assert d1.provenance["kind"] == "seeded-bumps" and len(d1) == 64
    assert bl_distance(mu, nu, d1) == bl_distance(mu, nu, d2)
    grid = np.linspace(-1, 2, 3001)[:, None]
    for f in d1.functions:
        v = f.evaluate(R1, grid)
        assert np.all(np.abs(v) <= 1 + 1e-15)
        assert np.max(np.abs(np.diff(v))) / 1e-3 <= 1 + 1e-9


def w1_sorted(a, b):
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def test_bl_never_exceeds_w1_oracle():
    rng = np.random.default_rng(4)
    for t in range(40):
        a = rng.normal(size=200) * rng.uniform(0.1, 3)
        b = rng.normal(size=200) * rng.uniform(0.1, 3) + rng.uniform(-2, 2)
        mu, nu = EmpiricalMeasure(R1, a[:, None]), EmpiricalMeasure(R1, b[:, None])
        d = build_dictionary([mu, nu], seed=t)
        d.functions.append(clamp01())
        assert bl_distance(mu, nu, d) <= w1_sorted(a, b) + 1e-12


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32))
def test_bl_pseudometric_on_random_triples(seed):
    rng = np.random.default_rng(seed)
    ms = [EmpiricalMeasure(R1, rng.normal(size=(30, 1)) + rng.normal()) for _ in range(3)]
    d = build_dictionary(ms, size=16, seed=seed)
    ab, bc, ac = (bl_distance(ms[0], ms[1], d), bl_distance(ms[1], ms[2], d),
                  bl_distance(ms[0], ms[2], d))
    assert 0 <= ab <= 2
    assert ab == bl_distance(ms[1], ms[0], d)
    assert ac <= ab + bc + 1e-12


def test_mc_error_bound_scaling():
    assert mc_error_bound(100, 100, 64) == pytest.approx(2 * mc_error_bound(400, 400, 64))


def test_lipschitz_estimate_examples():
    assert lipschitz_estimate(lambda p: 2 * p.coords[0], [(0, 1), (1, 3)]) == 2.0
    assert lipschitz_estimate(lambda p: 7.0, [(0, 1), (2, 5)]) == 0.0
    assert lipschitz_estimate(lambda p: abs(p.coords[0]), [(-1, 1)]) == 0.0
    assert lipschitz_estimate(lambda p: 2 * p.coords[0], [(1, 1), (0, 1)]) == 2.0
    with pytest.raises(MetricError):
        lipschitz_estimate(lambda p: 0.0, [(1, 1)])


def test_seq_distance_examples():
    assert seq_distance(SeqState(1, 2, 3), SeqState(1, 2, 3)) == 0.0
    z = SeqState(1, 1, INFINITY)
    for j in (1, 5, 40):
        for k in (1, 2, 10):
            assert seq_distance(SeqState(1, j, k), z) == 2.0 ** -k
    assert seq_distance(SeqState(1, 3, 1), SeqState(1, 7, 1)) == 0.5
    assert seq_distance(SeqState(1, 3, 1), SeqState(4, 3, 1)) == 3.0
