import numpy as np
import pytest

from ergochain.ifs import dyadic
from ergochain.kernel import (cesaro_measure, endpoint_measure, ensemble, invariance_residual,
                              pn_f, pn_set, propagate, simulate, wilson_arrays,
                              wilson_interval)
from ergochain.metric import (EmpiricalMeasure, TestFunction, TestFunctionDictionary,
                              bl_distance, build_dictionary, mc_error_bound)
from ergochain.points import MetricError, RealVector, Space
from ergochain.rng import RandomStream

R1 = Space("real", 1)


def values(traj):
    return [p.coords[0] for p in traj.points()]


def test_simulate_examples(identity, shift):
    assert values(simulate(identity, RealVector((7.0,)), 3, RandomStream(0))) == [7.0] * 3
    assert values(simulate(shift, RealVector((0.0,)), 3, RandomStream(0))) == [1.0, 2.0, 3.0]
    with pytest.raises(MetricError):
        simulate(shift, RealVector((0.0, 0.0)), 3, RandomStream(0))
    with pytest.raises(ValueError):
        simulate(shift, RealVector((0.0,)), 0, RandomStream(0))


def test_simulate_is_deterministic(coin):
    a = simulate(coin, [0.0], 100, RandomStream(5, 1))
    b = simulate(coin, [0.0], 100, RandomStream(5, 1))
    assert np.array_equal(a.states, b.states)


def test_ensemble_single_trajectory_is_simulate(coin):
    ens = ensemble(coin, [0.0], 50, 1, 9)
    tr = simulate(coin, [0.0], 50, RandomStream(9, 0))
    assert np.array_equal(ens[0].states, tr.states)
    assert ens[0].stream_id == 0


def test_ensemble_deterministic_kernel(shift):
    ens = ensemble(shift, [0.0], 5, 1000, 1)
    assert np.all(ens.array == ens.array[0])


@pytest.mark.parametrize("threads", [2, 4, 8])
def test_ensemble_thread_independent(coin, threads):
    a = ensemble(coin, [0.0], 30, 1000, 3, threads=1).array
    b = ensemble(coin, [0.0], 30, 1000, 3, threads=threads).array
    assert np.array_equal(a, b)
    d1 = ensemble(dyadic(), [0.0], 30, 257, 3, threads=1).array
    d2 = ensemble(dyadic(), [0.0], 30, 257, 3, threads=threads).array
    assert np.array_equal(d1, d2)


def test_endpoint_measure_examples(identity, shift):
    mu = endpoint_measure(ensemble(identity, [4.0], 3, 4, 0), 3)
    assert len(mu) == 4 and np.all(mu.points == 4.0) and np.allclose(mu.weights, 0.25)
    mu = endpoint_measure(ensemble(shift, [0.0], 3, 2, 0), 2)
    assert np.all(mu.points == 2.0)
    with pytest.raises(ValueError):
        endpoint_measure(ensemble(shift, [0.0], 3, 2, 0), 4)
    mu = endpoint_measure(ensemble(dyadic(), [0.0], 40, 4000, 0), 40)
    assert abs(mu.mean()[0] - 0.5) < 0.02


def test_cesaro_measure_examples(identity, shift, flip):
    mu = cesaro_measure(ensemble(identity, [3.0], 5, 2, 0), 5)
    assert np.all(mu.points == 3.0)
    mu = cesaro_measure(ensemble(shift, [0.0], 3, 1, 0), 3)
    assert sorted(mu.points[:, 0]) == [1.0, 2.0, 3.0] and np.allclose(mu.weights, 1 / 3)
    mu = cesaro_measure(ensemble(flip, [0.0], 2, 1, 0), 2)
    assert mu.mass(mu.points[:, 0] == 0.0) == 0.5
    mu = cesaro_measure(ensemble(dyadic(), [0.0], 1000, 1000, 0), 1000)
    assert abs(mu.weights.sum() - 1.0) <= 1e-12


def test_cesaro_accepts_trajectory_list(shift):
    trajs = list(ensemble(shift, [0.0], 4, 3, 0))
    assert np.array_equal(cesaro_measure(trajs, 2).points,
                          cesaro_measure(ensemble(shift, [0.0], 4, 3, 0), 2).points)


def test_pn_f_examples(identity, shift, coin):
    est = pn_f(coin, [0.0], 7, lambda p: 1.0, 50, 1)
    assert est.value == 1.0 and est.stderr == 0.0
    est = pn_f(identity, [0.3], 4, lambda p: p.coords[0] ** 2, 10, 1)
    assert est.value == pytest.approx(0.09, abs=1e-15)
    est = pn_f(shift, [0.0], 5, lambda p: p.coords[0], 10, 1)
    assert est.value == 5.0 and est.stderr == 0.0
    with pytest.raises(ValueError):
        pn_f(shift, [0.0], 5, lambda p: 1.0, 1, 1)


def test_pn_set_examples(coin):
    est = pn_set(coin, [0.0], 3, lambda p: True, 100, 2)
    assert est.p_hat == 1.0 and est.ci_high == 1.0
    est = pn_set(coin, [0.0], 3, lambda p: False, 100, 2)
    assert est.p_hat == 0.0 and est.ci_low == 0.0
    est = pn_set(coin, [0.0], 1, lambda p: p.coords[0] == 0.0, 10_000, 2)
    assert 0.48 <= est.p_hat <= 0.52
    assert est.ci_low <= 0.5 <= est.ci_high


def test_wilson_interval_properties():
    for hits, n in [(0, 10), (3, 10), (10, 10), (500, 1000)]:
        e = wilson_interval(hits, n)
        assert 0 <= e.ci_low <= e.p_hat <= e.ci_high <= 1
    p, lo, hi = wilson_arrays(np.array([0, 3, 10]), 10)
    for t, h in enumerate([0, 3, 10]):
        e = wilson_interval(h, 10)
        assert (p[t], lo[t], hi[t]) == pytest.approx((e.p_hat, e.ci_low, e.ci_high), abs=1e-15)
    # textbook value for 8/10 at 95%
    assert wilson_interval(8, 10).ci_low == pytest.approx(0.4902, abs=1e-4)


def test_invariance_residual_examples(identity, shift):
    rng = np.random.default_rng(0)
    mu = EmpiricalMeasure(R1, rng.random((200, 1)))
    assert invariance_residual(identity, mu, None, 3, 1) == pytest.approx(0.0, abs=1e-12)
    bump0 = TestFunction(lambda p: np.clip(1 - np.abs(p[:, 0]), 0, 1), 1.0, 1.0, True)
    d = TestFunctionDictionary([bump0])
    assert invariance_residual(shift, EmpiricalMeasure.dirac(RealVector((0.0,))), d, 5, 1) == 1.0
    uni = EmpiricalMeasure(R1, rng.random((10_000, 1)))
    assert invariance_residual(dyadic(), uni, None, 1, 1) <= 0.05


def test_propagate_inherits_weights(coin):
    mu = EmpiricalMeasure(R1, [[0.0], [1.0]], [0.2, 0.8])
    states, weights = propagate(coin, mu, 3, 5, 1)
    assert states.shape == (10, 3, 1)
    assert np.allclose(weights, [0.04] * 5 + [0.16] * 5)


@pytest.mark.parametrize("make", ["coin", "dyadic"])
def test_chapman_kolmogorov(make, coin):
    kernel = coin if make == "coin" else dyadic()
    n, k, m = 6, 2, 4000
    direct = endpoint_measure(ensemble(kernel, [0.0], n, m, 11), n)
    mid = endpoint_measure(ensemble(kernel, [0.0], k, m, 12), k)
    states, w = propagate(kernel, mid, n - k, 1, 13)
    split = EmpiricalMeasure(R1, states[:, -1, :], w, normalize=True)
    d = build_dictionary([direct, split], seed=1)
    assert bl_distance(direct, split, d) <= 3 * mc_error_bound(m, m, len(d))
