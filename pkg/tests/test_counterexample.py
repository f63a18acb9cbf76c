import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from ergochain.counterexample import (Z, CExampleChain, InvalidCellError, Mode, ce_step,
                                      escape_statistics, one_step_law, product_lower_bound,
                                      seq_distance, u0_visit_frequency, z_return_probe)
from ergochain.kernel import Ensemble, Trajectory, ensemble
from ergochain.metric import build_dictionary, EmpiricalMeasure
from ergochain.points import INFINITY, SeqState, Space
from ergochain.report import Verdict
from ergochain.rng import RandomStream

CHAIN = CExampleChain()


def test_patched_branch_probabilities_exhaustive():
    for i in range(1, 21):
        for k in range(1, 65):
            p1, p2, stay = CHAIN.branch_probabilities(i, k)
            assert 0 <= p1 <= 1 and 0 <= p2 <= 1 and -1e-15 <= stay <= 1
            assert p1 + p2 <= 1 + 1e-12
            assert p1 > 0


def test_branch_examples():
    assert CHAIN.branch_probabilities(2, 3) == (1 / 256, 1 / 256, 1 - 2 / 256)
    p1, p2, stay = CHAIN.branch_probabilities(3, 2)
    assert p2 == 1 / 81 and p1 == 1 - 1 / 81 and stay == pytest.approx(0.0, abs=1e-15)


def test_p1_uses_factorial_threshold():
    # k < i! uses 1 - p2, k >= i! uses p2; 5! = 120
    assert CHAIN.p1(5, 119) == 1 - CHAIN.p2(119)
    assert CHAIN.p1(5, 120) == CHAIN.p2(120)
    assert CHAIN.p1(30, 10 ** 6) == 1 - CHAIN.p2(10 ** 6)


def test_p2_offset_and_literal():
    assert CHAIN.p2(1) == 1 / 16
    lit = CExampleChain(Mode.LITERAL)
    assert lit.p2(1) == 1.0 and lit.p2(2) == 1 / 16
    assert CExampleChain(p2_offset=2).p2(1) == 1 / 81


def test_literal_invalid_cell():
    lit = CExampleChain(Mode.LITERAL)
    with pytest.raises(InvalidCellError, match=r"paper parameters invalid at \(1,1\)"):
        ce_step(lit, SeqState(1, 1, 1), RandomStream(0))
    with pytest.raises(InvalidCellError) as info:
        ensemble(lit, SeqState(1, 1, 1), 5, 3, 0)
    assert info.value.p1 + info.value.p2 == 2.0
    # a start that never reaches (1, 1) is simulated fine for a while
    ce_step(lit, SeqState(2, 1, 2), RandomStream(0))


def test_infinite_k_is_not_a_start():
    with pytest.raises(ValueError):
        ensemble(CHAIN, SeqState(1, 1, INFINITY), 3, 2, 0)
    with pytest.raises(ValueError):
        ce_step(CHAIN, SeqState(1, 1, INFINITY), RandomStream(0))


def test_chi_square_branch_frequencies():
    starts = np.tile([2, 1, 3], (100_000, 1))
    out = CHAIN.run(starts, 1, 5, np.arange(100_000))[:, 0, :]
    counts = [np.sum(out[:, 0] == 1), np.sum((out[:, 0] == 2) & (out[:, 2] == 4)),
              np.sum((out[:, 0] == 3) & (out[:, 2] == 3))]
    assert sum(counts) == 100_000
    expected = 100_000 * np.array([1 / 256, 1 / 256, 127 / 128])
    assert chisquare(counts, expected).pvalue > 0.01


def test_one_uniform_per_step():
    rng = RandomStream(3)
    s = SeqState(1, 1, 1)
    for t in range(10):
        s = ce_step(CHAIN, s, rng)
        assert rng.counter == t + 1


def test_j_always_increments():
    ens = ensemble(CHAIN, SeqState(3, 7, 2), 300, 200, 4)
    assert np.array_equal(ens.array[:, :, 1], np.broadcast_to(7 + np.arange(1, 301), (200, 300)))
    for state, _ in one_step_law(CHAIN, SeqState(4, 9, 5)):
        assert state.j == 10


def test_one_step_law_sums_to_one():
    for s in [SeqState(1, 1, 1), SeqState(2, 1, 3), SeqState(7, 3, 40)]:
        law = one_step_law(CHAIN, s)
        assert math.fsum(p for _, p in law) == pytest.approx(1.0, abs=1e-15)


def test_feller_continuity_in_k():
    # P f(x(i,1,k)) -> P f(x(i,1,inf)) as k grows, from the exact one-step law
    space = Space("seq")
    pool = EmpiricalMeasure(space, [[1, 2, 1], [2, 2, 3], [1, 2, 8], [3, 2, 2]])
    d = build_dictionary([pool], size=16, seed=1)
    limit = SeqState(2, 1, INFINITY)

    def pf(f, s):
        law = one_step_law(CHAIN, s)
        return sum(p * f.evaluate(space, space.raw_many([t]))[0] for t, p in law)

    ks = (2, 4, 8, 16, 32)
    gaps = [max(abs(pf(f, SeqState(2, 1, k)) - pf(f, limit)) for f in d.functions) for k in ks]
    assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
    # moved mass is O(p2(k)) and atoms shift by at most 2^-k
    for k, g in zip(ks, gaps):
        assert g <= 4 * CHAIN.p2(k) + 2.0 ** -k


def test_u0_frequency_zero_outside():
    traj = Trajectory(SeqState(2, 1, 2), np.tile([[2, 1, 2]], (10, 1)), 0, Space("seq"))
    rep = u0_visit_frequency([traj])
    assert rep.statistic["theta_hat"] == 0.0 and rep.verdict is Verdict.FAIL


def test_u0_ci_width_scales():
    small = u0_visit_frequency(ensemble(CHAIN, SeqState(1, 1, 1), 200, 1000, 1), burn_in=50)
    big = u0_visit_frequency(ensemble(CHAIN, SeqState(1, 1, 1), 200, 4000, 1), burn_in=50)
    w1 = small.statistic["ci_high"] - small.statistic["ci_low"]
    w4 = big.statistic["ci_high"] - big.statistic["ci_low"]
    assert 1.7 < w1 / w4 < 2.3


def test_escape_counting():
    ens = ensemble(CHAIN, SeqState(1, 1, 1), 1000, 50, 2)
    rep = escape_statistics(ens, 100)
    assert rep.statistic["deterministic_j"] and rep.statistic["final_mass"] == 0.1
    for w in (0, 10, 500, 2000):
        assert escape_statistics(ens, w).statistic["final_mass"] == min(1.0, w / 1000)
    bad = ens.array.copy()
    bad[3, 10, 1] += 1
    rep = escape_statistics(Ensemble(bad, ens[0].start, ens.space, range(50)), 100)
    assert rep.verdict is Verdict.FAIL and rep.witnesses[0]["trajectory"] == 3


def test_product_lower_bound():
    bound, kstar = product_lower_bound(CHAIN, 0.5, 2.0 ** -3)
    assert kstar == 4
    assert bound == 0.5 * Fraction(1, 16 * 81 * 256 * 625)
    assert product_lower_bound(CHAIN, 0.5, 0.6) == (0.5 / 16, 1)


def test_z_return_large_radius_dominates_theta():
    rep = z_return_probe(CHAIN, SeqState(1, 1, 1), 0.6, 400, 500, 3)
    assert rep.verdict is Verdict.PASS
    assert rep.statistic["limsup_proxy"] >= rep.statistic["theta_hat"]
    assert "balls only" in rep.notes


def test_z_return_small_radius_vs_product_bound():
    rep = z_return_probe(CHAIN, SeqState(1, 1, 1), 2.0 ** -3, 1000, 1000, 3)
    assert rep.statistic["consistent_with_bound"]
    assert rep.statistic["ci_high"] >= rep.statistic["product_lower_bound"]


def test_z_return_half_ensembles_agree():
    a = z_return_probe(CHAIN, SeqState(1, 1, 1), 0.3, 300, 1000, 10)
    b = z_return_probe(CHAIN, SeqState(1, 1, 1), 0.3, 300, 1000, 11)
    sa, sb = a.series[-1], b.series[-1]
    assert max(sa.ci_low, sb.ci_low) <= min(sa.ci_high, sb.ci_high)


def test_distance_to_z_is_exact():
    for j in range(1, 101):
        for k in range(1, 61):
            assert seq_distance(SeqState(1, j, k), Z) == 2.0 ** -k
