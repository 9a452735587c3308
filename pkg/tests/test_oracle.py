"""Exact-chain and binomial-tail oracle tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popdyn.engine import (ByzMode, Configuration, FaultSpec, LeakModel,
                           make_protocol)
from popdyn.oracle import (ChainIndex, MinSamplesCapExceeded, OracleError,
                           absorption_probabilities, binomial_tail_exact,
                           binomial_tail_logsum, finite_horizon_distribution,
                           kl_bernoulli, min_samples, sample_majority_trial,
                           step_distribution, tail_lower_bound)

DBAM = make_protocol("dbam")
DBAMC = make_protocol("dbamc")
TRIAM = make_protocol("triam")


def cfg_of(mapping, model="standard", stub=0):
    return Configuration.from_counts(mapping, model=model, byz_stubborn_y=stub)


class TestChainIndex:
    def test_enumeration_exhaustive(self):
        chain = ChainIndex.build(cfg_of({"X": 2, "B": 2}))
        # all (x, y, b) with x+y+b = 4: C(6,2) = 15
        assert len(chain.configs) == 15
        assert len(chain.index) == 15

    def test_guard(self):
        with pytest.raises(OracleError):
            ChainIndex.build(cfg_of({"X": 30}))


class TestStepDistribution:
    def test_dbam_four_agents(self):
        dist = step_distribution(cfg_of({"X": 2, "Y": 1, "B": 1}), DBAM)
        get = lambda x, y, b: dist.get((x, y, b, 0, 0, 0, 0), 0.0)
        assert get(1, 0, 3) == pytest.approx(1 / 3)   # X+Y
        assert get(3, 1, 0) == pytest.approx(1 / 3)   # X+B
        assert get(2, 2, 0) == pytest.approx(1 / 6)   # Y+B
        assert get(2, 1, 1) == pytest.approx(1 / 6)   # null (X,X)

    def test_all_null(self):
        dist = step_distribution(cfg_of({"X": 2}), DBAM)
        assert dist == {(2, 0, 0, 0, 0, 0, 0): 1.0}

    def test_forced_leak(self):
        f = FaultSpec(leak_model=LeakModel.ADVERSARIAL, beta=1.0)
        dist = step_distribution(cfg_of({"X": 3}), DBAM, f)
        assert dist == {(2, 1, 0, 0, 0, 0, 0): 1.0}

    def test_rows_sum_to_one(self):
        f = FaultSpec(leak_model=LeakModel.WEAK, beta=0.3)
        for mapping in ({"X": 2, "Y": 2, "B": 1}, {"X": 1, "B": 4},
                        {"X": 2, "Y": 1, "B": 1, "I_X": 1, "I_Y": 1}):
            model = "ci" if "I_X" in mapping else "standard"
            spec = DBAMC if model == "ci" else DBAM
            dist = step_distribution(cfg_of(mapping, model), spec, f)
            assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)

    def test_triam_triple_weights(self):
        # {X:2, Y:1}: ordered triples all contain XXY -> all fire
        dist = step_distribution(cfg_of({"X": 2, "Y": 1}), TRIAM)
        assert dist == {(3, 0, 0, 0, 0, 0, 0): 1.0}

    def test_stubborn_contact(self):
        f = FaultSpec(byz_mode=ByzMode.STUBBORN_Y, byz_count=1)
        dist = step_distribution(cfg_of({"X": 1}, stub=1), DBAM, f)
        assert dist == {(0, 0, 1, 0, 0, 0, 1): 1.0}


class TestAbsorption:
    def test_two_agent_deadlock(self):
        out = absorption_probabilities(cfg_of({"X": 1, "Y": 1}), DBAM)
        assert out["ALL_BLANK_DEADLOCK"] == pytest.approx(1.0)

    def test_already_absorbed(self):
        out = absorption_probabilities(cfg_of({"X": 4}), DBAM)
        assert out["ALL_X"] == 1.0

    def test_catalyst_forces_majority(self):
        out = absorption_probabilities(cfg_of({"I_X": 1, "B": 1}, "ci"), DBAMC)
        assert out["ALL_X"] == pytest.approx(1.0)

    def test_symmetry(self):
        out = absorption_probabilities(cfg_of({"X": 2, "Y": 2}), DBAM)
        assert out["ALL_X"] == pytest.approx(out["ALL_Y"])

    def test_majority_bias(self):
        out = absorption_probabilities(cfg_of({"X": 3, "Y": 2, "B": 1}), DBAM)
        assert out["ALL_X"] > out["ALL_Y"]
        assert sum(out.values()) == pytest.approx(1.0)


class TestFiniteHorizon:
    def test_zero_steps_point_mass(self):
        d = finite_horizon_distribution(cfg_of({"X": 1, "Y": 1}), DBAM, T=0)
        assert d == {(1, 1, 0, 0, 0, 0, 0): 1.0}

    def test_one_step_forced(self):
        d = finite_horizon_distribution(cfg_of({"X": 1, "Y": 1}), DBAM, T=1)
        assert d == {(0, 0, 2, 0, 0, 0, 0): pytest.approx(1.0)}

    def test_catalyst_pair_one_step(self):
        d = finite_horizon_distribution(
            cfg_of({"I_X": 1, "I_Y": 1, "B": 2}, "ci"), DBAMC, T=1)
        assert d[(1, 0, 1, 1, 1, 0, 0)] == pytest.approx(1 / 3)
        assert d[(0, 1, 1, 1, 1, 0, 0)] == pytest.approx(1 / 3)
        assert d[(0, 0, 2, 1, 1, 0, 0)] == pytest.approx(1 / 3)

    def test_long_horizon_approaches_absorption(self):
        init = cfg_of({"X": 3, "Y": 2, "B": 1})
        absorbed = absorption_probabilities(init, DBAM)
        d = finite_horizon_distribution(init, DBAM, T=10000)
        all_x = sum(p for k, p in d.items() if k[0] == 6)
        assert all_x == pytest.approx(absorbed["ALL_X"], abs=1e-9)

    def test_horizon_guard(self):
        with pytest.raises(OracleError):
            finite_horizon_distribution(cfg_of({"X": 2}), DBAM, T=10**7)


class TestBinomialTail:
    def test_small_case(self):
        assert binomial_tail_exact(5, 0.6, 2) == pytest.approx(0.31744)

    def test_trivial_cases(self):
        assert binomial_tail_exact(1, 0.5, 0) == pytest.approx(0.5)
        assert binomial_tail_exact(4, 1.0, 3) == 0.0
        assert binomial_tail_exact(4, 0.0, 3) == 1.0

    def test_domain_rejected(self):
        with pytest.raises(OracleError):
            binomial_tail_exact(5, 0.5, 6)
        with pytest.raises(OracleError):
            binomial_tail_exact(5, 1.5, 2)

    @given(S=st.integers(1, 400), p=st.floats(0.01, 0.99),
           frac=st.floats(0.0, 1.0))
    @settings(max_examples=120, deadline=None)
    def test_two_evaluation_routes_agree(self, S, p, frac):
        k = min(S, int(frac * (S + 1)))
        a = binomial_tail_exact(S, p, k)
        b = binomial_tail_logsum(S, p, k)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


class TestKlBernoulli:
    def test_zero_at_equal(self):
        assert kl_bernoulli(0.5, 0.5) == 0.0

    def test_closed_form_value(self):
        # 0.5*ln(1/(4*0.6*0.4)) evaluated exactly
        expected = 0.5 * math.log(1.0 / (4 * 0.6 * 0.4))
        assert kl_bernoulli(0.5, 0.6) == pytest.approx(expected, rel=1e-12)
        assert kl_bernoulli(0.5, 0.6) == pytest.approx(0.0204110, abs=5e-7)

    def test_quadratic_upper_bound(self):
        # kl(1/2, 1/2+d) <= 4 d^2 for d in (0, 1/3]
        for delta in np.linspace(0.001, 1 / 3, 50):
            assert kl_bernoulli(0.5, 0.5 + delta) <= 4 * delta * delta + 1e-15

    def test_boundary_rejected(self):
        with pytest.raises(OracleError):
            kl_bernoulli(0.0, 0.5)


class TestTailLowerBound:
    def test_reference_value(self):
        v = tail_lower_bound(100, 0.05)
        expected = (1 / math.sqrt(200)) * math.exp(-100 * kl_bernoulli(0.5, 0.55))
        assert v == pytest.approx(expected, rel=1e-12)
        assert v == pytest.approx(0.0428, abs=5e-4)

    def test_small_s_limit(self):
        assert tail_lower_bound(2, 1e-12) == pytest.approx(0.5, rel=1e-6)

    def test_delta_range_rejected(self):
        with pytest.raises(OracleError):
            tail_lower_bound(10, 0.4)
        with pytest.raises(OracleError):
            tail_lower_bound(10, 0.0)

    def test_bound_below_exact_on_grid(self):
        for S in (10, 30, 100, 300, 1000, 10000):
            for delta in (0.01, 0.03, 0.1, 0.2, 0.3):
                bound = tail_lower_bound(S, delta)
                exact = binomial_tail_exact(S, 0.5 + delta, S // 2)
                assert bound <= exact


class TestMinSamples:
    def test_frozen_regression_values(self):
        assert min_samples(8, 2) == 309
        assert min_samples(16, 2) == 1839
        assert min_samples(32, 2) == 9881

    def test_definition_is_tight(self):
        n, c = 8, 2
        s = min_samples(n, c)
        p = 0.5 + 1 / (2 * n)
        target = n ** (-c)
        assert binomial_tail_exact(s, p, s // 2) <= target
        assert binomial_tail_exact(s - 1, p, (s - 1) // 2) > target

    def test_monotone_in_n(self):
        vals = [min_samples(n, 2) for n in (4, 8, 16, 32)]
        assert vals == sorted(vals) and len(set(vals)) == 4

    def test_monotone_in_c(self):
        assert min_samples(16, 3) >= min_samples(16, 2)

    def test_superlinear_growth(self):
        for n in (8, 16, 32):
            assert min_samples(2 * n, 2) / min_samples(n, 2) >= 3

    def test_domain_rejected(self):
        with pytest.raises(OracleError):
            min_samples(1, 2)
        with pytest.raises(OracleError):
            min_samples(8, 0.5)


class TestSampleMajorityTrial:
    def test_unanimous_always_correct(self):
        rng = np.random.default_rng(0)
        assert all(sample_majority_trial(10, 10, 7, rng) for _ in range(50))

    def test_single_draw_probability(self):
        rng = np.random.default_rng(123)
        hits = sum(sample_majority_trial(3, 1, 1, rng) for _ in range(60000))
        assert abs(hits / 60000 - 2 / 3) < 0.01

    def test_matches_exact_tail(self):
        n, margin, S = 5, 1, 9
        p = 0.5 + margin / (2 * n)
        # odd S: error event is exactly Bin(S,p) <= S//2
        err_exact = binomial_tail_exact(S, p, S // 2)
        rng = np.random.default_rng(7)
        trials = 100000
        errs = sum(not sample_majority_trial(n, margin, S, rng)
                   for _ in range(trials))
        se = math.sqrt(err_exact * (1 - err_exact) / trials)
        assert abs(errs / trials - err_exact) <= 3 * se

    def test_domain_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(OracleError):
            sample_majority_trial(5, 0, 3, rng)
        with pytest.raises(OracleError):
            sample_majority_trial(5, 6, 3, rng)
