import math

import numpy as np
import pytest

from helpers import make_setup, synthetic_channel_set
from mmwave_assoc.association import random_feasible
from mmwave_assoc.mimo import (
    InfeasibleActivationError,
    RateEngine,
    UtilityKind,
    compute_beamformers,
    instantaneous_rate,
    interference_covariance,
    make_rate_evaluator,
    network_rates,
    scale_precoders,
    svd_beamformers,
    utility,
    utility_of_rates,
)
from mmwave_assoc.topology import InterferenceMode, homogeneous_scenario

AD = InterferenceMode.ASSOCIATION_DEPENDENT
FULL = InterferenceMode.FULL


def random_channel(rng, n, m):
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


class TestSvdBeamformers:
    def test_identity_channel(self):
        pair = svd_beamformers(np.eye(2, dtype=complex), 2)
        product = pair.combiner.conj().T @ np.eye(2) @ pair.precoder
        assert np.allclose(product, np.eye(2), atol=1e-10)

    def test_rank_one_channel_recovers_factors(self):
        rng = np.random.default_rng(3)
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        v = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        pair = svd_beamformers(np.outer(u, v.conj()), 1)
        assert abs(np.vdot(pair.combiner[:, 0], u)) == pytest.approx(1.0, abs=1e-10)
        assert abs(np.vdot(pair.precoder[:, 0], v)) == pytest.approx(1.0, abs=1e-10)

    def test_diagonalization_identity_on_random_channels(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            h = random_channel(rng, 2, 64)
            pair = svd_beamformers(h, 2)
            product = pair.combiner.conj().T @ h @ pair.precoder
            err = np.linalg.norm(product - np.diag(pair.singular_values))
            assert err <= 1e-9 * pair.singular_values[0]
            assert np.all(np.diff(pair.singular_values) <= 0)
            assert np.allclose(pair.combiner.conj().T @ pair.combiner,
                               np.eye(2), atol=1e-10)
            assert np.allclose(pair.precoder.conj().T @ pair.precoder,
                               np.eye(2), atol=1e-10)

    def test_rank_deficiency_flagged_and_padded(self):
        rng = np.random.default_rng(4)
        u = rng.standard_normal(4) + 0j
        v = rng.standard_normal(8) + 0j
        pair = svd_beamformers(np.outer(u, v), 2)
        assert pair.rank_deficient
        assert pair.singular_values[1] <= 1e-10 * pair.singular_values[0]
        assert np.allclose(pair.precoder.conj().T @ pair.precoder,
                           np.eye(2), atol=1e-10)

    def test_stream_count_exceeding_dimensions_rejected(self):
        with pytest.raises(ValueError):
            svd_beamformers(np.eye(2, dtype=complex), 3)


class TestScalePrecoders:
    def test_single_user_carries_full_power(self):
        scen, cs, bf = make_setup(2, 2, max_users=2, max_streams=4)
        beta = np.array([0, 1])
        scaled = scale_precoders(beta, bf, scen)
        # 30 dBm -> 1.0 W linear
        assert scen.bs_list[0].tx_power_w == pytest.approx(1.0, rel=1e-12)
        for (k, j), f in scaled.items():
            power = np.trace(f.conj().T @ f).real
            assert power == pytest.approx(1.0, rel=1e-11)

    def test_equal_split_between_users(self):
        scen, cs, bf = make_setup(2, 2, max_users=2, max_streams=4)
        scaled = scale_precoders(np.array([0, 0]), bf, scen)
        for f in scaled.values():
            assert np.trace(f.conj().T @ f).real == pytest.approx(0.5, abs=1e-12)

    def test_per_bs_power_conservation(self):
        scen, cs, bf = make_setup(3, 9, seed=5)
        for s in range(20):
            beta = random_feasible(scen, s).to_array()
            scaled = scale_precoders(beta, bf, scen)
            for j, bs in enumerate(scen.bs_list):
                served = [f for (k, jj), f in scaled.items() if jj == j]
                if not served:
                    continue
                total = sum(np.trace(f.conj().T @ f).real for f in served)
                assert total == pytest.approx(bs.tx_power_w, rel=1e-9)

    def test_infeasible_rejected(self):
        scen, cs, bf = make_setup(2, 4, max_users=2, max_streams=4)
        with pytest.raises(InfeasibleActivationError):
            scale_precoders(np.array([0, 0, 0, 0]), bf, scen)


def brute_force_covariance(k, beta, beamformers, channels, scenario, mode):
    """Independent accumulation of the covariance over all (UE, BS) pairs."""
    assignments = np.asarray(beta, dtype=int)
    demands = scenario.stream_demands()
    j = assignments[k]
    w = beamformers.pair(k, j).combiner
    counts = np.bincount(assignments[assignments >= 0],
                         minlength=scenario.num_bs)
    cov = scenario.noise_power_w * w.conj().T @ w
    for l in range(scenario.num_ue):
        for i in range(scenario.num_bs):
            if mode is AD and assignments[l] != i:
                continue
            if l == k and i == j:
                continue
            share = scenario.bs_list[i].tx_power_w / max(counts[i], 1)
            f = beamformers.pair(l, i).precoder * math.sqrt(share / demands[l])
            x = w.conj().T @ channels.channels[k][i] @ f
            cov = cov + x @ x.conj().T
    return cov


class TestInterferenceCovariance:
    def test_single_link_is_noise_only(self):
        scen, cs, bf = make_setup(1, 1, max_users=1, max_streams=2)
        v = interference_covariance(0, np.array([0]), bf, cs, scen, AD)
        assert np.allclose(v, scen.noise_power_w * np.eye(2), atol=1e-18)

    def test_hermitian_positive_definite(self):
        scen, cs, bf = make_setup(3, 6, seed=2)
        for s in range(5):
            beta = random_feasible(scen, s).to_array()
            for k in range(6):
                for mode in (AD, FULL):
                    v = interference_covariance(k, beta, bf, cs, scen, mode)
                    assert np.allclose(v, v.conj().T, atol=1e-12)
                    eigs = np.linalg.eigvalsh(v)
                    assert eigs[0] >= scen.noise_power_w * (1 - 1e-9)

    def test_matches_brute_force_accumulation(self):
        scen, cs, bf = make_setup(2, 4, seed=8, max_users=3, max_streams=6)
        for s in range(6):
            beta = random_feasible(scen, s).to_array()
            for k in range(4):
                for mode in (AD, FULL):
                    got = interference_covariance(k, beta, bf, cs, scen, mode)
                    expected = brute_force_covariance(k, beta, bf, cs, scen, mode)
                    assert np.allclose(got, expected, rtol=1e-10, atol=1e-20)

    def test_two_cells_cross_term(self):
        scen, cs, bf = make_setup(2, 2, max_users=1, max_streams=2)
        beta = np.array([0, 1])
        got = interference_covariance(0, beta, bf, cs, scen, AD)
        expected = brute_force_covariance(0, beta, bf, cs, scen, AD)
        assert np.allclose(got, expected, rtol=1e-10)
        # exactly one interferer: subtracting noise leaves a rank-<=2 Gram term
        residual = got - scen.noise_power_w * np.eye(2)
        assert np.linalg.norm(residual) > 0


class TestInstantaneousRate:
    def test_single_link_closed_form(self):
        scen, cs, bf = make_setup(1, 1, max_users=1, max_streams=2)
        rate = instantaneous_rate(0, np.array([0]), bf, cs, scen, AD)
        sigma = bf.pair(0, 0).singular_values
        p = scen.bs_list[0].tx_power_w / 2  # per stream
        expected = sum(math.log2(1 + p * s * s / scen.noise_power_w) for s in sigma)
        assert rate == pytest.approx(expected, rel=1e-9)

    def test_zero_channel_rate_zero(self):
        scen = homogeneous_scenario(1, 1, max_users=1, max_streams=2)
        cs = synthetic_channel_set(scen, [[np.zeros((4, 64))]])
        bf = compute_beamformers(cs, scen)
        assert instantaneous_rate(0, np.array([0]), bf, cs, scen, AD) == 0.0

    def test_noise_monotonicity(self):
        scen, cs, bf = make_setup(1, 1, max_users=1, max_streams=2)
        low = instantaneous_rate(0, np.array([0]), bf, cs, scen, AD)
        noisy = homogeneous_scenario(1, 1, max_users=1, max_streams=2,
                                     bandwidth_hz=2e9)
        high = instantaneous_rate(0, np.array([0]), bf, cs, noisy, AD)
        assert high < low

    def test_dropped_ue_rate_zero(self):
        scen, cs, bf = make_setup(2, 2, max_users=2, max_streams=4)
        assert instantaneous_rate(0, np.array([-1, 1]), bf, cs, scen, AD) == 0.0


class TestNetworkRates:
    def test_report_shape_and_utilities(self):
        scen, cs, bf = make_setup(3, 6)
        beta = random_feasible(scen, 3)
        report = network_rates(beta, bf, cs, scen, AD)
        assert report.per_user_rate.shape == (6,)
        assert np.all(report.per_user_rate >= 0)
        assert np.all(np.isfinite(report.per_user_rate))
        assert report.utility_sum == pytest.approx(report.per_user_rate.sum(),
                                                   abs=1e-12)
        assert report.utility_min == pytest.approx(report.per_user_rate.min(),
                                                   abs=1e-12)

    def test_indicator_collapse(self):
        scen, cs, bf = make_setup(3, 6)
        beta = random_feasible(scen, 4)
        report = network_rates(beta, bf, cs, scen, AD)
        for k, j in enumerate(beta.assignments):
            assert report.per_pair_rate[(k, j)] == report.per_user_rate[k]

    def test_dropped_entries_rate_zero_and_excluded(self):
        scen, cs, bf = make_setup(2, 3, max_users=2, max_streams=4)
        beta = np.array([0, -1, 1])
        report = network_rates(beta, bf, cs, scen, FULL)
        assert report.per_user_rate[1] == 0.0
        assert (1, -1) not in report.per_pair_rate
        assert report.utility_min == 0.0

    def test_association_dependent_dominates_full(self):
        scen, cs, bf = make_setup(3, 9, seed=6)
        for s in range(10):
            beta = random_feasible(scen, s)
            ad = network_rates(beta, bf, cs, scen, AD).per_user_rate
            full = network_rates(beta, bf, cs, scen, FULL).per_user_rate
            assert np.all(ad >= full - 1e-12)


class TestRateEngine:
    def test_engine_matches_direct_path(self):
        scen, cs, bf = make_setup(3, 8, seed=9)
        engine = RateEngine(cs, bf, scen)
        for s in range(8):
            beta = random_feasible(scen, s).to_array()
            for mode in (AD, FULL):
                fast = engine.per_user_rates(beta, mode)
                direct = network_rates(beta, bf, cs, scen, mode).per_user_rate
                assert np.allclose(fast, direct, rtol=1e-9, atol=1e-12)

    def test_engine_handles_dropped_entries(self):
        scen, cs, bf = make_setup(2, 4, seed=1, max_users=3, max_streams=6)
        engine = RateEngine(cs, bf, scen)
        beta = np.array([0, -1, 1, 0])
        for mode in (AD, FULL):
            fast = engine.per_user_rates(beta, mode)
            direct = network_rates(beta, bf, cs, scen, mode).per_user_rate
            assert fast[1] == 0.0
            assert np.allclose(fast, direct, rtol=1e-9, atol=1e-12)

    def test_factory_picks_engine_for_uniform_streams(self):
        scen, cs, bf = make_setup(2, 3)
        assert isinstance(make_rate_evaluator(cs, bf, scen), RateEngine)


class TestUtility:
    def test_values(self):
        scen, cs, bf = make_setup(2, 3, max_users=2, max_streams=4)
        report = network_rates(random_feasible(scen, 0), bf, cs, scen, AD)
        assert utility(report, UtilityKind.SUM_RATE) == report.utility_sum
        assert utility(report, UtilityKind.MIN_RATE) == report.utility_min
        assert utility_of_rates(np.array([1.0, 2.0, 3.0]),
                                UtilityKind.SUM_RATE) == 6.0
        assert utility_of_rates(np.array([1.0, 2.0, 3.0]),
                                UtilityKind.MIN_RATE) == 1.0
        zeros = np.zeros(4)
        assert utility_of_rates(zeros, UtilityKind.SUM_RATE) == 0.0
        assert utility_of_rates(zeros, UtilityKind.MIN_RATE) == 0.0
