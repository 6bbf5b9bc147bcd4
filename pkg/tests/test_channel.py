import math

import numpy as np
import pytest

from helpers import make_setup
from mmwave_assoc.channel import (
    LinkState,
    array_response,
    draw_link_state,
    dump_channel_set,
    free_space_db,
    generate_channel,
    generate_channel_set,
    large_scale_estimate,
    load_channel_set,
    los_probability,
    path_loss_db,
)
from mmwave_assoc.channel import LargeScaleRecord
from mmwave_assoc.topology import CsiMode, homogeneous_scenario, initial_positions

# Scalar references evaluated independently (30-digit arithmetic) before
# the implementation existed.
P_LOS_AT_71M = 0.369984261172273185
P_LOS_AT_40M = 0.739628345377586999
FREE_SPACE_73GHZ_DB = 69.7142404242924918


class TestLosProbability:
    def test_inside_breakpoint_is_one(self):
        assert los_probability(10.0) == 1.0
        assert los_probability(27.0) == 1.0

    def test_reference_values(self):
        assert los_probability(71.0) == pytest.approx(P_LOS_AT_71M, abs=1e-12)
        assert los_probability(40.0) == pytest.approx(P_LOS_AT_40M, abs=1e-12)

    def test_monotone_beyond_breakpoint(self):
        grid = np.linspace(27.0, 500.0, 400)
        values = [los_probability(d) for d in grid]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))

    def test_domain_error(self):
        with pytest.raises(ValueError):
            los_probability(0.0)
        with pytest.raises(ValueError):
            los_probability(-3.0)


class TestLinkState:
    def test_certain_los(self):
        assert all(draw_link_state(5.0, s) is LinkState.LOS for s in range(50))

    def test_frequency_matches_probability(self):
        rng = np.random.default_rng(123)
        draws = sum(draw_link_state(71.0, rng) is LinkState.LOS
                    for _ in range(100_000))
        assert draws / 100_000 == pytest.approx(P_LOS_AT_71M, abs=0.01)

    def test_deterministic(self):
        assert draw_link_state(60.0, 4) is draw_link_state(60.0, 4)


class TestPathLoss:
    def test_free_space_term(self):
        assert free_space_db(73e9) == pytest.approx(FREE_SPACE_73GHZ_DB, abs=1e-9)

    def test_reference_distances(self):
        pl, shadow = path_loss_db(1.0, LinkState.LOS, 73e9, shadow_db=0.0)
        assert shadow == 0.0
        assert pl == pytest.approx(FREE_SPACE_73GHZ_DB, abs=0.05)
        pl_los, _ = path_loss_db(100.0, LinkState.LOS, 73e9, shadow_db=0.0)
        assert pl_los == pytest.approx(FREE_SPACE_73GHZ_DB + 40.0, abs=1e-9)
        pl_nlos, _ = path_loss_db(100.0, LinkState.NLOS, 73e9, shadow_db=0.0)
        assert pl_nlos == pytest.approx(FREE_SPACE_73GHZ_DB + 68.0, abs=1e-9)

    def test_monotone_and_state_ordering(self):
        grid = np.linspace(1.0, 400.0, 200)
        los = [path_loss_db(d, LinkState.LOS, 73e9, shadow_db=0.0)[0] for d in grid]
        nlos = [path_loss_db(d, LinkState.NLOS, 73e9, shadow_db=0.0)[0] for d in grid]
        assert all(b > a for a, b in zip(los, los[1:]))
        assert all(n >= l for l, n in zip(los, nlos))

    def test_domain_error(self):
        with pytest.raises(ValueError):
            path_loss_db(0.5, LinkState.LOS, 73e9, shadow_db=0.0)

    def test_shadow_statistics(self):
        rng = np.random.default_rng(0)
        shadows = np.array([path_loss_db(50.0, LinkState.NLOS, 73e9, seed=rng)[1]
                            for _ in range(20_000)])
        assert shadows.std() == pytest.approx(7.9, rel=0.03)
        assert abs(shadows.mean()) < 0.2

    def test_shadow_is_additive(self):
        pl0, _ = path_loss_db(80.0, LinkState.LOS, 73e9, shadow_db=0.0)
        pl, shadow = path_loss_db(80.0, LinkState.LOS, 73e9, seed=11)
        assert pl - shadow == pytest.approx(pl0, abs=1e-12)


class TestArrayResponse:
    def test_single_element(self):
        a = array_response(0.3, 1.1, 1, 1, 0.5, 1.0)
        assert a.shape == (1,)
        assert a[0] == pytest.approx(1.0)

    def test_unit_magnitude(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            phi, theta = rng.uniform(-np.pi, np.pi, 2)
            a = array_response(phi, theta, 4, 3, 0.002, 0.004)
            assert np.allclose(np.abs(a), 1.0, atol=1e-12)

    def test_two_element_broadside(self):
        # half-wavelength spacing, azimuth and elevation at pi/2: phases [0, pi]
        wavelength = 0.004
        a = array_response(np.pi / 2, np.pi / 2, 2, 1, wavelength / 2, wavelength)
        assert a[0] == pytest.approx(1.0, abs=1e-12)
        assert a[1] == pytest.approx(-1.0, abs=1e-12)

    def test_u_major_ordering(self):
        wavelength = 0.004
        phi, theta = 0.7, 1.2
        a = array_response(phi, theta, 2, 3, wavelength / 2, wavelength)
        k_d = 2 * np.pi / wavelength * (wavelength / 2)
        for u in range(2):
            for v in range(3):
                expected = np.exp(1j * k_d * (u * np.sin(phi) * np.sin(theta)
                                              + v * np.cos(theta)))
                assert a[u * 3 + v] == pytest.approx(expected, abs=1e-12)


def _unit_record(distance=50.0, state=LinkState.LOS, pl_db=0.0):
    return LargeScaleRecord(distance_m=distance, state=state,
                            path_loss_db=pl_db, shadow_db=0.0)


class TestGenerateChannel:
    def test_shape_and_determinism(self):
        scen = homogeneous_scenario(2, 2)
        ue, bs = scen.ue_list[0], scen.bs_list[0]
        h1 = generate_channel(ue, bs, _unit_record(), scen, 3)
        h2 = generate_channel(ue, bs, _unit_record(), scen, 3)
        assert h1.shape == (4, 64)
        assert np.array_equal(h1, h2)
        assert np.all(np.isfinite(h1))

    def test_single_ray_is_rank_one_with_exact_norm(self):
        scen = homogeneous_scenario(2, 2, num_clusters=1, rays_per_cluster=1)
        ue, bs = scen.ue_list[0], scen.bs_list[0]
        h = generate_channel(ue, bs, _unit_record(), scen, 9)
        n, m = h.shape
        assert np.linalg.matrix_rank(h, tol=1e-9) == 1
        assert np.linalg.norm(h) == pytest.approx(math.sqrt(n * m), rel=1e-12)

    def test_power_normalization_monte_carlo(self):
        # E[||H||_F^2] = gain^2 * N * M under the declared draw recipe.
        scen = homogeneous_scenario(2, 2, bs_panel=(4, 4), ue_panel=(2, 2))
        ue, bs = scen.ue_list[0], scen.bs_list[0]
        record = _unit_record(pl_db=20.0)  # amplitude gain 0.1
        rng = np.random.default_rng(2024)
        total = 0.0
        draws = 10_000
        for _ in range(draws):
            h = generate_channel(ue, bs, record, scen, rng)
            total += np.linalg.norm(h) ** 2
        expected = (0.1 ** 2) * ue.num_antennas * bs.num_antennas
        assert total / draws == pytest.approx(expected, rel=0.05)


class TestLargeScaleEstimate:
    def test_deterministic_rank_one_norm(self):
        scen = homogeneous_scenario(2, 2)
        ue, bs = scen.ue_list[0], scen.bs_list[0]
        pos = np.array([100.0, 120.0, 1.5])
        record = _unit_record(pl_db=60.0)
        est1 = large_scale_estimate(ue, bs, pos, record, scen)
        est2 = large_scale_estimate(ue, bs, pos, record, scen)
        assert np.array_equal(est1, est2)
        assert np.linalg.matrix_rank(est1, tol=1e-12) == 1
        gain = 10 ** (-60.0 / 20.0)
        expected = gain * math.sqrt(ue.num_antennas * bs.num_antennas)
        assert np.linalg.norm(est1) == pytest.approx(expected, rel=1e-12)


class TestChannelSet:
    def test_complete_and_independent_across_slots(self):
        scen = homogeneous_scenario(3, 12)
        pos = initial_positions(scen, 0)
        cs1 = generate_channel_set(scen, pos, 100)
        cs2 = generate_channel_set(scen, pos, 101)
        assert len(cs1.channels) == 12 and len(cs1.channels[0]) == 3
        assert cs1.channels[0][0].shape == (4, 64)
        assert not np.array_equal(cs1.channels[0][0], cs2.channels[0][0])
        cs1_again = generate_channel_set(scen, pos, 100)
        assert np.array_equal(cs1.channels[5][2], cs1_again.channels[5][2])

    def test_estimates_present_in_large_scale_mode(self):
        scen = homogeneous_scenario(2, 3, csi_mode=CsiMode.LARGE_SCALE_ONLY)
        pos = initial_positions(scen, 0)
        cs = generate_channel_set(scen, pos, 7)
        assert cs.estimates is not None
        assert cs.estimates[0][0].shape == cs.channels[0][0].shape
        assert cs.decision_channels() is cs.estimates
        scen_inst = homogeneous_scenario(2, 3)
        cs2 = generate_channel_set(scen_inst, pos, 7)
        assert cs2.estimates is None
        assert cs2.decision_channels() is cs2.channels

    def test_dump_and_replay_round_trip(self, tmp_path):
        scen = homogeneous_scenario(2, 3, csi_mode=CsiMode.LARGE_SCALE_ONLY)
        pos = initial_positions(scen, 1)
        cs = generate_channel_set(scen, pos, 42, slot=5)
        path = tmp_path / "channels.json"
        dump_channel_set(cs, path)
        replayed = load_channel_set(path)
        assert replayed.slot == 5
        for k in range(3):
            for j in range(2):
                assert np.array_equal(replayed.channels[k][j], cs.channels[k][j])
                assert np.array_equal(replayed.estimates[k][j], cs.estimates[k][j])
                assert replayed.records[k][j] == cs.records[k][j]


    def test_replayed_channels_reproduce_rates(self, tmp_path):
        from mmwave_assoc.association import random_feasible
        from mmwave_assoc.mimo import compute_beamformers, network_rates
        scen = homogeneous_scenario(2, 4, max_users=3, max_streams=6)
        pos = initial_positions(scen, 3)
        cs = generate_channel_set(scen, pos, 77)
        path = tmp_path / "dump.json"
        dump_channel_set(cs, path)
        replayed = load_channel_set(path)
        beta = random_feasible(scen, 0)
        original = network_rates(beta, compute_beamformers(cs, scen), cs, scen)
        again = network_rates(beta, compute_beamformers(replayed, scen),
                              replayed, scen)
        assert np.allclose(original.per_user_rate, again.per_user_rate,
                           rtol=1e-12)
