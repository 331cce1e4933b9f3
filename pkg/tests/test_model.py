import numpy as np
import pytest

from peeroff import (
    DomainError,
    FeasibilityError,
    NetworkConfig,
    OffloadProfile,
    ParameterError,
    computation_delay,
    congestion_delay,
    downlink_rate,
    energies,
    inverse_marginal_comp_delay,
    marginal_comp_delay,
    marginal_congestion_delay,
    no_offload_profile,
    sbs_delay_cost,
    sbs_energy,
)
from peeroff.model import delay_components

from conftest import make_cfg, make_state


class TestDownlinkRate:
    def test_snr_one_gives_bandwidth(self):
        assert downlink_rate(1.0, 1.0, 1.0, 20e6) == pytest.approx(20e6)

    def test_snr_three(self):
        assert downlink_rate(3.0, 1.0, 1.0, 1.0) == pytest.approx(2.0)

    def test_reference_link_budget(self):
        # Independent evaluation at the default radio setting: 20 MHz band,
        # 10 dBm transmit power, -174 dBm/Hz noise, indoor loss at 10 m.
        w = 20e6
        p = 10 ** (10.0 / 10.0) * 1e-3
        noise = 10 ** (-174.0 / 10.0) * 1e-3 * w
        loss_db = 20 * np.log10(900.0) + 20 * np.log10(10.0) - 28.0
        gain = 10 ** (-loss_db / 10.0)
        expected = w * np.log2(1 + p * gain / noise)
        assert expected == pytest.approx(397_946_343, rel=1e-3)
        assert downlink_rate(p, gain, noise, w) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_power_and_gain(self, rng):
        for _ in range(50):
            p, h, s, w = rng.uniform(0.1, 10, 4)
            assert downlink_rate(2 * p, h, s, w) > downlink_rate(p, h, s, w)
            assert downlink_rate(p, 2 * h, s, w) > downlink_rate(p, h, s, w)

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            downlink_rate(0.0, 1.0, 1.0, 1.0)
        with pytest.raises(ParameterError):
            downlink_rate(1.0, 1.0, -1.0, 1.0)


class TestCongestionDelay:
    def test_empty_lan(self):
        assert congestion_delay(0.0, 0.2) == pytest.approx(0.2)

    def test_half_capacity_doubles(self):
        assert congestion_delay(2.5, 0.2) == pytest.approx(0.4)

    def test_four_fifths(self):
        assert congestion_delay(4.0, 0.2) == pytest.approx(1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            congestion_delay(5.0, 0.2)
        with pytest.raises(DomainError):
            congestion_delay(-0.1, 0.2)

    def test_convex_increasing(self):
        xs = np.linspace(0, 4.9, 50)
        ys = [congestion_delay(x, 0.2) for x in xs]
        d = np.diff(ys)
        assert np.all(d > 0)
        assert np.all(np.diff(d) > 0)


class TestComputationDelay:
    def test_idle(self):
        assert computation_delay(0.0, 75.0) == pytest.approx(1 / 75)

    def test_half_load(self):
        mu = 75.0
        assert computation_delay(mu / 2, mu) == pytest.approx(2 / mu)

    def test_near_saturation(self):
        assert computation_delay(74.0, 75.0) == pytest.approx(1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            computation_delay(75.0, 75.0)
        with pytest.raises(DomainError):
            computation_delay(-1.0, 75.0)


class TestMarginals:
    def test_comp_idle_and_half(self):
        mu = 75.0
        assert marginal_comp_delay(0.0, mu) == pytest.approx(1 / mu)
        assert marginal_comp_delay(mu / 2, mu) == pytest.approx(4 / mu)

    def test_cong_values(self):
        assert marginal_congestion_delay(0.0, 0.2) == pytest.approx(0.2)
        assert marginal_congestion_delay(2.5, 0.2) == pytest.approx(0.8)

    def test_comp_matches_finite_difference(self, rng):
        mu = 75.0
        for _ in range(1000):
            w = rng.uniform(0.0, 0.99) * mu
            h = 1e-6 * mu
            lo, hi = max(w - h, 0.0), min(w + h, mu * (1 - 1e-12))
            fd = (hi * computation_delay(hi, mu) - lo * computation_delay(lo, mu)) / (hi - lo)
            assert marginal_comp_delay(w, mu) == pytest.approx(fd, rel=1e-6)

    def test_cong_matches_finite_difference(self, rng):
        tau = 0.2
        for _ in range(1000):
            lam = rng.uniform(0.0, 0.99) / tau
            h = 1e-7 / tau
            lo, hi = max(lam - h, 0.0), min(lam + h, (1 - 1e-12) / tau)
            fd = (hi * congestion_delay(hi, tau) - lo * congestion_delay(lo, tau)) / (hi - lo)
            assert marginal_congestion_delay(lam, tau) == pytest.approx(fd, rel=1e-6)

    def test_inverse_special_points(self):
        mu = 75.0
        assert inverse_marginal_comp_delay(1 / mu, mu) == pytest.approx(0.0)
        assert inverse_marginal_comp_delay(4 / mu, mu) == pytest.approx(mu / 2)

    def test_inverse_round_trip(self, rng):
        mu = 75.0
        for _ in range(1000):
            y = rng.uniform(1.0, 100.0) / mu
            w = inverse_marginal_comp_delay(y, mu)
            assert 0 <= w < mu
            assert marginal_comp_delay(w, mu) == pytest.approx(y, rel=1e-9)

    def test_inverse_domain(self):
        with pytest.raises(DomainError):
            inverse_marginal_comp_delay(0.5 / 75.0, 75.0)


class TestProfileCosts:
    def test_no_offload_delay(self):
        cfg = make_cfg(3)
        st = make_state([40.0, 50.0, 60.0], uplink=[0.1, 0.2, 0.3])
        prof = no_offload_profile(st.arrivals)
        for i in range(3):
            phi = st.arrivals[i]
            expected = phi / (75.0 - phi) + st.uplink_delay_cost[i]
            assert sbs_delay_cost(i, prof, cfg, st) == pytest.approx(expected)

    def test_single_sbs_reduces_to_no_offload(self):
        cfg = make_cfg(1)
        st = make_state([55.0], uplink=[0.42])
        prof = no_offload_profile(st.arrivals)
        assert sbs_delay_cost(0, prof, cfg, st) == pytest.approx(
            55.0 / 20.0 + 0.42)

    def test_two_sbs_matches_expanded_sum(self, rng):
        # Independent oracle: literal term-by-term expansion of the delay
        # cost with explicit python loops.
        cfg = make_cfg(2)
        for _ in range(100):
            phi = rng.uniform(10, 60, 2)
            move = rng.uniform(0, min(phi[0], 4.0))
            beta = np.array([[phi[0] - move, move], [0.0, phi[1]]])
            st = make_state(phi, uplink=rng.uniform(0, 0.5, 2))
            prof = OffloadProfile(beta)
            omega = [beta[0][0] + beta[1][0], beta[0][1] + beta[1][1]]
            lam = sum(sum(beta[i][j] for j in range(2) if j != i) for i in range(2))
            dg = 0.2 / (1 - 0.2 * lam)
            for i in range(2):
                expected = sum(beta[i][j] / (75.0 - omega[j]) for j in range(2))
                expected += (phi[i] - beta[i][i]) * dg
                expected += st.uplink_delay_cost[i]
                assert sbs_delay_cost(i, prof, cfg, st) == pytest.approx(
                    expected, rel=1e-12)

    def test_components_sum_to_total(self, rng):
        cfg = make_cfg(3)
        phi = np.array([70.0, 30.0, 20.0])
        beta = np.diag(phi).astype(float)
        beta[0, 0] -= 3.0
        beta[0, 1] = 2.0
        beta[0, 2] = 1.0
        st = make_state(phi, uplink=[0.1, 0.1, 0.1])
        prof = OffloadProfile(beta)
        comp, cong, comm = delay_components(prof, cfg, st)
        for i in range(3):
            assert comp[i] + cong[i] + comm[i] == pytest.approx(
                sbs_delay_cost(i, prof, cfg, st), rel=1e-12)

    def test_energy_idle_is_tx_only(self):
        cfg = make_cfg(2)
        st = make_state([0.0, 10.0], tx=[0.5, 0.25])
        prof = OffloadProfile(np.array([[0.0, 0.0], [10.0, 0.0]]))
        assert sbs_energy(1, prof, cfg, st) == pytest.approx(0.25)

    def test_energy_full_load_slot(self):
        # 9e-5 Wh/task at 75 tasks/s over a 60 s slot adds 0.405 Wh.
        cfg = make_cfg(1)
        st = make_state([75.0 * (1 - 1e-4)], tx=[0.1])
        prof = no_offload_profile(st.arrivals)
        expected = 0.1 + 9e-5 * st.arrivals[0] * 60.0
        assert sbs_energy(0, prof, cfg, st) == pytest.approx(expected)
        assert expected == pytest.approx(0.1 + 0.405, rel=1e-3)

    def test_total_energy_invariant_under_rerouting(self):
        cfg = make_cfg(3)
        phi = np.array([60.0, 20.0, 20.0])
        st = make_state(phi)
        base = no_offload_profile(phi)
        rerouted = np.diag(phi).astype(float)
        rerouted[0, 0] -= 4.0
        rerouted[0, 1] += 2.0
        rerouted[0, 2] += 2.0
        total_a = energies(base, cfg, st).sum()
        total_b = energies(OffloadProfile(rerouted), cfg, st).sum()
        assert total_a == pytest.approx(total_b, rel=1e-12)


class TestFeasibility:
    def test_negative_entry(self):
        cfg = make_cfg(2)
        prof = OffloadProfile(np.array([[10.0, -1.0], [0.0, 5.0]]))
        with pytest.raises(FeasibilityError, match="positivity"):
            prof.validate(cfg)

    def test_conservation(self):
        cfg = make_cfg(2)
        prof = OffloadProfile(np.diag([10.0, 5.0]))
        with pytest.raises(FeasibilityError, match="conservation"):
            prof.validate(cfg, arrivals=np.array([11.0, 5.0]))

    def test_stability(self):
        cfg = make_cfg(2)
        prof = OffloadProfile(np.diag([75.0, 5.0]))
        with pytest.raises(FeasibilityError, match="stability"):
            prof.validate(cfg)

    def test_lan_stability(self):
        cfg = make_cfg(2)
        beta = np.array([[10.0, 6.0], [0.0, 5.0]])
        with pytest.raises(FeasibilityError, match="lan"):
            OffloadProfile(beta).validate(cfg)

    def test_valid_profile_passes(self):
        cfg = make_cfg(2)
        beta = np.array([[10.0, 2.0], [0.0, 5.0]])
        OffloadProfile(beta).validate(cfg, arrivals=np.array([12.0, 5.0]))


class TestConfigValidation:
    def test_rejects_bad_rates(self):
        with pytest.raises(ParameterError):
            NetworkConfig(service_rates=np.array([75.0, -1.0]), lan_delay=0.2,
                          energy_per_task=9e-5, energy_budgets=np.zeros(2),
                          energy_cap=1.0, delay_cap=1.0, control_v=1.0,
                          slot_duration=60.0)

    def test_rejects_budget_above_cap(self):
        with pytest.raises(ParameterError):
            NetworkConfig(service_rates=np.array([75.0]), lan_delay=0.2,
                          energy_per_task=9e-5, energy_budgets=np.array([2.0]),
                          energy_cap=1.0, delay_cap=1.0, control_v=1.0,
                          slot_duration=60.0)

    def test_rejects_negative_v(self):
        with pytest.raises(ParameterError):
            make_cfg(1, v=-1.0)
