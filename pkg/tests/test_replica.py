import numpy as np
import pytest

from riscal.channel import PriorParams, SystemDims
from riscal.mp import denoise_bg
from riscal.replica import (
    init_replica_state,
    min_training_length,
    moments,
    scalar_overlap_bg,
    se_step,
    solve_both_branches,
    solve_fixed_point,
)


def fig5_priors(tau_n=1.0):
    return PriorParams(lambda_s=0.05, tau_s=1.0, lambda_g=0.1, tau_g=1.0,
                       tau_n=tau_n, tau_x=1.0, tau_h0=1.0)


def table4_dims(row, t=10):
    if row == 1:
        return SystemDims(m=128, m_grid=160, k=100, l1=1, l2=50, l1_grid=1, l2_grid=50, t=t)
    return SystemDims(m=100, m_grid=125, k=100, l1=1, l2=100, l1_grid=1, l2_grid=100, t=t)


class TestMoments:
    def test_values(self):
        d = table4_dims(1)
        q_s, q_g, q_w, q_z = moments(fig5_priors(), d)
        assert np.isclose(q_s, 0.05)
        assert np.isclose(q_g, 0.1)
        assert np.isclose(q_w, (160 / 128) * 0.05 + 1.0)
        assert np.isclose(q_z, 50 * q_w * q_g)

    def test_known_part_only(self):
        d = table4_dims(1)
        p = PriorParams(lambda_s=0.0, tau_s=1.0, lambda_g=0.1, tau_g=1.0,
                        tau_n=0.0, tau_h0=1.0)
        _, _, q_w, _ = moments(p, d)
        assert np.isclose(q_w, 1.0)


class TestScalarOverlap:
    def test_uninformative_limit(self):
        assert scalar_overlap_bg(0.0, 0.1, 1.0) == 0.0
        assert scalar_overlap_bg(1e-12, 0.1, 1.0) < 1e-9

    def test_perfect_recovery_limit(self):
        m = scalar_overlap_bg(1e12, 0.1, 1.0)
        assert abs(m - 0.1) < 1e-6

    def test_monte_carlo_oracle(self):
        # direct simulation of the scalar channel at (mt=2, lam=0.1, tau=1)
        mt, lam, tau = 2.0, 0.1, 1.0
        rng = np.random.default_rng(123)
        n = 1_000_000
        x = (rng.random(n) < lam) * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) \
            * np.sqrt(tau / 2)
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        y = np.sqrt(mt) * x + noise
        fhat, _ = denoise_bg(y / np.sqrt(mt), 1.0 / mt, lam, tau)
        samples = np.abs(fhat) ** 2
        mc = samples.mean()
        se = samples.std() / np.sqrt(n)
        assert abs(scalar_overlap_bg(mt, lam, tau) - mc) < 3 * se

    @pytest.mark.parametrize("mt", [0.1, 1.0, 5.0, 50.0])
    @pytest.mark.parametrize("tau", [0.3, 1.0, 4.0])
    def test_gaussian_prior_closed_form(self, mt, tau):
        # lam=1: overlap must equal tau - tau/(1 + tau*mt) to quadrature accuracy
        want = tau - tau / (1.0 + tau * mt)
        assert abs(scalar_overlap_bg(mt, 1.0, tau) - want) < 1e-8


class TestFixedPoint:
    def test_huge_noise_returns_prior_moments(self):
        d = table4_dims(1, t=150)
        p = fig5_priors(tau_n=1e18)
        res = solve_fixed_point(d, p)
        assert res.sweeps <= 2 or (np.isclose(res.mse_s, 0.05, rtol=1e-6)
                                   and np.isclose(res.mse_g, 0.1, rtol=1e-6))
        assert np.isclose(res.mse_s, 0.05, rtol=1e-4)
        assert np.isclose(res.mse_g, 0.1, rtol=1e-4)

    def test_fixed_point_stationary(self):
        d = table4_dims(1, t=40)
        p = fig5_priors(tau_n=1.0)
        res = solve_fixed_point(d, p, tol=1e-15, max_sweeps=50000)
        again = se_step(res.state, d, p)
        for f in ("m_z", "m_w", "m_g", "m_s", "mse_s", "mse_g"):
            assert abs(getattr(again, f) - getattr(res.state, f)) < 1e-10

    def test_mse_bounds_every_sweep(self):
        d = table4_dims(1, t=20)
        p = fig5_priors(tau_n=0.1)
        state = init_replica_state(d, p, "uninformative")
        for _ in range(200):
            state = se_step(state, d, p)
            assert -1e-12 <= state.mse_s <= state.q_s + 1e-12
            assert -1e-12 <= state.mse_g <= state.q_g + 1e-12

    def test_monotone_in_noise(self):
        d = SystemDims(m=51, m_grid=64, k=40, l1=4, l2=5, l1_grid=4, l2_grid=5, t=60)
        prev_s, prev_g = -np.inf, -np.inf
        for tn_db in np.arange(-20, 31, 2.5):
            res = solve_fixed_point(d, fig5_priors(10 ** (tn_db / 10)))
            assert res.mse_s >= prev_s - 1e-12
            assert res.mse_g >= prev_g - 1e-12
            prev_s, prev_g = res.mse_s, res.mse_g

    def test_monotone_in_training_length(self):
        p = fig5_priors(tau_n=0.0)
        prev = (np.inf, np.inf)
        for t in range(5, 60, 5):
            res = solve_fixed_point(table4_dims(1, t=t), p, init="uninformative")
            assert res.mse_s <= prev[0] + 1e-12
            assert res.mse_g <= prev[1] + 1e-12
            prev = (res.mse_s, res.mse_g)

    def test_branches_split_near_threshold(self):
        # noiseless row-1 geometry below the algorithmic threshold: bistable
        p = fig5_priors(tau_n=0.0)
        info, unin, split = solve_both_branches(table4_dims(1, t=10), p)
        assert split
        assert info.mse_s < unin.mse_s

    def test_loose_flag_for_overcomplete_ris_grid(self):
        d = SystemDims(m=51, m_grid=64, k=40, l1=4, l2=5, l1_grid=4, l2_grid=7, t=60)
        assert solve_fixed_point(d, fig5_priors()).bound_may_be_loose
        assert not solve_fixed_point(table4_dims(1), fig5_priors()).bound_may_be_loose


class TestMinTrainingLength:
    def test_table4_rows(self):
        p = fig5_priors(tau_n=0.0)
        assert abs(min_training_length(table4_dims(1), p, -50.0) - 11) <= 1
        assert abs(min_training_length(table4_dims(2), p, -50.0) - 26) <= 1

    def test_degenerate_threshold(self):
        p = fig5_priors(tau_n=0.0)
        with pytest.raises(ValueError):
            min_training_length(table4_dims(1), p, threshold_db=0.0)
        # any strictly negative threshold above the prior floor is met at t=1
        assert min_training_length(table4_dims(1), p, threshold_db=-5.0) == 1

    def test_unreachable_threshold_reported(self):
        p = fig5_priors(tau_n=1e6)
        with pytest.raises(RuntimeError):
            min_training_length(table4_dims(1), p, -50.0, t_max=64)
