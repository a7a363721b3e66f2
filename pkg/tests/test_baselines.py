import numpy as np
import pytest

from riscal.baselines import (
    BaselineEstimate,
    concat_lr,
    onoff_lmmse,
    oracle_g,
    remove_ambiguity,
    training_length_onoff,
    training_length_wang,
)
from riscal.channel import (
    GeometryConfig,
    PriorParams,
    SystemDims,
    build_grids,
    build_system,
    make_training,
    observe,
    synth_angular,
    synth_geometric,
)
from riscal.gamp import GampOptions


def crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestTrainingLengths:
    def test_wang_table_values(self):
        assert training_length_wang(100, 50, 128) == 149
        assert training_length_wang(100, 100, 100) == 199

    def test_wang_single_user(self):
        assert training_length_wang(1, 5, 4) == 5

    def test_onoff_lengths(self):
        assert training_length_onoff(100, 50) == 5000
        assert training_length_onoff(100, 100) == 10000

    def test_validation(self):
        with pytest.raises(ValueError):
            training_length_wang(0, 5, 4)


class TestRemoveAmbiguity:
    def _estimate(self, rng, l=6, m=4, k=3):
        h_rb = crandn(rng, (m, l))
        h_ur = crandn(rng, (l, k))
        return BaselineEstimate(h_rb=h_rb, h_ur=h_ur, method="test")

    def test_aligned_unchanged(self):
        rng = np.random.default_rng(0)
        est = self._estimate(rng)
        out = remove_ambiguity(est, est.h_ur[:, 0].copy())
        assert np.allclose(out.h_rb, est.h_rb)
        assert np.allclose(out.h_ur, est.h_ur)

    def test_product_invariance(self):
        rng = np.random.default_rng(1)
        est = self._estimate(rng)
        ref = crandn(rng, est.h_ur.shape[0])
        out = remove_ambiguity(est, ref)
        for k in range(est.h_ur.shape[1]):
            before = est.h_rb @ np.diag(est.h_ur[:, k])
            after = out.h_rb @ np.diag(out.h_ur[:, k])
            assert np.allclose(before, after, atol=1e-10)

    def test_recovers_elementwise_scaling(self):
        rng = np.random.default_rng(2)
        h_rb = crandn(rng, (5, 7))
        h_ur = crandn(rng, (7, 4))
        c = np.exp(1j * rng.uniform(0, 2 * np.pi, 7)) * rng.uniform(0.5, 2.0, 7)
        skewed = BaselineEstimate(h_rb=h_rb / c[None, :], h_ur=h_ur * c[:, None],
                                  method="test")
        out = remove_ambiguity(skewed, h_ur[:, 0])
        assert np.allclose(out.h_rb, h_rb, atol=1e-10)
        assert np.allclose(out.h_ur, h_ur, atol=1e-10)

    def test_zero_reference_warns(self):
        rng = np.random.default_rng(3)
        est = self._estimate(rng)
        est.h_ur[2, 0] = 0.0
        with pytest.warns(UserWarning):
            remove_ambiguity(est, np.ones(est.h_ur.shape[0], complex))


def geometric_setup(seed=0, k=6, m=8, l1=2, l2=2, t=20, eta=2, kappa=9.0, tau_n=1e-9):
    dims = SystemDims(m=m, m_grid=eta * m, k=k, l1=l1, l2=l2,
                      l1_grid=eta * l1, l2_grid=eta * l2, t=t)
    rng = np.random.default_rng(seed)
    cfg = GeometryConfig(clusters_slow=6, subpaths=4)
    h_bar, h_tilde, h_rb, h_ur, beta0, betas = synth_geometric(dims, cfg, kappa, rng)
    x = make_training(dims, 1.0, "iid-gaussian", rng)
    system = build_system(build_grids(dims), dims, h_bar, kappa, x)
    lam_s = min(1.0, cfg.clusters_fast * cfg.subpaths / (dims.m_grid * dims.l_grid) * 4)
    tau_s = beta0 * dims.m * dims.l / ((kappa + 1) * lam_s * dims.m_grid * dims.l_grid)
    lam_g = min(1.0, cfg.subpaths / dims.l_grid * 2)
    tau_g = betas.mean() * dims.l / (lam_g * dims.l_grid)
    priors = PriorParams(lambda_s=lam_s, tau_s=tau_s, lambda_g=lam_g, tau_g=tau_g,
                         tau_n=tau_n, tau_x=1.0, tau_h0=0.0, kappa=kappa)
    y = h_rb @ h_ur @ x
    if tau_n > 0:
        y = y + np.sqrt(tau_n) * crandn(rng, y.shape)
    return dims, system, priors, h_bar, h_rb, h_ur, beta0, betas, y, rng


class TestOracle:
    def test_noiseless_near_exact(self):
        dims, system, priors, h_bar, h_rb, h_ur, *_, y, rng = geometric_setup(
            seed=4, tau_n=0.0)
        import dataclasses
        est = oracle_g(y, system.x, h_rb, system,
                       dataclasses.replace(priors, tau_n=0.0),
                       GampOptions(eps=1e-10, i_max=4000))
        nmse = (np.linalg.norm(est.h_ur - h_ur) ** 2 / np.linalg.norm(h_ur) ** 2)
        assert 10 * np.log10(nmse) < -50

    def test_zero_truth_with_truthful_prior(self):
        dims, system, priors, h_bar, h_rb, h_ur, *_ , y, rng = geometric_setup(seed=5)
        import dataclasses
        p0 = dataclasses.replace(priors, lambda_g=0.0)
        y0 = np.zeros((dims.m, dims.t), complex)
        est = oracle_g(y0, system.x, h_rb, system, p0)
        assert np.allclose(est.h_ur, 0.0)


class TestConcatLr:
    def test_no_mismatch_limit(self):
        # fully slow-varying channel: stage-1 model is exact, so the estimate
        # approaches the oracle as noise vanishes
        dims, system, priors, h_bar, h_rb, h_ur, beta0, betas, y, rng = \
            geometric_setup(seed=6, kappa=1e12, tau_n=0.0)
        y = h_rb @ h_ur @ system.x
        est = concat_lr(y, system.x, h_bar, system, priors,
                        GampOptions(eps=1e-10, i_max=4000))
        nmse = np.linalg.norm(est.h_ur - h_ur) ** 2 / np.linalg.norm(h_ur) ** 2
        assert 10 * np.log10(nmse) < -40

    def test_error_floor_from_mismatch(self):
        # with a finite rician factor the fast component is ignored by stage 1:
        # shrinking the noise 100x leaves the error nearly unchanged
        out = {}
        for tau_n in (1e-11, 1e-13):
            dims, system, priors, h_bar, h_rb, h_ur, *_ , y, rng = geometric_setup(
                seed=7, kappa=4.0, tau_n=tau_n)
            est = concat_lr(y, system.x, h_bar, system, priors)
            out[tau_n] = np.linalg.norm(est.h_ur - h_ur) ** 2 / np.linalg.norm(h_ur) ** 2
        ratio_db = abs(10 * np.log10(out[1e-11] / out[1e-13]))
        assert ratio_db < 3.0

    def test_tiny_instance_vs_lmmse(self):
        # gaussianized prior: stage 1 equals closed-form linear MMSE
        dims, system, priors, h_bar, h_rb, h_ur, *_ , y, rng = geometric_setup(
            seed=8, k=3, m=4, t=12, kappa=1e12)
        import dataclasses
        from riscal.channel import _rician_weight
        p1 = dataclasses.replace(priors, lambda_g=1.0, lambda_s=1.0)
        est = concat_lr(y, system.x, h_bar, system, p1,
                        GampOptions(eps=1e-11, i_max=6000))
        b1 = _rician_weight(p1.kappa) * h_bar @ system.a_r
        a = np.kron(system.x.T, b1)
        yv = y.flatten(order="F")
        gram = p1.tau_g * (a @ a.conj().T) + max(p1.tau_n, 1e-14) * np.eye(a.shape[0])
        g_lmmse = p1.tau_g * a.conj().T @ np.linalg.solve(gram, yv)
        h_ur_lmmse = system.a_r @ g_lmmse.reshape((dims.l_grid, dims.k), order="F")
        err = np.linalg.norm(est.h_ur - h_ur_lmmse) / np.linalg.norm(h_ur_lmmse)
        assert err < 1e-4


class TestOnOff:
    def test_noiseless_exact(self):
        rng = np.random.default_rng(9)
        m, l, k = 5, 4, 6
        h_rb = crandn(rng, (m, l))
        h_ur = crandn(rng, (l, k))
        est = onoff_lmmse(h_rb, h_ur, 0.0, 1.0, 1.0, np.ones(k), rng,
                          h_ur_1_ref=h_ur[:, 0])
        assert np.allclose(est.h_rb, h_rb, atol=1e-10)
        assert np.allclose(est.h_ur, h_ur, atol=1e-10)

    def test_single_element_reduces_to_mimo_estimate(self):
        rng = np.random.default_rng(10)
        m, k = 6, 5
        h_rb = crandn(rng, (m, 1))
        h_ur = crandn(rng, (1, k))
        est = onoff_lmmse(h_rb, h_ur, 0.0, 1.0, 1.0, np.ones(k), rng,
                          h_ur_1_ref=h_ur[:, 0])
        assert np.allclose(est.h_rb @ est.h_ur, h_rb @ h_ur, atol=1e-10)

    def test_shrinks_toward_zero_at_high_noise(self):
        rng = np.random.default_rng(11)
        m, l, k = 4, 3, 5
        h_rb = crandn(rng, (m, l))
        h_ur = crandn(rng, (l, k))
        est = onoff_lmmse(h_rb, h_ur, 1e6, 1.0, 1.0, np.ones(k), rng,
                          h_ur_1_ref=h_ur[:, 0])
        # cascaded products heavily shrunk relative to the truth
        num = np.linalg.norm(est.h_rb @ est.h_ur)
        den = np.linalg.norm(h_rb @ h_ur)
        assert num < 0.2 * den


class TestPairedOrdering:
    def test_oracle_beats_concat_lr_on_average(self):
        gaps = []
        for seed in range(8):
            dims, system, priors, h_bar, h_rb, h_ur, *_ , y, rng = geometric_setup(
                seed=20 + seed, kappa=4.0, tau_n=1e-9)
            o = oracle_g(y, system.x, h_rb, system, priors)
            c = concat_lr(y, system.x, h_bar, system, priors)
            n_o = np.linalg.norm(o.h_ur - h_ur) ** 2
            n_c = np.linalg.norm(c.h_ur - h_ur) ** 2
            gaps.append(n_o <= n_c)
        assert np.mean(gaps) >= 0.75
