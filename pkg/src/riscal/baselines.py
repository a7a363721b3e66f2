"""Comparison methods: two-stage linear regression, the genie-aided bound,
the per-element on/off protocol, and closed-form training-length requirements.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .channel import PriorParams, SystemMatrices, _crandn, _rician_weight
from .gamp import (
    BernoulliGaussianPrior,
    GampOptions,
    KronOperator,
    LinearProblem,
    gamp_solve,
)


@dataclass
class BaselineEstimate:
    h_rb: np.ndarray        # M x L
    h_ur: np.ndarray        # L x K
    method: str
    converged: bool = True
    iterations: int = 0


def training_length_wang(k: int, l: int, m: int) -> int:
    """Noiseless training length of the sequential user-correlation method."""
    if min(k, l, m) < 1:
        raise ValueError("dimensions must be positive")
    return l + max(k - 1, -(-(k - 1) * l // m))


def training_length_onoff(k: int, l: int) -> int:
    """Slots consumed by the one-element-at-a-time protocol."""
    return l * k


def concat_lr(y: np.ndarray, x: np.ndarray, h_bar_rb: np.ndarray,
              system: SystemMatrices, priors: PriorParams,
              opts: Optional[GampOptions] = None) -> BaselineEstimate:
    """Two-stage linear regression with the slow-varying part as the dictionary.

    Stage 1 fixes the RIS-to-BS channel at its known slow component and
    solves the induced linear model for the user coefficients; stage 2 fixes
    those and solves for the fast-varying angular perturbation. The stage-1
    model mismatch is deliberately treated as white noise, which produces the
    method's characteristic error floor at low noise power.
    """
    opts = opts or GampOptions()
    k = x.shape[0]
    l_grid = system.r.shape[0]
    h_rb0 = _rician_weight(priors.kappa) * h_bar_rb
    b1 = h_rb0 @ system.a_r
    res1 = gamp_solve(
        LinearProblem(KronOperator(x, b1), y.flatten(order="F"), priors.tau_n,
                      BernoulliGaussianPrior(priors.lambda_g, priors.tau_g)),
        opts)
    g_hat = res1.x_hat.reshape((l_grid, k), order="F")

    # stage 2: vec(Y - B1 G X) = ((R G X)^T kron A_B) vec(S) + noise
    y2 = y - b1 @ g_hat @ x
    c2 = system.r @ g_hat @ x
    res2 = gamp_solve(
        LinearProblem(KronOperator(c2, system.a_b), y2.flatten(order="F"),
                      priors.tau_n,
                      BernoulliGaussianPrior(priors.lambda_s, priors.tau_s)),
        opts)
    s_hat = res2.x_hat.reshape((system.a_b.shape[1], l_grid), order="F")

    h_rb = h_rb0 + system.a_b @ s_hat @ system.a_r.conj().T
    h_ur = system.a_r @ g_hat
    return BaselineEstimate(h_rb=h_rb, h_ur=h_ur, method="concat-lr",
                            converged=res1.converged and res2.converged,
                            iterations=res1.iterations + res2.iterations)


def oracle_g(y: np.ndarray, x: np.ndarray, h_rb_true: np.ndarray,
             system: SystemMatrices, priors: PriorParams,
             opts: Optional[GampOptions] = None) -> BaselineEstimate:
    """Genie-aided lower bound: the RIS-to-BS channel is known exactly."""
    opts = opts or GampOptions()
    k = x.shape[0]
    l_grid = system.r.shape[0]
    b = h_rb_true @ system.a_r
    res = gamp_solve(
        LinearProblem(KronOperator(x, b), y.flatten(order="F"), priors.tau_n,
                      BernoulliGaussianPrior(priors.lambda_g, priors.tau_g)),
        opts)
    g_hat = res.x_hat.reshape((l_grid, k), order="F")
    return BaselineEstimate(h_rb=h_rb_true.copy(), h_ur=system.a_r @ g_hat,
                            method="oracle", converged=res.converged,
                            iterations=res.iterations)


def onoff_lmmse(h_rb_true: np.ndarray, h_ur_true: np.ndarray, tau_n: float,
                tau_x: float, beta0: float, betas: np.ndarray,
                rng: np.random.Generator,
                h_ur_1_ref: Optional[np.ndarray] = None) -> BaselineEstimate:
    """Sequential per-element estimation with one RIS element active at a time.

    Element l is observed during its own block of K slots with orthogonal user
    pilots (scaled DFT); per-entry linear-MMSE shrinkage uses the large-scale
    gains as priors on the cascaded coefficients. Consumes L*K slots total.
    The factors are split using the reference channel of the first user
    (scaling-ambiguity removal).
    """
    m, l = h_rb_true.shape
    k = h_ur_true.shape[1]
    if h_ur_1_ref is None:
        h_ur_1_ref = h_ur_true[:, 0]
    # unitary-scaled DFT pilot block, |x_kt|^2 = tau_x
    grid = np.arange(k)
    pilots = np.sqrt(tau_x) * np.exp(-2j * np.pi * np.outer(grid, grid) / k)

    h_rb = np.zeros_like(h_rb_true)
    h_ur = np.zeros((l, k), dtype=complex)
    for el in range(l):
        cascade = np.outer(h_rb_true[:, el], h_ur_true[el, :])     # M x K
        y_block = cascade @ pilots
        if tau_n > 0:
            y_block = y_block + np.sqrt(tau_n) * _crandn(rng, y_block.shape)
        corr = y_block @ pilots.conj().T / (k * tau_x)
        noise_var = tau_n / (k * tau_x)
        prior_var = beta0 * betas[None, :]
        c_hat = corr * (prior_var / (prior_var + noise_var))
        ref = h_ur_1_ref[el]
        if ref == 0:
            warnings.warn("reference channel has a zero entry; element skipped")
            continue
        col = c_hat[:, 0] / ref
        h_rb[:, el] = col
        norm2 = np.vdot(col, col).real
        if norm2 > 0:
            h_ur[el, :] = (col.conj() @ c_hat) / norm2
    return BaselineEstimate(h_rb=h_rb, h_ur=h_ur, method="onoff-lmmse")


def remove_ambiguity(estimate: BaselineEstimate,
                     h_ur_1_true: np.ndarray) -> BaselineEstimate:
    """Rescale the factor pair so the first user's channel matches the reference.

    The per-element complex scaling leaves every cascaded product
    H_RB diag(h_UR,k) unchanged.
    """
    est_first = estimate.h_ur[:, 0]
    scale = np.ones_like(est_first)
    ok = est_first != 0
    if not np.all(ok):
        warnings.warn("estimated reference channel has zero entries; "
                      "those elements are left unscaled")
    scale[ok] = h_ur_1_true[ok] / est_first[ok]
    h_ur = estimate.h_ur * scale[:, None]
    h_rb = estimate.h_rb / scale[None, :]
    return BaselineEstimate(h_rb=h_rb, h_ur=h_ur, method=estimate.method,
                            converged=estimate.converged,
                            iterations=estimate.iterations)
