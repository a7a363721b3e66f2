"""Generalized AMP for the linear model y = A x + n with separable priors.

Sum-product (MMSE) form with elementwise variances and fixed damping.
The sensing matrix may be given densely or as a structured operator; the
Kronecker operator covers the vectorized channel models used by the
baselines without materializing the full matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .mp import denoise_bg

_TINY = 1e-40


class GampDivergenceError(RuntimeError):
    pass


class MatrixOperator:
    """Dense sensing matrix with cached squared magnitudes."""

    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=complex)
        self.abs2 = np.abs(self.a) ** 2
        self.shape = self.a.shape

    def mv(self, x):
        return self.a @ x

    def rmv(self, y):
        return self.a.conj().T @ y

    def abs2_mv(self, x):
        return self.abs2 @ x

    def abs2_rmv(self, y):
        return self.abs2.T @ y


class KronOperator:
    """Operator for (B^T kron C) acting on vec(V), i.e. vec(C V B).

    Shapes: C is p x q, B is r x s; the operator maps vec(V) with V q x r
    (column-major) to vec(C V B) of length p*s.
    """

    def __init__(self, b: np.ndarray, c: np.ndarray):
        self.b = np.asarray(b, dtype=complex)
        self.c = np.asarray(c, dtype=complex)
        self.b2 = np.abs(self.b) ** 2
        self.c2 = np.abs(self.c) ** 2
        p, q = self.c.shape
        r, s = self.b.shape
        self._vshape = (q, r)
        self._oshape = (p, s)
        self.shape = (p * s, q * r)

    def _mat(self, x, shape):
        return np.asarray(x).reshape(shape, order="F")

    def mv(self, x):
        return (self.c @ self._mat(x, self._vshape) @ self.b).flatten(order="F")

    def rmv(self, y):
        return (self.c.conj().T @ self._mat(y, self._oshape) @ self.b.conj().T).flatten(order="F")

    def abs2_mv(self, x):
        return (self.c2 @ self._mat(np.real(x), self._vshape) @ self.b2).flatten(order="F")

    def abs2_rmv(self, y):
        return (self.c2.T @ self._mat(np.real(y), self._oshape) @ self.b2.T).flatten(order="F")


Operator = Union[MatrixOperator, KronOperator]


@dataclass
class GaussianPrior:
    tau: float

    def denoise(self, r, v):
        gain = self.tau / (self.tau + v)
        return gain * r, self.tau * v / (self.tau + v)

    @property
    def second_moment(self):
        return self.tau


@dataclass
class BernoulliGaussianPrior:
    lam: float
    tau: float

    def denoise(self, r, v):
        return denoise_bg(r, v, self.lam, self.tau)

    @property
    def second_moment(self):
        return self.lam * self.tau


@dataclass
class LinearProblem:
    """y = A x + n with iid prior per coordinate and AWGN of variance tau_n."""

    a: Union[np.ndarray, Operator]
    y: np.ndarray
    tau_n: float
    prior: Union[GaussianPrior, BernoulliGaussianPrior]

    def operator(self) -> Operator:
        if isinstance(self.a, np.ndarray):
            return MatrixOperator(self.a)
        return self.a


@dataclass
class GampOptions:
    i_max: int = 2000
    eps: float = 1e-4
    damping: float = 0.7
    adaptive_damping: bool = True    # back the factor off when the residual grows
    damp_min: float = 0.05
    variance_floor: float = 1e-12
    tau_n_floor: float = 1e-14
    rel_noise_floor: float = 1e-10   # effective noise >= this fraction of mean |y|^2


@dataclass
class GampResult:
    x_hat: np.ndarray
    v_x: np.ndarray
    iterations: int
    converged: bool
    r_hat: np.ndarray       # final input pseudo-observations
    v_r: np.ndarray


def gamp_solve(problem: LinearProblem, opts: Optional[GampOptions] = None) -> GampResult:
    """Sum-product GAMP recursion until the estimate stabilizes."""
    opts = opts or GampOptions()
    op = problem.operator()
    y = np.asarray(problem.y, dtype=complex).ravel(order="F")
    m, n = op.shape
    if y.shape[0] != m:
        raise ValueError(f"observation length {y.shape[0]} does not match operator rows {m}")
    tau_n = max(problem.tau_n, opts.tau_n_floor,
                opts.rel_noise_floor * float(np.mean(np.abs(y) ** 2)))
    theta = opts.damping
    floor = opts.variance_floor

    x_hat = np.zeros(n, dtype=complex)
    v_x = np.full(n, max(problem.prior.second_moment, floor))
    s_res = np.zeros(m, dtype=complex)
    r_hat = x_hat
    v_r = v_x
    best = (np.inf, x_hat, v_x, r_hat, v_r)
    runaway = 4.0 * float(np.sum(np.abs(y) ** 2)) + 1e-300
    converged = False
    it = 0
    for it in range(1, opts.i_max + 1):
        v_p = np.maximum(op.abs2_mv(v_x), floor)
        p_hat = op.mv(x_hat) - v_p * s_res
        s_res = theta * (y - p_hat) / (v_p + tau_n) + (1.0 - theta) * s_res
        v_s = 1.0 / (v_p + tau_n)
        v_r = 1.0 / np.maximum(op.abs2_rmv(v_s), _TINY)
        r_hat = x_hat + v_r * op.rmv(s_res)
        x_new, v_new = problem.prior.denoise(r_hat, v_r)
        dx = np.linalg.norm(x_new - x_hat) / max(np.linalg.norm(x_hat), 1e-300)
        x_hat = theta * x_new + (1.0 - theta) * x_hat
        v_x = np.maximum(theta * v_new + (1.0 - theta) * v_x, floor)
        finite = np.all(np.isfinite(x_hat)) and np.all(np.isfinite(v_x))
        cost = (float(np.sum(np.abs(y - op.mv(x_hat)) ** 2)) if finite else np.inf)
        if cost <= best[0]:
            best = (cost, x_hat.copy(), v_x.copy(), r_hat.copy(), v_r.copy())
        if not finite or cost > runaway:
            # the fit is worse than predicting zero: restart smaller from the
            # best iterate (the residual path legitimately fluctuates below
            # this level, so milder growth is left alone)
            if not opts.adaptive_damping or (theta <= opts.damp_min and not finite):
                raise GampDivergenceError(f"estimate diverged at iteration {it}")
            theta = max(opts.damp_min, 0.5 * theta)
            _, x_hat, v_x, r_hat, v_r = best
            x_hat, v_x = x_hat.copy(), v_x.copy()
            s_res = np.zeros(m, dtype=complex)
            continue
        if dx < opts.eps:
            converged = True
            break
    if not converged:
        # fall back to the best-fitting iterate seen
        _, x_hat, v_x, r_hat, v_r = best
    return GampResult(x_hat=x_hat, v_x=v_x, iterations=it, converged=converged,
                      r_hat=r_hat, v_r=v_r)
