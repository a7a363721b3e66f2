"""Asymptotic MSE bound via the scalar state-evolution fixed point.

Reduces the matrix-calibration estimation problem to coupled scalar AWGN
channels whose overlap parameters satisfy a closed fixed-point system; the
solved overlaps give the asymptotic per-entry MSEs of the two sparse factors.
The reduction assumes critical (DFT) RIS sampling grids; over-complete grids
are accepted but flagged, since the bound may then be loose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.laguerre import laggauss

from .channel import PriorParams, SystemDims

_MT_CAP = 1e30          # cap on the dual (precision-like) parameters
_DEN_TINY = 1e-300

_GL_NODES, _GL_WEIGHTS = laggauss(64)


@dataclass
class ReplicaState:
    m_z: float
    m_w: float
    m_g: float
    m_s: float
    mt_z: float = 0.0
    mt_w: float = 0.0
    mt_g: float = 0.0
    mt_s: float = 0.0
    mse_s: float = 0.0
    mse_g: float = 0.0
    q_s: float = 0.0
    q_g: float = 0.0
    q_w: float = 0.0
    q_z: float = 0.0
    tau_h0: float = 0.0


@dataclass(frozen=True)
class ReplicaResult:
    mse_s: float
    mse_g: float
    converged: bool
    sweeps: int
    branch: str
    bound_may_be_loose: bool
    state: ReplicaState

    @property
    def mse_s_db(self) -> float:
        return 10.0 * np.log10(max(self.mse_s, 1e-300))

    @property
    def mse_g_db(self) -> float:
        return 10.0 * np.log10(max(self.mse_g, 1e-300))


def moments(priors: PriorParams, dims: SystemDims) -> Tuple[float, float, float, float]:
    """Second moments (q_s, q_g, q_w, q_z) of the factor entries."""
    q_s = priors.lambda_s * priors.tau_s
    q_g = priors.lambda_g * priors.tau_g
    q_w = (dims.m_grid / dims.m) * q_s + priors.tau_h0
    q_z = dims.l_grid * q_w * q_g
    return q_s, q_g, q_w, q_z


def scalar_overlap_bg(mt: float, lam: float, tau: float) -> float:
    """Overlap E|f(Y/sqrt(mt), 1/mt)|^2 of the scalar spike-and-slab channel.

    Y = sqrt(mt)*X + N with X Bernoulli(lam)-Gaussian(tau) and f the posterior
    mean; evaluated by radial Gauss-Laguerre quadrature over |N|^2, using the
    circular symmetry of the denoiser. Returns 0 for mt <= 0 (prior-only).
    """
    if mt <= 0.0:
        return 0.0
    if lam == 0.0 or tau == 0.0:
        return 0.0
    v = 1.0 / mt
    gain = tau / (tau + v)

    def mean_sq(absx2: np.ndarray) -> np.ndarray:
        if lam == 1.0:
            return gain ** 2 * absx2
        expo = np.exp(-np.minimum((absx2 / v) * gain, 700.0))
        pi = lam / (lam + (1.0 - lam) * (1.0 + tau / v) * expo)
        return (pi * gain) ** 2 * absx2

    u = _GL_NODES
    zero_branch = float(_GL_WEIGHTS @ mean_sq(u * v))
    spike_branch = float(_GL_WEIGHTS @ mean_sq(u * (tau + v)))
    m = (1.0 - lam) * zero_branch + lam * spike_branch
    return float(np.clip(m, 0.0, lam * tau))


def init_replica_state(dims: SystemDims, priors: PriorParams, mode: str) -> ReplicaState:
    q_s, q_g, q_w, q_z = moments(priors, dims)
    if mode == "informative":
        f = 1.0 - 1e-6
        m_s, m_g = f * q_s, f * q_g
        m_w = priors.tau_h0 + (dims.m_grid / dims.m) * m_s
        m_z = dims.l_grid * m_w * m_g
    elif mode == "uninformative":
        m_s = m_g = m_z = 0.0
        m_w = priors.tau_h0
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return ReplicaState(m_z=m_z, m_w=m_w, m_g=m_g, m_s=m_s,
                        mse_s=q_s - m_s, mse_g=q_g - m_g,
                        q_s=q_s, q_g=q_g, q_w=q_w, q_z=q_z, tau_h0=priors.tau_h0)


def se_step(state: ReplicaState, dims: SystemDims, priors: PriorParams) -> ReplicaState:
    """One sweep of the fixed-point system (duals first, then overlaps)."""
    s = state
    gap_z = max(s.q_z - dims.l_grid * s.m_w * s.m_g, 0.0)
    gap_w = max(s.q_w - s.tau_h0 - (dims.m_grid / dims.m) * s.m_s, 0.0)

    mt_z = dims.t * priors.tau_x / max(
        priors.tau_n + dims.k * priors.tau_x * max(s.q_z - s.m_z, 0.0), _DEN_TINY)
    mt_z = min(mt_z, _MT_CAP)
    den_zw = 1.0 / max(mt_z, 1.0 / _MT_CAP) + gap_z
    mt_w = min(dims.k * s.m_g / max(den_zw, _DEN_TINY), _MT_CAP)
    mt_g = min(dims.m * s.m_w / max(den_zw, _DEN_TINY), _MT_CAP)
    mt_s = min(1.0 / max(1.0 / max(mt_w, 1.0 / _MT_CAP) + gap_w, _DEN_TINY), _MT_CAP)

    m_z = s.q_z - gap_z / (1.0 + mt_z * gap_z)
    m_w = s.q_w - gap_w / (1.0 + mt_w * gap_w)
    m_g = scalar_overlap_bg(mt_g, priors.lambda_g, priors.tau_g)
    m_s = scalar_overlap_bg(mt_s, priors.lambda_s, priors.tau_s)

    return ReplicaState(m_z=m_z, m_w=m_w, m_g=m_g, m_s=m_s,
                        mt_z=mt_z, mt_w=mt_w, mt_g=mt_g, mt_s=mt_s,
                        mse_s=max(s.q_s - m_s, 0.0), mse_g=max(s.q_g - m_g, 0.0),
                        q_s=s.q_s, q_g=s.q_g, q_w=s.q_w, q_z=s.q_z, tau_h0=s.tau_h0)


def solve_fixed_point(dims: SystemDims, priors: PriorParams, init: str = "informative",
                      tol: float = 1e-13, max_sweeps: int = 20000) -> ReplicaResult:
    """Iterate se_step from the chosen initialization until the overlaps settle."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    state = init_replica_state(dims, priors, init)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        new = se_step(state, dims, priors)
        delta = max(abs(new.m_z - state.m_z), abs(new.m_w - state.m_w),
                    abs(new.m_g - state.m_g), abs(new.m_s - state.m_s),
                    abs(new.mse_s - state.mse_s), abs(new.mse_g - state.mse_g))
        state = new
        if delta < tol:
            converged = True
            break
    loose = dims.l1_grid > dims.l1 or dims.l2_grid > dims.l2
    return ReplicaResult(mse_s=state.mse_s, mse_g=state.mse_g, converged=converged,
                         sweeps=sweeps, branch=init, bound_may_be_loose=loose, state=state)


def solve_both_branches(dims: SystemDims, priors: PriorParams,
                        tol: float = 1e-13) -> Tuple[ReplicaResult, ReplicaResult, bool]:
    """Solve from both initializations; the flag marks coexisting fixed points."""
    info = solve_fixed_point(dims, priors, "informative", tol)
    unin = solve_fixed_point(dims, priors, "uninformative", tol)
    split = (abs(info.mse_s - unin.mse_s) > 1e-6 * max(info.state.q_s, 1e-300)
             or abs(info.mse_g - unin.mse_g) > 1e-6 * max(info.state.q_g, 1e-300))
    return info, unin, split


def _passes(res: ReplicaResult, threshold_db: float) -> bool:
    return res.mse_s_db < threshold_db and res.mse_g_db < threshold_db


def min_training_length(dims: SystemDims, priors: PriorParams,
                        threshold_db: float = -50.0, t_max: Optional[int] = None,
                        branch: str = "uninformative") -> int:
    """Smallest integer training length whose fixed point beats the threshold.

    Defaults to the uninformative (state-evolution) branch, which is the
    bound actually tracked by message-passing dynamics; the informative
    branch is available via `branch`. Binary search over t; success must be
    monotone along the probed points (asserted).
    """
    if threshold_db >= 0.0:
        raise ValueError("threshold must be below 0 dB")
    t_max = t_max or 4 * dims.k + 64
    evals = {}

    def success(t: int) -> bool:
        if t not in evals:
            d = SystemDims(m=dims.m, m_grid=dims.m_grid, k=dims.k, l1=dims.l1,
                           l2=dims.l2, l1_grid=dims.l1_grid, l2_grid=dims.l2_grid, t=t)
            evals[t] = _passes(solve_fixed_point(d, priors, init=branch), threshold_db)
        return evals[t]

    lo, hi = 1, 1
    if not success(t_max):
        raise RuntimeError(f"no training length up to {t_max} reaches {threshold_db} dB")
    while not success(hi):
        lo, hi = hi, min(2 * hi, t_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if success(mid):
            hi = mid
        else:
            lo = mid
    result = hi if not success(lo) else lo
    ts = sorted(evals)
    flags = [evals[t] for t in ts]
    if any(a and not b for a, b in zip(flags, flags[1:])):
        raise AssertionError(f"success not monotone in t over probes {dict(zip(ts, flags))}")
    return result
