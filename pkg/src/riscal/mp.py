"""Message-passing estimator for the calibration-based matrix factorization.

Recovers the sparse angular coefficient matrices (S, G) from
Y = (H0 + A_B S R) G X + N by sweeping four moment updates: the bilinear
product layer (z), the user coefficients (g), the composite dictionary (w),
and the calibration coefficients (s). Scalar posteriors use the
Bernoulli-Gaussian denoiser.

Convergence control, which the underlying recursion leaves open, combines
three measures (see MpOptions): damping of the denoiser outputs, a noise
continuation schedule for (near-)noiseless problems, and best-state tracking
under the model-fit cost. The training layer additionally supports an exact
per-antenna Gaussian update in the SVD basis of X ("exact" z stage): for
T < K the scalarized message construction provably picks up positive
feedback through null(X^T) and diverges regardless of damping, while the
exact stage stays stable and tracks the asymptotic bound.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .channel import PriorParams, SystemMatrices, _crandn

# Reciprocals of (near-)zero pseudo-variances are capped at 1/_TINY so that
# uninformative branches stay finite instead of producing inf*0.
_TINY = 1e-40


class MpDivergenceError(RuntimeError):
    """Raised when the message state becomes non-finite and cannot recover."""

    def __init__(self, iteration: int):
        super().__init__(f"message state diverged (non-finite) at iteration {iteration}")
        self.iteration = iteration


@dataclass
class MpOptions:
    i_max: int = 2000
    eps: float = 1e-4
    damping: float = 0.5            # blend factor for the denoiser outputs, in (0, 1]
    adaptive_damping: bool = True   # halve the factor when the fit cost degrades
    variance_floor: float = 1e-12
    tau_n_floor: float = 1e-14      # effective noise floor so tau_n = 0 stays finite
    z_stage: str = "auto"           # "amp" | "exact" | "auto" (exact when t < k)
    s_stage: str = "amp"            # "amp" | "vamp" (vector stage, R = identity only)
    homotopy: str = "auto"          # "on" | "off" | "auto" (on for ~noiseless problems)
    homotopy_start: float = 0.1     # initial effective noise, fraction of mean |y|^2
    homotopy_shrink: float = 10.0   # noise reduction per continuation stage
    damp_min: float = 1.0 / 64.0
    damp_grow: float = 1.1
    damp_shrink: float = 0.5
    damp_retries: int = 5

    def __post_init__(self):
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.z_stage not in ("amp", "exact", "auto"):
            raise ValueError("z_stage must be 'amp', 'exact', or 'auto'")
        if self.s_stage not in ("amp", "vamp"):
            raise ValueError("s_stage must be 'amp' or 'vamp'")
        if isinstance(self.homotopy, bool):
            self.homotopy = "on" if self.homotopy else "off"
        if self.homotopy not in ("on", "off", "auto"):
            raise ValueError("homotopy must be 'on', 'off', or 'auto'")


@dataclass
class MessageState:
    """Means/variances of all tracked messages plus sweep auxiliaries."""

    z_hat: np.ndarray       # M x K
    v_z: np.ndarray
    g_hat: np.ndarray       # L' x K
    v_g: np.ndarray
    w_hat: np.ndarray       # M x L'
    v_w: np.ndarray
    s_hat: np.ndarray       # M' x L'
    v_s: np.ndarray
    gamma_hat: np.ndarray   # M x T   scaled residual of the training layer
    xi_hat: np.ndarray      # M x K   scaled residual of the bilinear layer
    alpha_hat: np.ndarray   # M x L'  scaled residual of the dictionary layer
    p_hat: np.ndarray       # M x K   plug-in bilinear mean
    v_p: np.ndarray
    iteration: int = 0
    # per-sweep scratch consumed by the following step
    v_delta: Optional[np.ndarray] = None
    prev_g_hat: Optional[np.ndarray] = None
    prev_v_g: Optional[np.ndarray] = None
    c_hat: Optional[np.ndarray] = None
    v_c: Optional[np.ndarray] = None
    mu_hat: Optional[np.ndarray] = None
    v_mu: Optional[np.ndarray] = None
    e_hat: Optional[np.ndarray] = None
    v_e: Optional[np.ndarray] = None

    def copy(self) -> "MessageState":
        out = dataclasses.replace(self)
        for f in dataclasses.fields(self):
            v = getattr(out, f.name)
            if isinstance(v, np.ndarray):
                setattr(out, f.name, v.copy())
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in
                   (self.z_hat, self.v_z, self.g_hat, self.v_g, self.w_hat,
                    self.v_w, self.s_hat, self.v_s, self.p_hat, self.v_p))


@dataclass
class EstimateResult:
    s_hat: np.ndarray
    g_hat: np.ndarray
    iterations: int
    converged: bool
    trace: List[Tuple[float, float]]    # per-iteration relative change of (s, g)


def denoise_bg(d, v, lam: float, tau: float):
    """Posterior mean/variance for a spike-and-slab scalar under Gaussian noise.

    Prior (1-lam)*delta_0 + lam*CN(0, tau); pseudo-observation d with noise
    variance v. Vectorizes over arrays of d and v.
    """
    d = np.asarray(d, dtype=complex)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("pseudo-noise variance must be positive")
    if lam == 0.0 or tau == 0.0:
        zero = np.zeros_like(d)
        return zero, np.zeros_like(v)
    gain = tau / (tau + v)                       # Wiener gain, 0 when v = inf
    gv = tau / (tau / v + 1.0)                   # tau*v/(tau+v), tau when v = inf
    absd2 = np.abs(d) ** 2
    if lam == 1.0:
        mean = gain * d
        return mean, gv * np.ones_like(d, dtype=float)
    # support posterior via the density ratio of the two mixture components
    expo = np.exp(-(absd2 / v) * gain)
    pi = lam / (lam + (1.0 - lam) * (1.0 + tau / v) * expo)
    mean = pi * gain * d
    second = pi * (gv + gain ** 2 * absd2)
    var = np.maximum(second - np.abs(mean) ** 2, 0.0)
    return mean, var


def _recip(x: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(x, _TINY)


def init_state(system: SystemMatrices, priors: PriorParams,
               rng: np.random.Generator) -> MessageState:
    """Initial state: s drawn from its prior, w set consistently, rest zeroed."""
    m, m_grid = system.a_b.shape
    l_grid = system.r.shape[0]
    k, t = system.x.shape
    mask = rng.random((m_grid, l_grid)) < priors.lambda_s
    s_hat = mask * _crandn(rng, (m_grid, l_grid)) * np.sqrt(priors.tau_s)
    if system.r_is_identity:
        w_hat = system.h0 + system.a_b @ s_hat
    else:
        w_hat = system.h0 + system.a_b @ s_hat @ system.r
    ones = np.ones
    return MessageState(
        z_hat=np.zeros((m, k), dtype=complex), v_z=ones((m, k)),
        g_hat=np.zeros((l_grid, k), dtype=complex), v_g=ones((l_grid, k)),
        w_hat=w_hat, v_w=ones((m, l_grid)),
        s_hat=s_hat, v_s=ones((m_grid, l_grid)),
        gamma_hat=np.zeros((m, t), dtype=complex),
        xi_hat=np.zeros((m, k), dtype=complex),
        alpha_hat=np.zeros((m, l_grid), dtype=complex),
        p_hat=np.zeros((m, k), dtype=complex), v_p=ones((m, k)),
    )


def _plugin_z(state: MessageState):
    """Onsager-corrected plug-in mean/variance for the bilinear product."""
    absw2 = np.abs(state.w_hat) ** 2
    absg2 = np.abs(state.g_hat) ** 2
    v_p_bar = absw2 @ state.v_g + state.v_w @ absg2
    v_p = v_p_bar + state.v_w @ state.v_g
    p_hat = state.w_hat @ state.g_hat - state.xi_hat * v_p_bar
    return p_hat, v_p


def update_z(state: MessageState, system: SystemMatrices, tau_n: float,
             y: np.ndarray, floor: float = 1e-12) -> MessageState:
    """Training-layer correction of the bilinear plug-in estimate of z."""
    x = system.x
    absx2 = np.abs(x) ** 2
    p_hat, v_p = _plugin_z(state)

    v_beta = state.v_z @ absx2
    beta_hat = state.z_hat @ x - v_beta * state.gamma_hat
    v_gamma = 1.0 / (v_beta + tau_n) if tau_n > 0 else _recip(v_beta)
    gamma_hat = v_gamma * (y - beta_hat)
    v_e = _recip(v_gamma @ absx2.T)
    e_hat = state.z_hat + v_e * (gamma_hat @ x.conj().T)

    den = v_p + v_e
    v_z = np.maximum(v_p * v_e / den, floor)
    z_hat = (v_p * e_hat + p_hat * v_e) / den

    out = dataclasses.replace(state)
    out.v_p, out.p_hat = np.maximum(v_p, floor), p_hat
    out.gamma_hat = gamma_hat
    out.v_e, out.e_hat = v_e, e_hat
    out.v_z, out.z_hat = v_z, z_hat
    out.v_delta = None      # recomputed by update_g on this path
    return out


def _exact_z(state: MessageState, system: SystemMatrices, tau_n: float,
             y: np.ndarray, floor: float, v_right: np.ndarray,
             sig2: np.ndarray, absv2: np.ndarray) -> MessageState:
    """Per-antenna Gaussian z-posterior in the SVD basis of the training matrix.

    Uses a row-uniform prior variance so the K x K combine reduces to scalar
    gains per singular direction; directions outside the row space of X keep
    the prior exactly, which removes the null-space feedback of the scalar
    message construction.
    """
    x = system.x
    p_hat, v_p = _plugin_z(state)
    v_bar = v_p.mean(axis=1, keepdims=True)
    gain = 1.0 / (tau_n / v_bar + sig2[None, :])
    resid = (y - p_hat @ x) @ x.conj().T
    z_hat = p_hat + ((resid @ v_right.conj()) * gain) @ v_right.T
    shrink = v_bar * (sig2[None, :] / (tau_n / v_bar + sig2[None, :]))
    v_z = np.maximum(v_bar - shrink @ absv2.T, floor)

    out = dataclasses.replace(state)
    out.v_p, out.p_hat = np.maximum(v_p, floor), p_hat
    out.v_z, out.z_hat = v_z, z_hat
    out.xi_hat = (z_hat - p_hat) / v_bar
    out.v_delta = np.maximum(v_bar - v_z, 0.0) / v_bar ** 2
    out.e_hat, out.v_e = None, None
    return out


def update_g(state: MessageState, system: SystemMatrices, priors: PriorParams,
             floor: float = 1e-12, damping: float = 1.0) -> MessageState:
    """Scaled residual of the bilinear layer, then the g denoiser."""
    out = dataclasses.replace(state)
    if state.v_delta is None:
        # z came from update_z: use the combination identities, which never
        # degenerate when the stored variances hit the floor
        den = state.v_p + state.v_e
        out.v_delta = 1.0 / den
        out.xi_hat = (state.e_hat - state.p_hat) / den

    absw2 = np.abs(state.w_hat) ** 2
    v_b = _recip(absw2.T @ out.v_delta)
    corr = np.clip(1.0 - v_b * (state.v_w.T @ out.v_delta), 0.0, 1.0)
    b_hat = state.g_hat * corr + v_b * (state.w_hat.conj().T @ out.xi_hat)
    g_hat, v_g = denoise_bg(b_hat, v_b, priors.lambda_g, priors.tau_g)

    out.prev_g_hat, out.prev_v_g = state.g_hat, state.v_g
    out.g_hat = damping * g_hat + (1.0 - damping) * state.g_hat
    out.v_g = np.maximum(damping * v_g + (1.0 - damping) * state.v_g, floor)
    return out


def update_w(state: MessageState, system: SystemMatrices,
             floor: float = 1e-12) -> MessageState:
    """Combine the bilinear pseudo-observation of w with its dictionary-side prior."""
    g_old = state.prev_g_hat if state.prev_g_hat is not None else state.g_hat
    v_g_old = state.prev_v_g if state.prev_v_g is not None else state.v_g
    absg2 = np.abs(g_old) ** 2

    v_c = _recip(state.v_delta @ absg2.T)
    corr = np.clip(1.0 - v_c * (state.v_delta @ v_g_old.T), 0.0, 1.0)
    c_hat = state.w_hat * corr + v_c * (state.xi_hat @ g_old.conj().T)

    absa2 = np.abs(system.a_b) ** 2
    if system.r_is_identity:
        v_mu = absa2 @ state.v_s
        mu_hat = system.a_b @ state.s_hat - v_mu * state.alpha_hat
    else:
        absr2 = np.abs(system.r) ** 2
        v_mu = absa2 @ state.v_s @ absr2
        mu_hat = system.a_b @ state.s_hat @ system.r - v_mu * state.alpha_hat

    den = v_mu + v_c
    v_w = np.maximum(v_mu * v_c / den, floor)
    w_hat = (v_mu * c_hat + v_c * mu_hat + v_c * system.h0) / den

    out = dataclasses.replace(state)
    out.v_c, out.c_hat = v_c, c_hat
    out.v_mu, out.mu_hat = v_mu, mu_hat
    out.v_w, out.w_hat = v_w, w_hat
    return out


def update_s(state: MessageState, system: SystemMatrices, priors: PriorParams,
             floor: float = 1e-12, damping: float = 1.0) -> MessageState:
    """Back-project the dictionary-layer residual and denoise s."""
    den = state.v_mu + state.v_c
    v_alpha = 1.0 / den
    alpha_hat = (state.c_hat - system.h0 - state.mu_hat) / den

    absa2 = np.abs(system.a_b) ** 2
    if system.r_is_identity:
        v_d = _recip(absa2.T @ v_alpha)
        d_hat = state.s_hat + v_d * (system.a_b.conj().T @ alpha_hat)
    else:
        absr2 = np.abs(system.r) ** 2
        v_d = _recip(absa2.T @ v_alpha @ absr2.T)
        d_hat = state.s_hat + v_d * (system.a_b.conj().T @ alpha_hat @ system.r.conj().T)
    s_hat, v_s = denoise_bg(d_hat, v_d, priors.lambda_s, priors.tau_s)

    out = dataclasses.replace(state)
    out.alpha_hat = alpha_hat
    out.s_hat = damping * s_hat + (1.0 - damping) * state.s_hat
    out.v_s = np.maximum(damping * v_s + (1.0 - damping) * state.v_s, floor)
    return out


@dataclass
class AdaptiveDamper:
    """Step-size controller driven by a lower-is-better surrogate cost.

    A step is accepted when its cost does not exceed the last accepted cost;
    acceptance grows the blend factor, rejection halves it and asks the
    caller to re-blend (bounded retries per iteration).
    """

    factor: float
    grow: float = 1.1
    shrink: float = 0.5
    floor: float = 1.0 / 64.0
    max_retries: int = 5
    prev_cost: float = np.inf
    _retries: int = 0

    def start_iteration(self) -> None:
        self._retries = 0

    def feedback(self, cost: float) -> bool:
        """Report the candidate cost; True means accept at the current factor."""
        ok = np.isfinite(cost) and cost <= self.prev_cost * (1.0 + 1e-9)
        if ok or self._retries >= self.max_retries:
            if ok:
                self.factor = min(1.0, self.factor * self.grow)
            if np.isfinite(cost):
                self.prev_cost = cost
            return True
        self.factor = max(self.floor, self.factor * self.shrink)
        self._retries += 1
        return False


_DAMPED_FIELDS = ("s_hat", "v_s", "g_hat", "v_g", "w_hat", "v_w",
                  "z_hat", "v_z", "p_hat", "v_p")


def damp(state: MessageState, prev: MessageState, factor: float) -> MessageState:
    """Convex blend new = factor*new + (1-factor)*old of the estimate groups."""
    if not 0.0 < factor <= 1.0:
        raise ValueError("damping factor must lie in (0, 1]")
    if factor == 1.0:
        return state
    out = dataclasses.replace(state)
    for name in _DAMPED_FIELDS:
        setattr(out, name, factor * getattr(state, name) + (1.0 - factor) * getattr(prev, name))
    return out


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = np.linalg.norm(old)
    num = np.linalg.norm(new - old)
    if denom < 1e-30:
        return 0.0 if num < 1e-30 else np.inf
    return float(num / denom)


def _model_cost(state: MessageState, system: SystemMatrices, y: np.ndarray) -> float:
    """Squared fit residual of the factor means through the full model."""
    if system.r_is_identity:
        w = system.h0 + system.a_b @ state.s_hat
    else:
        w = system.h0 + system.a_b @ state.s_hat @ system.r
    return float(np.sum(np.abs(y - (w @ state.g_hat) @ system.x) ** 2))


class _ZStageSvd:
    """Cached rank-restricted SVD factors of the training matrix."""

    def __init__(self, x: np.ndarray):
        _, sig, vh = np.linalg.svd(x.T, full_matrices=False)
        smax = sig.max() if sig.size else 0.0
        r = int(np.sum(sig > 1e-12 * smax)) if smax > 0 else 0
        self.v_right = vh.conj().T[:, :r]
        self.sig2 = sig[:r] ** 2
        self.absv2 = np.abs(self.v_right) ** 2


class _VampS:
    """Per-column vector-valued s-stage (valid for R = identity).

    Alternates an exact per-column Gaussian solve against the dictionary-layer
    pseudo-observations with the scalar spike-and-slab denoiser, exchanging
    extrinsic messages in the usual vector-AMP fashion. Used instead of the
    scalar back-projection when the RIS grid is critical: it handles the
    column correlations of the over-complete BS response exactly, which the
    entrywise treatment systematically underuses at desk scale.
    """

    def __init__(self, system: SystemMatrices, priors: PriorParams):
        m_grid = system.a_b.shape[1]
        l_grid = system.r.shape[0]
        self.r2 = np.zeros((m_grid, l_grid), dtype=complex)
        self.g2 = np.full(l_grid, 1.0)
        self.eye = np.eye(m_grid)

    def snapshot(self):
        return self.r2.copy(), self.g2.copy()

    def restore(self, snap) -> None:
        self.r2, self.g2 = snap[0].copy(), snap[1].copy()

    def step(self, state: MessageState, system: SystemMatrices,
             priors: PriorParams, floor: float, theta: float) -> MessageState:
        a = system.a_b
        absa2 = np.abs(a) ** 2
        dc_inv = 1.0 / np.minimum(state.v_c, 1e30)
        c_obs = state.c_hat - system.h0

        weighted = dc_inv.T[:, :, None] * a[None, :, :]              # L x M x Mg
        h = np.einsum("mi,lmj->lij", a.conj(), weighted)
        h += self.g2[:, None, None] * self.eye[None]
        cov = np.linalg.inv(h)
        rhs = np.einsum("mi,ml->li", a.conj(), dc_inv * c_obs) + self.g2[:, None] * self.r2.T
        m_post = np.einsum("lij,lj->li", cov, rhs).T                 # Mg x L
        v_post = np.maximum(np.einsum("lii->li", cov).real.T, 1e-14)

        eta1 = 1.0 / np.maximum(v_post.mean(axis=0), 1e-14)
        g_den = np.clip(eta1 - self.g2, 1e-8 * eta1, 1e14)
        r_den = (eta1[None, :] * m_post - self.g2[None, :] * self.r2) / g_den[None, :]
        r_den = np.where(np.isfinite(r_den), r_den, state.s_hat)
        s_hat, v_s = denoise_bg(r_den, np.broadcast_to(1.0 / g_den, r_den.shape),
                                priors.lambda_s, priors.tau_s)
        eta2 = 1.0 / np.maximum(v_s.mean(axis=0), 1e-14)
        # columns where the denoiser adds no precision keep their old message
        raw = eta2 - g_den
        ok = raw > 1e-6 * eta2
        g2_new = np.where(ok, np.clip(raw, 1e-8, 1e14), self.g2)
        r2_new = np.where(ok[None, :],
                          (eta2[None, :] * s_hat - g_den[None, :] * r_den)
                          / np.where(ok, g2_new, 1.0)[None, :],
                          self.r2)
        r2_new = np.where(np.isfinite(r2_new), r2_new, self.r2)
        self.r2 = theta * r2_new + (1.0 - theta) * self.r2
        self.g2 = np.exp(theta * np.log(g2_new) + (1.0 - theta) * np.log(self.g2))

        out = dataclasses.replace(state)
        out.s_hat = s_hat
        out.v_s = np.maximum(v_s, floor)
        mu = a @ m_post
        v_mu = absa2 @ v_post
        den = v_mu + state.v_c
        out.w_hat = (v_mu * state.c_hat + state.v_c * (mu + system.h0)) / den
        out.v_w = np.maximum(v_mu * state.v_c / den, floor)
        out.v_mu, out.mu_hat = v_mu, mu
        out.alpha_hat = np.zeros_like(state.alpha_hat)
        return out


def _sweep(state: MessageState, system: SystemMatrices, priors: PriorParams,
           tau_n: float, y: np.ndarray, floor: float, theta: float,
           svd: Optional[_ZStageSvd], vamp: Optional[_VampS]) -> MessageState:
    if svd is None:
        state = update_z(state, system, tau_n, y, floor)
    else:
        state = _exact_z(state, system, tau_n, y, floor,
                         svd.v_right, svd.sig2, svd.absv2)
    state = update_g(state, system, priors, floor, damping=theta)
    state = update_w(state, system, floor)
    if vamp is None:
        state = update_s(state, system, priors, floor, damping=theta)
    else:
        state = vamp.step(state, system, priors, floor, theta)
    return state


def run(y: np.ndarray, system: SystemMatrices, priors: PriorParams,
        opts: Optional[MpOptions] = None,
        rng: Optional[np.random.Generator] = None) -> EstimateResult:
    """Estimate (S, G) from a training observation.

    Sweeps the four update steps, annealing the effective noise down to
    tau_n when the homotopy is enabled, and returns the best-fitting state
    visited. Stops a stage when the relative Frobenius change of both s and
    g drops below opts.eps; `converged` reports the criterion at the target
    noise. Raises MpDivergenceError if the state becomes non-finite and the
    damping controller cannot recover.
    """
    opts = opts or MpOptions()
    rng = rng if rng is not None else np.random.default_rng()
    k, t = system.x.shape
    tau_target = max(priors.tau_n, opts.tau_n_floor)
    use_exact = opts.z_stage == "exact" or (opts.z_stage == "auto" and t < k)
    svd = _ZStageSvd(system.x) if use_exact else None
    if opts.s_stage == "vamp" and not system.r_is_identity:
        raise ValueError("the vector s-stage requires a critical RIS grid (R = I)")
    vamp = _VampS(system, priors) if opts.s_stage == "vamp" else None
    anneal = opts.homotopy == "on" or (opts.homotopy == "auto"
                                       and priors.tau_n <= opts.tau_n_floor)

    state = init_state(system, priors, rng)
    theta = opts.damping
    tau_eff = tau_target
    if anneal:
        tau_eff = max(tau_target, opts.homotopy_start * float(np.mean(np.abs(y) ** 2)))

    best_cost = _model_cost(state, system, y)
    best = state.copy()
    best_vamp = vamp.snapshot() if vamp is not None else None
    trace: List[Tuple[float, float]] = []
    converged = False
    bad_steps = 0
    it = 0

    def rollback():
        nonlocal state
        state = best.copy()
        if vamp is not None:
            vamp.restore(best_vamp)

    while it < opts.i_max:
        stage_converged = False
        while it < opts.i_max:
            it += 1
            cand = _sweep(state, system, priors, tau_eff, y, opts.variance_floor,
                          theta, svd, vamp)
            if not cand.is_finite():
                bad_steps += 1
                if not opts.adaptive_damping or theta <= opts.damp_min or bad_steps > 25:
                    raise MpDivergenceError(it)
                theta = max(opts.damp_min, theta * opts.damp_shrink)
                rollback()
                trace.append((np.inf, np.inf))
                continue
            ds = _rel_change(cand.s_hat, state.s_hat)
            dg = _rel_change(cand.g_hat, state.g_hat)
            trace.append((ds, dg))
            state = cand
            state.iteration = it
            cost = _model_cost(state, system, y)
            if np.isfinite(cost) and cost <= best_cost:
                best_cost = cost
                best = state.copy()
                if vamp is not None:
                    best_vamp = vamp.snapshot()
            if ds <= opts.eps and dg <= opts.eps:
                stage_converged = True
                break
        if tau_eff <= tau_target:
            converged = stage_converged
            break
        tau_eff = max(tau_target, tau_eff / opts.homotopy_shrink)
        rollback()
    return EstimateResult(s_hat=best.s_hat, g_hat=best.g_hat,
                          iterations=it, converged=converged, trace=trace)
