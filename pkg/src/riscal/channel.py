"""Channel synthesis and the linear-algebraic observation model.

Builds angular sampling bases for a ULA base station and a URA RIS panel,
synthesizes channels either directly in the angular domain (Bernoulli-Gaussian
coefficients) or from a geometric cluster/subpath model, and assembles the
training observation  Y = (H0 + A_B S R) G X + N.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np


def _crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex normal CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class SystemDims:
    """Problem dimensions.

    m: BS antennas; m_grid: BS angular grid length (>= m)
    k: users; t: training length
    l1, l2: RIS panel rows/columns; l1_grid, l2_grid: RIS grid lengths
    """

    m: int
    m_grid: int
    k: int
    l1: int
    l2: int
    l1_grid: int
    l2_grid: int
    t: int

    def __post_init__(self):
        if min(self.m, self.m_grid, self.k, self.l1, self.l2,
               self.l1_grid, self.l2_grid) < 1 or self.t < 0:
            raise ValueError(f"dimensions must be positive (t may be 0): {self}")
        if self.m_grid < self.m:
            raise ValueError(f"m_grid={self.m_grid} must be >= m={self.m}")
        if self.l1_grid < self.l1 or self.l2_grid < self.l2:
            raise ValueError("RIS grid lengths must be >= panel dimensions")

    @property
    def l(self) -> int:
        return self.l1 * self.l2

    @property
    def l_grid(self) -> int:
        return self.l1_grid * self.l2_grid


@dataclass(frozen=True)
class PriorParams:
    """Statistical hyperparameters of the factor model."""

    lambda_s: float
    tau_s: float
    lambda_g: float
    tau_g: float
    tau_n: float
    tau_x: float = 1.0
    tau_h0: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        for name in ("tau_s", "tau_g", "tau_n", "tau_h0"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.tau_x <= 0:
            raise ValueError("tau_x must be positive")
        for name in ("lambda_s", "lambda_g"):
            lam = getattr(self, name)
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


@dataclass(frozen=True)
class AngularGrids:
    """Direction-sine sample points for the BS and RIS response matrices."""

    bs: np.ndarray        # length m_grid
    ris_h: np.ndarray     # length l1_grid
    ris_v: np.ndarray     # length l2_grid

    def __post_init__(self):
        for g in (self.bs, self.ris_h, self.ris_v):
            if g.ndim != 1 or np.any(np.diff(g) <= 0):
                raise ValueError("grids must be strictly increasing 1-D arrays")
            if g.min() < -1.0 or g.max() > 1.0:
                raise ValueError("grid samples must lie in [-1, 1]")


@dataclass(frozen=True)
class SystemMatrices:
    """Known quantities of the observation model Y = (H0 + A_B S R) G X + N."""

    a_b: np.ndarray       # m x m_grid
    a_r_h: np.ndarray     # l1 x l1_grid
    a_r_v: np.ndarray     # l2 x l2_grid
    a_r: np.ndarray       # l x l_grid  (= kron(a_r_v, a_r_h))
    h0: np.ndarray        # m x l_grid
    r: np.ndarray         # l_grid x l_grid (= a_r^H a_r)
    x: np.ndarray         # k x t
    r_is_identity: bool = field(default=False)

    def with_h0(self, h0: np.ndarray) -> "SystemMatrices":
        if h0.shape != self.h0.shape:
            raise ValueError("replacement h0 has wrong shape")
        return replace(self, h0=np.asarray(h0, dtype=complex))


@dataclass(frozen=True)
class GroundTruth:
    """Latent channel coefficients used for error measurement."""

    s: np.ndarray                          # m_grid x l_grid
    g: np.ndarray                          # l_grid x k
    h_rb: Optional[np.ndarray] = None      # m x l (physical)
    h_ur: Optional[np.ndarray] = None      # l x k (physical)


@dataclass(frozen=True)
class GeometryConfig:
    """Cluster/subpath scattering geometry and large-scale gains."""

    clusters_slow: int = 20
    clusters_fast: int = 1
    clusters_user: int = 1
    subpaths: int = 10
    spread_deg: float = 10.0
    beta_ref_db: float = -20.0
    pathloss_exp_bs: float = 2.0
    pathloss_exp_user: float = 2.6
    dist_bs: float = 50.0
    dist_user: Tuple[float, float] = (10.0, 12.0)

    def __post_init__(self):
        if min(self.clusters_slow, self.clusters_fast, self.clusters_user, self.subpaths) < 1:
            raise ValueError("cluster and subpath counts must be positive")


def steering_vector(x: float, n: int) -> np.ndarray:
    """Unit-norm array response of an n-element half-wavelength ULA.

    Entry i is exp(-j*pi*i*x)/sqrt(n) for a direction sine x in [-1, 1].
    """
    if n < 1:
        raise ValueError(f"element count must be >= 1, got {n}")
    return np.exp(-1j * np.pi * x * np.arange(n)) / np.sqrt(n)


def ris_steering(azimuth: float, elevation: float, l1: int, l2: int) -> np.ndarray:
    """URA response: Kronecker product of the vertical and horizontal factors."""
    horiz = steering_vector(np.cos(elevation) * np.sin(azimuth), l1)
    vert = steering_vector(-np.cos(elevation) * np.cos(azimuth), l2)
    return np.kron(vert, horiz)


def build_grids(dims: SystemDims, coverage: Tuple[float, float] = (-1.0, 1.0)) -> AngularGrids:
    """Uniform endpoint-exclusive grids; the critical grid yields a DFT basis."""
    lo, hi = coverage

    def grid(n: int) -> np.ndarray:
        return lo + (hi - lo) * np.arange(n) / n

    return AngularGrids(bs=grid(dims.m_grid), ris_h=grid(dims.l1_grid), ris_v=grid(dims.l2_grid))


def response_matrix(grid: np.ndarray, n: int) -> np.ndarray:
    """n x len(grid) matrix whose columns are steering vectors at the grid points."""
    return np.exp(-1j * np.pi * np.outer(np.arange(n), grid)) / np.sqrt(n)


def _rician_weight(kappa: float) -> float:
    if np.isinf(kappa):
        return 1.0
    return float(np.sqrt(kappa / (kappa + 1.0)))


def build_system(grids: AngularGrids, dims: SystemDims,
                 h_bar_rb: Optional[np.ndarray], kappa: float,
                 x: np.ndarray) -> SystemMatrices:
    """Assemble the sensing quantities known to the receiver.

    h_bar_rb is the slow-varying RIS-to-BS component (m x l); pass None for a
    zero H0 (purely angular-domain synthetic scenarios set H0 separately).
    """
    a_b = response_matrix(grids.bs, dims.m)
    a_r_h = response_matrix(grids.ris_h, dims.l1)
    a_r_v = response_matrix(grids.ris_v, dims.l2)
    a_r = np.kron(a_r_v, a_r_h)
    r = a_r.conj().T @ a_r
    if h_bar_rb is None:
        h0 = np.zeros((dims.m, dims.l_grid), dtype=complex)
    else:
        h_bar_rb = np.asarray(h_bar_rb, dtype=complex)
        if h_bar_rb.shape != (dims.m, dims.l):
            raise ValueError(f"h_bar_rb must be {dims.m}x{dims.l}, got {h_bar_rb.shape}")
        h0 = _rician_weight(kappa) * (h_bar_rb @ a_r)
    x = np.asarray(x, dtype=complex)
    if x.shape != (dims.k, dims.t):
        raise ValueError(f"training matrix must be {dims.k}x{dims.t}, got {x.shape}")
    eye_err = np.linalg.norm(r - np.eye(dims.l_grid))
    return SystemMatrices(a_b=a_b, a_r_h=a_r_h, a_r_v=a_r_v, a_r=a_r, h0=h0, r=r, x=x,
                          r_is_identity=bool(eye_err < 1e-10))


def synth_angular(dims: SystemDims, priors: PriorParams, rng: np.random.Generator) -> GroundTruth:
    """Draw sparse angular coefficient matrices from their Bernoulli-Gaussian priors."""
    s = (rng.random((dims.m_grid, dims.l_grid)) < priors.lambda_s)
    s = s * _crandn(rng, (dims.m_grid, dims.l_grid)) * np.sqrt(priors.tau_s)
    g = (rng.random((dims.l_grid, dims.k)) < priors.lambda_g)
    g = g * _crandn(rng, (dims.l_grid, dims.k)) * np.sqrt(priors.tau_g)
    return GroundTruth(s=s, g=g)


def _cluster_channel(n_clusters: int, subpaths: int, cfg: GeometryConfig, dims: SystemDims,
                     rng: np.random.Generator) -> np.ndarray:
    """Sum of steering-vector outer products over clusters of subpaths (m x l)."""
    spread = np.deg2rad(cfg.spread_deg)
    h = np.zeros((dims.m, dims.l), dtype=complex)
    for _ in range(n_clusters):
        theta_c = rng.uniform(-np.pi / 2, np.pi / 2)
        phi_c = rng.uniform(-np.pi, np.pi)
        sigma_c = rng.uniform(-np.pi / 2, np.pi / 2)
        for _ in range(subpaths):
            theta = theta_c + rng.uniform(-spread / 2, spread / 2)
            phi = phi_c + rng.uniform(-spread / 2, spread / 2)
            sigma = sigma_c + rng.uniform(-spread / 2, spread / 2)
            alpha = _crandn(rng, ())
            a_bs = steering_vector(np.sin(theta), dims.m)
            a_ris = ris_steering(phi, sigma, dims.l1, dims.l2)
            h += alpha * np.outer(a_bs, a_ris.conj())
    return h


def _cluster_vector(n_clusters: int, subpaths: int, cfg: GeometryConfig, dims: SystemDims,
                    rng: np.random.Generator) -> np.ndarray:
    spread = np.deg2rad(cfg.spread_deg)
    h = np.zeros(dims.l, dtype=complex)
    for _ in range(n_clusters):
        phi_c = rng.uniform(-np.pi, np.pi)
        sigma_c = rng.uniform(-np.pi / 2, np.pi / 2)
        for _ in range(subpaths):
            phi = phi_c + rng.uniform(-spread / 2, spread / 2)
            sigma = sigma_c + rng.uniform(-spread / 2, spread / 2)
            h += _crandn(rng, ()) * ris_steering(phi, sigma, dims.l1, dims.l2)
    return h


def synth_geometric(dims: SystemDims, cfg: GeometryConfig, kappa: float,
                    rng: np.random.Generator):
    """Geometric channel realization with exact per-realization energy normalization.

    Returns (h_bar_rb, h_tilde_rb, h_rb, h_ur, beta0, betas) where h_rb is the
    Rician combination rescaled so ||h_rb||_F^2 = beta0*m*l exactly, h_ur is
    l x k with ||h_ur[:, k]||^2 = betas[k]*l exactly, and the slow/fast parts
    carry the same rescaling so the decomposition identity is preserved.
    """
    beta_ref = 10.0 ** (cfg.beta_ref_db / 10.0)
    beta0 = beta_ref * cfg.dist_bs ** (-cfg.pathloss_exp_bs)
    target = beta0 * dims.m * dims.l

    h_bar = _cluster_channel(cfg.clusters_slow, cfg.subpaths, cfg, dims, rng)
    h_tilde = _cluster_channel(cfg.clusters_fast, cfg.subpaths, cfg, dims, rng)
    h_bar *= np.sqrt(target) / np.linalg.norm(h_bar)
    h_tilde *= np.sqrt(target) / np.linalg.norm(h_tilde)

    w_bar = _rician_weight(kappa)
    w_tilde = float(np.sqrt(1.0 / (kappa + 1.0))) if not np.isinf(kappa) else 0.0
    h_rb = w_bar * h_bar + w_tilde * h_tilde
    scale = np.sqrt(target) / np.linalg.norm(h_rb)
    h_rb, h_bar, h_tilde = scale * h_rb, scale * h_bar, scale * h_tilde

    betas = np.empty(dims.k)
    h_ur = np.empty((dims.l, dims.k), dtype=complex)
    for j in range(dims.k):
        d = rng.uniform(*cfg.dist_user)
        betas[j] = beta_ref * d ** (-cfg.pathloss_exp_user)
        col = _cluster_vector(cfg.clusters_user, cfg.subpaths, cfg, dims, rng)
        h_ur[:, j] = col * np.sqrt(betas[j] * dims.l) / np.linalg.norm(col)
    return h_bar, h_tilde, h_rb, h_ur, beta0, betas


def make_training(dims: SystemDims, tau_x: float, scheme: str,
                  rng: np.random.Generator) -> np.ndarray:
    """K x T training matrix with mean per-symbol power tau_x."""
    shape = (dims.k, dims.t)
    if scheme == "iid-gaussian":
        return np.sqrt(tau_x) * _crandn(rng, shape)
    if scheme == "qpsk":
        re = rng.integers(0, 2, shape) * 2 - 1
        im = rng.integers(0, 2, shape) * 2 - 1
        return np.sqrt(tau_x / 2.0) * (re + 1j * im)
    raise ValueError(f"unknown training scheme {scheme!r}")


def observe(system: SystemMatrices, truth: GroundTruth, tau_n: float,
            rng: np.random.Generator) -> np.ndarray:
    """Noisy training observation Y = (H0 + A_B S R) G X + N."""
    m, l_grid = system.h0.shape
    if truth.s.shape[1] != l_grid or truth.g.shape[0] != l_grid:
        raise ValueError("truth dimensions inconsistent with system matrices")
    w = system.h0 + system.a_b @ truth.s @ system.r
    y = w @ truth.g @ system.x
    if tau_n > 0:
        y = y + np.sqrt(tau_n) * _crandn(rng, y.shape)
    return y


def reconstruct(s_hat: np.ndarray, g_hat: np.ndarray, system: SystemMatrices,
                h_bar_rb: np.ndarray, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    """Map angular-domain estimates back to physical channels.

    Returns (h_rb_hat, h_ur_hat) with h_rb_hat = w*h_bar_rb + A_B s_hat A_R^H
    and columns of h_ur_hat = A_R g_hat.
    """
    m, m_grid = system.a_b.shape
    if s_hat.shape != (m_grid, system.r.shape[0]):
        raise ValueError(f"s_hat has shape {s_hat.shape}, expected {(m_grid, system.r.shape[0])}")
    h_rb_hat = _rician_weight(kappa) * h_bar_rb + system.a_b @ s_hat @ system.a_r.conj().T
    h_ur_hat = system.a_r @ g_hat
    return h_rb_hat, h_ur_hat
