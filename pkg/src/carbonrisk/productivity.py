"""Stationary VAR(1) log-productivity growth and its cumulative sum.

The sector log-productivity growth vector follows

    theta_t = mu + Gamma theta_{t-1} + epsilon * chol(Sigma) z_t,

with z_t iid standard normal and theta_0 drawn from the stationary law
N(mu_bar, epsilon^2 Sigma_bar).  The cumulative growth a_circ_t is the
running sum of theta_1..theta_t, zero at t = 0.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import CholeskyFailure, NonStationary, SingularSystem

Array = NDArray[np.float64]

STATIONARITY_MARGIN = 1e-9
KRONECKER_COND_LIMIT = 1e12


def _readonly(a: Array) -> Array:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class VarParams:
    """Parameters of the VAR(1) law: drift, feedback, innovation covariance, noise scale.

    epsilon scales the innovations; 1.0 for calibrated models, smaller (or zero)
    only for the small-noise validation experiments.
    """

    mu: Array
    gamma: Array
    sigma: Array
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        mu = _readonly(np.atleast_1d(self.mu))
        gamma = _readonly(np.atleast_2d(self.gamma))
        sigma = _readonly(np.atleast_2d(self.sigma))
        n = mu.shape[0]
        if gamma.shape != (n, n) or sigma.shape != (n, n):
            raise ValueError(
                f"shape mismatch: mu has {n} sectors, gamma {gamma.shape}, sigma {sigma.shape}"
            )
        if np.max(np.abs(sigma - sigma.T)) > 1e-12:
            raise ValueError("sigma must be symmetric within 1e-12")
        if np.min(np.linalg.eigvalsh(sigma)) < -1e-12:
            raise ValueError("sigma must be positive semidefinite (eigenvalue < -1e-12)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n_sectors(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True, eq=False)
class StationaryMoments:
    """Mean and covariance of the stationary law of theta (before the epsilon^2 scale)."""

    mu_bar: Array
    sigma_bar: Array


@dataclass(frozen=True, eq=False)
class ProductivityState:
    """Snapshot (t, theta_t, a_circ_t) of one path."""

    t: int
    theta: Array
    a_circ: Array

    def __post_init__(self) -> None:
        if self.t == 0 and np.any(self.a_circ != 0.0):
            raise ValueError("a_circ must be exactly zero at t = 0")


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Simulated paths: theta and a_circ of shape (M, horizon+1, I).

    Identical (params, horizon, M, seed) give a bit-identical ensemble
    regardless of worker count.
    """

    theta: Array
    a_circ: Array
    seed: int

    @property
    def n_paths(self) -> int:
        return self.theta.shape[0]

    @property
    def horizon(self) -> int:
        return self.theta.shape[1] - 1

    @property
    def n_sectors(self) -> int:
        return self.theta.shape[2]

    def state(self, m: int, t: int) -> ProductivityState:
        return ProductivityState(t=t, theta=self.theta[m, t], a_circ=self.a_circ[m, t])


def check_stationary(gamma: Array) -> tuple[Array, bool]:
    """Eigenvalue moduli of a feedback matrix, sorted descending, plus a pass flag.

    Passes iff the largest modulus is below 1 - 1e-9 (margin against explosive
    Kronecker solves downstream).
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if gamma.shape[0] != gamma.shape[1]:
        raise ValueError("gamma must be square")
    moduli = np.sort(np.abs(np.linalg.eigvals(gamma)))[::-1]
    return moduli, bool(moduli[0] < 1.0 - STATIONARITY_MARGIN)


def stationary_moments(params: VarParams) -> StationaryMoments:
    """Solve the stationary mean and covariance of the VAR(1).

    mu_bar solves (I - Gamma) mu_bar = mu; vec(sigma_bar) solves the
    Kronecker system (I - Gamma (x) Gamma) vec(sigma_bar) = vec(sigma)
    in column-major vec convention.
    """
    moduli, ok = check_stationary(params.gamma)
    if not ok:
        raise NonStationary(
            f"gamma eigenvalue modulus {moduli[0]:.6g} >= {1 - STATIONARITY_MARGIN}"
        )
    n = params.n_sectors
    eye = np.eye(n)
    lhs = eye - params.gamma
    if np.linalg.cond(lhs) > KRONECKER_COND_LIMIT:
        raise SingularSystem("I - gamma is numerically singular")
    mu_bar = np.linalg.solve(lhs, params.mu)

    kron = np.eye(n * n) - np.kron(params.gamma, params.gamma)
    if np.linalg.cond(kron) > KRONECKER_COND_LIMIT:
        raise SingularSystem("I - gamma (x) gamma is numerically singular")
    vec_sigma = params.sigma.reshape(-1, order="F")
    sigma_bar = np.linalg.solve(kron, vec_sigma).reshape((n, n), order="F")
    sigma_bar = 0.5 * (sigma_bar + sigma_bar.T)
    return StationaryMoments(mu_bar=_readonly(mu_bar), sigma_bar=_readonly(sigma_bar))


def innovation_factor(sigma: Array) -> Array:
    """Matrix square root L with L L^T = sigma.

    Lower Cholesky when sigma is positive definite; otherwise an eigenvalue
    square root with negative eigenvalues clipped at zero (tolerance 1e-10).
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
        if vals.min() < -1e-10:
            raise CholeskyFailure(
                f"covariance has eigenvalue {vals.min():.3e} below -1e-10"
            ) from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def upsilon(gamma: Array, k: int) -> Array:
    """Upsilon_k = sum of gamma^v for v = 0..k, by the recursion U_k = I + gamma U_{k-1}."""
    if k < 0:
        raise ValueError("k must be >= 0")
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    out = np.eye(gamma.shape[0])
    for _ in range(k):
        out = np.eye(gamma.shape[0]) + gamma @ out
    return out


def upsilon_sequence(gamma: Array, count: int) -> list[Array]:
    """[Upsilon_0, ..., Upsilon_{count-1}] computed with one pass of the recursion."""
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    eye = np.eye(gamma.shape[0])
    seq = [eye]
    for _ in range(count - 1):
        seq.append(eye + gamma @ seq[-1])
    return seq


def conditional_sum_law(params: VarParams, theta_t: Array, T: int) -> tuple[Array, Array]:
    """Gaussian law of sum_{u=1..T} theta_{t+u} given theta_t.

    mean = Gamma Upsilon_{T-1} theta_t + (sum_{u=1..T} Upsilon_{u-1}) mu;
    cov  = epsilon^2 sum_{u=1..T} Upsilon_{T-u} sigma Upsilon_{T-u}^T.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    theta_t = np.asarray(theta_t, dtype=float)
    ups = upsilon_sequence(params.gamma, T)
    mean = params.gamma @ ups[T - 1] @ theta_t + sum(ups) @ params.mu
    cov = np.zeros((params.n_sectors, params.n_sectors))
    for u in ups:
        cov += u @ params.sigma @ u.T
    cov *= params.epsilon**2
    return mean, 0.5 * (cov + cov.T)


def _fill_noise(block: slice, out: Array, seed: int, shape: tuple[int, int]) -> None:
    for m in range(block.start, block.stop):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, m], dtype=np.uint64)))
        out[m] = rng.standard_normal(shape)


def simulate_paths(
    params: VarParams,
    horizon: int,
    n_paths: int,
    seed: int,
    theta0: Array | None = None,
    workers: int = 1,
) -> PathEnsemble:
    """Simulate M paths of (theta, a_circ) over t = 0..horizon.

    Path m draws its normals from a counter-based substream keyed by
    (seed, m), so scheduling cannot change the result.  Row 0 of each
    path's normal block drives the stationary theta_0 draw; when a fixed
    theta0 is supplied that row is still consumed, keeping rows 1..horizon
    aligned between the two modes.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n = params.n_sectors
    moments = stationary_moments(params)
    chol_sigma = innovation_factor(params.sigma)
    chol_bar = innovation_factor(moments.sigma_bar)

    noise = np.empty((n_paths, horizon + 1, n))
    if workers <= 1:
        _fill_noise(slice(0, n_paths), noise, seed, (horizon + 1, n))
    else:
        step = -(-n_paths // workers)
        blocks = [slice(s, min(s + step, n_paths)) for s in range(0, n_paths, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_fill_noise, b, noise, seed, (horizon + 1, n)) for b in blocks
            ]
            for f in futures:
                f.result()

    theta = np.empty((n_paths, horizon + 1, n))
    if theta0 is None:
        theta[:, 0] = moments.mu_bar + params.epsilon * noise[:, 0] @ chol_bar.T
    else:
        theta[:, 0] = np.asarray(theta0, dtype=float)
    for t in range(1, horizon + 1):
        theta[:, t] = params.mu + theta[:, t - 1] @ params.gamma.T
        theta[:, t] += params.epsilon * noise[:, t] @ chol_sigma.T

    a_circ = np.zeros_like(theta)
    if horizon > 0:
        np.cumsum(theta[:, 1:], axis=1, out=a_circ[:, 1:])
    theta.setflags(write=False)
    a_circ.setflags(write=False)
    return PathEnsemble(theta=theta, a_circ=a_circ, seed=seed)
