"""Equality-constrained recovery programs and the empirical phase sweep.

solve_Pf minimizes the structure norm subject to A z = y with an
operator-splitting scheme: the analysis variable w = Omega z takes a
shrinkage step, z is the constrained least-squares update through a cached
KKT factorization (a plain affine projection when Omega is the identity),
and the penalty parameter is rebalanced from the residual ratio.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InfeasibleDataError, InvalidParameterError
from .estimators import estimate_delta, measurement_bounds
from .operators import RNG_DOMAIN_TRIALS, philox_rng

SOLVE_TOL = 1e-7
SOLVE_MAX_ITER = 20_000
SUCCESS_TOL = 1e-3
RHO_RATIO = 10.0


@dataclass
class SolveInfo:
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float


@dataclass
class PhaseSweepResult:
    m_grid: np.ndarray
    success_rate: np.ndarray
    trials_per_m: int
    m50: float
    delta_hat: float
    theorem1_band: tuple
    seed: int
    m50_in_range: bool = True

    def csv_rows(self):
        rows = []
        for m, rate in zip(self.m_grid, self.success_rate):
            rows.append([str(int(m)), str(int(round(rate * self.trials_per_m))),
                         str(self.trials_per_m)])
        return rows

    def summary(self):
        return {
            "m50": self.m50,
            "delta_hat": self.delta_hat,
            "band_low": self.theorem1_band[0],
            "band_high": self.theorem1_band[1],
            "trials_per_m": self.trials_per_m,
            "seed": int(self.seed),
            "m50_in_range": bool(self.m50_in_range),
        }


def _soft_threshold(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def _shrink(family, v, thr, block_partition=None, mat_shape=None):
    if family in ("l1", "analysis_l1"):
        return _soft_threshold(v, thr)
    if family == "l12":
        out = np.zeros_like(v)
        blocks = v[block_partition]
        norms = np.linalg.norm(blocks, axis=1)
        scale = np.maximum(1.0 - thr / np.maximum(norms, 1e-300), 0.0)
        out[block_partition] = blocks * scale[:, None]
        return out
    if family == "nuclear":
        M = v.reshape(mat_shape)
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        return (U @ np.diag(_soft_threshold(s, thr)) @ Vt).ravel()
    raise InvalidParameterError(f"unknown family {family!r}")


class _AffineProjector:
    """Projection onto {A z = y} through a cached Cholesky of A A^T."""

    def __init__(self, A, y):
        self.A = A
        gram = A @ A.T
        gram[np.diag_indices_from(gram)] += 1e-12 * np.trace(gram) / max(gram.shape[0], 1)
        self.chol = scipy.linalg.cho_factor(gram)
        self.y = y

    def __call__(self, v):
        return v - self.A.T @ scipy.linalg.cho_solve(self.chol, self.A @ v - self.y)


class _ConstrainedLstsq:
    """argmin ||Omega z - v|| s.t. A z = y through a cached KKT factorization."""

    def __init__(self, omega_entries, A, y):
        self.omega = omega_entries
        n = omega_entries.shape[1]
        m = A.shape[0]
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = omega_entries.T @ omega_entries
        kkt[:n, n:] = A.T
        kkt[n:, :n] = A
        self.lu = scipy.linalg.lu_factor(kkt)
        self.n, self.m = n, m
        self.y = y

    def __call__(self, v):
        rhs = np.concatenate([self.omega.T @ v, self.y])
        return scipy.linalg.lu_solve(self.lu, rhs)[:self.n]


def solve_Pf(A, y, model_family, omega=None, block_partition=None, mat_shape=None,
             rho=1.0, tol=SOLVE_TOL, max_iter=SOLVE_MAX_ITER):
    """Solve min f(z) s.t. A z = y.  Returns (z, SolveInfo).

    For analysis families omega supplies the operator; for the nuclear
    family z is the vectorized matrix of shape mat_shape.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, n = A.shape
    if m > n:
        raise InvalidParameterError("expected m <= n measurements")
    lstsq_res = np.linalg.lstsq(A, y, rcond=None)
    if np.linalg.norm(A @ lstsq_res[0] - y) > 1e-8 * max(np.linalg.norm(y), 1.0):
        raise InfeasibleDataError("y is not consistent with A")
    if model_family == "analysis_l1":
        if omega is None:
            raise InvalidParameterError("analysis family requires omega")
        Om = omega.entries if hasattr(omega, "entries") else np.asarray(omega)
        zstep = _ConstrainedLstsq(Om, A, y)
        apply_omega = lambda z: Om @ z
        p = Om.shape[0]
    else:
        zstep = _AffineProjector(A, y)
        apply_omega = lambda z: z
        p = n

    z = lstsq_res[0]
    w = apply_omega(z)
    u = np.zeros(p)
    scale = max(np.linalg.norm(y), 1.0)
    info = SolveInfo(0, False, np.inf, np.inf)
    for k in range(max_iter):
        z = zstep(w - u)
        oz = apply_omega(z)
        w_prev = w
        w = _shrink(model_family, oz + u, 1.0 / rho,
                    block_partition=block_partition, mat_shape=mat_shape)
        u = u + oz - w
        r_primal = np.linalg.norm(oz - w)
        r_dual = rho * np.linalg.norm(w - w_prev)
        info = SolveInfo(k + 1, False, float(r_primal), float(r_dual))
        if r_primal <= tol * scale and r_dual <= tol * scale:
            info.converged = True
            break
        if (k + 1) % 50 == 0:
            if r_primal > RHO_RATIO * r_dual:
                rho *= 2.0
                u /= 2.0
            elif r_dual > RHO_RATIO * r_primal:
                rho /= 2.0
                u *= 2.0
    z = zstep(w - u)  # final iterate is exactly feasible
    return z, info


def recovery_success(z_hat, x_true, tol=SUCCESS_TOL):
    z_hat = np.asarray(z_hat).ravel()
    x_true = np.asarray(x_true).ravel()
    if z_hat.size != x_true.size:
        raise InvalidParameterError("length mismatch")
    return bool(np.linalg.norm(z_hat - x_true) <= tol * np.linalg.norm(x_true))


def phase_sweep(model, x_true, m_grid, trials_per_m, seed=0, delta_samples=2000,
                eta=0.05, threads=1):
    """Empirical transition location against the theoretical band.

    For each m draws fresh Gaussian measurement matrices, solves the
    recovery program, and records the success rate; m50 interpolates the
    50% crossing.  The band comes from the measurement-count window around
    the estimated statistical dimension at failure tolerance eta.
    """
    if trials_per_m < 10:
        raise InvalidParameterError("need at least 10 trials per m")
    x = x_true.payload if hasattr(x_true, "payload") else np.asarray(x_true)
    xv = x.ravel()
    n = xv.size
    m_grid = np.asarray(sorted(int(m) for m in m_grid))
    rates = np.empty(m_grid.size)
    kwargs = {}
    if model.family == "l12":
        kwargs["block_partition"] = model.block_partition
    if model.family == "nuclear":
        kwargs["mat_shape"] = model.center.shape
    if model.family == "analysis_l1":
        kwargs["omega"] = model.omega
    for j, m in enumerate(m_grid):
        wins = 0
        for trial in range(trials_per_m):
            rng = philox_rng(seed, stream=j * trials_per_m + trial,
                             domain=RNG_DOMAIN_TRIALS)
            A = rng.standard_normal((m, n))
            z, info = solve_Pf(A, A @ xv, model.family, **kwargs)
            wins += int(info.converged and recovery_success(z, xv))
        rates[j] = wins / trials_per_m
    m50 = _interp_crossing(m_grid, rates, 0.5)
    in_range = m_grid[0] <= m50 <= m_grid[-1]
    delta_hat = estimate_delta(model, samples=delta_samples, seed=seed, threads=threads).value
    high, low = measurement_bounds(delta_hat, n, eta)
    return PhaseSweepResult(m_grid, rates, trials_per_m, float(m50), float(delta_hat),
                            (float(low), float(high)), seed, in_range)


def _interp_crossing(m_grid, rates, level):
    above = np.nonzero(rates >= level)[0]
    if above.size == 0:
        return float(m_grid[-1] + 1)  # all failures: flagged out of range
    j = above[0]
    if j == 0:
        return float(m_grid[0] - 1)   # already succeeding at the grid start
    m0, m1 = m_grid[j - 1], m_grid[j]
    r0, r1 = rates[j - 1], rates[j]
    if r1 == r0:
        return float(m1)
    return float(m0 + (level - r0) / (r1 - r0) * (m1 - m0))
