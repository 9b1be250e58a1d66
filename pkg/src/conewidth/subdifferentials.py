"""Finite, solver-ready descriptions of the subdifferential at a point.

A model stores the fixed center of the subdifferential, its bounded
perturbation set, the distinguished orthogonality point z0, the
minimum-norm member z1, and the sign pattern on the support.  Families:
l1, l12 (block), nuclear, and l1-analysis.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._apg import box_lstsq, spectral_norm_sq
from .errors import (DegenerateSignalError, InvalidParameterError,
                     NotGeneralPositionError)
from .operators import (RNG_DOMAIN_RESTARTS, null_projector_of_matrix,
                        philox_rng)
from .scenarios import analysis_support

Z1_TOL = 1e-8
Z1_MAX_ITER = 5000


@dataclass
class SubdifferentialModel:
    family: str
    center: np.ndarray                      # c; a matrix for the nuclear family
    z0: np.ndarray
    z1: np.ndarray
    sign_pattern: np.ndarray = None         # sgn on the support
    support: np.ndarray = None              # S as indices
    cosupport: np.ndarray = None            # complement indices
    B: object = None                        # analysis perturbation map (n x |Sbar|)
    Bt: object = None                       # cached transpose of B
    gram: object = None                     # cached B^T B
    lipschitz: float = 0.0                  # sigma_max(B)^2
    block_partition: np.ndarray = None      # (q, block_len) for l12
    active_blocks: np.ndarray = None
    factors: tuple = None                   # (U_r, V_r, U_perp, V_perp) for nuclear
    omega: object = None                    # parent AnalysisOperator
    signal: object = None                   # parent StructuredSignal
    z1_converged: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def ambient_shape(self):
        return self.center.shape

    @property
    def n(self):
        return int(self.center.size)

    def f(self, v):
        """Value of the structure-promoting function at v."""
        v = np.asarray(v)
        if self.family == "l1":
            return float(np.abs(v).sum())
        if self.family == "l12":
            return float(np.linalg.norm(v.ravel()[self.block_partition], axis=1).sum())
        if self.family == "nuclear":
            return float(np.linalg.svd(v, compute_uv=False).sum())
        if self.family == "analysis_l1":
            return float(np.abs(self.omega.entries @ v.ravel()).sum())
        raise InvalidParameterError(f"unknown family {self.family!r}")


def _build_l1(x):
    v = x.payload
    S = x.support if x.support is not None else np.nonzero(v)[0]
    if S.size == 0:
        raise DegenerateSignalError("empty support")
    c = np.sign(v)
    mask = np.ones(v.size, dtype=bool)
    mask[S] = False
    return SubdifferentialModel(
        family="l1", center=c, z0=c.copy(), z1=c.copy(),
        sign_pattern=np.sign(v[S]), support=np.asarray(S, dtype=int),
        cosupport=np.nonzero(mask)[0], signal=x)


def _build_l12(x):
    v = x.payload
    part = x.block_partition
    if part is None:
        raise InvalidParameterError("block_sparse signal needs a block partition")
    norms = np.linalg.norm(v[part], axis=1)
    active = np.nonzero(norms > 1e-12 * max(norms.max(), 1e-300))[0]
    if active.size == 0:
        raise DegenerateSignalError("no active blocks")
    c = np.zeros_like(v)
    for b in active:
        c[part[b]] = v[part[b]] / norms[b]
    inactive = np.setdiff1d(np.arange(part.shape[0]), active)
    return SubdifferentialModel(
        family="l12", center=c, z0=c.copy(), z1=c.copy(),
        sign_pattern=norms[active], support=active, cosupport=inactive,
        block_partition=part, active_blocks=active, signal=x)


def _build_nuclear(x):
    X = x.payload
    U, s, Vt = np.linalg.svd(X, full_matrices=True)
    tol = max(X.shape) * s[0] * 1e-12
    r = int(np.count_nonzero(s > tol))
    if r == 0:
        raise DegenerateSignalError("zero matrix")
    Ur, Vr = U[:, :r], Vt[:r, :].T
    c = Ur @ Vr.T
    return SubdifferentialModel(
        family="nuclear", center=c, z0=c.copy(), z1=c.copy(),
        sign_pattern=np.ones(r), support=np.arange(r),
        factors=(Ur, Vr, U[:, r:], Vt[r:, :].T), signal=x)


def z0_analysis(omega, x, S):
    """Orthogonality point for l1-analysis: P_null(Omega_Sbar) Omega^T sgn(Omega x).

    Satisfies Omega_Sbar z0 = 0 and <Omega^T sgn(Omega x), z0> = ||z0||^2.
    """
    v = x.payload if hasattr(x, "payload") else np.asarray(x, dtype=np.float64)
    S = np.asarray(S, dtype=int)
    mask = np.ones(omega.p, dtype=bool)
    mask[S] = False
    P = null_projector_of_matrix(omega.entries[mask], n=omega.n)
    sgn = np.zeros(omega.p)
    sgn[S] = np.sign(omega.entries[S] @ v)
    return P @ (omega.entries.T @ sgn)


def _build_analysis(x, omega):
    if omega is None:
        raise InvalidParameterError("analysis_l1 requires the analysis operator")
    v = x.payload
    S = x.support
    if S is None:
        S = analysis_support(omega, v, x.support_tolerance)
    S = np.asarray(S, dtype=int)
    if S.size == 0:
        raise DegenerateSignalError("unresolved analysis support")
    mask = np.ones(omega.p, dtype=bool)
    mask[S] = False
    Sbar = np.nonzero(mask)[0]
    ox = omega.entries @ v
    sgn_full = np.zeros(omega.p)
    sgn_full[S] = np.sign(ox[S])
    c = omega.entries.T @ sgn_full
    Bdense = omega.entries[Sbar].T
    # a sparse perturbation map pays off for finite-difference operators
    if omega.kind == "finite_difference" or (
            Bdense.size and np.count_nonzero(Bdense) < 0.05 * Bdense.size):
        B = sp.csr_matrix(Bdense)
        Bt = sp.csr_matrix(B.T)
        gram = sp.csr_matrix(Bt @ B)
    else:
        B = np.ascontiguousarray(Bdense)
        Bt = np.ascontiguousarray(B.T)
        gram = Bt @ B
    L = spectral_norm_sq(B) if Sbar.size else 0.0
    P = null_projector_of_matrix(omega.entries[Sbar], n=omega.n)
    z0 = P @ c
    if Sbar.size:
        u, conv, _ = box_lstsq(B, -c[:, None], 1.0, L, tol=Z1_TOL,
                               max_iter=Z1_MAX_ITER, Bt=Bt)
        z1 = c + (B @ u).ravel()
        z1_ok = bool(conv[0])
    else:
        z1, z1_ok = c.copy(), True
    return SubdifferentialModel(
        family="analysis_l1", center=c, z0=z0, z1=z1,
        sign_pattern=np.sign(ox[S]), support=S, cosupport=Sbar,
        B=B, Bt=Bt, gram=gram, lipschitz=L, omega=omega, signal=x,
        z1_converged=z1_ok)


def build_model(family, x, omega=None):
    """Assemble the subdifferential model for a structured signal."""
    if family == "l1":
        return _build_l1(x)
    if family == "l12":
        return _build_l12(x)
    if family == "nuclear":
        return _build_nuclear(x)
    if family == "analysis_l1":
        return _build_analysis(x, omega)
    raise InvalidParameterError(f"unknown family {family!r}")


def model_for_signal(sig, omega=None):
    """Pick the subdifferential family matching a signal's structure family."""
    fam = {"sparse": "l1", "block_sparse": "l12", "low_rank": "nuclear",
           "analysis_sparse": "analysis_l1"}[sig.family]
    return build_model(fam, sig, omega)


def sup_norm_extent(model, restarts=20, seed=0):
    """Bounds on 2 * sup_{z in subdifferential} ||z||_2.

    Exact for l1 / l12 / nuclear.  For analysis models the supremum over
    the box is a convex maximization, so a certified pair is returned: a
    vertex ascent lower bound (monotone in the restart count) and a
    triangle-inequality upper bound.
    """
    if model.family == "l1":
        v = 2.0 * np.sqrt(model.center.size)
        return v, v
    if model.family == "l12":
        v = 2.0 * np.sqrt(model.block_partition.shape[0])
        return v, v
    if model.family == "nuclear":
        v = 2.0 * np.sqrt(min(model.center.shape))
        return v, v
    c, B = model.center, model.B
    if model.cosupport.size == 0:
        v = 2.0 * np.linalg.norm(c)
        return v, v
    col_norms = np.sqrt(np.asarray(B.multiply(B).sum(axis=0)).ravel()) if sp.issparse(B) \
        else np.linalg.norm(B, axis=0)
    upper = 2.0 * (np.linalg.norm(c) + col_norms.sum())
    rng = philox_rng(seed, domain=RNG_DOMAIN_RESTARTS)
    d = B.shape[1]
    best = np.linalg.norm(c)
    starts = [np.sign(B.T @ c)] + [rng.choice([-1.0, 1.0], size=d) for _ in range(restarts - 1)]
    for u in starts:
        u = np.where(u == 0, 1.0, u)
        for _ in range(200):
            w = B.T @ (c + B @ u)
            u_next = np.where(w == 0, u, np.sign(w))
            if np.array_equal(u_next, u):
                break
            u = u_next
        best = max(best, float(np.linalg.norm(c + B @ u)))
    return 2.0 * best, float(upper)


def weak_decomposability_check(omega, x, S):
    """Closed-form test of the weak decomposability condition.

    Computes v0 = -(Omega_Sbar Omega_Sbar^T)^{-1} Omega_Sbar Omega_S^T
    sgn(Omega_S x); the condition holds iff ||v0||_inf <= 1.  Requires the
    cosupport rows to be in general position.
    """
    v = x.payload if hasattr(x, "payload") else np.asarray(x, dtype=np.float64)
    S = np.asarray(S, dtype=int)
    mask = np.ones(omega.p, dtype=bool)
    mask[S] = False
    Osb = omega.entries[mask]
    Os = omega.entries[S]
    gram = Osb @ Osb.T
    sgn = np.sign(Os @ v)
    rhs = Osb @ (Os.T @ sgn)
    if gram.shape[0] == 0:
        return True, np.zeros(0), 0.0
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise NotGeneralPositionError("cosupport rows are not in general position")
    v0 = -np.linalg.solve(gram, rhs)
    sup = float(np.abs(v0).max())
    return bool(sup <= 1.0), v0, sup


def sample_member(model, seed=0):
    """Uniform random member of the subdifferential model."""
    rng = philox_rng(seed, domain=RNG_DOMAIN_RESTARTS)
    if model.family == "l1":
        z = model.center.copy()
        z[model.cosupport] = rng.uniform(-1.0, 1.0, size=model.cosupport.size)
        return z
    if model.family == "l12":
        z = model.center.copy()
        part = model.block_partition
        blen = part.shape[1]
        for b in model.cosupport:
            direction = rng.standard_normal(blen)
            direction /= max(np.linalg.norm(direction), 1e-300)
            z[part[b]] = direction * rng.uniform() ** (1.0 / blen)
        return z
    if model.family == "nuclear":
        Ur, Vr, Up, Vp = model.factors
        k1, k2 = Up.shape[1], Vp.shape[1]
        if min(k1, k2) == 0:
            return model.center.copy()
        M = rng.standard_normal((k1, k2))
        smax = np.linalg.svd(M, compute_uv=False)[0]
        M *= rng.uniform() / max(smax, 1e-300)
        return model.center + Up @ M @ Vp.T
    if model.family == "analysis_l1":
        if model.cosupport.size == 0:
            return model.center.copy()
        u = rng.uniform(-1.0, 1.0, size=model.cosupport.size)
        return model.center + model.B @ u
    raise InvalidParameterError(f"unknown family {model.family!r}")
