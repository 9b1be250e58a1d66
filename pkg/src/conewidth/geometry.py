"""Distances to scaled subdifferentials and to the subdifferential cone.

The distance to t * subdiff(f)(x) has closed forms for l1, l12, and the
nuclear norm; for analysis models it is a box-constrained least squares
solved by accelerated projected gradient.  The cone distance minimizes the
scaled distance over t >= 0 by golden-section search, which is valid
because the scaled-set distance is convex in t.

Batched variants evaluate whole Monte-Carlo sample blocks at once; they
produce the same per-sample values as the scalar entry points.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from ._apg import (APG_MAX_ITER, HAVE_NUMBA, _fista_gram_csr, box_lstsq_gram,
                   tv_scaled_dist2)
from .errors import InvalidParameterError, NonConvergenceError

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
BRACKET_RTOL = 1e-6
MAX_EXPANSIONS = 20


class UnsupportedFamilyError(InvalidParameterError):
    """Operation defined for a different subdifferential family."""


@dataclass
class ConeDistanceResult:
    t_star: float
    distance: float
    inner_minimizer: np.ndarray
    iterations: int
    converged: bool
    certificate_gap: float


# ---------------------------------------------------------------------------
# per-family squared distance profiles: reduce a sample block G once, then
# evaluate t -> dist^2 cheaply for per-sample t vectors


class _L1Profile:
    def __init__(self, model, G):
        S, Sb = model.support, model.cosupport
        sg = model.center[S]
        self.a0 = np.einsum("ij,ij->i", G[:, S], G[:, S])
        self.a1 = G[:, S] @ sg
        self.s = S.size
        self.off = np.abs(G[:, Sb])
        self.fails = np.zeros(G.shape[0], dtype=bool)
        self.iterations = 0

    def dist2(self, t):
        pen = np.maximum(self.off - t[:, None], 0.0)
        return (self.a0 - 2.0 * t * self.a1 + self.s * t * t
                + np.einsum("ij,ij->i", pen, pen))


class _L12Profile:
    def __init__(self, model, G):
        part = model.block_partition
        act, inact = model.active_blocks, model.cosupport
        GB = G[:, part]                      # (N, q, blen)
        cB = model.center[part]
        ga = GB[:, act, :]
        self.a0 = np.einsum("nbj,nbj->n", ga, ga)
        self.a1 = np.einsum("nbj,bj->n", ga, cB[act])
        self.s = act.size
        self.off = np.linalg.norm(GB[:, inact, :], axis=2)
        self.fails = np.zeros(G.shape[0], dtype=bool)
        self.iterations = 0

    def dist2(self, t):
        pen = np.maximum(self.off - t[:, None], 0.0)
        return (self.a0 - 2.0 * t * self.a1 + self.s * t * t
                + np.einsum("ij,ij->i", pen, pen))


class _NuclearProfile:
    def __init__(self, model, G):
        Ur, Vr, Up, Vp = model.factors
        r = Ur.shape[1]
        N = G.shape[0]
        self.sig = np.empty((N, min(Up.shape[1], Vp.shape[1])))
        self.m0 = np.empty(N)
        self.m1 = np.empty(N)
        for i in range(N):
            if self.sig.shape[1]:
                core = Up.T @ G[i] @ Vp
                self.sig[i] = np.linalg.svd(core, compute_uv=False)
                self.m0[i] = np.vdot(G[i], G[i]) - np.vdot(core, core)
            else:
                self.m0[i] = np.vdot(G[i], G[i])
            self.m1[i] = np.vdot(G[i], model.center)
        self.r = r
        self.fails = np.zeros(N, dtype=bool)
        self.iterations = 0

    def dist2(self, t):
        pen = np.maximum(self.sig - t[:, None], 0.0)
        return (self.m0 - 2.0 * t * self.m1 + self.r * t * t
                + np.einsum("ij,ij->i", pen, pen))


class _AnalysisProfile:
    """Warm-started batched box solves; columns are samples.

    Works on the Gram form of the inner problem: with h = B^T r and
    gram = B^T B cached on the model, each FISTA iteration needs a single
    matvec, and dist^2 = ||r||^2 - 2 <h, u> + <u, gram u>.  Golden-section
    probes run at a relaxed tolerance (the probe error enters the located
    minimum only at second order); final evaluations use the full one.
    """

    PROBE_TOL = 1e-6
    FINAL_TOL = 1e-8

    def __init__(self, model, G):
        self.model = model
        Gt = np.ascontiguousarray(G.T)            # (n, N)
        self.c = model.center
        self.L = model.lipschitz
        self.N = G.shape[0]
        self.tol = self.FINAL_TOL
        self.warm = None
        self.fails = np.zeros(self.N, dtype=bool)
        self.iterations = 0
        self.ct_g = self.c @ Gt                   # <c, g_j>
        self.cc = float(self.c @ self.c)
        self.g2 = np.einsum("jn,jn->n", Gt, Gt)
        if model.cosupport.size:
            self.hc = np.asarray(model.Bt @ self.c).ravel()  # B^T c
            self.gram = model.gram
            self.sparse_path = sparse.issparse(model.gram) and HAVE_NUMBA
            if self.sparse_path:
                self.h0T = np.ascontiguousarray((model.Bt @ Gt).T)  # (N, d)
            else:
                self.h0 = np.ascontiguousarray(model.Bt @ Gt)       # (d, N)

    def dist2(self, t):
        # residual norm^2 of r = g - t c after the box solve
        r2 = self.g2 - 2.0 * t * self.ct_g + t * t * self.cc
        if self.model.cosupport.size == 0:
            return np.maximum(r2, 0.0)
        scale = 1.0 + np.sqrt(np.maximum(r2, 0.0))
        t = np.ascontiguousarray(t, dtype=np.float64)
        if self.sparse_path:
            Ht = self.h0T - t[:, None] * self.hc[None, :]
            if self.warm is None:
                self.warm = np.zeros_like(Ht)
            it, conv = _fista_gram_csr(
                self.gram.indptr, self.gram.indices, self.gram.data,
                Ht, t, self.L, self.warm, scale, self.tol, 0.1 * self.tol,
                APG_MAX_ITER)
            self.fails |= ~conv
            self.iterations += it
            U = self.warm.T
            quad = np.einsum("dn,dn->n", self.gram @ U, U)
            cross = np.einsum("nd,nd->n", Ht, self.warm)
            return np.maximum(r2 - 2.0 * cross + quad, 0.0)
        H = self.h0 - np.multiply.outer(self.hc, t)
        U, conv, it = box_lstsq_gram(self.gram, H, t, self.L, scale,
                                     u0=self.warm, tol=self.tol)
        self.warm = U
        self.fails |= ~conv
        self.iterations += it
        quad = np.einsum("ij,ij->j", U, self.gram @ U)
        return np.maximum(r2 - 2.0 * np.einsum("ij,ij->j", H, U) + quad, 0.0)


class _TVProfile:
    """Exact scaled distances for the finite-difference operator.

    The inner box problem splits at support rows into segments, each a 1-D
    total-variation proximal evaluated by a direct taut-string pass, so no
    iterative solver (and no failure flag) is involved.
    """

    def __init__(self, model, G):
        self.model = model
        self.G = np.ascontiguousarray(G)
        self.sup = np.ascontiguousarray(model.support, dtype=np.int64)
        self.sgn = np.ascontiguousarray(model.sign_pattern, dtype=np.float64)
        self.N = G.shape[0]
        self.fails = np.zeros(self.N, dtype=bool)
        self.iterations = 0
        self.out = np.empty(self.N)

    def dist2(self, t):
        t = np.ascontiguousarray(t, dtype=np.float64)
        return tv_scaled_dist2(self.G, t, self.sup, self.sgn, self.out).copy()


def _profile(model, G):
    fam = model.family
    if fam == "l1":
        return _L1Profile(model, G)
    if fam == "l12":
        return _L12Profile(model, G)
    if fam == "nuclear":
        return _NuclearProfile(model, G)
    if fam == "analysis_l1":
        if HAVE_NUMBA and model.omega is not None and \
                model.omega.kind == "finite_difference":
            return _TVProfile(model, G)
        return _AnalysisProfile(model, G)
    raise InvalidParameterError(f"unknown family {fam!r}")


def _as_block(model, g):
    """One sample as a (1, ...) block with the model's ambient shape."""
    g = np.asarray(g, dtype=np.float64)
    if model.family == "nuclear":
        if g.shape != model.center.shape:
            g = g.reshape(model.center.shape)
        return g[None, :, :]
    return g.reshape(1, -1)


def dist_scaled(g, model, t):
    """Distance from g to t * subdiff(f)(x); t >= 0."""
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    prof = _profile(model, _as_block(model, g))
    val = float(np.sqrt(max(prof.dist2(np.array([float(t)]))[0], 0.0)))
    if np.any(prof.fails):
        raise NonConvergenceError("inner box solve did not converge")
    return val


def _golden_vec(prof, a, b, iters):
    # vectorized golden section with per-column value reuse (one profile
    # evaluation per iteration after the first two)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = prof.dist2(c)
    fd = prof.dist2(d)
    for _ in range(iters - 1):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_old, fc_old, fd_old = c, fc, fd
        c = np.where(left, b - GOLDEN * (b - a), d)
        d = np.where(left, c_old, a + GOLDEN * (b - a))
        f_eval = prof.dist2(np.where(left, c, d))
        fc = np.where(left, f_eval, fd_old)
        fd = np.where(left, fc_old, f_eval)
    return a, b


def _golden_iters(rel_tol=BRACKET_RTOL):
    # (b - a) * GOLDEN**k <= rel_tol * (1 + b)  with b the initial bracket
    return int(np.ceil(np.log(rel_tol) / np.log(GOLDEN))) + 1


def cone_distances_from_profile(model, prof, gnorm):
    """Golden-section cone distances for a prebuilt profile.

    The bracket [0, 2||g|| / ||z1||] provably contains the minimizer
    (beyond it the scaled distance exceeds the value at t = 0); it is
    re-expanded if the argmin lands on the upper edge (boundary ties).
    """
    N = gnorm.size
    z1n = max(float(np.linalg.norm(model.z1)), 1e-300)
    a = np.zeros(N)
    b = 2.0 * gnorm / z1n + 1e-12
    iters = _golden_iters()
    if hasattr(prof, "tol"):
        prof.tol = prof.PROBE_TOL
    for expansion in range(MAX_EXPANSIONS + 1):
        lo, hi = _golden_vec(prof, a, b, iters)
        t_star = 0.5 * (lo + hi)
        edge = t_star > 0.999 * b
        if not np.any(edge):
            break
        if expansion == MAX_EXPANSIONS:
            prof.fails |= edge
            break
        b = np.where(edge, 4.0 * b, b)
        a = np.where(edge, 0.0, a)
    prof.bracket_width = hi - lo
    if hasattr(prof, "tol"):
        prof.tol = prof.FINAL_TOL
    d = np.sqrt(np.maximum(prof.dist2(t_star), 0.0))
    return d, t_star


def batch_cone_distances(model, G):
    """Per-sample distance to cone(subdiff f): min over t >= 0.

    Returns (distances, t_star, profile); the profile carries solver
    failure flags and iteration counts.
    """
    prof = _profile(model, G)
    gnorm = np.linalg.norm(G.reshape(G.shape[0], -1), axis=1)
    d, t_star = cone_distances_from_profile(model, prof, gnorm)
    return d, t_star, prof


def batch_scaled_distances(model, G, t, profile=None):
    """Distances to t * subdiff for a common scalar t (shared random numbers)."""
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    prof = profile if profile is not None else _profile(model, G)
    d = np.sqrt(np.maximum(prof.dist2(np.full(G.shape[0], float(t))), 0.0))
    return d, prof


def dist_cone(g, model):
    """Distance from a single point to cone(subdiff f), with diagnostics."""
    G = _as_block(model, g)
    d, t_star, prof = batch_cone_distances(model, G)
    u = None
    if model.family == "analysis_l1" and prof.warm is not None:
        u = prof.warm[:, 0].copy()
    return ConeDistanceResult(
        t_star=float(t_star[0]),
        distance=float(d[0]),
        inner_minimizer=u,
        iterations=int(prof.iterations),
        converged=not bool(prof.fails[0]),
        certificate_gap=float(prof.bracket_width[0]),
    )


# ---------------------------------------------------------------------------
# primal cross-check for the Gaussian width (l1 only)


def project_l1_ball(v, radius):
    """Euclidean projection onto the l1 ball of the given radius."""
    if radius < 0:
        raise InvalidParameterError("radius must be nonnegative")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, a.size + 1) > (css - radius))[0][-1]
    theta = (css[k] - radius) / (k + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def descent_width_sample(g, x, model, t_small, max_iter=800, dykstra_iters=60):
    """Primal sample of the width: sup <g, y> over the descent set.

    Maximizes over {||y|| <= 1} intersected with {||x + t y||_1 <= ||x||_1}
    by projected ascent, with the projection onto the intersection computed
    by Dykstra alternation.  l1 family only; other families use the dual
    path in the estimators.
    """
    if model.family != "l1":
        raise UnsupportedFamilyError("primal width sampling is defined for the l1 family")
    if t_small <= 0:
        raise InvalidParameterError("t_small must be positive")
    g = np.asarray(g, dtype=np.float64)
    xv = x.payload if hasattr(x, "payload") else np.asarray(x, dtype=np.float64)
    fx = np.abs(xv).sum()

    def project_feasible(v):
        y, p, q = v.copy(), np.zeros_like(v), np.zeros_like(v)
        for _ in range(dykstra_iters):
            w = y + p
            y1 = (project_l1_ball(xv + t_small * w, fx) - xv) / t_small
            p = w - y1
            w = y1 + q
            nrm = np.linalg.norm(w)
            y = w / nrm if nrm > 1.0 else w
            q = w - y
        return y

    gn = np.linalg.norm(g)
    if gn == 0.0:
        return 0.0
    y = project_feasible(g / gn)
    best = float(g @ y)
    step = 1.0 / gn
    for _ in range(max_iter):
        y = project_feasible(y + step * g)
        val = float(g @ y)
        if val > best:
            if val - best < 1e-9 * (1.0 + abs(best)):
                best = val
                break
            best = val
    return best
