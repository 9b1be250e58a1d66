"""Ground-truth signal generators.

Covers the plain structured families (sparse, block-sparse, low-rank) and
the analysis-sparse constructions: baseline cosparse signals, the failure
signals that push the prior error estimate up (null-space shifts and
minimum-singular-vector shifts), and the tall-operator pair constructions.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateSignalError, InfeasibleSupportError,
                     InvalidParameterError, ModeInfeasibleError)
from .operators import (RNG_DOMAIN_SIGNALS, AnalysisOperator,
                        null_projector_of_matrix, philox_rng)

REDRAW_CAP = 50
DEFAULT_SUPPORT_RTOL = 1e-8

FAMILIES = ("sparse", "block_sparse", "low_rank", "analysis_sparse")


@dataclass
class StructuredSignal:
    """A ground-truth vector (or matrix) with its structure metadata.

    support holds indices in the analysis domain for analysis_sparse
    signals and coordinate indices for sparse ones.  block_partition is a
    (q, block_len) index array for the block family.  extras carries
    generator-specific diagnostics (e.g. the minimum singular value used by
    the adversarial constructions).
    """

    payload: np.ndarray
    family: str
    support: np.ndarray = None
    block_partition: np.ndarray = None
    rank: int = 0
    support_tolerance: float = DEFAULT_SUPPORT_RTOL
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown family {self.family!r}")
        self.payload = np.asarray(self.payload, dtype=np.float64)
        if not np.any(self.payload):
            raise DegenerateSignalError("signal must be nonzero")
        if self.support is not None:
            self.support = np.asarray(self.support, dtype=int)

    @property
    def n(self):
        return self.payload.size

    def active_blocks(self):
        norms = np.linalg.norm(self.payload[self.block_partition], axis=1)
        return np.nonzero(norms > 1e-12 * max(norms.max(), 1e-300))[0]


def analysis_support(omega, x, rtol=DEFAULT_SUPPORT_RTOL):
    """Indices where |Omega x| exceeds rtol * max|Omega x|."""
    ox = omega.entries @ x
    scale = np.abs(ox).max()
    if scale == 0:
        raise DegenerateSignalError("Omega x is identically zero")
    return np.nonzero(np.abs(ox) > rtol * scale)[0]


def gen_simple_ground_truth(family, dims, sparsity_or_rank, seed=0):
    """Plain structured signals with Gaussian amplitudes.

    sparse: dims = n, exactly s nonzeros at uniform positions.
    block_sparse: dims = (q, block_len), s active blocks.
    low_rank: dims = (n1, n2), product of two rank-r Gaussian factors.
    """
    rng = philox_rng(seed, domain=RNG_DOMAIN_SIGNALS)
    amp = np.sqrt(1000.0)
    if family == "sparse":
        n, s = int(dims), int(sparsity_or_rank)
        if not (1 <= s <= n):
            raise InvalidParameterError("need 1 <= s <= n (zero vector is rejected)")
        x = np.zeros(n)
        pos = rng.choice(n, size=s, replace=False)
        x[pos] = amp * rng.standard_normal(s)
        while not np.all(x[pos]):  # Gaussian draw of exactly 0 is measure zero
            x[pos] = amp * rng.standard_normal(s)
        return StructuredSignal(x, "sparse", support=np.sort(pos), seed=seed)
    if family == "block_sparse":
        q, blen = map(int, dims)
        s = int(sparsity_or_rank)
        if not (1 <= s <= q):
            raise InvalidParameterError("need 1 <= s <= q active blocks")
        n = q * blen
        partition = np.arange(n).reshape(q, blen)
        x = np.zeros(n)
        active = rng.choice(q, size=s, replace=False)
        for b in active:
            x[partition[b]] = amp * rng.standard_normal(blen)
        return StructuredSignal(x, "block_sparse", block_partition=partition, seed=seed)
    if family == "low_rank":
        n1, n2 = map(int, dims)
        r = int(sparsity_or_rank)
        if not (1 <= r <= min(n1, n2)):
            raise InvalidParameterError("need 1 <= r <= min(n1, n2)")
        X = rng.standard_normal((n1, r)) @ rng.standard_normal((r, n2))
        return StructuredSignal(X, "low_rank", rank=r, seed=seed)
    raise InvalidParameterError(f"gen_simple_ground_truth does not handle {family!r}")


def gen_cosparse(omega, s, seed=0, rtol=DEFAULT_SUPPORT_RTOL):
    """Baseline cosparse signal: x = P_null(Omega_Sbar) w, normalized.

    Draws the support uniformly among size-s subsets and redraws whenever
    Omega_S P_null(Omega_Sbar) is the zero operator; fails loudly after 50
    redraws.  The output is scaled so max_{i in S} |(Omega x)_i| = 1 and
    the realized support is recorded from Omega x.
    """
    p, n = omega.p, omega.n
    if not (1 <= s <= p):
        raise InvalidParameterError("need 1 <= s <= p")
    rng = philox_rng(seed, domain=RNG_DOMAIN_SIGNALS)
    for _ in range(REDRAW_CAP):
        S = np.sort(rng.choice(p, size=s, replace=False))
        mask = np.ones(p, dtype=bool)
        mask[S] = False
        P = null_projector_of_matrix(omega.entries[mask], n=n)
        restricted = omega.entries[S] @ P
        if np.linalg.norm(restricted) <= 1e-10 * max(np.linalg.norm(omega.entries[S]), 1e-300):
            continue
        for _ in range(REDRAW_CAP):
            x = P @ rng.standard_normal(n)
            ox = omega.entries @ x
            peak = np.abs(ox[S]).max()
            if peak > 1e-12 * max(np.abs(ox).max(), 1e-300):
                x /= peak
                sig = StructuredSignal(x, "analysis_sparse", seed=seed,
                                       support_tolerance=rtol)
                sig.support = analysis_support(omega, x, rtol)
                return sig
        break
    raise InfeasibleSupportError(f"no feasible support of size {s} after {REDRAW_CAP} draws")


def gen_failure_signal(omega, S, mode, alpha, seed=0, rtol=DEFAULT_SUPPORT_RTOL):
    """Signals that make the prior error estimate blow up.

    null_shift:     x = P_null(Omega_Sbar) w + alpha * P_null(Omega) c
    singular_shift: x = P_null(Omega_Sbar) (w + alpha * v_r), with v_r the
                    right singular vector of Omega_S P_null(Omega_Sbar) at
                    its smallest nonzero singular value.
    """
    S = np.asarray(S, dtype=int)
    p, n = omega.p, omega.n
    mask = np.ones(p, dtype=bool)
    mask[S] = False
    P = null_projector_of_matrix(omega.entries[mask], n=n)
    rng = philox_rng(seed, domain=RNG_DOMAIN_SIGNALS)
    w = rng.standard_normal(n)
    extras = {"alpha": float(alpha), "mode": mode}
    if mode == "null_shift":
        basis = omega.null_basis()
        if basis.shape[1] == 0:
            raise ModeInfeasibleError("null_shift needs a nontrivial null(Omega)")
        c = rng.standard_normal(n)
        shift = basis @ (basis.T @ c)
        x = P @ w + alpha * shift
    elif mode == "singular_shift":
        restricted = omega.entries[S] @ P
        U, sv, Vt = np.linalg.svd(restricted, full_matrices=False)
        tol = max(restricted.shape) * (sv[0] if sv.size else 0.0) * 1e-12
        nz = np.nonzero(sv > tol)[0]
        if nz.size == 0:
            raise ModeInfeasibleError("Omega_S P_null(Omega_Sbar) is the zero operator")
        r = nz[-1]
        extras["sigma_min"] = float(sv[r])
        extras["u_min"] = U[:, r].copy()
        x = P @ (w + alpha * Vt[r, :])
    else:
        raise InvalidParameterError("mode must be 'null_shift' or 'singular_shift'")
    sig = StructuredSignal(x, "analysis_sparse", seed=seed,
                           support_tolerance=rtol, extras=extras)
    sig.support = analysis_support(omega, x, rtol)
    return sig


def gen_tall_pair(abs_S, abs_Sbar, n, sigma, seed=0):
    """Full-rank tall operator with ||Omega x||_1 / ||x||_2 = sigma * ||u_n||_1.

    Omega stacks A = U diag(1, ..., 1, sigma) V^T (abs_S x n) on top of the
    first abs_Sbar right factors transposed; x is the last right factor.
    """
    if not (abs_S > n and 0 < abs_Sbar < n and sigma > 0):
        raise InvalidParameterError("need abs_S > n, 0 < abs_Sbar < n, sigma > 0")
    rng = philox_rng(seed, domain=RNG_DOMAIN_SIGNALS)
    U = np.linalg.qr(rng.standard_normal((abs_S, n)))[0]
    V = np.linalg.qr(rng.standard_normal((n, n)))[0]
    d = np.ones(n)
    d[-1] = sigma
    A = (U * d) @ V.T
    B = V[:, :abs_Sbar].T
    omega = AnalysisOperator(np.vstack([A, B]), kind="custom", seed=seed)
    x = V[:, -1].copy()
    sig = StructuredSignal(x, "analysis_sparse", seed=seed,
                           extras={"sigma": float(sigma),
                                   "u_last_l1": float(np.abs(U[:, -1]).sum())})
    sig.support = analysis_support(omega, x)
    return omega, sig


def gen_random1_tall_adversarial(abs_S, abs_Sbar, n, diag1, diag2, alpha, seed=0):
    """Tall orthogonally-factored pair whose prior-bound denominator shrinks.

    Omega_S = D1 U[S, :n] V^H and Omega_Sbar = D2 U[Sbar, :n] V^H with U
    p x p and V n x n orthogonal; x = P_null(U[Sbar,:n] V^H)(w + alpha v'_min).
    Shrinking diag1 or growing alpha inflates the prior error estimate.
    """
    p = abs_S + abs_Sbar
    if p <= n:
        raise InvalidParameterError("construction is for tall operators (p > n)")
    diag1 = np.asarray(diag1, dtype=np.float64)
    diag2 = np.asarray(diag2, dtype=np.float64)
    if diag1.shape != (abs_S,) or diag2.shape != (abs_Sbar,):
        raise InvalidParameterError("diag1/diag2 sizes must match abs_S/abs_Sbar")
    if np.any(diag1 < 0) or np.any(diag2 < 0):
        raise InvalidParameterError("diagonal entries must be nonnegative")
    rng = philox_rng(seed, domain=RNG_DOMAIN_SIGNALS)
    U = np.linalg.qr(rng.standard_normal((p, p)))[0]
    V = np.linalg.qr(rng.standard_normal((n, n)))[0]
    US = U[:abs_S, :n] @ V.T
    USbar = U[abs_S:, :n] @ V.T
    omega = AnalysisOperator(np.vstack([diag1[:, None] * US, diag2[:, None] * USbar]),
                             kind="custom", seed=seed)
    P = null_projector_of_matrix(USbar, n=n)
    restricted = US @ P
    Ur, sv, Vt = np.linalg.svd(restricted, full_matrices=False)
    tol = max(restricted.shape) * sv[0] * 1e-12
    nz = np.nonzero(sv > tol)[0]
    if nz.size == 0:
        raise ModeInfeasibleError("Omega_S P_null(Omega_Sbar) is the zero operator")
    r = nz[-1]
    w = rng.standard_normal(n)
    x = P @ (w + alpha * Vt[r, :])
    sig = StructuredSignal(x, "analysis_sparse", seed=seed,
                           extras={"sigma_min": float(sv[r]),
                                   "u_min": Ur[:, r].copy(),
                                   "alpha": float(alpha)})
    sig.support = analysis_support(omega, x)
    return omega, sig


def save_signal(sig, path):
    """Binary payload plus JSON metadata, mirroring operator serialization."""
    base, _ = os.path.splitext(path)
    meta = {
        "family": sig.family,
        "shape": list(sig.payload.shape),
        "support": None if sig.support is None else sig.support.tolist(),
        "rank": int(sig.rank),
        "seed": int(sig.seed),
        "support_tolerance": sig.support_tolerance,
        "block_shape": None if sig.block_partition is None else list(sig.block_partition.shape),
    }
    with open(base + ".json", "w") as f:
        json.dump(meta, f, sort_keys=True)
    np.asfortranarray(sig.payload).tofile(base + ".bin")
    return base


def load_signal(path):
    base, _ = os.path.splitext(path)
    with open(base + ".json") as f:
        meta = json.load(f)
    payload = np.fromfile(base + ".bin", dtype=np.float64).reshape(meta["shape"], order="F")
    sig = StructuredSignal(
        payload, meta["family"],
        support=None if meta["support"] is None else np.asarray(meta["support"]),
        rank=meta["rank"], support_tolerance=meta["support_tolerance"],
        seed=meta["seed"])
    if meta["block_shape"] is not None:
        sig.block_partition = np.arange(int(np.prod(meta["block_shape"]))).reshape(meta["block_shape"])
    return sig
