"""Analysis operators and the shared linear-algebra kit.

Operator families: identity, 1-D finite difference, two random ensembles
(an orthogonally-factored one with prescribed rank and an i.i.d. Gaussian
one), and undecimated Daubechies-8 wavelet frames.  All operators are
materialized dense matrices; SVDs are computed lazily and cached.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError, InvalidRankError

# Daubechies-8 scaling (lowpass) coefficients, extremal phase, unit norm.
DAUBECHIES8_LOWPASS = np.array([
    0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
    -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
    0.032883011666982945, -0.010597401784997278,
])

WAVELET_BANDS = ("all", "highpass_only", "lowpass_only")


RNG_DOMAIN_OPERATORS = 1
RNG_DOMAIN_SIGNALS = 2
RNG_DOMAIN_SAMPLES = 3
RNG_DOMAIN_RESTARTS = 4
RNG_DOMAIN_TRIALS = 5
RNG_DOMAIN_HARNESS = 6


def philox_rng(seed, stream=0, domain=0):
    """Counter-based generator: independent streams for (seed, domain, stream).

    The domain tag keeps different consumers of the same user seed (operator
    entries, signal draws, Monte-Carlo samples, ...) on disjoint counter
    ranges, so reusing one seed across them never aliases draws.
    """
    return np.random.Generator(np.random.Philox(
        key=np.uint64(seed), counter=[0, 0, int(domain), int(stream)]))


@dataclass
class AnalysisOperator:
    """A p x n analysis operator with a lazily cached SVD.

    The condition number is reported as inf when the numerical rank is
    deficient (sigma_min at or below the rank threshold).
    """

    entries: np.ndarray
    kind: str = "custom"
    seed: int = 0
    _svd: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or min(self.entries.shape) < 1:
            raise InvalidDimensionError("operator must be a p x n matrix with p, n >= 1")
        if not np.all(np.isfinite(self.entries)):
            raise InvalidParameterError("operator entries must be finite")
        self.entries.setflags(write=False)

    @property
    def p(self):
        return self.entries.shape[0]

    @property
    def n(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def svd(self):
        """Economy SVD (U, sigma, Vt), computed once and cached."""
        if self._svd is None:
            U, s, Vt = np.linalg.svd(self.entries, full_matrices=False)
            self._svd = (U, s, Vt)
        return self._svd

    def singular_values(self):
        return self.svd()[1]

    def rank_threshold(self):
        s = self.singular_values()
        return max(self.p, self.n) * (s[0] if s.size else 0.0) * 1e-12

    def rank(self):
        s = self.singular_values()
        return int(np.count_nonzero(s > self.rank_threshold()))

    def sigma_max(self):
        return float(self.singular_values()[0])

    def sigma_min(self):
        return float(self.singular_values()[-1])

    def condition_number(self):
        s = self.singular_values()
        if s[-1] <= self.rank_threshold():
            return np.inf
        return float(s[0] / s[-1])

    def rows(self, idx):
        """Submatrix of the rows indexed by idx (a plain ndarray view/copy)."""
        idx = np.asarray(idx, dtype=int)
        return self.entries[idx, :]

    def null_basis(self):
        """Orthonormal basis of null(Omega), shape (n, n - rank)."""
        _, s, Vt = self.svd()
        r = self.rank()
        basis = Vt[r:, :].T.copy()
        if self.p < self.n and Vt.shape[0] < self.n:
            # economy SVD misses the trailing right factors; recompute full
            _, _, Vt_full = np.linalg.svd(self.entries, full_matrices=True)
            basis = Vt_full[r:, :].T.copy()
        return basis


def make_identity(n):
    if n < 1:
        raise InvalidDimensionError("n must be >= 1")
    return AnalysisOperator(np.eye(n), kind="identity")


def make_finite_difference(n):
    """The (n-1) x n forward-difference matrix: row i is +1 at i, -1 at i+1."""
    if n < 2:
        raise InvalidDimensionError("finite difference needs n >= 2")
    m = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    m[idx, idx] = 1.0
    m[idx, idx + 1] = -1.0
    return AnalysisOperator(m, kind="finite_difference")


def make_random1(p, n, r, diag=None, seed=0):
    """Orthogonally-factored random operator with exactly r unit singular values.

    Draws a p x n Gaussian matrix, keeps its singular factors, replaces the
    singular values by r ones, and optionally scales the rows by a diagonal.
    With diag absent, r = p <= n gives an operator with orthonormal rows.
    """
    if not (1 <= r <= min(p, n)):
        raise InvalidRankError(f"rank r={r} outside [1, {min(p, n)}]")
    if diag is not None:
        diag = np.asarray(diag, dtype=np.float64)
        if diag.shape != (p,):
            raise InvalidParameterError("diag must have length p")
        if np.any(diag < 0):
            raise InvalidParameterError("diag entries must be nonnegative")
    g = philox_rng(seed, domain=RNG_DOMAIN_OPERATORS).standard_normal((p, n))
    U, _, Vt = np.linalg.svd(g, full_matrices=False)
    omega = U[:, :r] @ Vt[:r, :]
    if diag is not None:
        omega = diag[:, None] * omega
    return AnalysisOperator(omega, kind="random1", seed=seed)


def make_random2(p, n, sigma, seed=0):
    """i.i.d. Gaussian operator with entry standard deviation sigma."""
    if sigma <= 0:
        raise InvalidParameterError("sigma must be positive")
    g = sigma * philox_rng(seed, domain=RNG_DOMAIN_OPERATORS).standard_normal((p, n))
    return AnalysisOperator(g, kind="random2", seed=seed)


def _circulant_convolution_rows(filt, n):
    """n x n matrix whose row i computes sum_k filt[k] * x[(i + k) mod n]."""
    base = np.zeros(n)
    for k, v in enumerate(np.asarray(filt, dtype=np.float64)):
        base[k % n] += v
    j = np.arange(n)
    rows = np.empty((n, n))
    for i in range(n):
        rows[i] = base[(j - i) % n]
    return rows


def _upsample_filter(filt, level):
    """Insert 2**(level-1) - 1 zeros between taps (a trous scheme)."""
    if level == 1:
        return np.asarray(filt, dtype=np.float64)
    gap = 2 ** (level - 1)
    out = np.zeros((len(filt) - 1) * gap + 1)
    out[::gap] = filt
    return out


def make_wavelet(n, levels, bands="all"):
    """Undecimated Daubechies-8 analysis matrix with periodic boundaries.

    Band selection controls the row count: 'all' yields (levels + 1) * n
    rows (one highpass block per level plus the final lowpass block),
    'highpass_only' yields levels * n rows, 'lowpass_only' yields n rows.
    """
    if n < 8 or (n & (n - 1)) != 0:
        raise InvalidDimensionError("n must be a power of two (and >= 8)")
    if levels < 1:
        raise InvalidParameterError("levels must be >= 1")
    if bands not in WAVELET_BANDS:
        raise InvalidParameterError(f"bands must be one of {WAVELET_BANDS}")
    low = DAUBECHIES8_LOWPASS
    high = np.array([(-1.0) ** k * low[len(low) - 1 - k] for k in range(len(low))])
    highpass_blocks = []
    cascade = np.eye(n)
    for lvl in range(1, levels + 1):
        h_mat = _circulant_convolution_rows(_upsample_filter(high, lvl), n)
        l_mat = _circulant_convolution_rows(_upsample_filter(low, lvl), n)
        highpass_blocks.append(h_mat @ cascade)
        cascade = l_mat @ cascade
    if bands == "lowpass_only":
        stacked = cascade
    elif bands == "highpass_only":
        stacked = np.vstack(highpass_blocks)
    else:
        stacked = np.vstack(highpass_blocks + [cascade])
    return AnalysisOperator(stacked, kind="wavelet")


def null_projector_of_matrix(mat, n=None):
    """Orthogonal projector onto null(mat): P = I - pinv(M) M.

    An empty row set projects onto all of R^n (identity).  Rank is decided
    by the same threshold rule used for operators.
    """
    if mat is None or (hasattr(mat, "shape") and mat.shape[0] == 0):
        if n is None:
            raise InvalidParameterError("ambient dimension required for empty row set")
        return np.eye(n)
    mat = np.asarray(mat, dtype=np.float64)
    n = mat.shape[1]
    U, s, Vt = np.linalg.svd(mat, full_matrices=False)
    tol = max(mat.shape) * (s[0] if s.size else 0.0) * 1e-12
    r = int(np.count_nonzero(s > tol))
    P = np.eye(n) - Vt[:r, :].T @ Vt[:r, :]
    return 0.5 * (P + P.T)


def null_space_projector(omega, rows):
    """Projector onto the null space of the rows of omega indexed by `rows`."""
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        return np.eye(omega.n)
    if rows.min() < 0 or rows.max() >= omega.p:
        raise InvalidParameterError("row indices out of range")
    return null_projector_of_matrix(omega.rows(rows), n=omega.n)


def save_operator(op, path):
    """Write <path>.bin (column-major float64) and <path>.json (header)."""
    base, _ = os.path.splitext(path)
    header = {"kind": op.kind, "p": op.p, "n": op.n, "seed": int(op.seed)}
    with open(base + ".json", "w") as f:
        json.dump(header, f, sort_keys=True)
    np.asfortranarray(op.entries).tofile(base + ".bin")
    return base


def load_operator(path):
    base, _ = os.path.splitext(path)
    with open(base + ".json") as f:
        header = json.load(f)
    raw = np.fromfile(base + ".bin", dtype=np.float64)
    entries = raw.reshape((header["p"], header["n"]), order="F")
    return AnalysisOperator(entries, kind=header["kind"], seed=header["seed"])
