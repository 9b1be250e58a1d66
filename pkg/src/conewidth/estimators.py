"""Monte-Carlo estimators and error bounds for the phase transition.

Estimates the statistical dimension (mean squared cone distance), the
standard upper bound U_delta (common random numbers across the scaling),
the Gaussian width (dual path), and their paired difference, plus the
prior error estimate, the new error bound, and the beta ratio.

Sampling uses counter-based substreams derived from (seed, sample index),
so results are identical at any thread count; reductions run in fixed
index order.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import chi, norm

from .errors import DegenerateZ0Error, InvalidParameterError
from .geometry import (GOLDEN, _profile, cone_distances_from_profile,
                       descent_width_sample)
from .operators import RNG_DOMAIN_SAMPLES, philox_rng
from .subdifferentials import sup_norm_extent

DEFAULT_SAMPLES = 20_000
FAILURE_RATE_LIMIT = 1e-3
CHUNK_CLOSED_FORM = 4096
CHUNK_ANALYSIS = 2048
LAMBDA_ZETA_RANGE = (0.5, 20.0)
LAMBDA_ZETA_GRID = 60


@dataclass
class EstimateReport:
    quantity: str
    value: float
    std_error: float
    samples: int
    seed: int
    per_sample_solver_failures: int = 0

    @property
    def reliable(self):
        return self.per_sample_solver_failures <= FAILURE_RATE_LIMIT * self.samples

    def csv_row(self, descriptor=""):
        return [self.quantity, repr(float(self.value)), repr(float(self.std_error)),
                str(self.samples), str(self.seed),
                str(self.per_sample_solver_failures), descriptor]


@dataclass
class ErrorBoundReport:
    e_p: float
    e_p_numerator_interval: tuple
    e_p_denominator: float
    e_n: float
    lambda_star: float
    zeta_star: float
    gamma: float
    beta: float
    omega_used: float

    def verify(self, atol=1e-12):
        """Recompute gamma and the bound from the stored components."""
        g = gamma_constant(self.lambda_star, self.zeta_star)
        en = new_bound_value(self.omega_used, self.beta, self.lambda_star, self.zeta_star)
        return abs(g - self.gamma) <= atol * max(1.0, abs(self.gamma)) and \
            abs(en - self.e_n) <= atol * max(1.0, abs(self.e_n))


# ---------------------------------------------------------------------------
# sampling plumbing


def _chunk_size(model):
    return CHUNK_ANALYSIS if model.family == "analysis_l1" else CHUNK_CLOSED_FORM


def _sample_block(model, seed, start, count):
    shape = model.ambient_shape
    out = np.empty((count,) + tuple(shape))
    for i in range(count):
        out[i] = philox_rng(seed, stream=start + i,
                            domain=RNG_DOMAIN_SAMPLES).standard_normal(shape)
    return out


def build_profiles(model, samples, seed, threads=1):
    """Chunked distance profiles over the sample block, in index order."""
    if samples < 1:
        raise InvalidParameterError("samples must be >= 1")
    chunk = _chunk_size(model)
    spans = [(s, min(chunk, samples - s)) for s in range(0, samples, chunk)]

    def make(span):
        start, count = span
        G = _sample_block(model, seed, start, count)
        prof = _profile(model, G)
        prof.gnorm = np.linalg.norm(G.reshape(count, -1), axis=1)
        prof.count = count
        return prof

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(make, spans))
    return [make(s) for s in spans]


def cone_distances(model, profiles, threads=1):
    """Per-sample cone distances for prebuilt profiles (kept warm)."""
    def one(prof):
        return cone_distances_from_profile(model, prof, prof.gnorm)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, profiles))
    else:
        results = [one(p) for p in profiles]
    d = np.concatenate([r[0] for r in results])
    t = np.concatenate([r[1] for r in results])
    return d, t


def _failures(profiles):
    return int(sum(int(p.fails.sum()) for p in profiles))


def _mean_se(values):
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return float(values.mean()), se


def _scalar_golden_on_mean(profiles, t_max, squared=True, rel_tol=1e-6):
    """Common-random-number outer search: minimize the sample mean over t."""
    total = sum(p.count for p in profiles)

    def mean_at(t):
        acc = 0.0
        for p in profiles:
            if hasattr(p, "tol"):
                p.tol = p.PROBE_TOL
            d2 = p.dist2(np.full(p.count, t))
            acc += float(np.sum(d2 if squared else np.sqrt(np.maximum(d2, 0.0))))
        return acc / total

    a, b = 0.0, float(t_max)
    fa = mean_at(a)
    while mean_at(b * (1.0 - 1e-3)) > fa and b < t_max * 2 ** 20:
        b *= 2.0  # mean still decreasing at the edge; expand
    iters = int(np.ceil(np.log(rel_tol / (1.0 + b)) / np.log(GOLDEN))) + 1
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = mean_at(c), mean_at(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = mean_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = mean_at(d)
    return 0.5 * (a + b)


def _per_sample_at(profiles, t, squared=True):
    vals = []
    for p in profiles:
        if hasattr(p, "tol"):
            p.tol = p.FINAL_TOL
        d2 = p.dist2(np.full(p.count, t))
        vals.append(d2 if squared else np.sqrt(np.maximum(d2, 0.0)))
    return np.concatenate(vals)


def _global_tmax(model, profiles):
    z1n = max(float(np.linalg.norm(model.z1)), 1e-300)
    return 2.0 * max(float(p.gnorm.max()) for p in profiles) / z1n + 1e-12


# ---------------------------------------------------------------------------
# the estimators


def estimate_delta(model, samples=DEFAULT_SAMPLES, seed=0, threads=1):
    """Statistical dimension: mean squared distance to cone(subdiff f)."""
    profiles = build_profiles(model, samples, seed, threads)
    d, _ = cone_distances(model, profiles, threads)
    value, se = _mean_se(d * d)
    return EstimateReport("delta", value, se, samples, seed, _failures(profiles))


def estimate_width(model, samples=DEFAULT_SAMPLES, seed=0, threads=1):
    """Gaussian width of the descent cone within the unit ball (dual path)."""
    profiles = build_profiles(model, samples, seed, threads)
    d, _ = cone_distances(model, profiles, threads)
    value, se = _mean_se(d)
    return EstimateReport("omega", value, se, samples, seed, _failures(profiles))


def estimate_width_primal(model, x, samples=200, seed=0, t_small=0.01):
    """Primal width estimate for the l1 family (feasible-set ascent)."""
    vals = np.empty(samples)
    for i in range(samples):
        g = philox_rng(seed, stream=i,
                       domain=RNG_DOMAIN_SAMPLES).standard_normal(model.ambient_shape)
        vals[i] = descent_width_sample(g, x, model, t_small)
    value, se = _mean_se(vals)
    return EstimateReport("omega", value, se, samples, seed, 0)


def estimate_U_delta(model, samples=DEFAULT_SAMPLES, seed=0, threads=1):
    """Standard upper bound: min over t of the mean squared scaled distance.

    The same samples are used at every t (the sample-average objective is
    convex in t), so the outer search is a one-dimensional golden section.
    """
    profiles = build_profiles(model, samples, seed, threads)
    t_star = _scalar_golden_on_mean(profiles, _global_tmax(model, profiles), squared=True)
    d2 = _per_sample_at(profiles, t_star, squared=True)
    value, se = _mean_se(d2)
    return EstimateReport("U_delta", value, se, samples, seed, _failures(profiles))


def error_true(model, samples=DEFAULT_SAMPLES, seed=0, threads=1):
    """Paired estimate of E_delta = U_delta - delta with common random numbers."""
    profiles = build_profiles(model, samples, seed, threads)
    d_cone, _ = cone_distances(model, profiles, threads)
    t_star = _scalar_golden_on_mean(profiles, _global_tmax(model, profiles), squared=True)
    d2_fixed = _per_sample_at(profiles, t_star, squared=True)
    value, se = _mean_se(d2_fixed - d_cone * d_cone)
    return EstimateReport("E_delta", value, se, samples, seed, _failures(profiles))


def foygel_gap(model, samples=DEFAULT_SAMPLES, seed=0, threads=1):
    """inf_t E dist(g, t subdiff) minus the width estimate (paired samples)."""
    profiles = build_profiles(model, samples, seed, threads)
    d_cone, _ = cone_distances(model, profiles, threads)
    t_star = _scalar_golden_on_mean(profiles, _global_tmax(model, profiles), squared=False)
    d_fixed = _per_sample_at(profiles, t_star, squared=False)
    value, se = _mean_se(d_fixed - d_cone)
    return EstimateReport("foygel_gap", value, se, samples, seed, _failures(profiles))


def paired_estimates(model, samples=DEFAULT_SAMPLES, seed=0, threads=1,
                     include_gap=False):
    """delta, U_delta, omega, and E_delta from a single sample pass.

    All quantities share the same Gaussian draws, which makes the paired
    difference E_delta a low-variance estimate.  Returns a dict of
    EstimateReports keyed by quantity name.
    """
    profiles = build_profiles(model, samples, seed, threads)
    d_cone, _ = cone_distances(model, profiles, threads)
    fails = _failures(profiles)
    t_star = _scalar_golden_on_mean(profiles, _global_tmax(model, profiles), squared=True)
    d2_fixed = _per_sample_at(profiles, t_star, squared=True)
    out = {}
    for name, vals in (("delta", d_cone * d_cone), ("omega", d_cone),
                       ("U_delta", d2_fixed), ("E_delta", d2_fixed - d_cone * d_cone)):
        value, se = _mean_se(vals)
        out[name] = EstimateReport(name, value, se, samples, seed, fails)
    if include_gap:
        t_gap = _scalar_golden_on_mean(profiles, _global_tmax(model, profiles), squared=False)
        d_gap = _per_sample_at(profiles, t_gap, squared=False)
        value, se = _mean_se(d_gap - d_cone)
        out["foygel_gap"] = EstimateReport("foygel_gap", value, se, samples, seed, fails)
    return out


# ---------------------------------------------------------------------------
# closed-form cross-checks for the scaled-distance integral


def u_delta_l1_closed_form(n, s):
    """Scalar-integral value of U_delta for the l1 family.

    psi(t) = s (1 + t^2) + (n - s) * 2 * [(1 + t^2) Q(t) - t phi(t)] with Q
    the Gaussian upper tail; validated against the Monte-Carlo estimator.
    """
    def psi(t):
        return s * (1 + t * t) + (n - s) * 2.0 * ((1 + t * t) * norm.sf(t) - t * norm.pdf(t))

    res = minimize_scalar(psi, bounds=(0.0, 40.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun), float(res.x)


def u_delta_l12_closed_form(q, block_len, s):
    """Scalar-integral U_delta for the block family (chi tail integral)."""
    def tail(t):
        val, _ = quad(lambda u: (u - t) ** 2 * chi.pdf(u, block_len), t, np.inf)
        return val

    def psi(t):
        return s * (block_len + t * t) + (q - s) * tail(t)

    res = minimize_scalar(psi, bounds=(0.0, 60.0), method="bounded",
                          options={"xatol": 1e-9})
    return float(res.fun), float(res.x)


# ---------------------------------------------------------------------------
# error bounds


def error_prior(model, x=None):
    """Prior error estimate: Num_E / f(x / ||x||_2), using the certified
    lower end of the supremal extent.  Signals in the kernel of f get +inf."""
    sig = x if x is not None else model.signal
    if sig is None:
        raise InvalidParameterError("a signal is required for the prior bound")
    payload = sig.payload if hasattr(sig, "payload") else np.asarray(sig)
    denom = model.f(payload) / np.linalg.norm(payload)
    lower, _ = sup_norm_extent(model)
    if denom <= 1e-14 * max(1.0, lower):
        return np.inf
    return float(lower / denom)


def beta(model):
    """Ratio of the minimum-norm subgradient to the orthogonality point."""
    z0n = float(np.linalg.norm(model.z0))
    z1n = float(np.linalg.norm(model.z1))
    if z0n <= 1e-14 * max(1.0, z1n):
        raise DegenerateZ0Error("z0 is numerically zero")
    return z1n / z0n


def gamma_constant(lam, zeta):
    feas = 1.0 - 4.0 * math.exp(-lam * lam / 2.0) - 2.0 * math.exp(-zeta * zeta / 2.0)
    if feas <= 0.0:
        return np.inf
    return math.sqrt(72.0) * math.sqrt(math.log(3.0 / feas))


def new_bound_value(omega, beta_val, lam, zeta):
    g = gamma_constant(lam, zeta)
    if not np.isfinite(g):
        return np.inf
    return ((4.0 * lam * beta_val + g) * omega
            + g * (zeta + 2.0 * lam * beta_val)
            + 4.0 * lam * lam * beta_val * beta_val)


def optimize_new_bound(omega, beta_val):
    """Minimize the new bound over (lambda, zeta): coarse log grid over
    [0.5, 20]^2, then Nelder-Mead refinement.  Returns (value, lam, zeta)."""
    grid = np.exp(np.linspace(np.log(LAMBDA_ZETA_RANGE[0]),
                              np.log(LAMBDA_ZETA_RANGE[1]), LAMBDA_ZETA_GRID))
    best_val, best_pt = np.inf, None
    for lam in grid:
        for zeta in grid:
            v = new_bound_value(omega, beta_val, lam, zeta)
            if v < best_val:
                best_val, best_pt = v, (lam, zeta)
    if best_pt is None:
        raise InvalidParameterError("no feasible (lambda, zeta) point on the grid")
    res = minimize(lambda p: new_bound_value(omega, beta_val, p[0], p[1]), best_pt,
                   method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
    lam, zeta = (res.x if res.fun < best_val else best_pt)
    return new_bound_value(omega, beta_val, lam, zeta), float(lam), float(zeta)


def error_new(model, omega_report, x=None):
    """New error bound, optimized over the two concentration levels.

    Infeasible (lambda, zeta) points -- nonpositive probability margin --
    are excluded by the optimizer.
    """
    if omega_report.quantity != "omega":
        raise InvalidParameterError("omega_report must carry an omega estimate")
    b = beta(model)
    if not np.isfinite(b):
        raise InvalidParameterError("beta must be finite")
    omega = float(omega_report.value)
    e_n, lam, zeta = optimize_new_bound(omega, b)
    num_interval = sup_norm_extent(model)
    sig = x if x is not None else model.signal
    payload = sig.payload if hasattr(sig, "payload") else np.asarray(sig)
    denom = model.f(payload) / np.linalg.norm(payload)
    e_p = np.inf if denom <= 1e-14 * max(1.0, num_interval[0]) else num_interval[0] / denom
    return ErrorBoundReport(
        e_p=float(e_p), e_p_numerator_interval=num_interval,
        e_p_denominator=float(denom), e_n=float(e_n),
        lambda_star=float(lam), zeta_star=float(zeta),
        gamma=float(gamma_constant(lam, zeta)), beta=float(b),
        omega_used=omega)


def measurement_bounds(delta, n, eta):
    """Measurement counts bracketing the transition at failure tolerance eta."""
    if not (0.0 < eta <= 1.0):
        raise InvalidParameterError("eta must lie in (0, 1]")
    w = math.sqrt(8.0 * math.log(4.0 / eta) * n)
    return delta + w, max(delta - w, 0.0)
