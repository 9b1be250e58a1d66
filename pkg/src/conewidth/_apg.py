"""Accelerated projected gradient kernel for box-constrained least squares.

Solves min_u ||r - B u||_2 subject to |u_i| <= radius, batched over the
columns of r (each column may carry its own radius).  This is the inner
solve behind scaled-subdifferential distances for analysis models and the
minimum-norm subgradient.  B may be dense or scipy.sparse.
"""

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f
        return wrap(a[0]) if a and callable(a[0]) else wrap

APG_MAX_ITER = 5000
APG_TOL = 1e-8
CHECK_EVERY = 5


@njit(cache=True)
def _tv_prox_sq(y, n, lam):
    """Squared norm of the 1-D total-variation proximal of y[:n].

    Direct taut-string pass (no iterations); lam = 0 degenerates to the
    identity.  Only the squared norm of the denoised signal is needed, so
    the output is accumulated instead of stored.
    """
    if n <= 0:
        return 0.0
    if lam <= 0.0:
        acc = 0.0
        for i in range(n):
            acc += y[i] * y[i]
        return acc
    # taut-string pass; commit loops run at least once (do-while semantics)
    sq = 0.0
    k = 0
    k0 = 0
    kminus = 0
    kplus = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    sq += vmin * vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k
                vmin = y[k]
                umin = lam
                umax = vmin + lam - vmax
            elif umax > 0.0:
                while True:
                    sq += vmax * vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k
                vmax = y[k]
                umax = -lam
                umin = vmax - lam - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    sq += vmin * vmin
                    k0 += 1
                    if k0 > k:
                        break
                return sq
        umin += y[k + 1] - vmin
        if umin < -lam:
            while True:
                sq += vmin * vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kminus = k
            kplus = k
            vmin = y[k]
            vmax = vmin + 2.0 * lam
            umin = lam
            umax = -lam
        else:
            umax += y[k + 1] - vmax
            if umax > lam:
                while True:
                    sq += vmax * vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kminus = k
                kplus = k
                vmax = y[k]
                vmin = vmax - 2.0 * lam
                umin = lam
                umax = -lam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (k - k0 + 1)
                    umin = lam
                if umax <= -lam:
                    kplus = k
                    vmax += (umax + lam) / (k - k0 + 1)
                    umax = -lam


@njit(cache=True)
def tv_scaled_dist2(Gt, t, sup, sgn, out):
    """Squared distance to t * subdiff for the finite-difference family.

    The box problem splits at the support rows; each piece is a 1-D TV
    proximal on boundary-adjusted data (the pinned values t * sign fold
    into the end entries), evaluated exactly.  Gt rows are samples.
    """
    N, n = Gt.shape
    s = sup.shape[0]
    buf = np.empty(n)
    for j in range(N):
        lam = t[j]
        total = 0.0
        start = 0
        for q in range(s + 1):
            end = sup[q] if q < s else n - 1      # inclusive column range
            m = end - start + 1
            for i in range(m):
                buf[i] = Gt[j, start + i]
            if q > 0:
                buf[0] += lam * sgn[q - 1]
            if q < s:
                buf[m - 1] -= lam * sgn[q]
            total += _tv_prox_sq(buf, m, lam)
            start = end + 1
        out[j] = total
    return out


@njit(cache=True)
def _fista_gram_csr(indptr, indices, data, Ht, rad, L, Ut, scale, tol, gap_tol,
                    max_iter):
    """Per-column FISTA with a CSR Gram matrix; rows of Ht/Ut are samples.

    Each column runs to its own gradient-map tolerance, so easy samples
    stop early.  Returns (iterations_total, converged_flags); Ut is
    updated in place.
    """
    N, d = Ut.shape
    step = 1.0 / L
    conv = np.zeros(N, dtype=np.bool_)
    total = 0
    y = np.empty(d)
    u_old = np.empty(d)
    grad = np.empty(d)
    for j in range(N):
        h = Ht[j]
        u = Ut[j]
        r = rad[j]
        limit = tol * scale[j]
        gap_limit = gap_tol * scale[j] * scale[j]
        for i in range(d):
            if u[i] > r:
                u[i] = r
            elif u[i] < -r:
                u[i] = -r
            y[i] = u[i]
            u_old[i] = u[i]
        t_mom = 1.0
        ok = False
        k = 0
        while k < max_iter:
            k += 1
            # grad = gram @ y - h
            for i in range(d):
                acc = 0.0
                for q in range(indptr[i], indptr[i + 1]):
                    acc += data[q] * y[indices[q]]
                grad[i] = acc - h[i]
            uphill = 0.0
            for i in range(d):
                v = y[i] - step * grad[i]
                if v > r:
                    v = r
                elif v < -r:
                    v = -r
                du = v - u_old[i]
                uphill += (y[i] - v) * du
                grad[i] = du           # reuse as the step difference
                u[i] = v
            t_eff = 1.0 if uphill > 0.0 else t_mom
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_eff * t_eff))
            coef = (t_eff - 1.0) / t_next
            for i in range(d):
                y[i] = u[i] + coef * grad[i]
                u_old[i] = u[i]
            t_mom = t_next
            if k % CHECK_EVERY == 1 or k == max_iter:
                gm2 = 0.0
                gap = 0.0
                for i in range(d):
                    acc = 0.0
                    for q in range(indptr[i], indptr[i + 1]):
                        acc += data[q] * u[indices[q]]
                    acc -= h[i]
                    v = u[i] - step * acc
                    if v > r:
                        v = r
                    elif v < -r:
                        v = -r
                    gm = (u[i] - v) * L
                    gm2 += gm * gm
                    gap += acc * u[i] + r * abs(acc)
                if np.sqrt(gm2) <= limit or 2.0 * gap <= gap_limit:
                    ok = True
                    break
        total += k
        conv[j] = ok
    return total, conv


def spectral_norm_sq(B, iters=80, seed=1234):
    """Squared spectral norm of B by power iteration on B^T B."""
    d = B.shape[1]
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = B.T @ (B @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam * 1.0000001  # tiny inflation keeps 1/L a valid step


def box_lstsq_gram(gram, H, radius, L, scale, u0=None, tol=APG_TOL,
                   gap_tol=None, max_iter=APG_MAX_ITER):
    """Batched FISTA on the Gram form: grad = gram @ u - h per column.

    Solves the same box problem as box_lstsq with gram = B^T B and
    H = B^T R precomputed; one matvec per iteration instead of two.
    Convergence: gradient-map norm below tol * scale, or the certified
    duality gap of the objective value below gap_tol * scale^2 (the gap
    criterion terminates in directions too flat for the gradient map).
    Returns (U, converged, iterations).
    """
    if gap_tol is None:
        gap_tol = 0.1 * tol
    d, N = H.shape
    rad = np.broadcast_to(np.asarray(radius, dtype=np.float64), (N,)).copy()
    if d == 0 or L == 0.0:
        return np.zeros((d, N)), np.ones(N, dtype=bool), 0
    step = 1.0 / L
    U = np.zeros((d, N)) if u0 is None else np.array(u0, dtype=np.float64, copy=True)
    np.clip(U, -rad, rad, out=U)
    done = np.zeros(N, dtype=bool)
    active = np.arange(N)
    Ua = U.copy()
    Ya = U.copy()
    Ha = H
    rada = rad
    scalea = np.broadcast_to(np.asarray(scale, dtype=np.float64), (N,)).copy()
    t_mom = np.ones(N)
    iters = 0
    for k in range(max_iter):
        iters = k + 1
        grad = gram @ Ya - Ha
        Unew = np.clip(Ya - step * grad, -rada, rada)
        dU = Unew - Ua
        restart = np.einsum("ij,ij->j", Ya - Unew, dU) > 0.0
        t_eff = np.where(restart, 1.0, t_mom)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_eff * t_eff))
        Ya = Unew + ((t_eff - 1.0) / t_next) * dU
        t_mom = t_next
        Ua = Unew
        if k % CHECK_EVERY == 0 or k == max_iter - 1:
            gradU = gram @ Unew - Ha
            gm = (Unew - np.clip(Unew - step * gradU, -rada, rada)) * L
            gap = 2.0 * (np.einsum("ij,ij->j", gradU, Unew)
                         + rada * np.abs(gradU).sum(axis=0))
            conv = (np.linalg.norm(gm, axis=0) <= tol * scalea) | \
                (gap <= gap_tol * scalea * scalea)
            if np.any(conv):
                idx = active[conv]
                U[:, idx] = Unew[:, conv]
                done[idx] = True
                keep = ~conv
                if not np.any(keep):
                    active = active[:0]
                    break
                if conv.sum() >= 0.25 * conv.size or keep.sum() <= 8:
                    active = active[keep]
                    Ua = np.ascontiguousarray(Unew[:, keep])
                    Ya = np.ascontiguousarray(Ya[:, keep])
                    Ha = np.ascontiguousarray(Ha[:, keep])
                    rada = rada[keep]
                    scalea = scalea[keep]
                    t_mom = t_mom[keep]
                else:
                    done[idx] = False
    if active.size:
        U[:, active] = Ua
        gradU = gram @ Ua - Ha
        gm = (Ua - np.clip(Ua - step * gradU, -rada, rada)) * L
        gap = 2.0 * (np.einsum("ij,ij->j", gradU, Ua)
                     + rada * np.abs(gradU).sum(axis=0))
        done[active] = (np.linalg.norm(gm, axis=0) <= tol * scalea) | \
            (gap <= gap_tol * scalea * scalea)
    return U, done, iters


def box_lstsq(B, R, radius, L, u0=None, tol=APG_TOL, max_iter=APG_MAX_ITER, Bt=None):
    """Batched FISTA for min_u ||r - B u|| over the box |u| <= radius.

    Parameters
    ----------
    B : (n, d) dense or sparse matrix
    R : (n, N) targets, one problem per column
    radius : scalar or (N,) per-column box radius (>= 0)
    L : Lipschitz constant, i.e. spectral_norm_sq(B)
    u0 : optional (d, N) warm start
    Bt : optional precomputed transpose (saves repeated sparse conversion)

    Uses gradient-based momentum restarts per column; convergence is the
    gradient-map norm falling below tol * (1 + ||r||), checked every few
    iterations to amortize the extra matvec pair.

    Returns (U, converged, iterations).
    """
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    n, N = R.shape
    d = B.shape[1] if B is not None else 0
    rad_full = np.broadcast_to(np.asarray(radius, dtype=np.float64), (N,)).copy()
    if d == 0 or L == 0.0:
        return np.zeros((d, N)), np.ones(N, dtype=bool), 0
    if Bt is None:
        Bt = B.T
    step = 1.0 / L
    U = np.zeros((d, N)) if u0 is None else np.array(u0, dtype=np.float64, copy=True)
    np.clip(U, -rad_full, rad_full, out=U)

    done = np.zeros(N, dtype=bool)
    active = np.arange(N)
    Ua = U.copy()
    Ya = U.copy()
    Ra = R.copy()
    rada = rad_full.copy()
    scalea = 1.0 + np.linalg.norm(R, axis=0)
    t_mom = np.ones(N)
    iters = 0
    for k in range(max_iter):
        iters = k + 1
        grad = Bt @ (B @ Ya - Ra)
        Unew = np.clip(Ya - step * grad, -rada, rada)
        dU = Unew - Ua
        # gradient restart: kill momentum where the step turned uphill
        restart = np.einsum("ij,ij->j", Ya - Unew, dU) > 0.0
        t_eff = np.where(restart, 1.0, t_mom)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_eff * t_eff))
        Ya = Unew + ((t_eff - 1.0) / t_next) * dU
        t_mom = t_next
        Ua = Unew
        if k % CHECK_EVERY == 0 or k == max_iter - 1:
            gradU = Bt @ (B @ Unew - Ra)
            gm = (Unew - np.clip(Unew - step * gradU, -rada, rada)) * L
            conv = np.linalg.norm(gm, axis=0) <= tol * scalea
            if np.any(conv):
                idx = active[conv]
                U[:, idx] = Unew[:, conv]
                done[idx] = True
                keep = ~conv
                if not np.any(keep):
                    active = active[:0]
                    break
                # shrink the batch only when it pays for the copies
                if conv.sum() >= 0.25 * conv.size or keep.sum() <= 8:
                    active = active[keep]
                    Ua = np.ascontiguousarray(Unew[:, keep])
                    Ya = np.ascontiguousarray(Ya[:, keep])
                    Ra = np.ascontiguousarray(Ra[:, keep])
                    rada = rada[keep]
                    scalea = scalea[keep]
                    t_mom = t_mom[keep]
                else:
                    done[idx] = False  # cheap to keep iterating them
    if active.size:
        U[:, active] = Ua
        done[active] = True  # values recorded; flags set by the final check below
        gradU = Bt @ (B @ U[:, active] - R[:, active])
        gm = (U[:, active] - np.clip(U[:, active] - step * gradU,
                                     -rad_full[active], rad_full[active])) * L
        done[active] = np.linalg.norm(gm, axis=0) <= tol * scalea
    return U, done, iters
