"""Compiled inner loops. Condensed arrays follow scipy's pdist ordering."""

import numpy as np
from numba import njit
from numba.typed import List


@njit(cache=True)
def masked_pdist(X, valid):
    """Euclidean distances over jointly observed coordinates, rescaled by sqrt(D/v).

    Pairs with no jointly observed coordinate get NaN.
    """
    n, D = X.shape
    out = np.empty(n * (n - 1) // 2)
    idx = 0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            v = 0
            for q in range(D):
                if valid[i, q] and valid[j, q]:
                    diff = X[i, q] - X[j, q]
                    acc += diff * diff
                    v += 1
            if v == 0:
                out[idx] = np.nan
            elif v == D:
                out[idx] = np.sqrt(acc)
            else:
                out[idx] = np.sqrt(acc * D / v)
            idx += 1
    return out


@njit(cache=True)
def accumulate_power(total, comp, count, dist, inv_sigma, p, track_count):
    """Neumaier-compensated running sum of exp(-p d / sigma); NaN distances are skipped."""
    for idx in range(dist.shape[0]):
        d = dist[idx]
        if np.isnan(d):
            continue
        x = np.exp(-p * d * inv_sigma)
        s = total[idx]
        t = s + x
        if abs(s) >= abs(x):
            comp[idx] += (s - t) + x
        else:
            comp[idx] += (x - t) + s
        total[idx] = t
        if track_count:
            count[idx] += 1


@njit(cache=True)
def accumulate_min(best, dist, inv_sigma):
    """Running minimum of d / sigma; NaN distances are skipped (best starts at +inf)."""
    for idx in range(dist.shape[0]):
        d = dist[idx]
        if np.isnan(d):
            continue
        s = d * inv_sigma
        if s < best[idx]:
            best[idx] = s


@njit(cache=True)
def condensed_to_square(values, n, diag):
    out = np.empty((n, n))
    idx = 0
    for i in range(n):
        out[i, i] = diag
        for j in range(i + 1, n):
            out[i, j] = values[idx]
            out[j, i] = values[idx]
            idx += 1
    return out


@njit(cache=True)
def topk_rows(A, k, theiler=0):
    """Column indices of the k largest weights per row, skipping |i - j| <= theiler.

    The diagonal is always skipped. Ties at the cut-off go to the smaller
    column index. Returns an (n, k) array.
    """
    n = A.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row = A[i].copy()
        lo = max(0, i - theiler)
        hi = min(n, i + theiler + 1)
        for j in range(lo, hi):
            row[j] = -np.inf
        row[i] = -np.inf
        thr = -np.partition(-row, k - 1)[k - 1]
        m = 0
        for j in range(n):
            if row[j] > thr:
                out[i, m] = j
                m += 1
        for j in range(n):
            if m == k:
                break
            if row[j] == thr and j != i and abs(j - i) > theiler:
                out[i, m] = j
                m += 1
    return out


@njit(cache=True)
def _row_best(E, a, nbrs, i):
    best = -np.inf
    col = -1
    for j in nbrs[i]:
        g = 2.0 * (E[i, j] - a[i] * a[j])
        if g > best:
            best = g
            col = j
    return best, col


@njit(cache=True)
def _merge_sorted(x, y, skip1, skip2):
    out = np.empty(x.shape[0] + y.shape[0], dtype=np.int64)
    i = 0
    j = 0
    m = 0
    while i < x.shape[0] or j < y.shape[0]:
        if j >= y.shape[0] or (i < x.shape[0] and x[i] < y[j]):
            v = x[i]
            i += 1
        elif i >= x.shape[0] or y[j] < x[i]:
            v = y[j]
            j += 1
        else:
            v = x[i]
            i += 1
            j += 1
        if v != skip1 and v != skip2:
            out[m] = v
            m += 1
    return out[:m]


@njit(cache=True)
def greedy_modularity_merge(E, a):
    """CNM agglomeration on a normalized symmetric weight matrix (modified in place).

    Merges the adjacent pair with the largest gain 2(e_ij - a_i a_j) until no
    gain is positive. Ties go to the smallest (row, column); the merged
    community keeps the smaller index.
    """
    n = E.shape[0]
    active = np.ones(n, dtype=np.bool_)
    members = np.arange(n)
    nbrs = List()
    for i in range(n):
        nbrs.append(np.nonzero(E[i] > 0.0)[0].astype(np.int64))
    best_val = np.empty(n)
    best_col = np.empty(n, dtype=np.int64)
    for i in range(n):
        best_val[i], best_col[i] = _row_best(E, a, nbrs, i)
    single = np.empty(1, dtype=np.int64)
    while True:
        i = -1
        top = -np.inf
        for c in range(n):
            if active[c] and best_val[c] > top:
                top = best_val[c]
                i = c
        if i < 0 or not top > 0.0:
            break
        j = best_col[i]
        keep = min(i, j)
        drop = max(i, j)
        for c in nbrs[drop]:
            E[keep, c] += E[drop, c]
        for c in nbrs[drop]:
            E[c, keep] = E[keep, c]
            E[c, drop] = 0.0
        E[keep, keep] = 0.0
        E[keep, drop] = 0.0
        E[drop, keep] = 0.0
        for c in nbrs[drop]:
            E[drop, c] = 0.0
        a[keep] += a[drop]
        a[drop] = 0.0
        active[drop] = False
        best_val[drop] = -np.inf
        single[0] = keep
        for c in nbrs[drop]:
            if c != keep:
                nbrs[c] = _merge_sorted(nbrs[c], single, drop, -1)
        nbrs[keep] = _merge_sorted(nbrs[keep], nbrs[drop], keep, drop)
        nbrs[drop] = np.empty(0, dtype=np.int64)
        for c in range(n):
            if members[c] == drop:
                members[c] = keep
        best_val[keep], best_col[keep] = _row_best(E, a, nbrs, keep)
        # only the neighbors of the merged community see a changed gain; others
        # can still point at it only through a stale entry that is refreshed below
        for c in nbrs[keep]:
            if best_col[c] == keep or best_col[c] == drop:
                best_val[c], best_col[c] = _row_best(E, a, nbrs, c)
            else:
                g = 2.0 * (E[c, keep] - a[c] * a[keep])
                if g > best_val[c] or (g == best_val[c] and keep < best_col[c]):
                    best_val[c] = g
                    best_col[c] = keep
    return members


@njit(cache=True)
def _skew_rhs(s, out, a, b, c, sig, rho, beta, c_eff, inv_kappa):
    out[0, 0] = -s[0, 1] - s[0, 2]
    out[0, 1] = s[0, 0] + a * s[0, 1]
    out[0, 2] = b + s[0, 2] * (s[0, 0] - c)
    drive = c_eff * s[0, 0]
    for k in range(1, s.shape[0]):
        x, y, z = s[k, 0], s[k, 1], s[k, 2]
        out[k, 0] = (sig[k - 1] * (y - x) + drive) * inv_kappa
        out[k, 1] = (x * (rho[k - 1] - z) - y) * inv_kappa
        out[k, 2] = (x * y - beta[k - 1] * z) * inv_kappa


@njit(cache=True)
def rossler_lorenz_rk4(state0, a, b, c, sig, rho, beta, c_eff, kappa, dt,
                       n_samples, stride, n_transient):
    """RK4 for a Rössler driver (row 0) forcing Lorenz replicas (rows 1..N).

    Returns (n_samples, N+1, 3) and a flag that is False if the state blew up.
    """
    s = state0.copy()
    m = s.shape[0]
    k1 = np.empty_like(s)
    k2 = np.empty_like(s)
    k3 = np.empty_like(s)
    k4 = np.empty_like(s)
    tmp = np.empty_like(s)
    inv_kappa = 1.0 / kappa
    out = np.empty((n_samples, m, 3))
    total = n_transient + n_samples * stride
    i_out = 0
    for step in range(total):
        if step >= n_transient and (step - n_transient) % stride == 0:
            out[i_out] = s
            i_out += 1
            if i_out == n_samples:
                break
        _skew_rhs(s, k1, a, b, c, sig, rho, beta, c_eff, inv_kappa)
        for i in range(m):
            for j in range(3):
                tmp[i, j] = s[i, j] + 0.5 * dt * k1[i, j]
        _skew_rhs(tmp, k2, a, b, c, sig, rho, beta, c_eff, inv_kappa)
        for i in range(m):
            for j in range(3):
                tmp[i, j] = s[i, j] + 0.5 * dt * k2[i, j]
        _skew_rhs(tmp, k3, a, b, c, sig, rho, beta, c_eff, inv_kappa)
        for i in range(m):
            for j in range(3):
                tmp[i, j] = s[i, j] + dt * k3[i, j]
        _skew_rhs(tmp, k4, a, b, c, sig, rho, beta, c_eff, inv_kappa)
        ok = True
        for i in range(m):
            for j in range(3):
                s[i, j] += dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
                if not np.isfinite(s[i, j]):
                    ok = False
        if not ok:
            return out, False
    return out, True


@njit(cache=True)
def nan_std(values):
    """Population std over non-NaN entries; returns (std, n_valid)."""
    total = 0.0
    count = 0
    for v in values:
        if not np.isnan(v):
            total += v
            count += 1
    if count == 0:
        return np.nan, 0
    mean = total / count
    acc = 0.0
    for v in values:
        if not np.isnan(v):
            acc += (v - mean) * (v - mean)
    return np.sqrt(acc / count), count


@njit(cache=True)
def closest_returns(X, max_period, eps, excursion):
    """First close return of each point after the orbit has left its neighborhood.

    For every start t, scan P = 1, 2, ... and, once ||x(t+P) - x(t)|| has exceeded
    ``excursion``, take the first local minimum of that gap that is <= eps.
    Returns (period, gap) per start; period 0 means no return was found.
    """
    T, d = X.shape
    periods = np.zeros(T, dtype=np.int64)
    gaps = np.full(T, np.inf)
    for t in range(T - 1):
        left = False
        g2 = np.inf
        g1 = np.inf
        stop = min(max_period, T - 1 - t)
        for P in range(1, stop + 1):
            acc = 0.0
            for q in range(d):
                diff = X[t + P, q] - X[t, q]
                acc += diff * diff
            g = np.sqrt(acc)
            if not left:
                if g > excursion:
                    left = True
                g2 = np.inf
                g1 = g
                continue
            if g1 < g2 and g1 <= g and g1 <= eps:
                periods[t] = P - 1
                gaps[t] = g1
                break
            g2 = g1
            g1 = g
    return periods, gaps


@njit(cache=True)
def coherent_shadow_count(near, phase, P, slack):
    """Points in runs that stay near the orbit, advance ~1 phase sample per step, and last >= P."""
    count = 0
    run = 0
    for t in range(near.shape[0]):
        if not near[t]:
            if run >= P:
                count += run
            run = 0
            continue
        if run > 0:
            step = (phase[t] - phase[t - 1]) % P
            dev = min(abs(step - 1), abs(step - 1 - P))
            if dev > slack:
                if run >= P:
                    count += run
                run = 0
        run += 1
    if run >= P:
        count += run
    return count
