"""Compiled inner loops of the block coordinate descent.

Conventions shared by every kernel:

* ``X`` is ``n x p`` (Fortran order, so columns are contiguous).
* ``eta`` is ``n x G``: the current linear predictor of every model.
* ``w``/``resid`` are ``n``-vectors belonging to the model being swept.
  ``resid`` is the gradient residual of the quadratic surrogate,
  ``z - p_ref - w * (eta - eta_ref)``, where ``*_ref`` are the values at
  the last refresh of the weights.
"""

import math

import numpy as np
from numba import njit

P_CLIP = 1e-5
W_MIN = 1e-5

STATUS_CONVERGED = 0
STATUS_MAX_SWEEPS = 1
STATUS_STALLED = 2


@njit(cache=True, nogil=True)
def soft(v, t):
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


@njit(cache=True, nogil=True)
def refresh(eta_g, z, w, resid):
    """Recompute probabilities, clamped IRLS weights and the residual."""
    n = eta_g.shape[0]
    for i in range(n):
        e = eta_g[i]
        if e >= 0.0:
            pr = 1.0 / (1.0 + math.exp(-e))
        else:
            ex = math.exp(e)
            pr = ex / (1.0 + ex)
        resid[i] = z[i] - pr
        pc = min(max(pr, P_CLIP), 1.0 - P_CLIP)
        w[i] = max(pc * (1.0 - pc), W_MIN)


@njit(cache=True, nogil=True)
def intercept_step(w, resid):
    sr = 0.0
    sw = 0.0
    for i in range(w.shape[0]):
        sr += resid[i]
        sw += w[i]
    return sr / sw


@njit(cache=True, nogil=True)
def coef_candidate(xj, w, resid, old, others_abs, n, alpha, lam_s, lam_d):
    """Minimizer of the 1-D surrogate in one coefficient, others held fixed."""
    xw2 = 0.0
    r = 0.0
    for i in range(xj.shape[0]):
        t = xj[i] * w[i]
        xw2 += t * xj[i]
        r += xj[i] * resid[i]
    thr = alpha * lam_s + 0.5 * lam_d * others_abs
    return soft((r + old * xw2) / n, thr) / (xw2 / n + (1.0 - alpha) * lam_s)


@njit(cache=True, nogil=True)
def others_abs_sum(B, j, g):
    s = 0.0
    for h in range(B.shape[1]):
        if h != g:
            s += abs(B[j, h])
    return s


@njit(cache=True, nogil=True)
def apply_delta(xj, w, resid, eta_g, delta):
    for i in range(xj.shape[0]):
        d = xj[i] * delta
        eta_g[i] += d
        resid[i] -= w[i] * d


@njit(cache=True, nogil=True)
def model_sweep(X, z, eta, b0, B, g, idx, alpha, lam_s, lam_d, damp, w, resid):
    """One pass over (intercept, coefficients in ``idx``) of model ``g``."""
    n = X.shape[0]
    eta_g = eta[:, g]
    refresh(eta_g, z, w, resid)
    d0 = damp * intercept_step(w, resid)
    if d0 != 0.0:
        b0[g] += d0
        for i in range(n):
            eta_g[i] += d0
            resid[i] -= w[i] * d0
    for k in range(idx.shape[0]):
        j = idx[k]
        old = B[j, g]
        cand = coef_candidate(X[:, j], w, resid, old, others_abs_sum(B, j, g),
                              n, alpha, lam_s, lam_d)
        new = old + damp * (cand - old)
        if new != old:
            B[j, g] = new
            apply_delta(X[:, j], w, resid, eta_g, new - old)


@njit(cache=True, nogil=True)
def loss_g(y, eta_g):
    n = y.shape[0]
    s = 0.0
    for i in range(n):
        m = y[i] * eta_g[i]
        if m > 0.0:
            s += math.log1p(math.exp(-m))
        else:
            s += -m + math.log1p(math.exp(m))
    return s / n


@njit(cache=True, nogil=True)
def objective(X, y, eta, B, alpha, lam_s, lam_d):
    p, G = B.shape
    total = 0.0
    for g in range(G):
        total += loss_g(y, eta[:, g])
    l1 = 0.0
    l2 = 0.0
    div = 0.0
    for j in range(p):
        sa = 0.0
        sq = 0.0
        for g in range(G):
            a = abs(B[j, g])
            sa += a
            sq += a * a
        l1 += sa
        l2 += sq
        div += sa * sa - sq
    return total + lam_s * (0.5 * (1.0 - alpha) * l2 + alpha * l1) + 0.25 * lam_d * div


@njit(cache=True, nogil=True)
def full_sweep(X, z, eta, b0, B, idx, alpha, lam_s, lam_d, damp, w, resid):
    for g in range(B.shape[1]):
        model_sweep(X, z, eta, b0, B, g, idx, alpha, lam_s, lam_d, damp, w, resid)


@njit(cache=True, nogil=True)
def max_sq_change(b0_old, B_old, b0, B):
    p, G = B.shape
    d = 0.0
    for g in range(G):
        d += b0[g] - b0_old[g]
    d /= G
    best = d * d
    for j in range(p):
        s = 0.0
        for g in range(G):
            s += B[j, g] - B_old[j, g]
        s /= G
        if s * s > best:
            best = s * s
    return best


@njit(cache=True, nogil=True)
def active_rows(B, free):
    p, G = B.shape
    cnt = 0
    mark = np.zeros(p, dtype=np.bool_)
    for j in range(p):
        if free[j]:
            for g in range(G):
                if B[j, g] != 0.0:
                    mark[j] = True
                    cnt += 1
                    break
    out = np.empty(cnt, dtype=np.int64)
    k = 0
    for j in range(p):
        if mark[j]:
            out[k] = j
            k += 1
    return out


@njit(cache=True, nogil=True)
def bcd(X, y, z, b0, B, free, alpha, lam_s, lam_d, tol, max_sweeps,
        full_every, max_halvings):
    """Cyclic block coordinate descent; updates ``b0`` and ``B`` in place.

    Returns ``(sweeps, status, objective)``.
    """
    n, p = X.shape
    G = B.shape[1]
    eta = np.empty((n, G))
    for g in range(G):
        for i in range(n):
            eta[i, g] = b0[g]
    for j in range(p):
        for g in range(G):
            if B[j, g] != 0.0:
                for i in range(n):
                    eta[i, g] += X[i, j] * B[j, g]
    w = np.empty(n)
    resid = np.empty(n)

    all_idx = np.empty(int(free.sum()), dtype=np.int64)
    k = 0
    for j in range(p):
        if free[j]:
            all_idx[k] = j
            k += 1

    obj = objective(X, y, eta, B, alpha, lam_s, lam_d)
    sweeps = 0
    full = True
    restricted = 0
    idx = all_idx
    status = STATUS_MAX_SWEEPS
    while sweeps < max_sweeps:
        if full:
            idx = all_idx
        b0_old = b0.copy()
        B_old = B.copy()
        eta_old = eta.copy()
        full_sweep(X, z, eta, b0, B, idx, alpha, lam_s, lam_d, 1.0, w, resid)
        sweeps += 1
        new_obj = objective(X, y, eta, B, alpha, lam_s, lam_d)
        slack = 1e-11 * max(1.0, abs(obj))
        if new_obj - obj > slack:
            # surrogate overshoot: roll back and retry with blended updates
            accepted = False
            damp = 1.0
            for _ in range(max_halvings):
                damp *= 0.5
                b0[:] = b0_old
                B[:, :] = B_old
                eta[:, :] = eta_old
                full_sweep(X, z, eta, b0, B, idx, alpha, lam_s, lam_d, damp, w, resid)
                new_obj = objective(X, y, eta, B, alpha, lam_s, lam_d)
                if new_obj - obj <= slack:
                    accepted = True
                    break
            if not accepted:
                b0[:] = b0_old
                B[:, :] = B_old
                status = STATUS_STALLED
                break
        obj = new_obj
        change = max_sq_change(b0_old, B_old, b0, B)
        if change < tol:
            if full:
                status = STATUS_CONVERGED
                break
            full = True
            restricted = 0
            continue
        if full:
            idx = active_rows(B, free)
            full = False
            restricted = 0
        else:
            restricted += 1
            if restricted >= full_every:
                full = True
                restricted = 0
    return sweeps, status, obj
