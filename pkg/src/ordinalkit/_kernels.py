"""Hot numeric kernels with a numba path and a pure-numpy twin.

The backend is picked once at import from ``ORDINALKIT_BACKEND`` (``numba``
or ``numpy``, default ``numba`` when it imports) and can be switched at run
time with :func:`set_backend`.  Both twins are always importable under
``nb_*`` / ``np_*`` names so tests and the benchmark can compare them.

Loss kind codes are shared with :mod:`ordinalkit.losses`.  Labels passed to
kernels are 0-based.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

CE, OLL, SOFT, EMD, MLL = 0, 1, 2, 3, 4
CLAMP = 1e30
# iterations without a strict decrease before the simplex solver gives up
STALL_ITERS = 50

_backend = os.environ.get("ORDINALKIT_BACKEND", "numba").strip().lower()
if _backend not in ("numba", "numpy"):
    raise ValueError(f"ORDINALKIT_BACKEND must be 'numba' or 'numpy', got {_backend!r}")
if not HAVE_NUMBA:
    _backend = "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select the kernel backend; returns the previous one."""
    global _backend
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


def _jit(fn):
    return njit(cache=True)(fn) if HAVE_NUMBA else fn


# ---------------------------------------------------------------------------
# per-sample losses, value and gradient w.r.t. probabilities
# ---------------------------------------------------------------------------


def np_loss_grad_rows(kind, P, y, alpha, beta, lam):
    """Vectorised twin of :func:`nb_loss_grad_rows`."""
    P = np.asarray(P, dtype=np.float64)
    N, K = P.shape
    rows = np.arange(N)
    values = np.zeros(N)
    grads = np.zeros((N, K))
    sat = np.zeros(N, dtype=np.bool_)
    dist = np.abs(np.arange(K)[None, :] - y[:, None]).astype(np.float64)

    if kind == CE or (kind == MLL and lam > 0.0):
        w_ce = 1.0 if kind == CE else lam
        py = P[rows, y]
        bad = py <= 0.0
        with np.errstate(divide="ignore", over="ignore"):
            v = np.where(bad, np.inf, -np.log(np.where(bad, 1.0, py)))
            g = np.where(bad, -CLAMP, np.maximum(-CLAMP, -1.0 / np.where(bad, 1.0, py)))
        values += w_ce * v if kind == MLL else v
        grads[rows, y] += w_ce * g if kind == MLL else g
        sat |= bad
    if kind == OLL or (kind == MLL and lam < 1.0):
        w_oll = 1.0 if kind == OLL else 1.0 - lam
        weight = dist ** alpha  # zero on the true class
        comp = 1.0 - P
        off = dist > 0
        bad = off & (comp <= 0.0)
        safe = np.where(bad | ~off, 1.0, comp)
        terms = np.where(off, -weight * np.log(safe), 0.0)
        with np.errstate(over="ignore"):
            gk = np.where(off, np.minimum(CLAMP, weight / safe), 0.0)
        gk = np.where(bad, CLAMP, gk)
        v = np.where(bad.any(axis=1), np.inf, terms.sum(axis=1))
        if kind == MLL:
            values += w_oll * v
            grads += w_oll * gk
        else:
            values += v
            grads += gk
        sat |= bad.any(axis=1)
    if kind == SOFT:
        target = np.exp(-beta * dist)
        target /= target.sum(axis=1, keepdims=True)
        bad = P <= 0.0
        safe = np.where(bad, 1.0, P)
        values += np.where(bad.any(axis=1), np.inf, -(target * np.log(safe)).sum(axis=1))
        with np.errstate(over="ignore"):
            grads += np.where(bad, -CLAMP, np.maximum(-CLAMP, -target / safe))
        sat |= bad.any(axis=1)
    if kind == EMD:
        step = (np.arange(K)[None, :] >= y[:, None]).astype(np.float64)
        diff = np.cumsum(P, axis=1) - step
        values += (diff ** 2).sum(axis=1)
        # d/dp_j sum_k (C_k - S_k)^2 = 2 sum_{k >= j} (C_k - S_k)
        grads += 2.0 * np.cumsum(diff[:, ::-1], axis=1)[:, ::-1]
    np.clip(grads, -CLAMP, CLAMP, out=grads)
    return values, grads, sat


@_jit
def nb_loss_grad_rows(kind, P, y, alpha, beta, lam):
    N, K = P.shape
    values = np.zeros(N)
    grads = np.zeros((N, K))
    sat = np.zeros(N, dtype=np.bool_)
    target = np.empty(K)
    for n in range(N):
        t = y[n]
        v = 0.0
        if kind == CE or (kind == MLL and lam > 0.0):
            w = 1.0 if kind == CE else lam
            pt = P[n, t]
            if pt <= 0.0:
                v += np.inf
                grads[n, t] += w * -CLAMP
                sat[n] = True
            else:
                v += w * -np.log(pt)
                grads[n, t] += w * max(-CLAMP, -1.0 / pt)
        if kind == OLL or (kind == MLL and lam < 1.0):
            w = 1.0 if kind == OLL else 1.0 - lam
            acc = 0.0
            bad = False
            for k in range(K):
                if k == t:
                    continue
                wk = float(abs(k - t)) ** alpha
                comp = 1.0 - P[n, k]
                if comp <= 0.0:
                    bad = True
                    grads[n, k] += w * CLAMP
                else:
                    acc += -wk * np.log(comp)
                    grads[n, k] += w * min(CLAMP, wk / comp)
            if bad:
                v += np.inf
                sat[n] = True
            else:
                v += w * acc
        if kind == SOFT:
            z = 0.0
            for k in range(K):
                target[k] = np.exp(-beta * abs(k - t))
                z += target[k]
            acc = 0.0
            bad = False
            for k in range(K):
                q = target[k] / z
                if P[n, k] <= 0.0:
                    bad = True
                    grads[n, k] = -CLAMP
                else:
                    acc += -q * np.log(P[n, k])
                    grads[n, k] = max(-CLAMP, -q / P[n, k])
            if bad:
                v += np.inf
                sat[n] = True
            else:
                v += acc
        if kind == EMD:
            c = 0.0
            diff = np.empty(K)
            for k in range(K):
                c += P[n, k]
                diff[k] = c - (1.0 if k >= t else 0.0)
                v += diff[k] * diff[k]
            tail = 0.0
            for k in range(K - 1, -1, -1):
                tail += diff[k]
                grads[n, k] = 2.0 * tail
        values[n] = v
        for k in range(K):
            if grads[n, k] > CLAMP:
                grads[n, k] = CLAMP
            elif grads[n, k] < -CLAMP:
                grads[n, k] = -CLAMP
    return values, grads, sat


def loss_grad_rows(kind, P, y, alpha=1.5, beta=1.0, lam=0.5):
    """Per-row loss values, gradients w.r.t. ``P`` and saturation flags."""
    P = np.ascontiguousarray(P, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if _backend == "numba":
        return nb_loss_grad_rows(int(kind), P, y, float(alpha), float(beta), float(lam))
    return np_loss_grad_rows(int(kind), P, y, float(alpha), float(beta), float(lam))


# ---------------------------------------------------------------------------
# unimodality predicate
# ---------------------------------------------------------------------------


def np_unimodal_rows(P):
    P = np.asarray(P, dtype=np.float64)
    prefix = np.maximum.accumulate(P, axis=1)
    suffix = np.maximum.accumulate(P[:, ::-1], axis=1)[:, ::-1]
    dip = (prefix[:, :-2] > P[:, 1:-1]) & (suffix[:, 2:] > P[:, 1:-1])
    return ~dip.any(axis=1)


@_jit
def nb_unimodal_rows(P):
    N, K = P.shape
    out = np.ones(N, dtype=np.bool_)
    for n in range(N):
        # once the row strictly drops below its running max, any later value
        # strictly above the lowest point reached is a dip
        best = P[n, 0]
        low = np.inf
        for k in range(1, K):
            x = P[n, k]
            if x < best and x < low:
                low = x
            if low < np.inf and x > low:
                out[n] = False
                break
            if x > best:
                best = x
    return out


def unimodal_rows(P):
    P = np.ascontiguousarray(np.atleast_2d(P), dtype=np.float64)
    if _backend == "numba":
        return nb_unimodal_rows(P)
    return np_unimodal_rows(P)


# ---------------------------------------------------------------------------
# exponentiated-gradient (mirror descent) minimisation on the simplex
# ---------------------------------------------------------------------------


@_jit
def _nb_row_loss(kind, p, t, alpha, beta, lam):
    P = p.reshape(1, p.shape[0])
    y = np.empty(1, dtype=np.int64)
    y[0] = t
    v, g, s = nb_loss_grad_rows(kind, P, y, alpha, beta, lam)
    return v[0], g[0].copy()


@_jit
def _nb_softmax(theta):
    m = theta.max()
    e = np.exp(theta - m)
    return e / e.sum()


@_jit
def nb_eg_minimize(kind, starts, t, alpha, beta, lam, max_iter, tol):
    R, K = starts.shape
    out = np.empty((R, K))
    values = np.empty(R)
    gaps = np.empty(R)
    iters = np.empty(R, dtype=np.int64)
    for r in range(R):
        theta = np.log(starts[r])
        p = _nb_softmax(theta)
        v, g = _nb_row_loss(kind, p, t, alpha, beta, lam)
        eta = 1.0 / max(g.max() - g.min(), 1e-12)
        it = 0
        stall = 0
        gap = np.dot(g, p) - g.min()
        while it < max_iter and gap > tol and stall < STALL_ITERS:
            accepted = False
            while eta > 1e-300:
                cand_theta = theta - eta * g
                q = _nb_softmax(cand_theta)
                vq, gq = _nb_row_loss(kind, q, t, alpha, beta, lam)
                decrease = np.dot(g, p - q)
                if vq <= v - 1e-4 * decrease:
                    stall = stall + 1 if vq >= v else 0
                    theta = cand_theta - cand_theta.max()
                    p, v, g = q, vq, gq
                    eta *= 2.0
                    accepted = True
                    break
                eta *= 0.5
            it += 1
            gap = np.dot(g, p) - g.min()
            if not accepted:
                break
        out[r] = p
        values[r] = v
        gaps[r] = gap
        iters[r] = it
    return out, values, gaps, iters


def np_eg_minimize(kind, starts, t, alpha, beta, lam, max_iter, tol):
    """Numpy twin of :func:`nb_eg_minimize`, vectorised across restarts."""
    starts = np.asarray(starts, dtype=np.float64)
    R, K = starts.shape
    y = np.full(R, t, dtype=np.int64)

    def evaluate(P):
        v, g, _ = np_loss_grad_rows(kind, P, y, alpha, beta, lam)
        return v, g

    def softmax(theta):
        e = np.exp(theta - theta.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    theta = np.log(starts)
    P = softmax(theta)
    v, g = evaluate(P)
    eta = 1.0 / np.maximum(g.max(axis=1) - g.min(axis=1), 1e-12)
    gap = (g * P).sum(axis=1) - g.min(axis=1)
    iters = np.zeros(R, dtype=np.int64)
    stall = np.zeros(R, dtype=np.int64)
    active = gap > tol
    while active.any():
        pending = active.copy()
        moved = np.zeros(R, dtype=bool)
        while pending.any():
            cand_theta = theta - eta[:, None] * g
            Q = softmax(cand_theta)
            vq, gq = evaluate(Q)
            decrease = (g * (P - Q)).sum(axis=1)
            ok = pending & (vq <= v - 1e-4 * decrease)
            if ok.any():
                stall[ok] = np.where(vq[ok] >= v[ok], stall[ok] + 1, 0)
                theta[ok] = cand_theta[ok] - cand_theta[ok].max(axis=1, keepdims=True)
                P[ok], v[ok], g[ok] = Q[ok], vq[ok], gq[ok]
                eta[ok] *= 2.0
                moved |= ok
            retry = pending & ~ok
            eta[retry] *= 0.5
            pending = retry & (eta > 1e-300)
        iters[active] += 1
        gap = (g * P).sum(axis=1) - g.min(axis=1)
        active = active & moved & (gap > tol) & (iters < max_iter) & (stall < STALL_ITERS)
    return P, v, gap, iters


def eg_minimize(kind, starts, t, alpha=1.5, beta=1.0, lam=0.5, max_iter=20000, tol=1e-12):
    """Minimise a per-sample loss over the simplex from each start row.

    Returns final points, loss values, Frank-Wolfe gaps and iteration counts.
    """
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    args = (int(kind), starts, int(t), float(alpha), float(beta), float(lam), int(max_iter), float(tol))
    if _backend == "numba":
        return nb_eg_minimize(*args)
    return np_eg_minimize(*args)
