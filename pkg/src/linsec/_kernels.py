"""Hot numeric kernels.

Every kernel is written in vectorised numpy that numba can also compile. When
numba is importable and ``LINSEC_DISABLE_NUMBA`` is unset (or ``0``), the
kernels are compiled with ``@njit``; otherwise the same bodies run as plain
numpy code. Both paths produce identical results up to floating point
reassociation inside BLAS calls.

Regularizer codes used throughout: 0 = ½‖w‖₂², 1 = ‖w‖₁, 2 = ‖w‖∞,
3 = elastic net (param λ), 4 = octagonal (param ρ).
"""
import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "REG_L2SQ",
    "REG_L1",
    "REG_LINF",
    "REG_ELNET",
    "REG_OCT",
    "reg_value",
    "reg_prox",
    "project_l1_ball",
    "svm_objective",
    "subgradient_solve",
    "primal_dual_solve",
    "dual_objective",
    "reg_dual_norm",
    "min_boolean_flips",
]

REG_L2SQ = 0
REG_L1 = 1
REG_LINF = 2
REG_ELNET = 3
REG_OCT = 4

# absolute weights below this are snapped to exact zero inside the solvers
ZERO_TOL = 1e-8


def _flag_disabled():
    return os.environ.get("LINSEC_DISABLE_NUMBA", "0").strip().lower() in (
        "1",
        "true",
        "yes",
        "on",
    )


try:
    import numba

    USE_NUMBA = not _flag_disabled()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    USE_NUMBA = False


def _jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


@_jit
def reg_value(kind, param, w):
    if kind == REG_L2SQ:
        return 0.5 * np.dot(w, w)
    a = np.abs(w)
    if kind == REG_L1:
        return a.sum()
    if kind == REG_LINF:
        return a.max() if a.size > 0 else 0.0
    if kind == REG_ELNET:
        return (1.0 - param) * a.sum() + 0.5 * param * np.dot(w, w)
    # octagonal
    return (1.0 - param) * a.sum() + param * a.max()


@_jit
def project_l1_ball(v, radius):
    """Euclidean projection of ``v`` onto {u : ‖u‖₁ ≤ radius} (sort based)."""
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius <= 0.0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    cs = np.cumsum(u)
    ks = np.arange(1, u.size + 1)
    cond = u * ks > cs - radius
    k = 0
    for i in range(u.size):
        if cond[i]:
            k = i
    theta = (cs[k] - radius) / (k + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


@_jit
def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@_jit
def reg_prox(kind, param, v, t):
    """prox of ``t * reg`` evaluated at ``v``."""
    if kind == REG_L2SQ:
        return v / (1.0 + t)
    if kind == REG_L1:
        return _soft(v, t)
    if kind == REG_LINF:
        return v - project_l1_ball(v, t)
    if kind == REG_ELNET:
        return _soft(v, t * (1.0 - param)) / (1.0 + t * param)
    # l1 + linf: the joint prox factors as prox_linf(soft_threshold(v))
    s = _soft(v, t * (1.0 - param))
    return s - project_l1_ball(s, t * param)


@_jit
def _snap(w):
    for j in range(w.size):
        if abs(w[j]) < ZERO_TOL:
            w[j] = 0.0


@_jit
def svm_objective(X, y, C, kind, param, w, b):
    margins = y * (X @ w + b)
    return reg_value(kind, param, w) + C * np.maximum(1.0 - margins, 0.0).sum()


@_jit
def _window_converged(best_hist, it, window, tol):
    if it < window:
        return False
    old = best_hist[it - window]
    new = best_hist[it]
    return old - new <= tol * max(abs(new), 1e-300)


@_jit
def subgradient_solve(X, y, C, kind, param, max_iters, step0, tol, window):
    """Proximal subgradient descent with step step0/(L*sqrt(t)).

    The hinge term is handled by a subgradient step and the regularizer by its
    exact prox, so l1-type penalties produce exact zeros. ``L`` is the norm of
    the largest possible hinge subgradient, which makes ``step0`` scale free.

    Returns (w, b, best objective, iterations run, converged flag).
    """
    m, d = X.shape
    w = np.zeros(d)
    b = 0.0
    row_norms = np.sqrt((X * X).sum(axis=1) + 1.0)
    lip = 1.0 + C * row_norms.sum()

    best_w = w.copy()
    best_b = b
    best_obj = reg_value(kind, param, w) + C * m
    best_hist = np.empty(max_iters + 1)
    best_hist[0] = best_obj
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        margins = y * (X @ w + b)
        active = (margins < 1.0).astype(np.float64) * y
        gw = -C * (X.T @ active)
        gb = -C * active.sum()
        eta = step0 / (lip * np.sqrt(it))
        w = reg_prox(kind, param, w - eta * gw, eta)
        b = b - eta * gb
        _snap(w)
        obj = svm_objective(X, y, C, kind, param, w, b)
        if obj < best_obj:
            best_obj = obj
            best_w[:] = w
            best_b = b
        best_hist[it] = best_obj
        if _window_converged(best_hist, it, window, tol):
            converged = True
            break
    return best_w, best_b, best_obj, it, converged


@_jit
def _spectral_norm(X, iters):
    # power iteration on [X, 1]^T [X, 1]
    m, d = X.shape
    v = np.ones(d + 1) / np.sqrt(d + 1.0)
    s = 0.0
    for _ in range(iters):
        u = X @ v[:d] + v[d]
        v_new = np.empty(d + 1)
        v_new[:d] = X.T @ u
        v_new[d] = u.sum()
        n = np.sqrt(np.dot(v_new, v_new))
        if n == 0.0:
            return 1.0
        s = np.sqrt(n)
        v = v_new / n
    return s


@_jit
def reg_dual_norm(kind, param, v):
    """Dual norm of the penalty when it is a norm (l1, linf, octagonal).

    The octagonal norm is an ordered weighted l1 norm with weights
    (1, 1-rho, 1-rho, ...), whose dual is max_k S_k / (k(1-rho) + rho) with
    S_k the sum of the k largest |v_j|.
    """
    a = np.abs(v)
    if kind == REG_L1:
        return a.max() if a.size > 0 else 0.0
    if kind == REG_LINF:
        return a.sum()
    srt = np.sort(a)[::-1]
    cs = np.cumsum(srt)
    ks = np.arange(1, a.size + 1)
    return (cs / (ks * (1.0 - param) + param)).max()


@_jit
def dual_objective(X, y, C, kind, param, p):
    """Lower bound on the optimum from the dual iterate ``p`` in [-C, 0]^m.

    alpha = -p is rescaled to satisfy sum(alpha * y) = 0, then scaled into the
    dual feasible set (norm penalties) or by the best scalar (squared l2).
    """
    alpha = -p
    pos = y > 0
    a_pos = alpha[pos].sum()
    a_neg = alpha[~pos].sum()
    if a_pos <= 0.0 or a_neg <= 0.0:
        return 0.0
    if a_pos > a_neg:
        alpha = np.where(pos, alpha * (a_neg / a_pos), alpha)
    else:
        alpha = np.where(pos, alpha, alpha * (a_pos / a_neg))
    total = alpha.sum()
    v = X.T @ (y * alpha)
    if kind == REG_L2SQ:
        vv = np.dot(v, v)
        s = 1.0 if vv == 0.0 else min(1.0, total / vv)
        return s * total - 0.5 * s * s * vv
    if kind == REG_ELNET:
        excess = np.maximum(np.abs(v) - (1.0 - param), 0.0)
        return total - np.dot(excess, excess) / (2.0 * param)
    dn = reg_dual_norm(kind, param, v)
    return total / max(1.0, dn)


@_jit
def primal_dual_solve(X, y, C, kind, param, max_iters, step0, tol, window):
    """Adaptive primal-dual hybrid gradient on
    min_w,b reg(w) + C sum (1 - y_i g(x_i))_+.

    Linear map K(w, b) = y * (Xw + b). The hinge conjugate lives on [-C, 0]
    with prox clip(v - sigma, -C, 0); the primal step is the regularizer prox,
    so exact zeros survive. Step sizes keep tau*sigma*|K|^2 < 1 and are
    rebalanced whenever the primal and dual residuals drift apart by more than
    a factor 1.5, with a geometrically shrinking adaptation rate. ``step0``
    sets the initial ratio tau/sigma = step0**2.

    Every ``window`` iterations the best primal objective is compared with a
    dual lower bound; the run stops once the gap is within ``tol`` relative.

    Returns (w, b, best objective, iterations run, converged flag).
    """
    m, d = X.shape
    knorm = _spectral_norm(X, 100) * 1.01 + 1e-12
    tau = 0.99 * step0 / knorm
    sigma = 0.99 / (step0 * knorm)
    alpha = 0.5
    shrink = 0.95
    delta = 1.5

    w = np.zeros(d)
    b = 0.0
    p = np.zeros(m)
    kz = np.zeros(m)
    ktp_w = np.zeros(d)
    ktp_b = 0.0

    best_w = w.copy()
    best_b = b
    best_obj = reg_value(kind, param, w) + C * m
    best_dual = 0.0
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        w_new = reg_prox(kind, param, w - tau * ktp_w, tau)
        _snap(w_new)
        b_new = b - tau * ktp_b
        kz_new = y * (X @ w_new + b_new)
        p_new = np.minimum(np.maximum(p + sigma * (2.0 * kz_new - kz) - sigma, -C), 0.0)
        yp = y * p_new
        ktp_w_new = X.T @ yp
        ktp_b_new = yp.sum()

        obj = reg_value(kind, param, w_new) + C * np.maximum(1.0 - kz_new, 0.0).sum()
        if obj < best_obj:
            best_obj = obj
            best_w[:] = w_new
            best_b = b_new

        # fixed-point residuals drive the step balancing
        rw = (w - w_new) / tau - (ktp_w - ktp_w_new)
        rb = (b - b_new) / tau - (ktp_b - ktp_b_new)
        res_p = np.sqrt(np.dot(rw, rw) + rb * rb)
        rd = (p - p_new) / sigma - (kz - kz_new)
        res_d = np.sqrt(np.dot(rd, rd))

        w = w_new
        b = b_new
        kz = kz_new
        p = p_new
        ktp_w = ktp_w_new
        ktp_b = ktp_b_new

        if it % window == 0:
            best_dual = max(best_dual, dual_objective(X, y, C, kind, param, p))
            if best_obj - best_dual <= tol * max(abs(best_obj), 1.0):
                converged = True
                break
        if res_p > delta * res_d:
            tau = tau / (1.0 - alpha)
            sigma = sigma * (1.0 - alpha)
            alpha = alpha * shrink
        elif res_d > delta * res_p:
            tau = tau * (1.0 - alpha)
            sigma = sigma / (1.0 - alpha)
            alpha = alpha * shrink
    return best_w, best_b, best_obj, it, converged


def _min_boolean_flips_numpy(w, x0, max_flips):
    d = w.size
    masks = np.arange(1 << d, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(d)) & 1).astype(np.float64)
    counts = bits.sum(axis=1)
    delta = 1.0 - 2.0 * x0  # flipping j changes x_j by +1 if 0, -1 if 1
    change = bits @ (w * delta)
    change[counts > max_flips] = np.inf
    best = int(np.argmin(change))
    return best, change[best]


def _min_boolean_flips_loop(w, x0, max_flips):
    d = w.size
    delta = w * (1.0 - 2.0 * x0)
    best = 0
    best_change = 0.0
    for mask in range(1, 1 << d):
        cnt = 0
        change = 0.0
        for j in range(d):
            if (mask >> j) & 1:
                cnt += 1
                change += delta[j]
        if cnt <= max_flips and change < best_change:
            best_change = change
            best = mask
    return best, best_change


if USE_NUMBA:
    _min_boolean_flips = numba.njit(cache=True, nogil=True)(_min_boolean_flips_loop)
else:
    _min_boolean_flips = _min_boolean_flips_numpy


def min_boolean_flips(w, x0, max_flips):
    """Exhaustive search over all flip subsets of size <= max_flips.

    Returns (mask, change in g). The first minimising mask in increasing
    integer order wins; the empty mask is preferred on ties with zero change.
    """
    return _min_boolean_flips(
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
        int(max_flips),
    )
