"""Compiled inner loops.

Everything in here works on plain arrays and integer codes so that numba can
compile it.  The public modules wrap these kernels with validation and
friendlier types.
"""

import math

import numpy as np
from numba import njit

BISQUARE = 0
LQQ = 1
HAMPEL = 2
SQUARE = 3

OK = 0
NONCONVERGED = 1
DEGENERATE = 2
ZERO_WEIGHTS = 3

S_LOSS = 0
M_LOSS = 1


@njit(cache=True, nogil=True)
def rho_scalar(kind, par, x):
    ax = abs(x)
    if kind == BISQUARE:
        c = par[0]
        if ax >= c:
            return c * c / 6.0
        u = x / c
        t = 1.0 - u * u
        return c * c / 6.0 * (1.0 - t * t * t)
    elif kind == LQQ:
        b, c, s, a = par[0], par[1], par[2], par[3]
        if ax <= c:
            return 0.5 * x * x
        if ax <= b + c:
            t = ax - c
            return 0.5 * c * c + c * t + 0.5 * t * t - s * t * t * t / (6.0 * b)
        rbc = 0.5 * c * c + c * b + 0.5 * b * b - s * b * b / 6.0
        v = min(ax - b - c, a)
        return (rbc + (c + b - 0.5 * b * s) * v
                + (s - 1.0) / a * (v * v * v / 6.0 - 0.5 * a * v * v))
    elif kind == HAMPEL:
        a, b, c = par[0], par[1], par[2]
        if ax <= a:
            return 0.5 * x * x
        if ax <= b:
            return 0.5 * a * a + a * (ax - a)
        rb = 0.5 * a * a + a * (b - a)
        if ax <= c:
            return rb + a * ((c - b) ** 2 - (c - ax) ** 2) / (2.0 * (c - b))
        return rb + 0.5 * a * (c - b)
    return x * x


@njit(cache=True, nogil=True)
def psi_scalar(kind, par, x):
    ax = abs(x)
    sg = 1.0 if x >= 0 else -1.0
    if kind == BISQUARE:
        c = par[0]
        if ax >= c:
            return 0.0
        u = x / c
        t = 1.0 - u * u
        return x * t * t
    elif kind == LQQ:
        b, c, s, a = par[0], par[1], par[2], par[3]
        if ax <= c:
            return x
        if ax <= b + c:
            t = ax - c
            return sg * (ax - 0.5 * s / b * t * t)
        if ax <= a + b + c:
            v = ax - b - c
            return sg * (c + b - 0.5 * b * s + (s - 1.0) / a * (0.5 * v * v - a * v))
        return 0.0
    elif kind == HAMPEL:
        a, b, c = par[0], par[1], par[2]
        if ax <= a:
            return x
        if ax <= b:
            return sg * a
        if ax <= c:
            return sg * a * (c - ax) / (c - b)
        return 0.0
    return 2.0 * x


@njit(cache=True, nogil=True)
def psi_prime_scalar(kind, par, x):
    ax = abs(x)
    if kind == BISQUARE:
        c = par[0]
        if ax >= c:
            return 0.0
        u2 = (x / c) ** 2
        return (1.0 - u2) * (1.0 - 5.0 * u2)
    elif kind == LQQ:
        b, c, s, a = par[0], par[1], par[2], par[3]
        if ax <= c:
            return 1.0
        if ax <= b + c:
            return 1.0 - s / b * (ax - c)
        if ax <= a + b + c:
            return (s - 1.0) / a * (ax - b - c - a)
        return 0.0
    elif kind == HAMPEL:
        a, b, c = par[0], par[1], par[2]
        if ax <= a:
            return 1.0
        if ax <= b:
            return 0.0
        if ax <= c:
            return -a / (c - b)
        return 0.0
    return 2.0


@njit(cache=True, nogil=True)
def weight_scalar(kind, par, x):
    ax = abs(x)
    if kind == BISQUARE:
        c = par[0]
        if ax >= c:
            return 0.0
        u = x / c
        t = 1.0 - u * u
        return t * t
    elif kind == SQUARE:
        return 2.0
    if ax == 0.0:
        return 1.0
    return psi_scalar(kind, par, x) / x


@njit(cache=True, nogil=True)
def rho_vec(kind, par, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = rho_scalar(kind, par, x[i])
    return out


@njit(cache=True, nogil=True)
def psi_vec(kind, par, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = psi_scalar(kind, par, x[i])
    return out


@njit(cache=True, nogil=True)
def psi_prime_vec(kind, par, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = psi_prime_scalar(kind, par, x[i])
    return out


@njit(cache=True, nogil=True)
def weight_vec(kind, par, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = weight_scalar(kind, par, x[i])
    return out


@njit(cache=True, nogil=True)
def mean_rho(r, sigma, kind, par, norm):
    acc = 0.0
    for i in range(r.shape[0]):
        acc += rho_scalar(kind, par, r[i] / sigma)
    return acc / (norm * r.shape[0])


@njit(cache=True, nogil=True)
def mscale(r, kind, par, norm, delta, tol, max_it):
    """Multiplicative fixed-point iteration for the M-scale.

    Returns ``(sigma, status, iterations)``.
    """
    n = r.shape[0]
    absr = np.abs(r)
    nonzero = 0
    for i in range(n):
        if absr[i] > 0.0:
            nonzero += 1
    if nonzero == 0:
        return 0.0, OK, 0
    if nonzero <= delta * n:
        return math.nan, DEGENERATE, 0
    sigma = np.median(absr) / 0.6745
    if sigma <= 0.0:
        sigma = absr.sum() / nonzero
    for it in range(max_it):
        m = mean_rho(r, sigma, kind, par, norm)
        if abs(m - delta) < tol:
            return sigma, OK, it
        sigma = sigma * math.sqrt(m / delta)
    m = mean_rho(r, sigma, kind, par, norm)
    if abs(m - delta) < tol:
        return sigma, OK, max_it
    return sigma, NONCONVERGED, max_it


@njit(cache=True, nogil=True)
def mscale_newton(r, kind, par, norm, delta, tol, max_it, sigma0):
    """Same root and stopping rule as :func:`mscale`, found by safeguarded Newton.

    ``sigma0 > 0`` is used as the starting value (the MAD otherwise).  The
    root is kept bracketed; iterates leaving the bracket fall back to bisection
    in log-scale.
    """
    n = r.shape[0]
    nonzero = 0
    amax = 0.0
    for i in range(n):
        a = abs(r[i])
        if a > 0.0:
            nonzero += 1
            if a > amax:
                amax = a
    if nonzero == 0:
        return 0.0, OK, 0
    if nonzero <= delta * n:
        return math.nan, DEGENERATE, 0
    sigma = sigma0
    if not sigma > 0.0 or not math.isfinite(sigma):
        sigma = np.median(np.abs(r)) / 0.6745
        if sigma <= 0.0:
            sigma = amax
    # mean normalized rho decreases in sigma
    lo = 0.0
    hi = math.inf
    for it in range(max_it):
        m = 0.0
        dm = 0.0
        for i in range(n):
            u = r[i] / sigma
            m += rho_scalar(kind, par, u)
            dm += psi_scalar(kind, par, u) * u
        m /= norm * n
        dm = -dm / (norm * n * sigma)
        g = m - delta
        if abs(g) < tol:
            return sigma, OK, it
        if g > 0.0:
            lo = sigma
        else:
            hi = sigma
        nxt = sigma - g / dm if dm < 0.0 else math.nan
        if not (nxt > lo and nxt < hi):
            if math.isinf(hi):
                nxt = 2.0 * sigma
            elif lo == 0.0:
                nxt = 0.5 * sigma
            else:
                nxt = math.sqrt(lo * hi)
        sigma = nxt
    return sigma, NONCONVERGED, max_it


@njit(cache=True, nogil=True)
def en_penalty(beta, alpha, loadings):
    acc = 0.0
    for j in range(beta.shape[0]):
        acc += loadings[j] * (0.5 * (1.0 - alpha) * beta[j] * beta[j] + alpha * abs(beta[j]))
    return acc


@njit(cache=True, nogil=True)
def _cd_pass(xt, r, wn, d, beta, l1, l2, active, only_active):
    p = xt.shape[0]
    n = xt.shape[1]
    maxd = 0.0
    for j in range(p):
        if only_active and not active[j]:
            continue
        if d[j] <= 0.0:
            if beta[j] != 0.0:
                beta[j] = 0.0
                active[j] = False
            continue
        z = 0.0
        for i in range(n):
            z += wn[i] * xt[j, i] * r[i]
        z += d[j] * beta[j]
        # slack so that rounding noise cannot activate a coordinate sitting
        # exactly at the threshold (e.g. at lambda_max)
        thr = l1[j] * (1.0 + 1e-12)
        if z > thr:
            new = (z - l1[j]) / (d[j] + l2[j])
        elif z < -thr:
            new = (z + l1[j]) / (d[j] + l2[j])
        else:
            new = 0.0
        diff = new - beta[j]
        if diff != 0.0:
            for i in range(n):
                r[i] -= diff * xt[j, i]
            beta[j] = new
            change = abs(diff) * math.sqrt(d[j])
            if change > maxd:
                maxd = change
        active[j] = new != 0.0
    return maxd


POLISH_EVERY = 10
POLISH_OK = 0
POLISH_SIGN = 1
POLISH_KKT = 2


@njit(cache=True, nogil=True)
def _spd_solve(g, rhs):
    # Cholesky solve; an empty result flags a (numerically) singular system
    a = g.shape[0]
    try:
        low = np.linalg.cholesky(g)
    except Exception:
        return np.empty(0)
    for j in range(a):
        if not low[j, j] * low[j, j] > 1e-12 * g[j, j]:
            return np.empty(0)
    z = np.empty(a)
    for i in range(a):
        s = rhs[i]
        for k in range(i):
            s -= low[i, k] * z[k]
        z[i] = s / low[i, i]
    out = np.empty(a)
    for i in range(a - 1, -1, -1):
        s = z[i]
        for k in range(i + 1, a):
            s -= low[k, i] * out[k]
        out[i] = s / low[i, i]
    return out


@njit(cache=True, nogil=True)
def _polish(xt, r, wn, d, beta, l1, l2, active):
    # Exact solves on the current support with the current signs (an
    # active-set method for the convex problem).  If a coordinate would change
    # sign, step only up to its zero crossing, drop it, and solve again; each
    # such step lowers the objective.  Success once signs are kept and every
    # excluded coordinate satisfies its KKT bound.  Plain CD is very slow on
    # ill-conditioned weighted problems, which is the reason this exists.
    p, n = xt.shape
    idx = np.empty(p, dtype=np.int64)
    for _ in range(p + 1):
        a = 0
        for j in range(p):
            if active[j] and d[j] > 0.0:
                idx[a] = j
                a += 1
        if a == 0:
            break
        xa = np.empty((a, n))
        wr = np.empty(n)
        for i in range(n):
            wr[i] = wn[i] * r[i]
        for u in range(a):
            ju = idx[u]
            for i in range(n):
                xa[u, i] = xt[ju, i]
        rhs = np.dot(xa, wr)
        for u in range(a):
            ju = idx[u]
            sgn = 1.0 if beta[ju] > 0.0 else -1.0
            rhs[u] -= l1[ju] * sgn + l2[ju] * beta[ju]
        xw = xa * np.sqrt(wn)
        g = np.dot(xw, xw.T)
        for u in range(a):
            g[u, u] += l2[idx[u]]
        step = _spd_solve(g, rhs)
        if step.shape[0] == 0:
            return POLISH_SIGN
        t = 1.0
        drop = -1
        for u in range(a):
            ju = idx[u]
            if (beta[ju] + step[u]) * beta[ju] <= 0.0:
                tu = -beta[ju] / step[u]
                if tu < t:
                    t = tu
                    drop = ju
        for u in range(a):
            ju = idx[u]
            beta[ju] += t * step[u]
            for i in range(n):
                r[i] -= t * step[u] * xt[ju, i]
        if drop < 0:
            break
        # remove the crossing coordinate exactly
        for i in range(n):
            r[i] += beta[drop] * xt[drop, i]
        beta[drop] = 0.0
        active[drop] = False
    for j in range(p):
        if active[j] or d[j] <= 0.0:
            continue
        z = 0.0
        for i in range(n):
            z += wn[i] * xt[j, i] * r[i]
        if abs(z) > l1[j] * (1.0 + 1e-10) + 1e-14:
            return POLISH_KKT
    return POLISH_OK


@njit(cache=True, nogil=True)
def en_cd(x, y, w, lam, alpha, loadings, beta0, fit_intercept, tol, max_passes):
    """Weighted elastic-net coordinate descent.

    Minimizes ``(1 / (2 sum w)) sum w_i (y_i - b0 - x_i' beta)^2 + lam * P(beta)``.
    Returns ``(intercept, beta, status, passes)``.
    """
    n, p = x.shape
    beta = beta0.copy()
    sw = 0.0
    for i in range(n):
        sw += w[i]
    if not sw > 0.0:
        return math.nan, beta, ZERO_WEIGHTS, 0
    wn = w / sw
    xm = np.zeros(p)
    ym = 0.0
    if fit_intercept:
        for i in range(n):
            ym += wn[i] * y[i]
            for j in range(p):
                xm[j] += wn[i] * x[i, j]
    xt = np.empty((p, n))
    d = np.zeros(p)
    for j in range(p):
        for i in range(n):
            v = x[i, j] - xm[j]
            xt[j, i] = v
            d[j] += wn[i] * v * v
    r = np.empty(n)
    for i in range(n):
        acc = y[i] - ym
        for j in range(p):
            acc -= xt[j, i] * beta[j]
        r[i] = acc
    l1 = lam * alpha * loadings
    l2 = lam * (1.0 - alpha) * loadings
    active = beta != 0.0
    passes = 0
    status = NONCONVERGED
    while passes < max_passes:
        maxd = _cd_pass(xt, r, wn, d, beta, l1, l2, active, False)
        passes += 1
        if maxd < tol or _polish(xt, r, wn, d, beta, l1, l2, active) == POLISH_OK:
            status = OK
            break
        while passes < max_passes:
            maxd = _cd_pass(xt, r, wn, d, beta, l1, l2, active, True)
            passes += 1
            if maxd < tol:
                break
            if passes % POLISH_EVERY == 0:
                outcome = _polish(xt, r, wn, d, beta, l1, l2, active)
                if outcome == POLISH_OK:
                    status = OK
                    break
                if outcome == POLISH_KKT:
                    # an excluded coordinate wants in; a full pass adds it
                    break
        if status == OK:
            break
    b0 = ym
    for j in range(p):
        b0 -= xm[j] * beta[j]
    return b0, beta, status, passes


@njit(cache=True, nogil=True)
def residuals(x, y, b0, beta):
    n, p = x.shape
    r = np.empty(n)
    for i in range(n):
        acc = y[i] - b0
        for j in range(p):
            acc -= x[i, j] * beta[j]
        r[i] = acc
    return r


@njit(cache=True, nogil=True)
def robust_objective(r, beta, loss_kind, kind, par, norm, delta, fixed_scale,
                     lam, alpha, loadings, ms_tol, ms_max_it, sigma0=0.0):
    """Returns ``(objective, scale, status)``.

    ``sigma0`` is a starting value for the M-scale (0 for the MAD).
    """
    pen = lam * en_penalty(beta, alpha, loadings)
    if loss_kind == S_LOSS:
        s, st, _ = mscale_newton(r, kind, par, norm, delta, ms_tol, ms_max_it, sigma0)
        if st == DEGENERATE:
            return math.nan, s, st
        return 0.5 * s * s + pen, s, OK
    s = fixed_scale
    return 0.5 * mean_rho(r, s, kind, par, norm) + pen, s, OK


@njit(cache=True, nogil=True)
def irwls(x, y, loss_kind, kind, par, norm, delta, fixed_scale, lam, alpha,
          loadings, b0, beta, fit_intercept, outer_tol, max_outer, inner_tol,
          max_passes, ms_tol, ms_max_it):
    """IRWLS for the penalized S- or M-loss.

    Each step solves the weighted elastic-net problem whose stationarity
    conditions coincide with those of the robust objective at the current
    weights.  Steps that increase the objective are halved.

    Returns ``(b0, beta, objective, scale, status, iterations)``.
    """
    n = y.shape[0]
    beta = beta.copy()
    r = residuals(x, y, b0, beta)
    obj, scale, st = robust_objective(r, beta, loss_kind, kind, par, norm, delta,
                                      fixed_scale, lam, alpha, loadings, ms_tol,
                                      ms_max_it)
    if st != OK:
        return b0, beta, obj, scale, st, 0
    status = NONCONVERGED
    it = 0
    while it < max_outer:
        it += 1
        if not scale > 0.0:
            # exact fit; nothing left to reweight
            status = OK
            break
        w = np.empty(n)
        sw = 0.0
        swr = 0.0
        for i in range(n):
            rt = r[i] / scale
            wi = weight_scalar(kind, par, rt)
            w[i] = wi
            sw += wi
            swr += wi * rt * rt
        if not sw > 0.0:
            status = ZERO_WEIGHTS
            break
        if loss_kind == S_LOSS:
            lam_eff = lam * swr / sw
        else:
            lam_eff = lam * 2.0 * n * scale * scale * norm / sw
        nb0, nbeta, cst, _ = en_cd(x, y, w, lam_eff, alpha, loadings, beta,
                                   fit_intercept, inner_tol, max_passes)
        if cst == ZERO_WEIGHTS:
            status = ZERO_WEIGHTS
            break
        nr = residuals(x, y, nb0, nbeta)
        nobj, nscale, nst = robust_objective(nr, nbeta, loss_kind, kind, par, norm,
                                             delta, fixed_scale, lam, alpha,
                                             loadings, ms_tol, ms_max_it, scale)
        slack = 1e-12 * (1.0 + abs(obj))
        halvings = 0
        while (nst != OK or not nobj <= obj + slack) and halvings < 30:
            nbeta = 0.5 * (beta + nbeta)
            nb0 = 0.5 * (b0 + nb0)
            nr = residuals(x, y, nb0, nbeta)
            nobj, nscale, nst = robust_objective(nr, nbeta, loss_kind, kind, par,
                                                 norm, delta, fixed_scale, lam,
                                                 alpha, loadings, ms_tol, ms_max_it,
                                                 scale)
            halvings += 1
        if nst != OK or not nobj <= obj + slack:
            # no descent along the reweighted direction: stationary to working precision
            status = OK
            break
        decrease = obj - nobj
        b0, beta, r, obj, scale = nb0, nbeta, nr, nobj, nscale
        if decrease < outer_tol * (1.0 + abs(obj)):
            status = OK
            break
    return b0, beta, obj, scale, status, it
