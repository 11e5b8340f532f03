"""Pure numpy implementation of the fitting kernels.

Mirrors ``_core.pyx`` step for step so both backends follow the same
iterate sequence. Parameters are ordered (offset, amplitude, frequency,
phase, decay_rate) and time is in whatever units the caller scaled it to.
"""
import math

import numpy as np

TWO_PI = 2.0 * math.pi

STATUS_DEGENERATE = -1
STATUS_MAXITER = 0
STATUS_XTOL = 1
STATUS_GTOL = 2
STATUS_EXACT = 3
STATUS_STALLED = 4

LAMBDA_INIT = 1e-3
LAMBDA_MAX = 1e16


def model(p, t):
    env = np.exp(-p[4] * t) if p[4] != 0.0 else 1.0
    return p[0] + p[1] * env * np.cos(TWO_PI * p[2] * t + p[3])


def jacobian(p, t):
    t = np.asarray(t, dtype=float)
    env = np.exp(-p[4] * t) if p[4] != 0.0 else np.ones_like(t)
    arg = TWO_PI * p[2] * t + p[3]
    c = env * np.cos(arg)
    s = env * np.sin(arg)
    J = np.empty((t.size, 5))
    J[:, 0] = 1.0
    J[:, 1] = c
    J[:, 2] = -p[1] * s * TWO_PI * t
    J[:, 3] = -p[1] * s
    J[:, 4] = -p[1] * c * t
    return J


def periodogram(t, y, freqs):
    """Least-squares (floating-mean) power of a sinusoid at each trial frequency."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = t.size
    arg = TWO_PI * np.outer(np.asarray(freqs, dtype=float), t)
    c = np.cos(arg)
    s = np.sin(arg)
    yc = y - y.sum() / n
    sc = c.sum(axis=1)
    ss = s.sum(axis=1)
    scc = (c * c).sum(axis=1) - sc * sc / n
    sss = (s * s).sum(axis=1) - ss * ss / n
    scs = (c * s).sum(axis=1) - sc * ss / n
    yco = c @ yc
    yso = s @ yc
    det = scc * sss - scs * scs
    ok = det > 1e-12 * scc * sss
    safe = np.where(ok, det, 1.0)
    power = (sss * yco * yco - 2.0 * scs * yco * yso + scc * yso * yso) / safe
    return np.where(ok, power, 0.0)


def _gradient_cosine(A, g, rnorm):
    return float(np.max(np.abs(g) / (np.sqrt(np.diag(A)) * rnorm)))


def lm_fit(t, y, p0, free, max_iter, xtol, gtol):
    """Levenberg-Marquardt with Marquardt diagonal scaling.

    Returns ``(p, cost, iterations, status, history, gcos)`` where ``cost`` is
    half the residual sum of squares and ``history`` lists the cost after every
    accepted step (starting with the initial cost).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    free = np.asarray(free, dtype=np.intp)
    p = np.array(p0, dtype=float)
    r = y - model(p, t)
    cost = 0.5 * float(r @ r)
    exact_tol = 1e-13 * max(1.0, float(np.sqrt(y @ y)))
    history = [cost]
    lam = LAMBDA_INIT
    status = STATUS_MAXITER
    gcos = math.inf
    it = 0
    while it < max_iter:
        it += 1
        J = jacobian(p, t)[:, free]
        A = J.T @ J
        g = J.T @ r
        rnorm = math.sqrt(2.0 * cost)
        diag = np.diag(A).copy()
        if np.any(diag <= 0.0):
            status = STATUS_DEGENERATE
            break
        if rnorm <= exact_tol:
            status = STATUS_EXACT
            gcos = 0.0
            break
        gcos = _gradient_cosine(A, g, rnorm)
        if gcos <= gtol:
            status = STATUS_GTOL
            break
        accepted = False
        while True:
            M = A + lam * np.diag(diag)
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                lam *= 10.0
                if lam > LAMBDA_MAX:
                    break
                continue
            delta = np.linalg.solve(L.T, np.linalg.solve(L, g))
            p_new = p.copy()
            p_new[free] += delta
            r_new = y - model(p_new, t)
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new < cost:
                step = float(np.sqrt(delta @ delta))
                pnorm = float(np.sqrt(p[free] @ p[free]))
                p, r, cost = p_new, r_new, cost_new
                history.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if step <= xtol * (pnorm + xtol):
                    status = STATUS_XTOL
                break
            lam *= 10.0
            if lam > LAMBDA_MAX:
                break
        if not accepted:
            status = STATUS_STALLED
            break
        if status == STATUS_XTOL:
            break
    if status in (STATUS_XTOL, STATUS_STALLED, STATUS_MAXITER):
        J = jacobian(p, t)[:, free]
        A = J.T @ J
        rnorm = math.sqrt(2.0 * cost)
        if rnorm <= exact_tol:
            gcos = 0.0
        elif np.all(np.diag(A) > 0):
            gcos = _gradient_cosine(A, J.T @ r, rnorm)
    return p, cost, it, status, np.array(history), gcos
