# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fitting kernels; the algorithm matches ``_pycore`` line for line."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, sqrt, fabs, INFINITY

cnp.import_array()

cdef double TWO_PI = 6.283185307179586

cdef int STATUS_DEGENERATE = -1
cdef int STATUS_MAXITER = 0
cdef int STATUS_XTOL = 1
cdef int STATUS_GTOL = 2
cdef int STATUS_EXACT = 3
cdef int STATUS_STALLED = 4

cdef double LAMBDA_INIT = 1e-3
cdef double LAMBDA_MAX = 1e16


cdef double _residuals(const double[:] t, const double[:] y, double* p, double[:] r) noexcept nogil:
    cdef Py_ssize_t i, n = t.shape[0]
    cdef double env, acc = 0.0, v
    for i in range(n):
        env = exp(-p[4] * t[i]) if p[4] != 0.0 else 1.0
        v = y[i] - (p[0] + p[1] * env * cos(TWO_PI * p[2] * t[i] + p[3]))
        r[i] = v
        acc += v * v
    return 0.5 * acc


cdef void _normal(const double[:] t, double* p, const double[:] r, const long[:] free,
                  double* A, double* g) noexcept nogil:
    """Accumulate J^T J (k x k, row-major) and J^T r over the free parameters."""
    cdef Py_ssize_t i, a, b, n = t.shape[0], k = free.shape[0]
    cdef double env, arg, c, s
    cdef double row[5]
    cdef double full[5]
    for a in range(k):
        g[a] = 0.0
        for b in range(k):
            A[a * k + b] = 0.0
    for i in range(n):
        env = exp(-p[4] * t[i]) if p[4] != 0.0 else 1.0
        arg = TWO_PI * p[2] * t[i] + p[3]
        c = env * cos(arg)
        s = env * sin(arg)
        full[0] = 1.0
        full[1] = c
        full[2] = -p[1] * s * TWO_PI * t[i]
        full[3] = -p[1] * s
        full[4] = -p[1] * c * t[i]
        for a in range(k):
            row[a] = full[free[a]]
        for a in range(k):
            g[a] += row[a] * r[i]
            for b in range(k):
                A[a * k + b] += row[a] * row[b]


cdef int _cholesky_solve(double* M, double* rhs, double* out, int k) noexcept nogil:
    """Solve M x = rhs in place via Cholesky; returns 0 on failure (not PD)."""
    cdef double L[25]
    cdef double z[5]
    cdef int i, j, m
    cdef double acc
    for i in range(k):
        for j in range(i + 1):
            acc = M[i * k + j]
            for m in range(j):
                acc -= L[i * 5 + m] * L[j * 5 + m]
            if i == j:
                if acc <= 0.0:
                    return 0
                L[i * 5 + i] = sqrt(acc)
            else:
                L[i * 5 + j] = acc / L[j * 5 + j]
    for i in range(k):
        acc = rhs[i]
        for m in range(i):
            acc -= L[i * 5 + m] * z[m]
        z[i] = acc / L[i * 5 + i]
    for i in range(k - 1, -1, -1):
        acc = z[i]
        for m in range(i + 1, k):
            acc -= L[m * 5 + i] * out[m]
        out[i] = acc / L[i * 5 + i]
    return 1


cdef double _gcos(double* A, double* g, int k, double rnorm) noexcept nogil:
    cdef int a
    cdef double best = 0.0, v
    for a in range(k):
        v = fabs(g[a]) / (sqrt(A[a * k + a]) * rnorm)
        if v > best:
            best = v
    return best


def periodogram(t, y, freqs):
    cdef const double[:] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:] fv = np.ascontiguousarray(freqs, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0], nf = fv.shape[0], i, j
    out = np.empty(nf)
    cdef double[:] ov = out
    # per-sample cos/sin of the current frequency and of the grid step
    work = np.empty((4, n))
    cdef double[:, :] w = work
    cdef double ymean = 0.0, arg, c, s, yc, step = 0.0, fmax = 0.0
    cdef double sc, ss, scc, sss, scs, yco, yso, det
    cdef bint uniform = nf > 2
    for i in range(n):
        ymean += yv[i]
    ymean /= n
    if uniform:
        step = (fv[nf - 1] - fv[0]) / (nf - 1)
        for j in range(nf):
            fmax = max(fmax, fabs(fv[j]))
        for j in range(nf):
            if fabs(fv[j] - (fv[0] + j * step)) > 1e-12 * fmax:
                uniform = False
                break
    with nogil:
        if uniform:
            for i in range(n):
                w[2, i] = cos(TWO_PI * step * tv[i])
                w[3, i] = sin(TWO_PI * step * tv[i])
        for j in range(nf):
            sc = 0.0; ss = 0.0; scc = 0.0; sss = 0.0; scs = 0.0; yco = 0.0; yso = 0.0
            for i in range(n):
                if uniform and j % 64 != 0:
                    # angle addition: advance by one grid step
                    c = w[0, i] * w[2, i] - w[1, i] * w[3, i]
                    s = w[1, i] * w[2, i] + w[0, i] * w[3, i]
                else:
                    arg = TWO_PI * fv[j] * tv[i]
                    c = cos(arg)
                    s = sin(arg)
                w[0, i] = c
                w[1, i] = s
                yc = yv[i] - ymean
                sc += c
                ss += s
                scc += c * c
                sss += s * s
                scs += c * s
                yco += c * yc
                yso += s * yc
            scc -= sc * sc / n
            sss -= ss * ss / n
            scs -= sc * ss / n
            det = scc * sss - scs * scs
            if det > 1e-12 * scc * sss:
                ov[j] = (sss * yco * yco - 2.0 * scs * yco * yso + scc * yso * yso) / det
            else:
                ov[j] = 0.0
    return out


def lm_fit(t, y, p0, free, int max_iter, double xtol, double gtol):
    cdef const double[:] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long[:] fr = np.ascontiguousarray(free, dtype=np.int64)
    cdef Py_ssize_t n = tv.shape[0]
    cdef int k = fr.shape[0], a, it = 0, status = STATUS_MAXITER, accepted
    cdef double p[5]
    cdef double p_new[5]
    cdef double A[25]
    cdef double M[25]
    cdef double g[5]
    cdef double delta[5]
    cdef double diag[5]
    r_arr = np.empty(n)
    rn_arr = np.empty(n)
    cdef double[:] r = r_arr
    cdef double[:] r_new = rn_arr
    cdef double cost, cost_new, lam = LAMBDA_INIT, rnorm, gcos = INFINITY
    cdef double step, pnorm, ynorm = 0.0, exact_tol
    cdef Py_ssize_t i
    for a in range(5):
        p[a] = p0[a]
    for i in range(n):
        ynorm += yv[i] * yv[i]
    exact_tol = 1e-13 * max(1.0, sqrt(ynorm))
    cost = _residuals(tv, yv, p, r)
    history = [cost]
    while it < max_iter:
        it += 1
        _normal(tv, p, r, fr, A, g)
        rnorm = sqrt(2.0 * cost)
        status = STATUS_MAXITER
        for a in range(k):
            diag[a] = A[a * k + a]
            if diag[a] <= 0.0:
                status = STATUS_DEGENERATE
        if status == STATUS_DEGENERATE:
            break
        if rnorm <= exact_tol:
            status = STATUS_EXACT
            gcos = 0.0
            break
        gcos = _gcos(A, g, k, rnorm)
        if gcos <= gtol:
            status = STATUS_GTOL
            break
        accepted = 0
        while True:
            for a in range(k * k):
                M[a] = A[a]
            for a in range(k):
                M[a * k + a] += lam * diag[a]
            if not _cholesky_solve(M, g, delta, k):
                lam *= 10.0
                if lam > LAMBDA_MAX:
                    break
                continue
            for a in range(5):
                p_new[a] = p[a]
            for a in range(k):
                p_new[fr[a]] += delta[a]
            cost_new = _residuals(tv, yv, p_new, r_new)
            if cost_new < cost:
                step = 0.0
                pnorm = 0.0
                for a in range(k):
                    step += delta[a] * delta[a]
                    pnorm += p[fr[a]] * p[fr[a]]
                step = sqrt(step)
                pnorm = sqrt(pnorm)
                for a in range(5):
                    p[a] = p_new[a]
                for i in range(n):
                    r[i] = r_new[i]
                cost = cost_new
                history.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = 1
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
    if status == STATUS_XTOL or status == STATUS_STALLED or status == STATUS_MAXITER:
        _normal(tv, p, r, fr, A, g)
        rnorm = sqrt(2.0 * cost)
        if rnorm <= exact_tol:
            gcos = 0.0
        else:
            accepted = 1
            for a in range(k):
                if A[a * k + a] <= 0.0:
                    accepted = 0
            if accepted:
                gcos = _gcos(A, g, k, rnorm)
    out = np.array([p[0], p[1], p[2], p[3], p[4]])
    return out, cost, it, status, np.array(history), gcos
