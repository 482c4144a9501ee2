# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: row QP solver, Gauss-Seidel pass over the dual rows,
cyclic Jacobi eigendecomposition. Mirrors ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double EPS = 2.220446049250313e-16
cdef double POLISH_TOL = 1e-9
cdef double PROX_WEIGHT = 1e-8
cdef double PROX_SHRINK = 1e-2
cdef double PROX_FLOOR = 1e-14
cdef int POLISH_EVERY = 25
cdef int ACTIVE_SET_STEPS_PER_LABEL = 8
cdef double STATIONARY_FRACTION = 0.1


cdef void _sort_desc(double* u, int k) noexcept nogil:
    cdef int i, j
    cdef double key
    for i in range(1, k):
        key = u[i]
        j = i - 1
        while j >= 0 and u[j] < key:
            u[j + 1] = u[j]
            j -= 1
        u[j + 1] = key


cdef void _cap_block(double* w, double* z, int k, double* work) noexcept nogil:
    # projection onto {z >= 0, sum(z) <= 1}
    cdef int j, rho, top
    cdef double s = 0.0, css, theta, limit
    if k == 0:
        return
    for j in range(k):
        z[j] = w[j] if w[j] > 0.0 else 0.0
        s += z[j]
    if s > 1.0:
        for j in range(k):
            work[j] = w[j]
        _sort_desc(work, k)
        css = -1.0
        rho = 0
        theta = 0.0
        for j in range(k):
            css += work[j]
            if work[j] - css / (j + 1) > 0.0:
                rho = j + 1
                theta = css / rho
        for j in range(k):
            z[j] = w[j] - theta
            if z[j] < 0.0:
                z[j] = 0.0
    limit = 1.0 - 2.0 * k * EPS
    s = 0.0
    top = 0
    for j in range(k):
        s += z[j]
        if z[j] > z[top]:
            top = j
    if s > limit:
        z[top] -= s - limit
        if z[top] < 0.0:
            z[top] = 0.0


cdef void _project(double* v, int* pos, int k, double* out,
                   double* wbuf, double* zbuf, double* work) noexcept nogil:
    cdef int j, a = 0, b = 0
    for j in range(k):
        if pos[j]:
            wbuf[a] = v[j]
            a += 1
    _cap_block(wbuf, zbuf, a, work)
    a = 0
    for j in range(k):
        if pos[j]:
            out[j] = zbuf[a]
            a += 1
    for j in range(k):
        if not pos[j]:
            wbuf[b] = -v[j]
            b += 1
    _cap_block(wbuf, zbuf, b, work)
    b = 0
    for j in range(k):
        if not pos[j]:
            out[j] = -zbuf[b]
            b += 1


cdef struct Work:
    double* g
    double* y
    double* zn
    double* tmp
    double* wbuf
    double* zbuf
    double* sort
    double* kkt
    double* rhs
    double* cand


cdef int _alloc(Work* w, int k) noexcept nogil:
    cdef int nk = k + 2
    w.g = <double*> malloc(k * sizeof(double))
    w.y = <double*> malloc(k * sizeof(double))
    w.zn = <double*> malloc(k * sizeof(double))
    w.tmp = <double*> malloc(k * sizeof(double))
    w.wbuf = <double*> malloc(k * sizeof(double))
    w.zbuf = <double*> malloc(k * sizeof(double))
    w.sort = <double*> malloc(k * sizeof(double))
    w.kkt = <double*> malloc(nk * nk * sizeof(double))
    w.rhs = <double*> malloc(nk * sizeof(double))
    w.cand = <double*> malloc(k * sizeof(double))
    if (w.g == NULL or w.y == NULL or w.zn == NULL or w.tmp == NULL or w.wbuf == NULL
            or w.zbuf == NULL or w.sort == NULL or w.kkt == NULL or w.rhs == NULL
            or w.cand == NULL):
        return -1
    return 0


cdef void _release(Work* w) noexcept nogil:
    free(w.g); free(w.y); free(w.zn); free(w.tmp); free(w.wbuf)
    free(w.zbuf); free(w.sort); free(w.kkt); free(w.rhs); free(w.cand)


cdef double _objective(double* H, double* f, double* z, int k) noexcept nogil:
    cdef int i, j
    cdef double quad = 0.0, lin = 0.0, row
    for i in range(k):
        row = 0.0
        for j in range(k):
            row += H[i * k + j] * z[j]
        quad += z[i] * row
        lin += f[i] * z[i]
    return 0.5 * quad + lin


cdef double _residual(double* H, double* f, double* z, int* pos, int k, Work* w) noexcept nogil:
    cdef int i, j
    cdef double acc, r = 0.0, d
    for i in range(k):
        acc = f[i]
        for j in range(k):
            acc += H[i * k + j] * z[j]
        w.tmp[i] = z[i] - acc
    _project(w.tmp, pos, k, w.g, w.wbuf, w.zbuf, w.sort)
    for i in range(k):
        d = fabs(z[i] - w.g[i])
        if d > r:
            r = d
    return r


cdef int _gauss(double* A, double* b, int n) noexcept nogil:
    cdef int col, r, c, piv
    cdef double scale = 1.0, best, m, tmp
    for r in range(n * n):
        if fabs(A[r]) > scale:
            scale = fabs(A[r])
    for col in range(n):
        piv = col
        best = fabs(A[col * n + col])
        for r in range(col + 1, n):
            if fabs(A[r * n + col]) > best:
                best = fabs(A[r * n + col])
                piv = r
        if best <= 1e-13 * scale:
            return -1
        if piv != col:
            for c in range(n):
                tmp = A[col * n + c]
                A[col * n + c] = A[piv * n + c]
                A[piv * n + c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for r in range(col + 1, n):
            m = A[r * n + col] / A[col * n + col]
            if m != 0.0:
                for c in range(col, n):
                    A[r * n + c] -= m * A[col * n + c]
                b[r] -= m * b[col]
    for r in range(n - 1, -1, -1):
        tmp = b[r]
        for c in range(r + 1, n):
            tmp -= A[r * n + c] * b[c]
        b[r] = tmp / A[r * n + r]
    return 0


cdef int _face_direction(double* H, double* g, int* freem, int* pos, int k, int cap_pos,
                         int cap_neg, double weight, int* idx, Work* w, double* d,
                         double* mu_pos, double* mu_neg) noexcept nogil:
    # proximal Newton direction on the working face; see the Python fallback
    cdef int i, j, p = 0, n, row
    cdef double hmax = 0.0, rho
    for i in range(k):
        if freem[i]:
            idx[p] = i
            p += 1
    n = p + cap_pos + cap_neg
    for i in range(p):
        for j in range(p):
            if fabs(H[idx[i] * k + idx[j]]) > hmax:
                hmax = fabs(H[idx[i] * k + idx[j]])
    rho = weight * (1.0 + hmax)
    for i in range(n * n):
        w.kkt[i] = 0.0
    for i in range(p):
        for j in range(p):
            w.kkt[i * n + j] = H[idx[i] * k + idx[j]]
        w.kkt[i * n + i] += rho
        w.rhs[i] = -g[idx[i]]
    row = p
    if cap_pos:
        for i in range(p):
            if pos[idx[i]]:
                w.kkt[row * n + i] = 1.0
                w.kkt[i * n + row] = 1.0
        w.rhs[row] = 0.0
        row += 1
    if cap_neg:
        for i in range(p):
            if not pos[idx[i]]:
                w.kkt[row * n + i] = -1.0
                w.kkt[i * n + row] = -1.0
        w.rhs[row] = 0.0
    if n > 0 and _gauss(w.kkt, w.rhs, n) != 0:
        return -1
    for i in range(k):
        d[i] = 0.0
    for i in range(p):
        d[idx[i]] = w.rhs[i]
    mu_pos[0] = w.rhs[p] if cap_pos else 0.0
    mu_neg[0] = w.rhs[p + cap_pos] if cap_neg else 0.0
    return 0


cdef int _active_set(double* H, double* f, double* z, int* pos, int k, double tol,
                     Work* w) noexcept nogil:
    # primal active-set refinement mirrored from the Python fallback; the
    # visited point with the smallest residual is left in w.cand
    cdef int i, j, step, block, any_p = 0, any_n = 0, cap_pos, cap_neg, drop, nfree
    cdef double sp = 0.0, sn = 0.0, weight = PROX_WEIGHT, obj, val, best_res, res
    cdef double gtol = STATIONARY_FRACTION * tol, mu_pos = 0.0, mu_neg = 0.0
    cdef double worst, nu, fr, face_max, alpha, dp, dn, room
    cdef int* freem = <int*> malloc(k * sizeof(int))
    cdef int* idx = <int*> malloc(k * sizeof(int))
    cdef double* cur = <double*> malloc(k * sizeof(double))
    cdef double* g = <double*> malloc(k * sizeof(double))
    cdef double* d = <double*> malloc(k * sizeof(double))
    if freem == NULL or idx == NULL or cur == NULL or g == NULL or d == NULL:
        free(freem); free(idx); free(cur); free(g); free(d)
        return -1
    for i in range(k):
        cur[i] = z[i]
        w.cand[i] = z[i]
        freem[i] = z[i] != 0.0
        if pos[i]:
            sp += z[i]
            any_p = any_p or freem[i]
        else:
            sn -= z[i]
            any_n = any_n or freem[i]
    cap_pos = any_p and sp >= 1.0 - POLISH_TOL
    cap_neg = any_n and sn >= 1.0 - POLISH_TOL
    obj = _objective(H, f, cur, k)
    best_res = _residual(H, f, cur, pos, k, w)
    for step in range(ACTIVE_SET_STEPS_PER_LABEL * k + 8):
        if best_res <= gtol:
            break
        for i in range(k):
            g[i] = f[i]
            for j in range(k):
                g[i] += H[i * k + j] * cur[j]
        if _face_direction(H, g, freem, pos, k, cap_pos, cap_neg, weight, idx, w, d,
                           &mu_pos, &mu_neg) != 0:
            break
        face_max = 0.0
        nfree = 0
        for i in range(k):
            if freem[i]:
                nfree += 1
                fr = fabs(g[i] + mu_pos) if pos[i] else fabs(g[i] - mu_neg)
                if fr > face_max:
                    face_max = fr
        if nfree == 0 or face_max <= gtol:
            worst = -gtol
            drop = -3
            if cap_pos and mu_pos < worst:
                worst = mu_pos
                drop = -1
            if cap_neg and mu_neg < worst:
                worst = mu_neg
                drop = -2
            for j in range(k):
                if not freem[j]:
                    nu = g[j] + mu_pos if pos[j] else mu_neg - g[j]
                    if nu < worst:
                        worst = nu
                        drop = j
            if drop == -3:
                break
            if drop == -1:
                cap_pos = 0
            elif drop == -2:
                cap_neg = 0
            else:
                freem[drop] = 1
            weight = PROX_WEIGHT
            continue

        alpha = 1.0
        block = -3
        for j in range(k):
            if not freem[j]:
                continue
            if pos[j] and d[j] < 0.0 and cur[j] < -alpha * d[j]:
                alpha = cur[j] / -d[j]
                block = j
            elif not pos[j] and d[j] > 0.0 and -cur[j] < alpha * d[j]:
                alpha = -cur[j] / d[j]
                block = j
        if not cap_pos:
            dp = 0.0
            sp = 0.0
            for j in range(k):
                if pos[j]:
                    dp += d[j]
                    sp += cur[j]
            room = 1.0 - sp
            if dp > 0.0 and room < alpha * dp:
                alpha = (room if room > 0.0 else 0.0) / dp
                block = -1
        if not cap_neg:
            dn = 0.0
            sn = 0.0
            for j in range(k):
                if not pos[j]:
                    dn -= d[j]
                    sn -= cur[j]
            room = 1.0 - sn
            if dn > 0.0 and room < alpha * dn:
                alpha = (room if room > 0.0 else 0.0) / dn
                block = -2
        for j in range(k):
            w.tmp[j] = cur[j] + alpha * d[j]
        if block == -1:
            cap_pos = 1
        elif block == -2:
            cap_neg = 1
        elif block >= 0:
            w.tmp[block] = 0.0
            freem[block] = 0
        else:
            weight = weight * PROX_SHRINK
            if weight < PROX_FLOOR:
                weight = PROX_FLOOR
        _project(w.tmp, pos, k, d, w.wbuf, w.zbuf, w.sort)
        val = _objective(H, f, d, k)
        if val > obj + 4.0 * EPS * (1.0 + fabs(obj)):
            break
        for j in range(k):
            cur[j] = d[j]
        obj = val
        res = _residual(H, f, cur, pos, k, w)
        if res < best_res:
            best_res = res
            for j in range(k):
                w.cand[j] = cur[j]
    free(freem); free(idx); free(cur); free(g); free(d)
    return 0


cdef double _solve(double* H, double* f, int* pos, int k, double tol, int max_iter,
                   double* z, int* iters, Work* w) noexcept nogil:
    cdef int i, j, it = 0, best
    cdef double lip = 0.0, row, step, t = 1.0, t_new, dot, res, cres, acc, coef
    for i in range(k):
        row = 0.0
        for j in range(k):
            row += fabs(H[i * k + j])
        if row > lip:
            lip = row
    if lip <= 0.0:
        for i in range(k):
            w.tmp[i] = 0.0
        best = -1
        for i in range(k):
            if pos[i] and (best < 0 or f[i] < f[best]):
                best = i
        if best >= 0 and f[best] < 0.0:
            w.tmp[best] = 1.0
        best = -1
        for i in range(k):
            if not pos[i] and (best < 0 or f[i] > f[best]):
                best = i
        if best >= 0 and f[best] > 0.0:
            w.tmp[best] = -1.0
        _project(w.tmp, pos, k, z, w.wbuf, w.zbuf, w.sort)
        iters[0] = 0
        return _residual(H, f, z, pos, k, w)

    step = 1.0 / lip
    for i in range(k):
        w.tmp[i] = 0.0
    _project(w.tmp, pos, k, z, w.wbuf, w.zbuf, w.sort)
    for i in range(k):
        w.y[i] = z[i]
    res = _residual(H, f, z, pos, k, w)
    while it < max_iter and res > tol:
        it += 1
        for i in range(k):
            acc = f[i]
            for j in range(k):
                acc += H[i * k + j] * w.y[j]
            w.tmp[i] = w.y[i] - step * acc
        _project(w.tmp, pos, k, w.zn, w.wbuf, w.zbuf, w.sort)
        dot = 0.0
        for i in range(k):
            dot += (w.y[i] - w.zn[i]) * (w.zn[i] - z[i])
        if dot > 0.0:
            t = 1.0
            for i in range(k):
                w.y[i] = w.zn[i]
        else:
            t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            coef = (t - 1.0) / t_new
            for i in range(k):
                w.y[i] = w.zn[i] + coef * (w.zn[i] - z[i])
            t = t_new
        for i in range(k):
            z[i] = w.zn[i]
        res = _residual(H, f, z, pos, k, w)
        if res > tol and it % POLISH_EVERY == 0:
            if _active_set(H, f, z, pos, k, tol, w) == 0:
                cres = _residual(H, f, w.cand, pos, k, w)
                if cres <= tol:
                    for i in range(k):
                        z[i] = w.cand[i]
                    iters[0] = it
                    return cres

    if res > tol and _active_set(H, f, z, pos, k, tol, w) == 0:
        cres = _residual(H, f, w.cand, pos, k, w)
        if cres <= res:
            for i in range(k):
                z[i] = w.cand[i]
            res = cres
    iters[0] = it
    return res


def project_feasible(v, pos):
    cdef cnp.ndarray[double, ndim=1, mode="c"] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef cnp.ndarray[int, ndim=1, mode="c"] pp = np.ascontiguousarray(np.asarray(pos, dtype=bool), dtype=np.intc)
    cdef int k = vv.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.zeros(k)
    cdef Work w
    if _alloc(&w, max(k, 1)) != 0:
        _release(&w)
        raise MemoryError()
    _project(&vv[0] if k else NULL, &pp[0] if k else NULL, k,
             &out[0] if k else NULL, w.wbuf, w.zbuf, w.sort)
    _release(&w)
    return out


def solve_row_qp(H, f, pos, double tol=1e-10, int max_iter=10000):
    cdef cnp.ndarray[double, ndim=2, mode="c"] HH = np.ascontiguousarray(H, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ff = np.ascontiguousarray(f, dtype=np.float64)
    cdef cnp.ndarray[int, ndim=1, mode="c"] pp = np.ascontiguousarray(np.asarray(pos, dtype=bool), dtype=np.intc)
    cdef int k = ff.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.zeros(k)
    cdef int iters = 0
    cdef double res
    cdef Work w
    if k == 0:
        return z, 0.0, 0
    if _alloc(&w, k) != 0:
        _release(&w)
        raise MemoryError()
    with nogil:
        res = _solve(&HH[0, 0], &ff[0], &pp[0], k, tol, max_iter, &z[0], &iters, &w)
    _release(&w)
    return z, res, iters


def coordinate_pass(X, Y, psi, G, K, double beta, double tol, int max_iter):
    """Gauss-Seidel sweep over the rows of ``psi``; updates ``psi`` and ``G`` in place."""
    cdef const double[:, ::1] Xv = X
    cdef const double[:, ::1] Yv = Y
    cdef double[:, ::1] P = psi
    cdef double[:, ::1] Gv = G
    cdef double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef int n = Xv.shape[0], d = Xv.shape[1], k = Yv.shape[1]
    cdef cnp.ndarray[double, ndim=1] gains = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] resid = np.zeros(n)
    cdef double[::1] gv = gains
    cdef double[::1] rv = resid
    cdef double* H = <double*> malloc(k * k * sizeof(double))
    cdef double* f = <double*> malloc(k * sizeof(double))
    cdef double* h = <double*> malloc(k * sizeof(double))
    cdef double* old = <double*> malloc(k * sizeof(double))
    cdef double* z = <double*> malloc(k * sizeof(double))
    cdef int* pos = <int*> malloc(k * sizeof(int))
    cdef int i, a, b, c, iters
    cdef double sq, acc, scale, delta
    cdef Work w
    if H == NULL or f == NULL or h == NULL or old == NULL or z == NULL or pos == NULL or _alloc(&w, k) != 0:
        free(H); free(f); free(h); free(old); free(z); free(pos)
        raise MemoryError()
    with nogil:
        for i in range(n):
            sq = 0.0
            for a in range(d):
                sq += Xv[i, a] * Xv[i, a]
            for c in range(k):
                old[c] = P[i, c]
                pos[c] = Yv[i, c] > 0.5
                acc = 0.0
                for a in range(d):
                    acc += Gv[a, c] * Xv[i, a]
                h[c] = acc - sq * old[c]
            scale = sq / beta
            for a in range(k):
                acc = 0.0
                for b in range(k):
                    acc += Kv[a, b] * h[b]
                    H[a * k + b] = scale * Kv[a, b]
                f[a] = 1.0 - 2.0 * Yv[i, a] + acc / beta
            rv[i] = _solve(H, f, pos, k, tol, max_iter, z, &iters, &w)
            gv[i] = _objective(H, f, old, k) - _objective(H, f, z, k)
            for c in range(k):
                delta = z[c] - old[c]
                if delta != 0.0:
                    for a in range(d):
                        Gv[a, c] += Xv[i, a] * delta
                P[i, c] = z[c]
    _release(&w)
    free(H); free(f); free(h); free(old); free(z); free(pos)
    return gains, resid


def jacobi_eigh(S, double rel_tol=1e-12, int max_sweeps=100):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Aarr = np.array(S, dtype=np.float64, order="C", copy=True)
    cdef int m = Aarr.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] Varr = np.eye(m)
    cdef double[:, ::1] A = Aarr
    cdef double[:, ::1] V = Varr
    cdef int sweep, p, q, j
    cdef double target, off, total, apq, tau, t, c, s, x, y
    total = 0.0
    for p in range(m):
        for q in range(m):
            total += A[p, q] * A[p, q]
    target = rel_tol * sqrt(total)
    with nogil:
        for sweep in range(max_sweeps):
            off = 0.0
            for p in range(m):
                for q in range(m):
                    if p != q:
                        off += A[p, q] * A[p, q]
            if sqrt(off) <= target:
                break
            for p in range(m - 1):
                for q in range(p + 1, m):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if tau >= 0:
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for j in range(m):
                        x = A[j, p]
                        y = A[j, q]
                        A[j, p] = c * x - s * y
                        A[j, q] = s * x + c * y
                    for j in range(m):
                        x = A[p, j]
                        y = A[q, j]
                        A[p, j] = c * x - s * y
                        A[q, j] = s * x + c * y
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for j in range(m):
                        x = V[j, p]
                        y = V[j, q]
                        V[j, p] = c * x - s * y
                        V[j, q] = s * x + c * y
    return np.diag(Aarr).copy(), Varr
