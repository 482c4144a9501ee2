"""Pure-Python kernels. Same algorithms as ``_ckernels.pyx``, used when the
compiled extension is unavailable and as a cross-check in the test suite."""

import math

import numpy as np

EPS = np.finfo(float).eps
POLISH_TOL = 1e-9
PROX_WEIGHT = 1e-8
PROX_SHRINK = 1e-2
PROX_FLOOR = 1e-14
POLISH_EVERY = 25
ACTIVE_SET_STEPS_PER_LABEL = 8
STATIONARY_FRACTION = 0.1


def _seqsum(v):
    s = 0.0
    for x in v:
        s += float(x)
    return s


def _cap_block(w):
    """Project ``w`` onto ``{z >= 0, sum(z) <= 1}``."""
    k = w.shape[0]
    if k == 0:
        return w.copy()
    z = np.maximum(w, 0.0)
    if _seqsum(z) > 1.0:
        u = np.sort(w)[::-1]
        css = np.cumsum(u) - 1.0
        j = np.arange(1, k + 1)
        rho = int(np.count_nonzero(u - css / j > 0))
        theta = css[rho - 1] / rho
        z = np.maximum(w - theta, 0.0)
    # leave room for rounding in any summation order
    limit = 1.0 - 2.0 * k * EPS
    s = _seqsum(z)
    if s > limit:
        top = int(np.argmax(z))
        z[top] = max(z[top] - (s - limit), 0.0)
    return z


def project_feasible(v, pos):
    """Project onto the row constraint set: positives in a capped simplex,
    negatives in its mirror image."""
    v = np.asarray(v, dtype=float)
    pos = np.asarray(pos, dtype=bool)
    z = np.empty_like(v)
    z[pos] = _cap_block(v[pos])
    z[~pos] = -_cap_block(-v[~pos])
    return z


def qp_objective(H, f, z):
    return 0.5 * float(z @ H @ z) + float(f @ z)


def kkt_residual(H, f, z, pos):
    """Natural residual ``||z - P(z - grad)||_inf`` (zero iff z is optimal)."""
    g = H @ z + f
    return float(np.max(np.abs(z - project_feasible(z - g, pos)))) if z.size else 0.0


def _linear_solution(f, pos):
    # H == 0: put the whole cap on the single most profitable coordinate per block
    z = np.zeros_like(f)
    idx = np.flatnonzero(pos)
    if idx.size:
        c = idx[int(np.argmin(f[idx]))]
        if f[c] < 0:
            z[c] = 1.0
    idx = np.flatnonzero(~pos)
    if idx.size:
        c = idx[int(np.argmax(f[idx]))]
        if f[c] > 0:
            z[c] = -1.0
    return project_feasible(z, pos)


def _face_direction(H, g, free, pos, cap_pos, cap_neg, weight):
    """Proximal Newton direction on the working face.

    Solves ``[(H_FF + rho I) A'; A 0] [d; mu] = [-g_F; 0]``, where the rows of
    ``A`` are the active caps. Returns ``(d, mu_pos, mu_neg)`` or ``None``.
    """
    idx = np.flatnonzero(free)
    p = idx.size
    rows = []
    if cap_pos:
        rows.append(pos[idx].astype(float))
    if cap_neg:
        rows.append(-(~pos[idx]).astype(float))
    a = len(rows)
    Hf = H[np.ix_(idx, idx)]
    rho = weight * (1.0 + (float(np.max(np.abs(Hf))) if p else 0.0))
    K = np.zeros((p + a, p + a))
    K[:p, :p] = Hf + rho * np.eye(p)
    for j, row in enumerate(rows):
        K[p + j, :p] = row
        K[:p, p + j] = row
    sol = _gauss_solve(K, np.concatenate([-g[idx], np.zeros(a)]))
    if sol is None:
        return None
    d = np.zeros_like(g)
    d[idx] = sol[:p]
    mus = list(sol[p:])
    mu_pos = mus.pop(0) if cap_pos else 0.0
    mu_neg = mus.pop(0) if cap_neg else 0.0
    return d, mu_pos, mu_neg


def _active_set(H, f, z, pos, tol):
    """Primal active-set refinement started from the face of ``z``.

    Face steps use a proximal term so singular faces stay solvable; the
    weight shrinks after every unblocked step, which lets the iteration
    travel along flat directions until a bound stops it. Once the face is
    stationary the constraint with the most negative multiplier is
    released. Returns the visited point with the smallest residual.
    """
    free = z != 0.0
    cap_pos = bool(np.any(free & pos)) and _seqsum(z[pos]) >= 1.0 - POLISH_TOL
    cap_neg = bool(np.any(free & ~pos)) and _seqsum(-z[~pos]) >= 1.0 - POLISH_TOL
    weight = PROX_WEIGHT
    obj = qp_objective(H, f, z)
    best, best_res = z, kkt_residual(H, f, z, pos)
    gtol = STATIONARY_FRACTION * tol
    for _ in range(ACTIVE_SET_STEPS_PER_LABEL * z.size + 8):
        if best_res <= gtol:
            break
        g = H @ z + f
        step = _face_direction(H, g, free, pos, cap_pos, cap_neg, weight)
        if step is None:
            break
        d, mu_pos, mu_neg = step
        face_res = np.abs(g + mu_pos * pos - mu_neg * ~pos)[free]
        if face_res.size == 0 or float(np.max(face_res)) <= gtol:
            # stationary on the face: look for a constraint to release
            worst, drop = -gtol, None
            if cap_pos and mu_pos < worst:
                worst, drop = mu_pos, "pos"
            if cap_neg and mu_neg < worst:
                worst, drop = mu_neg, "neg"
            for j in np.flatnonzero(~free):
                nu = g[j] + mu_pos if pos[j] else mu_neg - g[j]
                if nu < worst:
                    worst, drop = nu, j
            if drop is None:
                break
            if drop == "pos":
                cap_pos = False
            elif drop == "neg":
                cap_neg = False
            else:
                free[drop] = True
            weight = PROX_WEIGHT
            continue

        alpha, block = 1.0, None
        for j in np.flatnonzero(free):
            if pos[j] and d[j] < 0.0 and z[j] < -alpha * d[j]:
                alpha, block = z[j] / -d[j], j
            elif not pos[j] and d[j] > 0.0 and -z[j] < alpha * d[j]:
                alpha, block = -z[j] / d[j], j
        if not cap_pos:
            dp = float(np.sum(d[pos]))
            room = 1.0 - _seqsum(z[pos])
            if dp > 0.0 and room < alpha * dp:
                alpha, block = max(room, 0.0) / dp, "pos"
        if not cap_neg:
            dn = -float(np.sum(d[~pos]))
            room = 1.0 - _seqsum(-z[~pos])
            if dn > 0.0 and room < alpha * dn:
                alpha, block = max(room, 0.0) / dn, "neg"
        cand = z + alpha * d
        if block == "pos":
            cap_pos = True
        elif block == "neg":
            cap_neg = True
        elif block is not None:
            cand[block] = 0.0
            free[block] = False
        else:
            weight = max(weight * PROX_SHRINK, PROX_FLOOR)
        cand = project_feasible(cand, pos)
        val = qp_objective(H, f, cand)
        if val > obj + 4.0 * EPS * (1.0 + abs(obj)):
            break
        z, obj = cand, val
        res = kkt_residual(H, f, z, pos)
        if res < best_res:
            best, best_res = z, res
    return best


def _gauss_solve(A, b):
    """Gaussian elimination with partial pivoting; ``None`` if numerically singular."""
    A = A.copy()
    b = b.copy()
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A)))) if n else 1.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[piv, col]) <= 1e-13 * scale:
            return None
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        for r in range(col + 1, n):
            m = A[r, col] / A[col, col]
            if m != 0.0:
                A[r, col:] -= m * A[col, col:]
                b[r] -= m * b[col]
    x = np.zeros(n)
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - A[r, r + 1 :] @ x[r + 1 :]) / A[r, r]
    return x


def solve_row_qp(H, f, pos, tol=1e-10, max_iter=10000):
    """Minimize ``0.5 z'Hz + f'z`` over the row constraint set.

    Accelerated projected gradient with adaptive restart, followed by an exact
    solve on the identified face. Returns ``(z, residual, iterations)``.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    pos = np.asarray(pos, dtype=bool)
    lip = float(np.max(np.sum(np.abs(H), axis=1))) if H.size else 0.0
    if lip <= 0.0:
        z = _linear_solution(f, pos)
        return z, kkt_residual(H, f, z, pos), 0

    step = 1.0 / lip
    z = project_feasible(np.zeros_like(f), pos)
    y = z.copy()
    t = 1.0
    res = kkt_residual(H, f, z, pos)
    it = 0
    while it < max_iter and res > tol:
        it += 1
        z_new = project_feasible(y - step * (H @ y + f), pos)
        if float((y - z_new) @ (z_new - z)) > 0.0:
            t = 1.0
            y = z_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = z_new + ((t - 1.0) / t_new) * (z_new - z)
            t = t_new
        z = z_new
        res = kkt_residual(H, f, z, pos)
        if res > tol and it % POLISH_EVERY == 0:
            cand = _active_set(H, f, z, pos, tol)
            cres = kkt_residual(H, f, cand, pos)
            if cres <= tol:
                return cand, cres, it

    if res > tol:
        cand = _active_set(H, f, z, pos, tol)
        cres = kkt_residual(H, f, cand, pos)
        if cres <= res:
            z, res = cand, cres
    return z, res, it


def coordinate_pass(X, Y, psi, G, K, beta, tol, max_iter):
    """One Gauss-Seidel sweep over the rows of ``psi`` (updated in place).

    ``G`` must equal ``X.T @ psi`` on entry and is kept in sync. Returns the
    per-row gains in the dual objective and the per-row KKT residuals.
    """
    n = X.shape[0]
    gains = np.zeros(n)
    resid = np.zeros(n)
    ones = np.ones(Y.shape[1])
    for i in range(n):
        x = X[i]
        sq = float(x @ x)
        pos = Y[i] > 0.5
        old = psi[i].copy()
        h = G.T @ x - sq * old
        f = ones - 2.0 * Y[i] + (K @ h) / beta
        H = (sq / beta) * K
        z, res, _ = solve_row_qp(H, f, pos, tol, max_iter)
        gains[i] = qp_objective(H, f, old) - qp_objective(H, f, z)
        resid[i] = res
        G += np.outer(x, z - old)
        psi[i] = z
    return gains, resid


def jacobi_eigh(S, rel_tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition. Returns unsorted ``(values, vectors)``."""
    A = np.array(S, dtype=float, copy=True)
    m = A.shape[0]
    V = np.eye(m)
    target = rel_tol * float(np.linalg.norm(A))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= target:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                colp = A[:, p].copy()
                colq = A[:, q]
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp = A[p, :].copy()
                rowq = A[q, :]
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V
