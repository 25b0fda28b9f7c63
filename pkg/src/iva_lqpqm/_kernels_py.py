"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` and are used when the compiled extension is
not available (or when ``IVA_LQPQM_PURE_PYTHON=1``).
"""

import numpy as np

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_EMPTY_SUPPORT = 2


def cubic_largest_root(b, c, d):
    """Largest real root of ``x^3 - b x^2 + c x - d`` (element-wise)."""
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    shift = b / 3.0
    p = c - b * b / 3.0
    q = -2.0 * b**3 / 27.0 + b * c / 3.0 - d

    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    # near-zero discriminant is treated as a double root (trigonometric branch)
    scale = (q / 2.0) ** 2 + np.abs(p / 3.0) ** 3
    with np.errstate(invalid="ignore", divide="ignore"):
        # three real roots: trigonometric form, k = 0 branch is the largest
        r = np.sqrt(np.maximum(-p / 3.0, 0.0))
        arg = np.where(r > 0, -q / (2.0 * np.where(r > 0, r, 1.0) ** 3), 0.0)
        t_trig = 2.0 * r * np.cos(np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0)
        # one real root: Cardano
        sq = np.sqrt(np.maximum(disc, 0.0))
        t_card = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
    x = np.where(disc > 1e-10 * scale, t_card, t_trig) + shift

    for _ in range(3):
        P = ((x - b) * x + c) * x - d
        dP = (3.0 * x - 2.0 * b) * x + c
        ok = dP > 0
        step = np.where(ok, P / np.where(ok, dP, 1.0), 0.0)
        x_new = x - step
        P_new = ((x_new - b) * x_new + c) * x_new - d
        x = np.where(np.abs(P_new) < np.abs(P), x_new, x)
    return x


def solve_secular_batch(phi, vsq, z, eps=1e-12, max_iter=100):
    """Largest root of ``f(l) = l^2 sum_m phi_m vsq_m / (l - phi_m)^2 - l + z``.

    Args:
        phi: (B, d) non-negative eigenvalues.
        vsq: (B, d) squared magnitudes of the rotated offset.
        z: (B,) non-negative offsets.
        eps: stop when ``|f(l)| <= eps * max(1, l)``.
        max_iter: cap on protected Newton steps.

    Returns:
        ``(lam, n_iter, status)`` arrays of shape (B,).
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    vsq = np.ascontiguousarray(vsq, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    B = phi.shape[0]

    w = phi * vsq
    support = w > 0
    has_support = np.any(support, axis=1)
    phi_s = np.where(support, phi, 0.0)
    w = np.where(support, w, 0.0)
    pmax = np.max(np.where(support, phi, -np.inf), axis=1)
    pmax = np.where(has_support, pmax, 0.0)
    total = np.sum(w, axis=1)

    at_max = support & (phi_s == pmax[:, None])
    vmax_sq = np.sum(np.where(at_max, vsq, 0.0), axis=1)

    lo = np.maximum(pmax, z)
    hi = np.maximum(2.0 * pmax, 4.0 * total + z) * (1.0 + 1e-9)

    lam = cubic_largest_root(pmax * vmax_sq + 2.0 * pmax + z, (pmax + 2.0 * z) * pmax, pmax * pmax * z)
    lam = np.maximum(lam, z)
    bad = ~((lam > lo) & (lam < hi))
    lam = np.where(bad & (z > pmax), z, lam)
    bad = ~((lam > pmax) & (lam < hi))
    lam = np.where(bad, 0.5 * (lo + hi), lam)

    n_iter = np.zeros(B, dtype=np.int64)
    status = np.where(has_support, STATUS_MAX_ITER, STATUS_EMPTY_SUPPORT).astype(np.int64)
    active = has_support.copy()
    for it in range(max_iter + 1):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        l = lam[idx]
        diff = l[:, None] - phi_s[idx]
        diff = np.where(support[idx], diff, 1.0)
        ratio = w[idx] / (diff * diff)
        f = l * l * np.sum(ratio, axis=1) - l + z[idx]
        done = np.abs(f) <= eps * np.maximum(1.0, l)
        status[idx[done]] = STATUS_OK
        if it == max_iter:
            break
        n_iter[idx[~done]] += 1

        lo_i = np.where(f > 0, np.maximum(lo[idx], l), lo[idx])
        hi_i = np.where(f < 0, np.minimum(hi[idx], l), hi[idx])
        lo[idx] = lo_i
        hi[idx] = hi_i

        fp = -2.0 * l * np.sum(ratio * phi_s[idx] / diff, axis=1) - 1.0
        mu = l - f / fp
        pm = pmax[idx]
        cand = np.where(mu > pm, mu, 0.5 * (pm + l))
        outside = ~((cand > lo_i) & (cand < hi_i))
        cand = np.where(outside, 0.5 * (lo_i + hi_i), cand)

        stalled = (cand == l) | (hi_i - lo_i <= 4.0 * np.finfo(float).eps * l)
        status[idx[stalled & ~done]] = STATUS_OK
        lam[idx] = np.where(done, l, cand)
        active[idx[done | stalled]] = False

    lam = np.where(has_support, lam, np.nan)
    return lam, n_iter, status


def weighted_covariance(X, weights):
    """``V[f, k] = (1/N) sum_n weights[k, n] x_fn x_fn^H``.

    Args:
        X: (F, M, N) complex observations.
        weights: (K, N) non-negative weights.

    Returns:
        (F, K, M, M) Hermitian matrices.
    """
    X = np.asarray(X, dtype=np.complex128)
    weights = np.asarray(weights, dtype=np.float64)
    F, M, N = X.shape
    K = weights.shape[0]
    XH = np.conj(np.swapaxes(X, -1, -2))
    V = np.empty((F, K, M, M), dtype=np.complex128)
    for k in range(K):
        V[:, k] = (X * weights[k]) @ XH
    V /= N
    return 0.5 * (V + np.conj(np.swapaxes(V, -1, -2)))
