"""Global minimization of log-quadratically penalized quadratics (LQPQM).

The problem is

    min_q  (q - b)^H A (q - b) - log((q - d)^H C (q - d) + z)

with ``A`` Hermitian positive definite, ``C`` Hermitian positive
semi-definite and ``z >= 0``.  It is non-convex, but after the change of
variables ``y = G (q - b)`` (``A = G^H G``) it becomes

    min_y  y^H y - log((y + v)^H U (y + v) + z)

whose global minimizer is read off the largest zero of the secular function

    f(lam) = lam^2 sum_m phi_m |vt_m|^2 / (lam - phi_m)^2 - lam + z

where ``U = S diag(phi) S^H`` and ``vt = S^H v``.  The largest zero is the
only one right of ``max(phi_max, z)`` and ``f`` is convex and decreasing
there, so a Newton iteration started from the root of a one-term cubic
approximation converges monotonically.

Everything here is vectorized over a leading batch axis; :func:`solve` is the
single-instance convenience wrapper.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from ._backend import STATUS_MAX_ITER, get_kernels
from .errors import MaxIterationsExceeded, PoleEvaluation

EPS_ROOT = 1e-12
MAX_NEWTON_ITER = 100
# eigenvalues of U below this fraction of the largest are treated as zero
PHI_RTOL = 1e-14


@dataclass(frozen=True)
class LqpqmProblem:
    """One instance ``(A, b, C, d, z)``."""

    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    d: np.ndarray
    z: float

    def __post_init__(self):
        A = linalg.as_complex_matrix(self.A, hermitian=True)
        C = linalg.as_complex_matrix(self.C, hermitian=True)
        b = np.asarray(self.b, dtype=np.complex128).reshape(-1)
        d = np.asarray(self.d, dtype=np.complex128).reshape(-1)
        n = A.shape[0]
        if A.shape != (n, n) or C.shape != (n, n) or b.shape != (n,) or d.shape != (n,):
            raise ValueError("inconsistent LQPQM dimensions")
        if not (np.isfinite(self.z) and self.z >= 0):
            raise ValueError(f"z must be finite and non-negative, got {self.z}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", float(self.z))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def objective(self, q) -> float:
        q = np.asarray(q, dtype=np.complex128)
        return float(np.real(objective_batch(self.A, self.b, self.C, self.d, self.z, q)))


@dataclass(frozen=True)
class CanonicalLqpqm:
    """The instance in ``y`` coordinates, plus what is needed to map back."""

    U: np.ndarray
    v: np.ndarray
    z: float
    G: np.ndarray
    b: np.ndarray

    def objective(self, y) -> float:
        y = np.asarray(y, dtype=np.complex128)
        r = y + self.v
        quad = np.real(np.conj(r) @ self.U @ r)
        return float(np.real(np.vdot(y, y)) - np.log(quad + self.z))

    def to_original(self, y) -> np.ndarray:
        return linalg.solve(self.G, np.asarray(y, dtype=np.complex128)) + self.b


@dataclass(frozen=True)
class LqpqmSolution:
    q_star: np.ndarray
    lambda_star: float
    objective_value: float
    newton_iterations: int
    y_star: np.ndarray = field(repr=False)


def objective_batch(A, b, C, d, z, q):
    """Objective of the original problem, vectorized over leading axes."""
    r = q - b
    s = q - d
    quad_a = np.real(np.einsum("...i,...ij,...j->...", np.conj(r), A, r))
    quad_c = np.real(np.einsum("...i,...ij,...j->...", np.conj(s), C, s))
    with np.errstate(divide="ignore"):
        return quad_a - np.log(quad_c + z)


def to_canonical(p: LqpqmProblem) -> CanonicalLqpqm:
    G = linalg.cholesky(p.A)
    Ginv = linalg.solve(G, np.eye(p.dim, dtype=np.complex128))
    U = linalg.hermitian_part(np.conj(Ginv.T) @ p.C @ Ginv)
    v = G @ (p.b - p.d)
    return CanonicalLqpqm(U=U, v=v, z=p.z, G=G, b=p.b)


def _support(phi, v_tilde):
    phi = np.asarray(phi, dtype=np.float64)
    vsq = np.abs(np.asarray(v_tilde)) ** 2
    return phi, vsq, phi * vsq > 0


def secular_f(lam: float, phi, v_tilde, z: float) -> float:
    """Evaluate ``f(lam)`` over the support ``{m : phi_m |vt_m|^2 != 0}``.

    Raises:
        PoleEvaluation: if ``lam`` sits on a pole of the support.
    """
    phi, vsq, S = _support(phi, v_tilde)
    _check_pole(lam, phi, S)
    diff = lam - phi[S]
    return float(lam * lam * np.sum(phi[S] * vsq[S] / diff**2) - lam + z)


def secular_f_prime(lam: float, phi, v_tilde, z: float) -> float:
    phi, vsq, S = _support(phi, v_tilde)
    _check_pole(lam, phi, S)
    diff = lam - phi[S]
    return float(-2.0 * lam * np.sum(phi[S] ** 2 * vsq[S] / diff**3) - 1.0)


def _check_pole(lam, phi, S):
    if not np.any(S):
        return
    scale = np.max(np.abs(phi))
    if np.any(np.abs(lam - phi[S]) < 1e-14 * scale):
        raise PoleEvaluation(f"lambda={lam!r} lies on a pole of the secular function")


def stationary_value(lam: float, phi, v_tilde, z: float) -> float:
    """Objective value of the stationary point attached to a zero ``lam`` of ``f``."""
    phi, vsq, S = _support(phi, v_tilde)
    return float(1.0 - np.sum(phi[S] * vsq[S] / (lam - phi[S])) - z / lam - np.log(lam))


def init_cubic_poly(phi_max: float, v_max_sq: float, z: float) -> float:
    """Largest real root of the cubic obtained by keeping only the dominant
    term of ``f`` and clearing the denominator."""
    k = get_kernels()
    b = phi_max * v_max_sq + 2.0 * phi_max + z
    c = (phi_max + 2.0 * z) * phi_max
    d = phi_max * phi_max * z
    return float(k.cubic_largest_root(np.array([b]), np.array([c]), np.array([d]))[0])


def solve_secular_batch(phi, vsq, z, eps=EPS_ROOT, max_iter=MAX_NEWTON_ITER, backend=None):
    """Largest zeros for a batch, computed in the domain rescaled by the
    largest support eigenvalue so that ``(lam - phi)^-2`` cannot overflow.

    Rows with an empty support get ``nan``.

    Returns:
        ``(lam, n_iter)``
    """
    phi = np.asarray(phi, dtype=np.float64)
    vsq = np.asarray(vsq, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    S = phi * vsq > 0
    scale = np.max(np.where(S, phi, 0.0), axis=-1)
    scale = np.where(scale > 0, scale, 1.0)

    # the squared offsets are not rescaled: f(scale*mu)/scale keeps |vt|^2 as is
    mu, n_iter, status = get_kernels(backend).solve_secular_batch(
        phi / scale[:, None], vsq, z / scale, eps, max_iter
    )
    if np.any(status == STATUS_MAX_ITER):
        raise MaxIterationsExceeded(
            f"secular equation did not converge in {max_iter} protected Newton steps"
        )
    return mu * scale, n_iter


def solve_secular(phi, v_tilde, z: float, eps: float = EPS_ROOT, max_iter: int = MAX_NEWTON_ITER) -> float:
    """Largest zero of the secular function; the support must be non-empty."""
    phi, vsq, S = _support(phi, v_tilde)
    if not np.any(S):
        raise ValueError("the secular function has an empty support")
    lam, _ = solve_secular_batch(phi[None, :], vsq[None, :], np.array([z], dtype=float), eps, max_iter)
    return float(lam[0])


def solve_batch(A, b, C, d, z, eps=EPS_ROOT, max_iter=MAX_NEWTON_ITER, backend=None):
    """Global minimizers for a batch of problems.

    Args:
        A: (B, n, n) Hermitian PD.
        b: (B, n)
        C: (B, n, n) Hermitian PSD.
        d: (B, n)
        z: (B,) non-negative.

    Returns:
        dict with ``q`` (B, n), ``y`` (B, n), ``lam`` (B,), ``n_iter`` (B,)
        and ``objective`` (B,).
    """
    A = np.asarray(A, dtype=np.complex128)
    C = np.asarray(C, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    d = np.asarray(d, dtype=np.complex128)
    z = np.asarray(z, dtype=np.float64)
    B, n = b.shape

    G = linalg.cholesky(A)
    eye = np.broadcast_to(np.eye(n, dtype=np.complex128), G.shape)
    Ginv = linalg.solve(G, eye)
    Ginv_h = np.conj(np.swapaxes(Ginv, -1, -2))
    phi, Sig = linalg.eigh(Ginv_h @ C @ Ginv)
    top = np.maximum(phi[:, -1], 0.0)
    phi = np.where(phi > PHI_RTOL * top[:, None], phi, 0.0)
    top = phi[:, -1]

    v = np.einsum("bij,bj->bi", G, b - d)
    vt = np.einsum("bji,bj->bi", np.conj(Sig), v)
    vsq = np.abs(vt) ** 2
    support = phi * vsq > 0
    general = np.any(support, axis=1)

    lam = np.empty(B)
    y = np.zeros((B, n), dtype=np.complex128)
    n_iter = np.zeros(B, dtype=np.int64)
    sig_top = Sig[:, :, -1]

    # v = 0, or U v = 0: only the log of a centred quadratic remains
    sp = ~general
    if np.any(sp):
        inside = sp & (z < top)
        lam[sp] = np.where(inside[sp], top[sp], z[sp])
        if np.any(inside):
            s = sig_top[inside]
            curv = np.real(np.einsum("bi,bij,bj->b", np.conj(s), (Ginv_h @ C @ Ginv)[inside], s))
            y[inside] = np.sqrt((top[inside] - z[inside]) / curv)[:, None] * s

    if np.any(general):
        g = np.nonzero(general)[0]
        lam_g, it_g = solve_secular_batch(phi[g], vsq[g], z[g], eps, max_iter, backend)
        # top eigenvector orthogonal to the offset and right of the zero: the
        # maximizing stationary point sits on the eigenvalue itself
        hard = top[g] > lam_g
        lam_g = np.where(hard, top[g], lam_g)
        sup = support[g]
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(sup, phi[g] * vt[g] / (lam_g[:, None] - phi[g]), 0.0)
        yg = np.einsum("bij,bj->bi", Sig[g], coef)
        if np.any(hard):
            h = np.nonzero(hard)[0]
            lh = lam_g[h]
            with np.errstate(divide="ignore", invalid="ignore"):
                shifted = np.where(sup[h], lh[:, None] * vt[g][h] / (lh[:, None] - phi[g][h]), 0.0)
            used = np.sum(phi[g][h] * np.abs(shifted) ** 2, axis=1)
            eta_sq = np.maximum(lh - z[g][h] - used, 0.0) / lh
            yg[h] += np.sqrt(eta_sq)[:, None] * sig_top[g][h]
        lam[g] = lam_g
        y[g] = yg
        n_iter[g] = it_g

    q = np.einsum("bij,bj->bi", Ginv, y) + b
    obj = objective_batch(A, b, C, d, z, q)
    return {"q": q, "y": y, "lam": lam, "n_iter": n_iter, "objective": obj}


def solve(p: LqpqmProblem, eps: float = EPS_ROOT, max_iter: int = MAX_NEWTON_ITER) -> LqpqmSolution:
    """Global minimizer of one LQPQM instance.

    Raises:
        NotPositiveDefinite: if ``A`` is not positive definite.
        MaxIterationsExceeded: if the protected Newton iteration stalls.
    """
    out = solve_batch(p.A[None], p.b[None], p.C[None], p.d[None], np.array([p.z]), eps, max_iter)
    return LqpqmSolution(
        q_star=out["q"][0],
        lambda_star=float(out["lam"][0]),
        objective_value=float(out["objective"][0]),
        newton_iterations=int(out["n_iter"][0]),
        y_star=out["y"][0],
    )
