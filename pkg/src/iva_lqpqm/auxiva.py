"""AuxIVA: majorization-minimization for independent vector analysis.

Every update rule maps ``(W, V)`` with ``W`` of shape (..., M, M) and ``V`` of
shape (..., M, M, M) (``V[..., k, :, :]`` is the weighted covariance of source
k) to a new ``W``. Row k of ``W`` is ``w_k^H``. Rules are vectorized over the
leading axes, which in practice index frequency bins.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from . import linalg, lqpqm, metrics
from ._backend import get_kernels
from .contrast import ContrastModel, evaluate_iva_cost, laplace
from .errors import DegenerateDenominator, NonPositiveZ, Singular

Z_CLAMP = 1e-10
SEDJOCO_TOL = 1e-20
SEDJOCO_MAX_SWEEPS = 1000
# fixed frequency chunking makes threaded runs bit-identical to serial ones
FREQ_CHUNK = 16


@dataclass
class DemixingState:
    W: np.ndarray
    s_hat: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None

    @classmethod
    def identity(cls, F: int, M: int) -> "DemixingState":
        return cls(W=np.broadcast_to(np.eye(M, dtype=np.complex128), (F, M, M)).copy())

    def refresh(self, X, model: ContrastModel, backend=None) -> None:
        """Recompute source estimates, magnitudes and covariances from ``W``."""
        self.s_hat = self.W @ X
        self.r = source_magnitudes(self.s_hat)
        self.V = compute_weighted_covariances(X, self.r, model, backend)


def source_magnitudes(s_hat) -> np.ndarray:
    """``r_kn = sqrt(sum_f |s_kfn|^2)`` from (F, M, N) estimates."""
    return np.sqrt(np.sum(np.abs(s_hat) ** 2, axis=0))


def compute_weighted_covariances(X, r, model: ContrastModel, backend=None) -> np.ndarray:
    """``V[f, k] = (1/N) sum_n weight(r_kn) x_fn x_fn^H``, shape (F, M, M, M)."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("auxiliary magnitudes must be non-negative")
    return get_kernels(backend).weighted_covariance(X, model.weight(r))


def _logabsdet(W):
    sign, logdet = np.linalg.slogdet(W)
    if np.any(np.abs(sign) == 0) or np.any(logdet < np.log(1e-300)):
        raise Singular("a demixing matrix is numerically singular")
    return logdet


def quadratic_terms(W, V) -> np.ndarray:
    """``w_k^H V_k w_k`` for every k, shape (..., M)."""
    return np.real(np.einsum("...ki,...kij,...kj->...k", W, V, np.conj(W)))


def surrogate_cost_per_freq(W, V) -> np.ndarray:
    return np.sum(quadratic_terms(W, V), axis=-1) - 2.0 * _logabsdet(W)


def surrogate_cost(W, V) -> float:
    """``sum_kf w_kf^H V_kf w_kf - 2 sum_f log|det W_f|``."""
    return float(np.sum(surrogate_cost_per_freq(W, V)))


def update_ip(W, V) -> np.ndarray:
    """Iterative projection: each filter in turn is replaced by its optimum."""
    W = np.array(W, dtype=np.complex128)
    M = W.shape[-1]
    eye = np.eye(M, dtype=np.complex128)
    for k in range(M):
        Vk = V[..., k, :, :]
        w = linalg.solve(W @ Vk, np.broadcast_to(eye[:, k : k + 1], W.shape[:-1] + (1,)))[..., 0]
        w /= np.sqrt(np.real(np.einsum("...i,...ij,...j->...", np.conj(w), Vk, w)))[..., None]
        W[..., k, :] = np.conj(w)
    return W


def ip2_pairs(M: int, schedule: str = "disjoint"):
    """Source pairs ``(2k' mod M, 2k'+1 mod M)`` visited by one IP2 sweep.

    ``"disjoint"`` visits ``k' = 0 .. ceil(M/2)-1`` so every source is touched
    once (twice for one source when M is odd); ``"modular"`` visits
    ``k' = 1 .. M``, which repeats every pair.
    """
    if schedule == "disjoint":
        ks = range((M + 1) // 2)
    elif schedule == "modular":
        ks = range(1, M + 1)
    else:
        raise ValueError(f"unknown IP2 schedule {schedule!r}")
    return [((2 * kp) % M, (2 * kp + 1) % M) for kp in ks]


def update_ip2(W, V, schedule: str = "disjoint") -> np.ndarray:
    """Pairwise iterative projection via a 2x2 generalized eigenproblem."""
    W = np.array(W, dtype=np.complex128)
    M = W.shape[-1]
    if M == 1:
        return update_ip(W, V)
    eye = np.eye(M, dtype=np.complex128)
    for k, m in ip2_pairs(M, schedule):
        E = np.broadcast_to(eye[:, [k, m]], W.shape[:-1] + (2,))
        Pk = linalg.solve(W @ V[..., k, :, :], E)
        Pm = linalg.solve(W @ V[..., m, :, :], E)
        Vk = linalg.hermitian_part(_herm_t(Pk) @ V[..., k, :, :] @ Pk)
        Vm = linalg.hermitian_part(_herm_t(Pm) @ V[..., m, :, :] @ Pm)
        phi, H = linalg.generalized_eig(Vk, Vm)
        # larger eigenvalue goes to k; exact ties keep the first column on k
        # so that solved pairs stay put; columns are Vm-normalized already
        tie = (phi[..., 1] == phi[..., 0])[..., None]
        hk = np.where(tie, H[..., :, 0], H[..., :, 1]) / np.sqrt(phi[..., 1])[..., None]
        hm = np.where(tie, H[..., :, 1], H[..., :, 0])
        wk = np.einsum("...ij,...j->...i", Pk, hk)
        wm = np.einsum("...ij,...j->...i", Pm, hm)
        W[..., k, :] = np.conj(wk)
        W[..., m, :] = np.conj(wm)
    return W


def update_iss(W, V) -> np.ndarray:
    """Iterative source steering: rank-one updates, no matrix inversion."""
    W = np.array(W, dtype=np.complex128)
    M = W.shape[-1]
    for k in range(M):
        wk = np.conj(W[..., k, :])
        num = np.einsum("...mi,...mij,...j->...m", W, V, wk)
        den = np.real(np.einsum("...i,...mij,...j->...m", np.conj(wk), V, wk))
        if np.any(den < 1e-300):
            raise DegenerateDenominator("w_k^H V_m w_k vanished")
        v = num / den
        v[..., k] = 1.0 - 1.0 / np.sqrt(den[..., k])
        W = W - v[..., :, None] * W[..., k, None, :]
    return W


def _herm_t(X):
    return np.conj(np.swapaxes(X, -1, -2))


def ipa_transform(u, q, k: int) -> np.ndarray:
    """``T_k(u, q) = I + e_k (u - e_k)^H + E_k q^* e_k^T``, batched."""
    u = np.asarray(u, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    M = u.shape[-1]
    others = [m for m in range(M) if m != k]
    T = np.broadcast_to(np.eye(M, dtype=np.complex128), u.shape[:-1] + (M, M)).copy()
    T[..., k, :] = np.conj(u)
    T[..., others, k] = np.conj(q)
    return T


def ipa_subproblem(W, V, k: int) -> Dict[str, np.ndarray]:
    """Data of the LQPQM instance solved for source k, batched.

    Returns:
        dict with ``A``, ``b`` (so the quadratic term is centred at ``-b/A``),
        ``C``, ``g``, ``z``, ``Vk`` (``W V_k W^H``) and ``Vk_inv``.
    """
    M = W.shape[-1]
    others = [m for m in range(M) if m != k]
    wk_row = W[..., k, :]
    a = np.real(np.einsum("...i,...mij,...j->...m", wk_row, V, np.conj(wk_row)))[..., others]
    b = np.einsum("...i,...mij,...mj->...m", wk_row, V, np.conj(W))[..., others]
    Vk = linalg.hermitian_part(W @ V[..., k, :, :] @ _herm_t(W))
    Vk_inv = linalg.hermitian_part(linalg.inverse(Vk, max_cond=None))
    Vt = np.conj(Vk_inv)
    C = Vt[..., others, :][..., :, others]
    g = Vt[..., others, k]
    Cinv_g = linalg.solve(C, g[..., None])[..., 0]
    z = np.real(Vt[..., k, k] - np.einsum("...i,...i->...", np.conj(g), Cinv_g))
    return {"a": a, "b": b, "C": C, "g": g, "Cinv_g": Cinv_g, "z": z, "Vk": Vk, "Vk_inv": Vk_inv}


def update_ipa(W, V, backend=None) -> np.ndarray:
    """Iterative projection with adjustment.

    For each k the filter ``w_k`` is re-estimated while every other filter
    moves along ``w_k``; the joint optimum comes from one LQPQM instance.
    """
    W = np.array(W, dtype=np.complex128)
    M = W.shape[-1]
    if M == 1:
        return update_ip(W, V)
    batch = W.shape[:-2]
    B = int(np.prod(batch, dtype=np.int64))
    for k in range(M):
        others = [m for m in range(M) if m != k]
        sp = ipa_subproblem(W, V, k)
        z = sp["z"]
        scale = np.maximum(1.0, np.real(sp["Vk_inv"][..., k, k]))
        if np.any(z < -Z_CLAMP * scale):
            raise NonPositiveZ(f"Schur complement z={float(np.min(z)):.3e} is negative")
        z = np.maximum(z, 0.0)
        a = sp["a"]
        A = np.zeros(batch + (M - 1, M - 1), dtype=np.complex128)
        idx = np.arange(M - 1)
        A[..., idx, idx] = a
        sol = lqpqm.solve_batch(
            A.reshape(B, M - 1, M - 1),
            (-sp["b"] / a).reshape(B, M - 1),
            sp["C"].reshape(B, M - 1, M - 1),
            sp["Cinv_g"].reshape(B, M - 1),
            z.reshape(B),
            backend=backend,
        )
        q = sol["q"].reshape(batch + (M - 1,))
        qt = np.zeros(batch + (M,), dtype=np.complex128)
        qt[..., k] = 1.0
        qt[..., others] = -np.conj(q)
        u = np.einsum("...ij,...j->...i", sp["Vk_inv"], qt)
        u /= np.sqrt(np.real(np.einsum("...i,...i->...", np.conj(qt), u)))[..., None]
        wk_old = W[..., k, :].copy()
        W[..., k, :] = np.einsum("...i,...ij->...j", np.conj(u), W)
        W[..., others, :] += np.conj(q)[..., :, None] * wk_old[..., None, :]
    return W


def update_sedjoco(W, V, tol: float = SEDJOCO_TOL, max_sweeps: int = SEDJOCO_MAX_SWEEPS, backend=None) -> np.ndarray:
    """Repeat IPA sweeps until the SeDJoCo residual drops below ``tol``."""
    W = np.array(W, dtype=np.complex128)
    batch = W.shape[:-2]
    M = W.shape[-1]
    Wf = W.reshape((-1, M, M))
    Vf = np.asarray(V).reshape((-1, M, M, M))
    active = metrics.sedjoco_residual(Wf, Vf) >= tol
    for _ in range(max_sweeps):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        Wf[idx] = update_ipa(Wf[idx], Vf[idx], backend=backend)
        active[idx] = metrics.sedjoco_residual(Wf[idx], Vf[idx]) >= tol
    return Wf.reshape(batch + (M, M))


UPDATE_RULES: Dict[str, Callable] = {
    "ip": update_ip,
    "ip2": update_ip2,
    "iss": update_iss,
    "ipa": update_ipa,
    "sedjoco": update_sedjoco,
}


def get_rule(name: str) -> Callable:
    try:
        return UPDATE_RULES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown update rule {name!r}; available: {sorted(UPDATE_RULES)}") from None


def default_stop_threshold(M: int) -> float:
    return 10.0 * M


def _chunks(F: int):
    return [slice(s, min(s + FREQ_CHUNK, F)) for s in range(0, F, FREQ_CHUNK)]


def _apply_chunked(fn, W, V, pool):
    parts = _chunks(W.shape[0])
    if pool is None:
        out = [fn(W[s], V[s]) for s in parts]
    else:
        out = list(pool.map(lambda s: fn(W[s], V[s]), parts))
    return np.concatenate(out, axis=0)


def run(
    X,
    rule="ipa",
    model: Optional[ContrastModel] = None,
    iterations: int = 100,
    init: Optional[DemixingState] = None,
    mixing=None,
    stop_threshold: Optional[float] = None,
    threads: int = 1,
    track_residual: bool = True,
    backend=None,
    callback=None,
):
    """Run AuxIVA for a fixed budget of outer iterations.

    Args:
        X: (F, M, N) complex mixture.
        rule: update rule name or callable ``(W, V) -> W``.
        model: contrast; Laplace by default.
        iterations: maximum number of outer iterations.
        init: initial state; identity demixing if omitted.
        mixing: optional (F, M, M) true mixing matrices; enables ISR tracking.
        stop_threshold: stop once the cost decreases by less than this in one
            iteration (``None`` disables early stopping).
        threads: worker threads over fixed frequency chunks. Results do not
            depend on this value.
        track_residual: record the SeDJoCo residual of each update.
        callback: called as ``callback(iteration, state)`` after each update.

    Returns:
        ``(state, report)``; record 0 holds the initial cost.
    """
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 3:
        raise ValueError("X must have shape (F, M, N)")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    F, M, N = X.shape
    model = model or laplace()
    fn = get_rule(rule) if isinstance(rule, str) else rule
    if isinstance(rule, str) and rule.lower() in ("ipa", "sedjoco"):
        base = fn
        fn = lambda W, V: base(W, V, backend=backend)  # noqa: E731

    state = DemixingState.identity(F, M) if init is None else DemixingState(W=np.array(init.W, dtype=np.complex128))
    if state.W.shape != (F, M, M):
        raise ValueError("initial demixing matrices have the wrong shape")
    _logabsdet(state.W)

    report = metrics.SeparationReport()
    t0 = time.perf_counter()
    state.refresh(X, model, backend)
    cost = evaluate_iva_cost(X, state.W, model)
    report.append(
        0,
        cost,
        surrogate_cost(state.W, state.V),
        float(np.sum(metrics.sedjoco_residual(state.W, state.V))) if track_residual else None,
        metrics.isr_db(state.W, mixing) if mixing is not None else None,
    )

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for it in range(1, iterations + 1):
            try:
                W_new = _apply_chunked(fn, state.W, state.V, pool)
            except ArithmeticError as exc:
                raise type(exc)(f"iteration {it}: {exc}") from exc
            surr = surrogate_cost(W_new, state.V)
            res = float(np.sum(metrics.sedjoco_residual(W_new, state.V))) if track_residual else None
            state.W = W_new
            state.refresh(X, model, backend)
            prev, cost = cost, evaluate_iva_cost(X, state.W, model)
            report.append(it, cost, surr, res, metrics.isr_db(state.W, mixing) if mixing is not None else None)
            if callback is not None:
                callback(it, state)
            if stop_threshold is not None and prev - cost < stop_threshold:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    report.final["runtime_seconds"] = time.perf_counter() - t0
    report.final["iterations"] = len(report.records) - 1
    report.final["rule"] = rule if isinstance(rule, str) else getattr(rule, "__name__", "custom")
    return state, report
