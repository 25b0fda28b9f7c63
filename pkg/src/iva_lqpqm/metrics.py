"""Separation quality measures and the per-iteration run report."""

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional

import numpy as np

from .errors import DegenerateReference

DB_CAP = 200.0
REPORT_COLUMNS = ("iteration", "iva_cost", "surrogate_cost", "sedjoco_residual", "isr_db")


@lru_cache(maxsize=None)
def permutations(M: int) -> np.ndarray:
    """All permutations of ``range(M)`` as an (M!, M) array, lexicographic."""
    return np.array(list(itertools.permutations(range(M))), dtype=np.intp).reshape(-1, M)


def to_db(x, cap: float = DB_CAP):
    """``10 log10(x)`` clipped to ``[-cap, cap]``; 0 maps to ``-cap``."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    out = np.clip(np.nan_to_num(out, nan=cap, posinf=cap, neginf=-cap), -cap, cap)
    return float(out) if out.ndim == 0 else out


def sedjoco_residual(W, V):
    """``||W [V_1 w_1 ... V_M w_M] - I||_F^2`` per leading index.

    Args:
        W: (..., M, M) demixing matrices, row k is ``w_k^H``.
        V: (..., M, M, M) covariances, ``V[..., k, :, :]`` for source k.
    """
    W = np.asarray(W)
    V = np.asarray(V)
    M = W.shape[-1]
    R = np.einsum("...ji,...kil,...kl->...jk", W, V, np.conj(W)) - np.eye(M)
    return np.sum(np.abs(R) ** 2, axis=(-2, -1))


def isr(W, A) -> float:
    """Interference-to-signal ratio (linear) under the best global permutation.

    Args:
        W: (F, M, M) demixing matrices.
        A: (F, M, M) true mixing matrices.

    Returns:
        ``+inf`` when every permutation hits a zero diagonal entry.
    """
    G = np.asarray(W) @ np.asarray(A)
    if G.ndim == 2:
        G = G[None]
    F, M, _ = G.shape
    if M == 1:
        return 0.0
    P = np.abs(G) ** 2
    row = P.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        # Q[m, j]: interference of row m when source j is the target
        Q = np.sum(np.where(P > 0, (row[:, :, None] - P) / P, np.inf), axis=0)
    perms = permutations(M)
    costs = Q[np.arange(M), perms].sum(axis=1)
    best = np.min(costs)
    if not np.isfinite(best):
        return float("inf")
    return float(best / (F * (M * M - M)))


def isr_db(W, A) -> float:
    return to_db(isr(W, A))


def _as_signal(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D signal")
    return x


def si_sdr(reference, estimate) -> float:
    """Scale-invariant signal-to-distortion ratio in dB."""
    s = _as_signal(reference)
    s_hat = _as_signal(estimate)
    if s.shape != s_hat.shape:
        raise ValueError("reference and estimate lengths differ")
    ss = s @ s
    if ss <= 0:
        raise DegenerateReference("reference has zero energy")
    alpha = (s_hat @ s) / ss
    target = alpha * s
    err = target - s_hat
    return _ratio_db(target @ target, err @ err)


def si_sir(references, estimate, target_index: int) -> float:
    """Scale-invariant signal-to-interference ratio in dB.

    Args:
        references: (M, T) reference signals.
        estimate: (T,) estimated signal.
        target_index: row of ``references`` treated as the target.
    """
    S = np.asarray(references, dtype=np.float64)
    s_hat = _as_signal(estimate)
    if S.ndim != 2 or S.shape[1] != s_hat.shape[0]:
        raise ValueError("references must be (M, T) with T matching the estimate")
    s = S[target_index]
    ss = s @ s
    if ss <= 0:
        raise DegenerateReference("reference has zero energy")
    alpha = (s_hat @ s) / ss
    target = alpha * s
    gram = S @ S.T
    if np.linalg.cond(gram) > 1e12:
        raise DegenerateReference("references are linearly dependent")
    coef = np.linalg.solve(gram, S @ (target - s_hat))
    interf = S.T @ coef
    return _ratio_db(target @ target, interf @ interf)


def _ratio_db(num, den) -> float:
    if den <= 0:
        return DB_CAP if num > 0 else -DB_CAP
    return to_db(num / den)


def best_permutation_metrics(references, estimates, mixture=None) -> Dict[str, object]:
    """SI-SDR and SI-SIR under the permutation maximizing the total SI-SIR.

    Args:
        references: (M, T) reference signals.
        estimates: (M, T) estimated signals.
        mixture: optional (T,) reference microphone signal for the
            improvement (delta) values.

    Returns:
        dict with ``permutation`` (estimate index per reference), ``si_sdr``,
        ``si_sir`` and, if ``mixture`` is given, ``delta_si_sdr`` and
        ``delta_si_sir``.
    """
    S = np.asarray(references, dtype=np.float64)
    E = np.asarray(estimates, dtype=np.float64)
    if S.shape != E.shape or S.ndim != 2:
        raise ValueError("references and estimates must both be (M, T)")
    M = S.shape[0]
    sdr = np.array([[si_sdr(S[i], E[j]) for j in range(M)] for i in range(M)])
    sir = np.array([[si_sir(S, E[j], i) for j in range(M)] for i in range(M)])
    perms = permutations(M)
    totals = sir[np.arange(M), perms].sum(axis=1)
    perm = perms[int(np.argmax(totals))]
    out = {
        "permutation": [int(p) for p in perm],
        "si_sdr": sdr[np.arange(M), perm],
        "si_sir": sir[np.arange(M), perm],
    }
    if mixture is not None:
        mix = _as_signal(mixture)
        out["delta_si_sdr"] = out["si_sdr"] - np.array([si_sdr(S[i], mix) for i in range(M)])
        out["delta_si_sir"] = out["si_sir"] - np.array([si_sir(S, mix, i) for i in range(M)])
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class SeparationReport:
    """Per-iteration trace of a run plus final summary values."""

    records: List[Dict[str, Optional[float]]] = field(default_factory=list)
    final: Dict[str, object] = field(default_factory=dict)

    def append(self, iteration, iva_cost, surrogate_cost=None, sedjoco_residual=None, isr_db=None):
        self.records.append(
            {
                "iteration": int(iteration),
                "iva_cost": iva_cost,
                "surrogate_cost": surrogate_cost,
                "sedjoco_residual": sedjoco_residual,
                "isr_db": isr_db,
            }
        )

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.records], dtype=np.float64)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.records:
            writer.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None) -> str:
        def clean(v):
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (np.floating, float)):
                return float(v)
            if isinstance(v, np.integer):
                return int(v)
            return v

        text = json.dumps({"records": clean(self.records), "final": clean(self.final)}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text
