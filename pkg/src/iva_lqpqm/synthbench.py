"""Random problem generators and the two synthetic benchmark campaigns.

Every trial draws from its own PCG64 stream seeded by ``(seed, trial)`` so that
results do not depend on how trials are scheduled across threads.
"""

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import auxiva, linalg, metrics
from .contrast import laplace
from .errors import Singular

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-6
COST_TOL = 1e-3
ISR_TOL_DB = 0.1
SUCCESS_DB = -10.0
CAMPAIGN_COLUMNS = ("kind", "rule", "trial", "iteration", "metric", "value")


def make_rng(seed: int, trial: Optional[int] = None) -> np.random.Generator:
    entropy = [int(seed)] if trial is None else [int(seed), int(trial)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: real and imaginary parts each N(0, 1/2)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def random_hermitian_pd(m: int, rng: np.random.Generator, size: Sequence[int] = ()) -> np.ndarray:
    """Hermitian matrix from standard normal entries, eigenvalues made positive.

    Eigenvalues are replaced by their absolute values, floored at 1e-6.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    shape = tuple(size) + (m, m)
    H = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    lam, U = np.linalg.eigh(H)
    lam = np.maximum(np.abs(lam), EIG_FLOOR)
    return linalg.hermitian_part((U * lam[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2)))


def sample_laplace_scv(F: int, rng: np.random.Generator, size: Sequence[int] = ()) -> np.ndarray:
    """Spherical complex Laplace vectors ``z v / ||v||`` along the last axis.

    ``v ~ CN(0, I_F)`` and ``z ~ Gamma(2F, 1)``, drawn as a sum of 2F unit
    exponentials.
    """
    if F < 1:
        raise ValueError("F must be at least 1")
    size = tuple(size)
    v = complex_normal(rng, size + (F,))
    z = np.sum(rng.standard_exponential(size + (2 * F,)), axis=-1)
    return z[..., None] * v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass
class SyntheticGroundTruth:
    sources: np.ndarray  # (F, M, N)
    mixing: np.ndarray  # (F, M, M)
    observations: np.ndarray  # (F, M, N)


def make_synthetic_mixture(F: int, M: int, N: int, rng: np.random.Generator) -> SyntheticGroundTruth:
    if min(F, M, N) < 1:
        raise ValueError("F, M and N must be positive")
    scv = sample_laplace_scv(F, rng, (M, N))  # (M, N, F)
    S = np.ascontiguousarray(np.transpose(scv, (2, 0, 1)))
    A = complex_normal(rng, (F, M, M))
    return SyntheticGroundTruth(sources=S, mixing=A, observations=A @ S)


def pca_init(X) -> auxiva.DemixingState:
    """Whitening init ``W_f = Lambda_f^{-1/2} E_f^H`` from the sample covariance."""
    X = np.asarray(X, dtype=np.complex128)
    F, M, N = X.shape
    if N <= M:
        raise ValueError("PCA initialization needs more frames than channels")
    R = linalg.hermitian_part(X @ np.conj(np.swapaxes(X, -1, -2)) / N)
    lam, E = linalg.eigh(R)
    if np.any(lam <= 1e-12 * np.maximum(lam[..., -1:], np.finfo(float).tiny)):
        raise Singular("sample covariance is rank deficient")
    W = np.conj(np.swapaxes(E, -1, -2)) / np.sqrt(lam)[..., :, None]
    return auxiva.DemixingState(W=W)


@dataclass
class CampaignConfig:
    M: int = 4
    F: int = 6
    N: int = 5000
    trials: int = 10
    iterations: int = 100
    rules: List[str] = field(default_factory=lambda: ["ip", "iss", "ip2", "ipa"])
    seed: int = 0
    out_path: Optional[str] = None
    threads: int = 1

    @classmethod
    def from_file(cls, path: str) -> "CampaignConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_text(cls, text: str) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        kw: Dict[str, object] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            kw[key] = value
        return cls(**cls._coerce(kw))

    @staticmethod
    def _coerce(kw):
        out = dict(kw)
        for key in ("M", "F", "N", "trials", "iterations", "seed", "threads"):
            if key in out:
                out[key] = int(out[key])
        if isinstance(out.get("rules"), str):
            out["rules"] = [r.strip().lower() for r in out["rules"].split(",") if r.strip()]
        return out

    def validate(self) -> None:
        if min(self.M, self.F, self.N, self.trials) < 1 or self.iterations < 1:
            raise ValueError("M, F, N, trials and iterations must be positive")
        for r in self.rules:
            auxiva.get_rule(r)


def convergence_iteration(trace, tol: float) -> int:
    """First iteration after which every per-iteration decrease stays below ``tol``.

    ``trace[0]`` is the initial value. Returns ``len(trace) - 1`` if the last
    step still decreases by ``tol`` or more.
    """
    trace = np.asarray(trace, dtype=np.float64)
    dec = trace[:-1] - trace[1:]
    big = np.nonzero(~(dec < tol))[0]
    return 0 if big.size == 0 else int(big[-1] + 1)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


class _Table:
    def __init__(self):
        self.rows = []

    def add(self, kind, rule, trial, iteration, metric, value):
        self.rows.append((kind, rule, "" if trial is None else trial, "" if iteration is None else iteration, metric, value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CAMPAIGN_COLUMNS)
        for r in self.rows:
            w.writerow([r[0], r[1], _fmt(r[2]) if r[2] != "" else "", _fmt(r[3]) if r[3] != "" else "", r[4], _fmt(r[5])])
        return buf.getvalue()


def _map_trials(fn, trials: int, threads: int):
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def _safe(fn):
    def wrapped(t):
        try:
            return fn(t)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d failed: %s", t, exc)
            return None

    return wrapped


def _sedjoco_trial(cfg: CampaignConfig, t: int):
    rng = make_rng(cfg.seed, t)
    V = random_hermitian_pd(cfg.M, rng, (cfg.F, cfg.M))
    W0 = np.broadcast_to(np.eye(cfg.M, dtype=np.complex128), (cfg.F, cfg.M, cfg.M)).copy()
    out = {}
    for rule in cfg.rules:
        fn = auxiva.get_rule(rule)
        W = W0
        surr = [auxiva.surrogate_cost(W, V)]
        res = [float(np.median(metrics.sedjoco_residual(W, V)))]
        for _ in range(cfg.iterations):
            W = fn(W, V)
            surr.append(auxiva.surrogate_cost(W, V))
            res.append(float(np.median(metrics.sedjoco_residual(W, V))))
        out[rule] = {"surrogate_cost": surr, "sedjoco_residual": res}
    return out


def run_sedjoco_campaign(cfg: CampaignConfig) -> str:
    """Random SeDJoCo problems solved from ``W = I``; returns the CSV text.

    Each trial holds F independent problems of size M. Summary rows give the
    median first and second iteration surrogate decrease relative to IPA.
    """
    cfg.validate()
    results = _map_trials(_safe(lambda t: _sedjoco_trial(cfg, t)), cfg.trials, cfg.threads)
    table = _Table()
    ok = [(t, r) for t, r in enumerate(results) if r is not None]
    table.add("summary", "", None, None, "failed_trials", len(results) - len(ok))
    for t, res in ok:
        for rule in cfg.rules:
            for it, (c, rsd) in enumerate(zip(res[rule]["surrogate_cost"], res[rule]["sedjoco_residual"])):
                table.add("trace", rule, t, it, "surrogate_cost", c)
                table.add("trace", rule, t, it, "sedjoco_residual", rsd)
    for rule in cfg.rules:
        if not ok:
            break
        final = [res[rule]["sedjoco_residual"][-1] for _, res in ok]
        table.add("summary", rule, None, cfg.iterations, "median_sedjoco_residual", float(np.median(final)))
        table.add("summary", rule, None, cfg.iterations, "median_surrogate_cost", float(np.median([res[rule]["surrogate_cost"][-1] for _, res in ok])))
        if "ipa" in cfg.rules:
            for it in (1, 2):
                if it > cfg.iterations:
                    break
                ratios = []
                for _, res in ok:
                    ref = res["ipa"]["surrogate_cost"][0] - res["ipa"]["surrogate_cost"][it]
                    dec = res[rule]["surrogate_cost"][0] - res[rule]["surrogate_cost"][it]
                    ratios.append(dec / ref)
                table.add("summary", rule, None, it, "median_decrease_ratio_vs_ipa", float(np.median(ratios)))
    text = table.to_csv()
    if cfg.out_path:
        with open(cfg.out_path, "w", newline="") as fh:
            fh.write(text)
    return text


def _synthetic_trial(cfg: CampaignConfig, t: int):
    rng = make_rng(cfg.seed, t)
    gt = make_synthetic_mixture(cfg.F, cfg.M, cfg.N, rng)
    init = pca_init(gt.observations)
    out = {}
    for rule in cfg.rules:
        _, report = auxiva.run(
            gt.observations, rule, laplace(), cfg.iterations, init=init, mixing=gt.mixing, track_residual=False
        )
        out[rule] = {"iva_cost": report.column("iva_cost").tolist(), "isr_db": report.column("isr_db").tolist()}
    return out


def run_synthetic_campaign(cfg: CampaignConfig, return_results: bool = False):
    """Synthetic Laplace mixtures separated from PCA init; returns the CSV text.

    Summary rows report, per rule, the median number of iterations until the
    per-iteration IVA cost decrease (divided by N) stays below 1e-3 and the
    ISR decrease stays below 0.1 dB, plus the success rate (final ISR below
    -10 dB).
    """
    cfg.validate()
    results = _map_trials(_safe(lambda t: _synthetic_trial(cfg, t)), cfg.trials, cfg.threads)
    table = _Table()
    ok = [(t, r) for t, r in enumerate(results) if r is not None]
    table.add("summary", "", None, None, "failed_trials", len(results) - len(ok))
    summary = {}
    for rule in cfg.rules:
        cost_its, isr_its, finals = [], [], []
        for t, res in ok:
            cost = np.asarray(res[rule]["iva_cost"]) / cfg.N
            isr = np.asarray(res[rule]["isr_db"])
            for it, (c, i) in enumerate(zip(cost, isr)):
                table.add("trace", rule, t, it, "iva_cost_per_frame", c)
                table.add("trace", rule, t, it, "isr_db", i)
            ci = convergence_iteration(cost, COST_TOL)
            ii = convergence_iteration(isr, ISR_TOL_DB)
            table.add("trial", rule, t, ci, "cost_convergence_iteration", ci)
            table.add("trial", rule, t, ii, "isr_convergence_iteration", ii)
            table.add("trial", rule, t, len(isr) - 1, "final_isr_db", isr[-1])
            cost_its.append(ci)
            isr_its.append(ii)
            finals.append(isr[-1])
        if not ok:
            continue
        s = {
            "median_cost_convergence_iteration": float(np.median(cost_its)),
            "median_isr_convergence_iteration": float(np.median(isr_its)),
            "success_rate": float(np.mean(np.asarray(finals) < SUCCESS_DB)),
            "median_final_isr_db": float(np.median(finals)),
        }
        summary[rule] = s
        for key, val in s.items():
            table.add("summary", rule, None, None, key, val)
    text = table.to_csv()
    if cfg.out_path:
        with open(cfg.out_path, "w", newline="") as fh:
            fh.write(text)
    if return_results:
        return text, summary
    return text
