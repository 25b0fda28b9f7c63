"""Spherical super-Gaussian contrast functions.

A model supplies ``G(r)`` (the negative log-density of a source component
vector as a function of its norm) and the majorization weight
``G'(r) / (2 r)`` used to build the weighted covariance matrices.
"""

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .errors import Singular

R_FLOOR = 1e-10


@dataclass(frozen=True)
class ContrastModel:
    name: str
    g: Callable[[np.ndarray], np.ndarray]
    g_prime: Callable[[np.ndarray], np.ndarray]
    r_floor: float = R_FLOOR

    def weight(self, r):
        """``G'(r) / (2 r)`` with ``r`` floored at ``r_floor``."""
        r = np.maximum(np.asarray(r, dtype=np.float64), self.r_floor)
        return self.g_prime(r) / (2.0 * r)

    def majorizer(self, r, r0):
        """Quadratic upper bound of ``G(r)`` that touches it at ``r0``."""
        r = np.asarray(r, dtype=np.float64)
        r0 = np.asarray(r0, dtype=np.float64)
        gp = self.g_prime(r0)
        return gp * r**2 / (2.0 * r0) + self.g(r0) - 0.5 * r0 * gp


def laplace() -> ContrastModel:
    """``G(r) = r``, i.e. weight ``1 / (2 r)``."""
    return ContrastModel(name="laplace", g=lambda r: np.asarray(r, dtype=np.float64), g_prime=np.ones_like)


_REGISTRY: Dict[str, Callable[[], ContrastModel]] = {"laplace": laplace}


def register(name: str, factory: Callable[[], ContrastModel]) -> None:
    _REGISTRY[name] = factory


def get(name: str) -> ContrastModel:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown contrast {name!r}; available: {sorted(_REGISTRY)}") from None


def available():
    return sorted(_REGISTRY)


def evaluate_iva_cost(X, W, model: ContrastModel) -> float:
    """Negative log-likelihood ``sum_kn G(||s_kn||) - 2 N sum_f log|det W_f|``.

    Args:
        X: (F, M, N) observations.
        W: (F, M, M) demixing matrices.

    Raises:
        Singular: if some ``|det W_f|`` underflows.
    """
    N = X.shape[-1]
    Y = W @ X
    r = np.sqrt(np.sum(np.abs(Y) ** 2, axis=0))
    sign, logdet = np.linalg.slogdet(W)
    if np.any(np.abs(sign) == 0) or np.any(logdet < np.log(1e-300)):
        raise Singular("a demixing matrix is numerically singular")
    return float(np.sum(model.g(r)) - 2.0 * N * np.sum(logdet))
