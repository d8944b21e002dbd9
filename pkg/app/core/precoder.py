"""Source precoders for a fixed relay matrix.

F_i = U_i Sigma_i, where U_i diagonalizes the whitened Gram matrix
H_i^H R_Zi^-1 H_i and Sigma_i^2 is loaded by water-filling (capacity)
or inverse water-filling (MSE).
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from app.core.exceptions import NoUsableEigenmode
from app.core.metrics import whitened_channel_gram
from app.core.model import EffectiveModel

logger = logging.getLogger(__name__)

EIGEN_CLAMP = 1e-10


class Policy(str, Enum):
    WATER_FILLING = "policy_a"
    INVERSE_WATER_FILLING = "policy_b"


@dataclass(frozen=True)
class EigenBasis:
    u: np.ndarray       # n_s x n_s unitary
    lam: np.ndarray     # descending, nonnegative


@dataclass(frozen=True)
class PowerLoad:
    sigma_sq: np.ndarray
    mu: float
    policy: Policy

    @property
    def total(self) -> float:
        return float(np.sum(self.sigma_sq))


def descending_eigh(m: np.ndarray):
    """Hermitian eigendecomposition with eigenvalues sorted descending.

    The sort is stable, so tied eigenvalues keep the solver's order.
    """
    w, v = scipy.linalg.eigh(m)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def clamp_eigenvalues(w: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Zero out roundoff negatives of an analytically PSD spectrum."""
    floor = -EIGEN_CLAMP * max(1.0, scale)
    if np.any(w < floor):
        logger.debug("Clamping eigenvalue %.3e of a PSD matrix", float(np.min(w)))
    return np.where(w < 0.0, 0.0, w)


def whitened_gram(eff: EffectiveModel, r_z: np.ndarray, source: int = 1) -> EigenBasis:
    """Eigenbasis of H_si = H_i^H R_Zi^-1 H_i, eigenvalues descending."""
    h_si = whitened_channel_gram(eff.channel(source), r_z)
    w, v = descending_eigh(h_si)
    return EigenBasis(u=v, lam=clamp_eigenvalues(w, float(np.max(np.abs(w), initial=0.0))))


def _usable(lam: np.ndarray, p: float) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    usable = lam > 0.0
    if p > 0.0 and not np.any(usable):
        raise NoUsableEigenmode("all eigenmodes have zero gain but the power budget is positive")
    return usable


def _load(lam, p: float, policy: Policy) -> PowerLoad:
    """Exact active-set water level search.

    Modes are closed from the weakest until the level clears the
    activation threshold of the weakest mode still open:
      Policy-A: sigma^2 = mu - 1/lam,          threshold 1/lam
      Policy-B: sigma^2 = mu lam^-1/2 - 1/lam, threshold lam^-1/2
    """
    lam = np.asarray(lam, dtype=float)
    usable = _usable(lam, p)
    sigma_sq = np.zeros_like(lam)
    if not np.any(usable):
        return PowerLoad(sigma_sq=sigma_sq, mu=0.0, policy=policy)

    order = np.argsort(-lam, kind="stable")
    strong = order[usable[order]]
    inv = 1.0 / lam[strong]
    inv_sqrt = 1.0 / np.sqrt(lam[strong])

    if p == 0.0:
        mu = float(inv[0]) if policy is Policy.WATER_FILLING else float(inv_sqrt[0])
        return PowerLoad(sigma_sq=sigma_sq, mu=mu, policy=policy)

    for m in range(len(strong), 0, -1):
        if policy is Policy.WATER_FILLING:
            mu = (p + np.sum(inv[:m])) / m
            level = mu - inv[:m]
        else:
            mu = (p + np.sum(inv[:m])) / np.sum(inv_sqrt[:m])
            level = mu * inv_sqrt[:m] - inv[:m]
        if level[m - 1] > 0.0:
            break

    sigma_sq[strong[:m]] = np.maximum(level, 0.0)
    return PowerLoad(sigma_sq=sigma_sq, mu=float(mu), policy=policy)


def water_fill(lam, p: float) -> PowerLoad:
    """Policy-A: sigma^2_k = [mu - 1/lam_k]^+, sum sigma^2 = p."""
    return _load(lam, p, Policy.WATER_FILLING)


def inverse_water_fill(lam, p: float) -> PowerLoad:
    """Policy-B: sigma^2_k = [mu lam_k^-1/2 - 1/lam_k]^+, sum sigma^2 = p."""
    return _load(lam, p, Policy.INVERSE_WATER_FILLING)


def power_load(lam, p: float, policy: Policy) -> PowerLoad:
    policy = Policy(policy)
    if policy is Policy.WATER_FILLING:
        return water_fill(lam, p)
    return inverse_water_fill(lam, p)


def source_precoder(basis: EigenBasis, p: float, policy: Policy) -> np.ndarray:
    """F = U diag(sqrt(sigma^2))."""
    n_s = basis.u.shape[0]
    if p == 0.0:
        return np.zeros((n_s, n_s), dtype=complex)
    load = power_load(basis.lam, p, policy)
    return basis.u * np.sqrt(load.sigma_sq)[np.newaxis, :]


def isotropic_precoder(n_s: int, p: float) -> np.ndarray:
    """sqrt(P/n_s) I, the naive precoder."""
    return np.sqrt(p / n_s) * np.eye(n_s, dtype=complex)
