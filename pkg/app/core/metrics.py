"""MMSE-SIC covariances, per-source MSE matrices and capacities, sum metrics.

Capacities are in bits per channel use with no 1/2 pre-factor for the
two-phase protocol.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from app.core.exceptions import IllConditionedNoiseCovariance
from app.core.model import ChannelSet, EffectiveModel, effective_model

logger = logging.getLogger(__name__)

# Source 2 is decoded first and cancelled before source 1.
DECODING_ORDER = (2, 1)

CAPACITY_CLAMP = 1e-10


@dataclass(frozen=True)
class SicContext:
    """Interference-plus-noise covariances seen by each source under MMSE-SIC."""
    r_z1: np.ndarray
    r_z2: np.ndarray

    def for_source(self, source: int) -> np.ndarray:
        return self.r_z1 if source == 1 else self.r_z2


@dataclass(frozen=True)
class SchurTerms:
    """Blocks of the sum-capacity determinant for fixed precoders.

    t       = I + sum H_di Pi_i H_di^H
    q       = sum H_ri Pi_i H_ri^H
    k_tilde = (sum H_ri Pi_i H_di^H) T^-1 (sum H_di Pi_i H_ri^H)
    k       = q - k_tilde
    """
    t: np.ndarray
    q: np.ndarray
    k: np.ndarray
    k_tilde: np.ndarray


def hermitian(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def cholesky_lower(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a Hermitian positive definite matrix."""
    try:
        l = scipy.linalg.cholesky(m, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        raise IllConditionedNoiseCovariance(f"covariance is not numerically positive definite: {e}") from e
    return l


def log2det_pd(m: np.ndarray) -> float:
    """log2 |m| for Hermitian positive definite m, via Cholesky pivots."""
    l = cholesky_lower(hermitian(m))
    return float(2.0 * np.sum(np.log2(np.real(np.diag(l)))))


def whiten(h: np.ndarray, r_z: np.ndarray) -> np.ndarray:
    """L^-1 h with r_z = L L^H, so that (L^-1 h)^H (L^-1 h) = h^H r_z^-1 h."""
    l = cholesky_lower(r_z)
    return scipy.linalg.solve_triangular(l, h, lower=True)


def whitened_channel_gram(h: np.ndarray, r_z: np.ndarray) -> np.ndarray:
    """h^H r_z^-1 h computed with a triangular solve; Hermitian PSD by construction."""
    x = whiten(h, r_z)
    return hermitian(x.conj().T @ x)


def _clamp_capacity(value: float) -> float:
    if value < 0.0:
        if value < -CAPACITY_CLAMP:
            logger.warning("Negative capacity %.3e beyond clamp threshold", value)
        return 0.0
    return value


def sic_context(eff: EffectiveModel, f1: np.ndarray) -> SicContext:
    """R_Z1 = diag(I, R); R_Z2 = R_Z1 + H_1 F_1 F_1^H H_1^H."""
    n_d = eff.n_d
    r_z1 = np.zeros((2 * n_d, 2 * n_d), dtype=complex)
    r_z1[:n_d, :n_d] = np.eye(n_d)
    r_z1[n_d:, n_d:] = eff.r
    hf = eff.h1 @ f1
    r_z2 = hermitian(r_z1 + hf @ hf.conj().T)
    return SicContext(r_z1=r_z1, r_z2=r_z2)


def _information_matrix(eff: EffectiveModel, f: np.ndarray, r_z: np.ndarray, source: int) -> np.ndarray:
    """I + F^H H^H R_Z^-1 H F."""
    x = whiten(eff.channel(source) @ f, r_z)
    return hermitian(np.eye(f.shape[1]) + x.conj().T @ x)


def mse_matrix(eff: EffectiveModel, f: np.ndarray, r_z: np.ndarray, source: int = 1) -> np.ndarray:
    """E_i = (I + F_i^H H_i^H R_Zi^-1 H_i F_i)^-1."""
    m = _information_matrix(eff, f, r_z, source)
    l = cholesky_lower(m)
    e = scipy.linalg.cho_solve((l, True), np.eye(m.shape[0], dtype=complex))
    return hermitian(e)


def per_source_capacity(eff: EffectiveModel, f: np.ndarray, r_z: np.ndarray, source: int = 1) -> float:
    """C_i = log2 |I + F_i^H H_i^H R_Zi^-1 H_i F_i|."""
    return _clamp_capacity(log2det_pd(_information_matrix(eff, f, r_z, source)))


def schur_terms(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray) -> SchurTerms:
    n_r, n_d = channels.n_r, channels.n_d
    pis = (f1 @ f1.conj().T, f2 @ f2.conj().T)

    t = np.eye(n_d, dtype=complex)
    q = np.zeros((n_r, n_r), dtype=complex)
    s = np.zeros((n_r, n_d), dtype=complex)
    for h_r, h_d, pi in zip(channels.relay_links(), channels.direct_links(), pis):
        t += h_d @ pi @ h_d.conj().T
        q += h_r @ pi @ h_r.conj().T
        s += h_r @ pi @ h_d.conj().T
    t = hermitian(t)
    q = hermitian(q)

    # s T^-1 s^H as a Gram product keeps k_tilde exactly PSD.
    x = whiten(s.conj().T, t)
    k_tilde = hermitian(x.conj().T @ x)
    return SchurTerms(t=t, q=q, k=hermitian(q - k_tilde), k_tilde=k_tilde)


def sum_capacity(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray, g: np.ndarray) -> float:
    """Network capacity in block form: log2|T| + log2|H_dr G K G^H H_dr^H + R| - log2|R|.

    H_dr G K G^H H_dr^H + R is written as I + H_dr G (I + K) G^H H_dr^H,
    which is bounded below by I.
    """
    terms = schur_terms(channels, f1, f2)
    hg = channels.h_dr @ np.asarray(g, dtype=complex)
    n_d, n_r = channels.n_d, channels.n_r
    signal = np.eye(n_d) + hg @ (np.eye(n_r) + terms.k) @ hg.conj().T
    noise = np.eye(n_d) + hg @ hg.conj().T
    value = log2det_pd(terms.t) + log2det_pd(signal) - log2det_pd(noise)
    return _clamp_capacity(value)


def sum_capacity_direct(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray, g: np.ndarray) -> float:
    """Sum capacity from the unreduced stacked determinant, for cross-checks."""
    eff = effective_model(channels, g)
    ctx = sic_context(eff, np.zeros_like(f1))
    total = ctx.r_z1.copy()
    for h, f in ((eff.h1, f1), (eff.h2, f2)):
        hf = h @ f
        total += hf @ hf.conj().T
    return _clamp_capacity(log2det_pd(total) - log2det_pd(eff.r))


def sum_mse(eff: EffectiveModel, f1: np.ndarray, f2: np.ndarray) -> float:
    """J = tr(E_1) + tr(E_2) under the fixed decoding order."""
    ctx = sic_context(eff, f1)
    e1 = mse_matrix(eff, f1, ctx.r_z1, source=1)
    e2 = mse_matrix(eff, f2, ctx.r_z2, source=2)
    return float(np.real(np.trace(e1)) + np.real(np.trace(e2)))


def design_metrics(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray, g: np.ndarray):
    """(C_1, C_2, sum capacity, sum MSE) of one design on one realization."""
    eff = effective_model(channels, g)
    ctx = sic_context(eff, f1)
    c1 = per_source_capacity(eff, f1, ctx.r_z1, source=1)
    c2 = per_source_capacity(eff, f2, ctx.r_z2, source=2)
    return c1, c2, sum_capacity(channels, f1, f2, g), sum_mse(eff, f1, f2)
