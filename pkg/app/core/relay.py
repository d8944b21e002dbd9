"""Relay matrix design for fixed source precoders.

The relay matrix has the structure G = V_H diag(sqrt(xi)) U_K^H, where
K = U_K Lambda_K U_K^H and H_dr = U_H Theta V_H^H. The true relay power
tr{G (I + sum H_ri Pi_i H_ri^H) G^H} does not diagonalize under that
structure; the term tr(K_tilde G^H G) is replaced by alpha kappa tr(G^H G)
with kappa = tr(K_tilde) and alpha in [0, 1], which turns the budget into
sum (lambda_i + 1 + alpha kappa) xi_i <= P_r. alpha is refined by a fixed
point iteration and the final G is scaled down if the true budget is
exceeded.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from app.core.exceptions import AlphaOutOfRange
from app.core.metrics import schur_terms
from app.core.model import ChannelSet, Mode
from app.core.precoder import clamp_eigenvalues, descending_eigh

logger = logging.getLogger(__name__)

KAPPA_TOL = 1e-14
ALPHA_ROUNDOFF = 1e-12


@dataclass(frozen=True)
class RelayGeometry:
    t: np.ndarray
    q: np.ndarray           # sum H_ri Pi_i H_ri^H = k + k_tilde
    k: np.ndarray
    k_tilde: np.ndarray
    kappa: float
    u_k: np.ndarray
    lambda_k: np.ndarray    # descending, clamped at 0
    u_h: np.ndarray
    v_h: np.ndarray
    theta: np.ndarray       # descending, zero padded to n_r

    @property
    def n_r(self) -> int:
        return self.u_k.shape[0]


@dataclass(frozen=True)
class CapacityAllocation:
    xi: np.ndarray
    mu: float
    relay_useless: bool = False


@dataclass(frozen=True)
class RelayDesign:
    g: np.ndarray
    xi: np.ndarray
    alpha: float
    used_power: float
    inner_iters: int
    alpha_trace: Tuple[float, ...] = ()
    modified_power: float = 0.0
    power_residual: float = 0.0
    power_scale: float = 1.0
    relay_useless: bool = False
    inner_maxed_out: bool = False
    mu: Optional[float] = None
    # The designed G did worse than the previous G, which was kept instead.
    kept_incumbent: bool = False


def relay_geometry(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray) -> RelayGeometry:
    terms = schur_terms(channels, f1, f2)
    w, u_k = descending_eigh(terms.k)
    lambda_k = clamp_eigenvalues(w, float(np.real(np.trace(terms.q))))

    u_h, s, vh = scipy.linalg.svd(channels.h_dr, full_matrices=True)
    theta = np.zeros(channels.n_r)
    theta[: s.size] = s

    return RelayGeometry(
        t=terms.t,
        q=terms.q,
        k=terms.k,
        k_tilde=terms.k_tilde,
        kappa=max(float(np.real(np.trace(terms.k_tilde))), 0.0),
        u_k=u_k,
        lambda_k=lambda_k,
        u_h=u_h,
        v_h=vh.conj().T,
        theta=theta,
    )


def assemble_relay(geometry: RelayGeometry, xi: np.ndarray) -> np.ndarray:
    """G = V_H diag(sqrt(xi)) U_K^H."""
    return (geometry.v_h * np.sqrt(np.maximum(xi, 0.0))[np.newaxis, :]) @ geometry.u_k.conj().T


def relay_power(geometry: RelayGeometry, g: np.ndarray) -> float:
    """True relay transmit power tr{G (I + Q) G^H}."""
    n_r = geometry.n_r
    return float(np.real(np.trace(g @ (np.eye(n_r) + geometry.q) @ g.conj().T)))


def rescale_to_budget(geometry: RelayGeometry, g: np.ndarray, p_r: float) -> np.ndarray:
    """G scaled down, if needed, so that its true relay power is at most P_r."""
    used = relay_power(geometry, g)
    if used > p_r:
        return g * np.sqrt(p_r / used)
    return g


def naive_relay_gain(q: np.ndarray, p_r: float) -> float:
    """eta with tr{eta^2 (I + Q)} = P_r."""
    n_r = q.shape[0]
    return float(np.sqrt(p_r / (n_r + float(np.real(np.trace(q))))))


def alpha_ratio(k_tilde: np.ndarray, g: np.ndarray) -> float:
    """alpha = tr(K_tilde G^H G) / (tr(K_tilde) tr(G^H G)), in [0, 1] for PSD K_tilde.

    Returns 0 when the denominator vanishes. No clipping is applied.
    """
    gg = g.conj().T @ g
    denom = float(np.real(np.trace(k_tilde))) * float(np.real(np.trace(gg)))
    if denom <= 0.0:
        return 0.0
    return float(np.real(np.trace(k_tilde @ gg))) / denom


def alpha_of(k_tilde: np.ndarray, g: np.ndarray) -> float:
    """alpha_ratio clipped to [0, 1]; only roundoff excursions are clipped."""
    alpha = alpha_ratio(k_tilde, g)
    if alpha < -ALPHA_ROUNDOFF or alpha > 1.0 + ALPHA_ROUNDOFF:
        raise AlphaOutOfRange(f"Trace ratio {alpha:.6g} lies outside [0, 1]; K_tilde is not PSD")
    return min(max(alpha, 0.0), 1.0)


def _budget_weights(lambda_k, kappa: float, alpha: float) -> np.ndarray:
    return np.asarray(lambda_k, dtype=float) + 1.0 + alpha * kappa


def _usable_modes(lambda_k, theta) -> np.ndarray:
    lam = np.asarray(lambda_k, dtype=float)
    th = np.asarray(theta, dtype=float)
    return (lam > 0.0) & (th > 0.0)


def relay_capacity_objective(xi, lambda_k, theta) -> float:
    """sum log2((theta^2 xi lambda + theta^2 xi + 1) / (theta^2 xi + 1))."""
    a = np.asarray(theta, dtype=float) ** 2 * np.asarray(xi, dtype=float)
    lam = np.asarray(lambda_k, dtype=float)
    return float(np.sum(np.log2(1.0 + a * (lam + 1.0)) - np.log2(1.0 + a)))


def relay_mse_objective(xi, lambda_k, theta) -> float:
    """(sum 1/(theta^2 lambda xi + theta^2 xi + 1)) * (sum (theta^2 xi + 2))."""
    a = np.asarray(theta, dtype=float) ** 2 * np.asarray(xi, dtype=float)
    lam = np.asarray(lambda_k, dtype=float)
    return float(np.sum(1.0 / (a * (lam + 1.0) + 1.0)) * np.sum(a + 2.0))


def capacity_allocation(lambda_k, theta, kappa: float, alpha: float, p_r: float) -> CapacityAllocation:
    """Closed-form xi(mu) with mu set so that sum w_i xi_i = P_r, w_i = lambda_i + 1 + alpha kappa."""
    lam = np.asarray(lambda_k, dtype=float)
    a = np.asarray(theta, dtype=float) ** 2
    w = _budget_weights(lam, kappa, alpha)
    usable = _usable_modes(lam, theta)
    xi = np.zeros_like(lam)

    if not np.any(usable):
        if p_r > 0.0:
            logger.debug("Relay cannot convey information: no mode with lambda * theta > 0")
        return CapacityAllocation(xi=xi, mu=0.0, relay_useless=True)
    if p_r <= 0.0:
        return CapacityAllocation(xi=xi, mu=0.0)

    lam_u, a_u, w_u = lam[usable], a[usable], w[usable]

    def xi_at(mu: float) -> np.ndarray:
        root = np.sqrt(lam_u ** 2 + 4.0 * lam_u * a_u * (lam_u + 1.0) * mu / w_u)
        return np.maximum(root - lam_u - 2.0, 0.0) / (2.0 * a_u * (lam_u + 1.0))

    def excess(mu: float) -> float:
        return float(np.dot(w_u, xi_at(mu))) - p_r

    # Mode i opens once mu exceeds w_i / (lambda_i theta_i^2).
    lo = float(np.min(w_u / (lam_u * a_u)))
    hi = 2.0 * lo
    for _ in range(2000):
        if excess(hi) >= 0.0:
            break
        hi *= 2.0
    mu = scipy.optimize.brentq(excess, lo, hi, xtol=1e-14 * lo, rtol=4.0 * np.finfo(float).eps, maxiter=500)

    xi_u = xi_at(mu)
    spent = float(np.dot(w_u, xi_u))
    if spent > 0.0:
        xi_u *= p_r / spent
    xi[usable] = xi_u
    return CapacityAllocation(xi=xi, mu=float(mu))


def project_weighted_budget(x: np.ndarray, w: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {y >= 0, w . y <= budget}, w > 0."""
    y = np.maximum(x, 0.0)
    if float(np.dot(w, y)) <= budget:
        return y
    # y = max(0, x - nu w); breakpoints nu_i = x_i / w_i, solved exactly per active set.
    ratio = x / w
    order = np.argsort(-ratio, kind="stable")
    wx = np.cumsum((w * x)[order])
    ww = np.cumsum((w * w)[order])
    nu = 0.0
    for m in range(order.size):
        nu = (wx[m] - budget) / ww[m]
        next_bp = ratio[order[m + 1]] if m + 1 < order.size else -np.inf
        if nu >= next_bp:
            break
    return np.maximum(x - nu * w, 0.0)


def projected_gradient_norm(x: np.ndarray, grad: np.ndarray, w: np.ndarray, budget: float) -> float:
    """Stationarity measure ||x - P(x - grad)||; zero exactly at KKT points."""
    return float(np.linalg.norm(x - project_weighted_budget(x - grad, w, budget)))


def _projected_descent(x0, objective, gradient, w, budget, tol: float, max_iters: int):
    """Projected gradient with Barzilai-Borwein trial steps and Armijo backtracking.

    Stops once the projected-gradient norm is at most tol, or when the line
    search can no longer decrease the objective.
    """
    x = project_weighted_budget(np.asarray(x0, dtype=float), w, budget)
    f = objective(x)
    g = gradient(x)
    step = budget / max(float(np.sum(w)), 1e-300) / max(float(np.max(np.abs(g))), 1e-300)
    # Objective differences below slack are roundoff; the gradient still steers.
    # No iterate may end above the starting value by more than slack.
    slack = 16.0 * np.finfo(float).eps * max(abs(f), 1.0)
    ceiling = f + slack
    iters = 0
    while iters < max_iters and projected_gradient_norm(x, g, w, budget) > tol:
        iters += 1
        accepted = False
        for _ in range(60):
            x_new = project_weighted_budget(x - step * g, w, budget)
            d = x_new - x
            f_new = objective(x_new)
            if f_new <= min(f + float(np.dot(g, d)) + float(np.dot(d, d)) / (2.0 * step) + slack, ceiling):
                accepted = True
                break
            step *= 0.5
        if not accepted or not np.any(d):
            logger.debug("MSE relay allocation stalled at iteration %d", iters)
            break

        g_new = gradient(x_new)
        s, yv = d, g_new - g
        x, f, g = x_new, f_new, g_new
        curvature = float(np.dot(s, yv))
        step = float(np.dot(s, s)) / curvature if curvature > 0.0 else 2.0 * step
    return x, f, iters


def mse_allocation(lambda_k, theta, kappa: float, alpha: float, p_r: float, xi_init,
                   tol: float = 1e-6, max_iters: int = 500) -> np.ndarray:
    """Minimize the product-form MSE objective over the modified relay budget.

    Runs projected descent from xi_init and from the uniform budget-tight
    point and keeps the better result, so the objective never exceeds its
    value at xi_init beyond roundoff. Each run stops at projected-gradient
    norm <= tol.
    """
    lam = np.asarray(lambda_k, dtype=float)
    a = np.asarray(theta, dtype=float) ** 2
    w = _budget_weights(lam, kappa, alpha)
    usable = _usable_modes(lam, theta)
    xi = np.zeros_like(lam)
    if p_r <= 0.0 or not np.any(usable):
        return xi

    lam_u, a_u, w_u = lam[usable], a[usable], w[usable]
    # Unusable coordinates contribute constants: 1 to the first sum, 2 to the second.
    n_fixed = int(np.count_nonzero(~usable))

    def objective(x):
        d = a_u * (lam_u + 1.0) * x + 1.0
        return float((np.sum(1.0 / d) + n_fixed) * (np.sum(a_u * x + 2.0) + 2.0 * n_fixed))

    def gradient(x):
        d = a_u * (lam_u + 1.0) * x + 1.0
        first = np.sum(1.0 / d) + n_fixed
        second = np.sum(a_u * x + 2.0) + 2.0 * n_fixed
        return -a_u * (lam_u + 1.0) / d ** 2 * second + first * a_u

    starts = [np.asarray(xi_init, dtype=float)[usable], p_r / (w_u.size * w_u)]
    best_x, best_f = None, np.inf
    for x0 in starts:
        x, f, iters = _projected_descent(x0, objective, gradient, w_u, p_r, tol, max_iters)
        logger.debug("MSE relay allocation: %d iterations, objective %.12g", iters, f)
        if f < best_f:
            best_x, best_f = x, f

    xi[usable] = best_x
    return xi


def _allocate(geometry: RelayGeometry, p_r: float, mode: Mode, alpha: float, tol: float,
              mse_max_iters: int) -> Tuple[np.ndarray, Optional[float]]:
    cap = capacity_allocation(geometry.lambda_k, geometry.theta, geometry.kappa, alpha, p_r)
    if mode == Mode.CAPACITY:
        return cap.xi, cap.mu
    xi = mse_allocation(geometry.lambda_k, geometry.theta, geometry.kappa, alpha, p_r, cap.xi,
                        tol=tol, max_iters=mse_max_iters)
    return xi, None


def solve_relay(geometry: RelayGeometry, p_r: float, mode: Mode, inner_tol: float = 1e-6,
                inner_max_iters: int = 100, mse_max_iters: int = 500) -> RelayDesign:
    """Alternate the xi allocation and alpha until alpha settles, then enforce the true budget."""
    mode = Mode(mode)
    n_r = geometry.n_r
    usable = _usable_modes(geometry.lambda_k, geometry.theta)
    if p_r <= 0.0 or not np.any(usable):
        return RelayDesign(
            g=np.zeros((n_r, n_r), dtype=complex),
            xi=np.zeros(n_r),
            alpha=0.0,
            used_power=0.0,
            inner_iters=0,
            relay_useless=not np.any(usable),
        )

    inner_maxed_out = False
    if geometry.kappa <= KAPPA_TOL:
        alpha = 0.0
        alpha_trace = [0.0]
        xi, mu = _allocate(geometry, p_r, mode, alpha, inner_tol, mse_max_iters)
        iters = 1
    else:
        eta = naive_relay_gain(geometry.q, p_r)
        alpha = alpha_of(geometry.k_tilde, eta * np.eye(n_r))
        alpha_trace = [alpha]
        iters = 0
        while True:
            iters += 1
            xi, mu = _allocate(geometry, p_r, mode, alpha, inner_tol, mse_max_iters)
            alpha_next = alpha_of(geometry.k_tilde, assemble_relay(geometry, xi))
            alpha_trace.append(alpha_next)
            if abs(alpha_next - alpha) <= inner_tol:
                break
            if iters >= inner_max_iters:
                inner_maxed_out = True
                logger.debug("alpha iteration stopped at cap %d (last step %.3e)",
                             inner_max_iters, abs(alpha_next - alpha))
                break
            alpha = alpha_next

    g = assemble_relay(geometry, xi)
    used = relay_power(geometry, g)
    modified = float(np.dot(_budget_weights(geometry.lambda_k, geometry.kappa, alpha), xi))
    scale = 1.0
    if used > p_r:
        scale = p_r / used
        g = g * np.sqrt(scale)
        used = relay_power(geometry, g)

    return RelayDesign(
        g=g,
        xi=xi,
        alpha=alpha,
        used_power=used,
        inner_iters=iters,
        alpha_trace=tuple(alpha_trace),
        modified_power=modified,
        power_residual=modified - (used / scale),
        power_scale=scale,
        inner_maxed_out=inner_maxed_out,
        mu=mu,
    )
