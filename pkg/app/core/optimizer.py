"""Nested alternating design of (F_1, F_2, G) and the comparison schemes.

Each outer sweep updates F_1 against R_Z1, then F_2 against R_Z2 (which
contains the new F_1), then G for the pair. The relay step runs its own
alpha iteration (see app.core.relay). A designed G is only taken when it
beats the previous G scaled to the true budget, and new precoders only
when they do not lose to the current design, so accepted sweeps never
worsen the objective.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import ConfigurationError, NoUsableEigenmode
from app.core.metrics import design_metrics, schur_terms, sic_context, sum_capacity, sum_mse
from app.core.model import ChannelSet, EffectiveModel, Mode, NetworkConfig, effective_model
from app.core.precoder import Policy, isotropic_precoder, source_precoder, whitened_gram
from app.core.relay import (
    RelayDesign,
    naive_relay_gain,
    relay_geometry,
    relay_power,
    rescale_to_budget,
    solve_relay,
)

logger = logging.getLogger(__name__)


class Scheme(str, Enum):
    JDS = "jds"
    NAS = "nas"
    SOS = "sos"
    NOD = "nod"


class Termination(str, Enum):
    TOLERANCE = "tolerance"
    WORSENED = "worsened"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class Design:
    f1: np.ndarray
    f2: np.ndarray
    g: np.ndarray
    objective_trace: Tuple[float, ...]
    outer_iters: int
    converged: bool
    scheme: Scheme
    mode: Mode
    termination: Termination = Termination.TOLERANCE
    non_monotone_sweeps: int = 0
    precoder_fallbacks: int = 0
    relay_fallbacks: int = 0
    relay: Optional[RelayDesign] = None
    # NOD is scored without the source-destination links.
    direct_links: bool = True


@dataclass(frozen=True)
class DesignEvaluation:
    capacity: float
    sum_mse: float
    c1: float
    c2: float


@dataclass(frozen=True)
class PowerAudit:
    source1: float
    source2: float
    relay: float

    def feasible(self, config: NetworkConfig, rel_tol: float = 1e-8) -> bool:
        return (
            self.source1 <= config.p1 * (1.0 + rel_tol) + 1e-300
            and self.source2 <= config.p2 * (1.0 + rel_tol) + 1e-300
            and self.relay <= config.p_r * (1.0 + rel_tol) + 1e-300
        )


def policy_for(mode: Mode) -> Policy:
    return Policy.WATER_FILLING if Mode(mode) == Mode.CAPACITY else Policy.INVERSE_WATER_FILLING


def design_objective(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray, g: np.ndarray, mode: Mode) -> float:
    """Sum capacity (maximized) or sum MSE (minimized)."""
    if Mode(mode) == Mode.CAPACITY:
        return sum_capacity(channels, f1, f2, g)
    return sum_mse(effective_model(channels, g), f1, f2)


def _worse(value: float, reference: float, mode: Mode) -> bool:
    if Mode(mode) == Mode.CAPACITY:
        return value < reference
    return value > reference


def _precoder(eff: EffectiveModel, r_z: np.ndarray, source: int, p: float, policy: Policy) -> np.ndarray:
    basis = whitened_gram(eff, r_z, source)
    try:
        return source_precoder(basis, p, policy)
    except NoUsableEigenmode:
        logger.warning("Source %d sees no usable eigenmode; falling back to isotropic precoding", source)
        return isotropic_precoder(basis.u.shape[0], p)


def update_precoders(channels: ChannelSet, g: np.ndarray, config: NetworkConfig):
    """F_1 against R_Z1, then F_2 against R_Z2 built with the new F_1."""
    policy = policy_for(config.mode)
    eff = effective_model(channels, g)
    n_s = channels.n_s
    ctx = sic_context(eff, np.zeros((n_s, n_s), dtype=complex))
    f1 = _precoder(eff, ctx.r_z1, 1, config.p1, policy)
    ctx = sic_context(eff, f1)
    f2 = _precoder(eff, ctx.r_z2, 2, config.p2, policy)
    return f1, f2


def nas_design(channels: ChannelSet, config: NetworkConfig) -> Design:
    """Isotropic sources and G = eta I with the relay budget met exactly."""
    n_s = channels.n_s
    f1 = isotropic_precoder(n_s, config.p1)
    f2 = isotropic_precoder(n_s, config.p2)
    q = schur_terms(channels, f1, f2).q
    g = naive_relay_gain(q, config.p_r) * np.eye(channels.n_r, dtype=complex)
    objective = design_objective(channels, f1, f2, g, config.mode)
    return Design(
        f1=f1, f2=f2, g=g,
        objective_trace=(objective,),
        outer_iters=0,
        converged=True,
        scheme=Scheme.NAS,
        mode=config.mode,
    )


def _relay_update(channels: ChannelSet, f1: np.ndarray, f2: np.ndarray, held_g: np.ndarray,
                  config: NetworkConfig, held_objective: Optional[float] = None) -> Tuple[RelayDesign, float]:
    """Designed G for (F_1, F_2), or held_g when that does better.

    held_g is scaled to the true relay budget under (F_1, F_2) first; when
    held_objective is given, held_g is taken as feasible with that value.
    """
    mode = config.mode
    geometry = relay_geometry(channels, f1, f2)
    relay = solve_relay(
        geometry,
        config.p_r,
        mode,
        inner_tol=config.inner_tol,
        inner_max_iters=config.inner_max_iters,
        mse_max_iters=config.mse_max_iters,
    )
    objective = design_objective(channels, f1, f2, relay.g, mode)
    if held_objective is None:
        held_g = rescale_to_budget(geometry, held_g, config.p_r)
        held_objective = design_objective(channels, f1, f2, held_g, mode)
    if _worse(objective, held_objective, mode):
        relay = replace(relay, g=held_g, used_power=relay_power(geometry, held_g), kept_incumbent=True)
        objective = held_objective
    return relay, objective


def jds_optimize(channels: ChannelSet, config: NetworkConfig) -> Design:
    """Nested alternating optimization started from the naive design.

    Each sweep tries new precoders with the better of the designed and the
    previous relay matrix. If that loses to the current design, the sweep
    keeps the current precoders and only updates G. The best design seen
    so far is returned; a sweep that still worsens the objective ends the
    iteration.
    """
    mode = config.mode
    start = nas_design(channels, config)
    best_obj = start.objective_trace[0]
    f1, f2, g = start.f1, start.f2, start.g
    relay: Optional[RelayDesign] = None
    trace = [best_obj]

    termination = Termination.MAX_ITERS
    non_monotone = 0
    precoder_fallbacks = 0
    relay_fallbacks = 0
    sweeps = 0
    for sweeps in range(1, config.outer_max_iters + 1):
        # The precoder update sees the feasibility-rescaled G.
        new_f1, new_f2 = update_precoders(channels, g, config)
        candidate, objective = _relay_update(channels, new_f1, new_f2, g, config)
        if _worse(objective, best_obj, mode):
            precoder_fallbacks += 1
            new_f1, new_f2 = f1, f2
            candidate, objective = _relay_update(channels, f1, f2, g, config, held_objective=best_obj)
        relay_fallbacks += candidate.kept_incumbent

        # Rejected sweeps are counted, not traced.
        if _worse(objective, best_obj, mode):
            non_monotone += 1
            termination = Termination.WORSENED
            logger.debug("Sweep %d worsened objective %.10g -> %.10g; keeping best", sweeps, best_obj, objective)
            break

        trace.append(objective)
        previous = best_obj
        f1, f2, g, relay, best_obj = new_f1, new_f2, candidate.g, candidate, objective
        if abs(objective - previous) <= config.outer_tol * (1.0 + abs(previous)):
            termination = Termination.TOLERANCE
            break

    if precoder_fallbacks or relay_fallbacks:
        logger.debug("JDS kept previous precoders %d times and previous G %d times over %d sweeps",
                     precoder_fallbacks, relay_fallbacks, sweeps)
    return Design(
        f1=f1, f2=f2, g=g,
        objective_trace=tuple(trace),
        outer_iters=sweeps,
        converged=termination == Termination.TOLERANCE,
        scheme=Scheme.JDS,
        mode=mode,
        termination=termination,
        non_monotone_sweeps=non_monotone,
        precoder_fallbacks=precoder_fallbacks,
        relay_fallbacks=relay_fallbacks,
        relay=relay,
    )


def baseline_design(channels: ChannelSet, config: NetworkConfig, scheme: Scheme) -> Design:
    """NAS, or the direct-link-blind design scored with (SOS) or without (NOD) direct links."""
    scheme = Scheme(scheme)
    if scheme == Scheme.NAS:
        return nas_design(channels, config)
    if scheme in (Scheme.SOS, Scheme.NOD):
        blind = jds_optimize(channels.without_direct_links(), config)
        return replace(blind, scheme=scheme, direct_links=scheme == Scheme.SOS)
    raise ConfigurationError(f"{scheme.value} is not a baseline scheme")


def design_for(channels: ChannelSet, config: NetworkConfig, scheme: Scheme) -> Design:
    scheme = Scheme(scheme)
    if scheme == Scheme.JDS:
        return jds_optimize(channels, config)
    return baseline_design(channels, config, scheme)


def evaluate(design: Design, channels: ChannelSet) -> DesignEvaluation:
    """Score a design under its scheme's evaluation convention."""
    scored = channels if design.direct_links else channels.without_direct_links()
    c1, c2, capacity, mse = design_metrics(scored, design.f1, design.f2, design.g)
    return DesignEvaluation(capacity=capacity, sum_mse=mse, c1=c1, c2=c2)


def power_audit(design: Design, channels: ChannelSet) -> PowerAudit:
    q = schur_terms(channels, design.f1, design.f2).q
    n_r = channels.n_r
    g = design.g
    return PowerAudit(
        source1=float(np.real(np.trace(design.f1 @ design.f1.conj().T))),
        source2=float(np.real(np.trace(design.f2 @ design.f2.conj().T))),
        relay=float(np.real(np.trace(g @ (np.eye(n_r) + q) @ g.conj().T))),
    )
