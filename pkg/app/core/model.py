"""Network configuration, fading channel generation and the two-phase receive model.

The destination observes both transmission phases stacked:

    [y1; y2] = H1 F1 s1 + H2 F2 s2 + H3 N

with H_i = [H_di; H_dr G H_ri]. The effective noise covariance is
H3 H3^H = diag(I, R) with R = I + H_dr G G^H H_dr^H, so only R is stored.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.core.config import settings
from app.core.exceptions import ConfigurationError, DimensionMismatch

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    CAPACITY = "capacity"
    MSE = "mse"


def db_to_linear(value_db: float) -> float:
    """Per-node transmit SNR in dB to linear scale (unit-variance noise)."""
    return float(10.0 ** (value_db / 10.0))


class NetworkConfig(BaseModel):
    """Antenna counts, power budgets (linear), geometry and solver limits.

    Both sources sit at the same position, so the source-destination
    distance is always l_sr + l_rd.
    """

    model_config = ConfigDict(frozen=True)

    n_s: int = Field(4, ge=1)
    n_r: int = Field(4, ge=1)
    n_d: int = Field(4, ge=1)
    p1: float = Field(100.0, ge=0)
    p2: float = Field(100.0, ge=0)
    p_r: float = Field(100.0, ge=0)
    l_sr: float = Field(5.0, gt=0)
    l_rd: float = Field(5.0, gt=0)
    tau: float = Field(3.0, ge=0)
    mode: Mode = Mode.CAPACITY
    outer_max_iters: int = Field(default_factory=lambda: settings.outer_max_iters, ge=1)
    inner_max_iters: int = Field(default_factory=lambda: settings.inner_max_iters, ge=1)
    mse_max_iters: int = Field(default_factory=lambda: settings.mse_max_iters, ge=1)
    outer_tol: float = Field(default_factory=lambda: settings.outer_tol, gt=0)
    inner_tol: float = Field(default_factory=lambda: settings.inner_tol, gt=0)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64)

    @field_validator("p1", "p2", "p_r", "l_sr", "l_rd", "tau", "outer_tol", "inner_tol")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("must be finite")
        return value

    @property
    def l_sd(self) -> float:
        return self.l_sr + self.l_rd

    @classmethod
    def build(cls, **fields) -> "NetworkConfig":
        """Validate fields, raising ConfigurationError instead of pydantic's error."""
        try:
            return cls(**fields)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid network configuration: {e}") from e

    @classmethod
    def from_db(cls, p_db: float, p1_db: float | None = None, p2_db: float | None = None,
                pr_db: float | None = None, **fields) -> "NetworkConfig":
        """Build a config from dB power levels; unspecified levels default to p_db."""
        return cls.build(
            p1=db_to_linear(p_db if p1_db is None else p1_db),
            p2=db_to_linear(p_db if p2_db is None else p2_db),
            p_r=db_to_linear(p_db if pr_db is None else pr_db),
            **fields,
        )

    def with_updates(self, **fields) -> "NetworkConfig":
        return self.build(**{**self.model_dump(), **fields})


@dataclass(frozen=True)
class ChannelSet:
    """The five channel matrices of one fading realization."""
    h_r1: np.ndarray  # n_r x n_s
    h_r2: np.ndarray  # n_r x n_s
    h_d1: np.ndarray  # n_d x n_s
    h_d2: np.ndarray  # n_d x n_s
    h_dr: np.ndarray  # n_d x n_r

    @property
    def n_s(self) -> int:
        return self.h_r1.shape[1]

    @property
    def n_r(self) -> int:
        return self.h_r1.shape[0]

    @property
    def n_d(self) -> int:
        return self.h_dr.shape[0]

    def relay_links(self):
        return self.h_r1, self.h_r2

    def direct_links(self):
        return self.h_d1, self.h_d2

    def without_direct_links(self) -> "ChannelSet":
        """Copy with both source-destination links silenced."""
        return replace(self, h_d1=np.zeros_like(self.h_d1), h_d2=np.zeros_like(self.h_d2))

    def validate(self, config: NetworkConfig | None = None) -> None:
        n_s, n_r, n_d = self.n_s, self.n_r, self.n_d
        expected = {
            "h_r1": (n_r, n_s), "h_r2": (n_r, n_s),
            "h_d1": (n_d, n_s), "h_d2": (n_d, n_s),
            "h_dr": (n_d, n_r),
        }
        for name, shape in expected.items():
            matrix = getattr(self, name)
            if matrix.shape != shape:
                raise DimensionMismatch(f"{name} has shape {matrix.shape}, expected {shape}")
            if not np.all(np.isfinite(matrix)):
                raise DimensionMismatch(f"{name} has non-finite entries")
        if config is not None and (n_s, n_r, n_d) != (config.n_s, config.n_r, config.n_d):
            raise DimensionMismatch(
                f"channel antenna counts {(n_s, n_r, n_d)} do not match config "
                f"{(config.n_s, config.n_r, config.n_d)}"
            )


@dataclass(frozen=True)
class EffectiveModel:
    """Stacked two-phase channels for a fixed relay matrix."""
    h1: np.ndarray  # 2 n_d x n_s
    h2: np.ndarray  # 2 n_d x n_s
    r: np.ndarray   # n_d x n_d, phase-2 noise covariance
    g: np.ndarray   # n_r x n_r

    @property
    def n_d(self) -> int:
        return self.r.shape[0]

    def channel(self, source: int) -> np.ndarray:
        if source == 1:
            return self.h1
        if source == 2:
            return self.h2
        raise ValueError(f"source must be 1 or 2, got {source}")


def trial_generator(seed: int, trial_index: int) -> np.random.Generator:
    """Independent PCG64 substream for one trial, independent of execution order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial_index,))))


def _unit_cn(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) entries: real and imaginary parts i.i.d. N(0, 1/2)."""
    re = rng.standard_normal(size=shape)
    im = rng.standard_normal(size=shape)
    return (re + 1j * im) / np.sqrt(2.0)


def path_loss_variance(distance: float, tau: float) -> float:
    return float(distance ** (-tau))


def generate_channels(config: NetworkConfig, trial_index: int) -> ChannelSet:
    """Draw one Rayleigh realization with CN(0, 1/l^tau) entries.

    Small-scale fading depends only on (seed, trial_index); path loss is
    applied afterwards, so sweeps over geometry reuse the same fading.
    """
    if trial_index < 0:
        raise ConfigurationError(f"trial_index must be nonnegative, got {trial_index}")
    rng = trial_generator(config.seed, trial_index)
    n_s, n_r, n_d = config.n_s, config.n_r, config.n_d

    # Fixed draw order keeps realizations stable across versions.
    h_r1 = _unit_cn(rng, (n_r, n_s))
    h_r2 = _unit_cn(rng, (n_r, n_s))
    h_d1 = _unit_cn(rng, (n_d, n_s))
    h_d2 = _unit_cn(rng, (n_d, n_s))
    h_dr = _unit_cn(rng, (n_d, n_r))

    a_sr = np.sqrt(path_loss_variance(config.l_sr, config.tau))
    a_sd = np.sqrt(path_loss_variance(config.l_sd, config.tau))
    a_rd = np.sqrt(path_loss_variance(config.l_rd, config.tau))

    return ChannelSet(
        h_r1=a_sr * h_r1,
        h_r2=a_sr * h_r2,
        h_d1=a_sd * h_d1,
        h_d2=a_sd * h_d2,
        h_dr=a_rd * h_dr,
    )


def effective_model(channels: ChannelSet, g: np.ndarray) -> EffectiveModel:
    """Compose H_1, H_2 and the phase-2 noise covariance R for relay matrix g."""
    n_r, n_d = channels.n_r, channels.n_d
    g = np.asarray(g, dtype=complex)
    if g.shape != (n_r, n_r):
        raise DimensionMismatch(f"relay matrix has shape {g.shape}, expected {(n_r, n_r)}")

    hg = channels.h_dr @ g
    h1 = np.vstack([channels.h_d1, hg @ channels.h_r1])
    h2 = np.vstack([channels.h_d2, hg @ channels.h_r2])
    r = np.eye(n_d) + hg @ hg.conj().T
    r = 0.5 * (r + r.conj().T)
    return EffectiveModel(h1=h1, h2=h2, r=r, g=g)
