"""Negative-prompt construction: Bernoulli dropout masks times scaled Gaussian noise.

The targeted component of the pair is replaced by lambda * mask * z (the
replacement carries no term from the original vector); the other component
is copied unchanged. An optional additive mode keeps the original vector
and adds the masked noise on top.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .conditions import NULL_CONDITION, ConditionPair, NullCondition
from .errors import ConfigurationError


class PerturbTarget(enum.Enum):
    STYLE = "style"
    CONTENT = "content"
    BOTH = "both"
    UNCONDITIONAL = "unconditional"


class ResampleMode(enum.Enum):
    PER_TRAJECTORY = "per_trajectory"
    PER_STEP = "per_step"


@dataclass(frozen=True)
class PerturbConfig:
    lambda_s: float = 1000.0
    lambda_t: float = 1000.0
    p: float = 0.75
    target: PerturbTarget = PerturbTarget.BOTH
    resample_mode: ResampleMode = ResampleMode.PER_TRAJECTORY
    additive: bool = False

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError(f"keep-probability p must be in (0, 1], got {self.p}")
        if self.lambda_s < 0.0 or self.lambda_t < 0.0:
            raise ConfigurationError("noise magnitudes lambda_s, lambda_t must be >= 0")


def _masked_noise(
    original: np.ndarray, lam: float, p: float, additive: bool, rng: np.random.Generator
) -> np.ndarray:
    mask = (rng.random(original.shape) < p).astype(float)
    noise = lam * mask * rng.standard_normal(original.shape)
    return original + noise if additive else noise


def make_negative(
    pos: ConditionPair, cfg: PerturbConfig, rng: np.random.Generator
) -> ConditionPair | NullCondition:
    """Corrupted counterpart of a positive pair, per the configured target."""
    if pos.r_t.size == 0 or pos.r_s.size == 0:
        raise ValueError("positive condition vectors must be nonempty")
    if cfg.target is PerturbTarget.UNCONDITIONAL:
        return NULL_CONDITION
    # Style drawn first, then content: draw order is part of the determinism
    # contract for seeded generators.
    r_s = pos.r_s
    r_t = pos.r_t
    if cfg.target in (PerturbTarget.STYLE, PerturbTarget.BOTH):
        r_s = _masked_noise(pos.r_s, cfg.lambda_s, cfg.p, cfg.additive, rng)
    if cfg.target in (PerturbTarget.CONTENT, PerturbTarget.BOTH):
        r_t = _masked_noise(pos.r_t, cfg.lambda_t, cfg.p, cfg.additive, rng)
    return ConditionPair(r_t=r_t, r_s=r_s, content_id=-1, style_id=-1)


class NegativePromptSource:
    """Per-trajectory supplier of the negative condition.

    PER_TRAJECTORY draws once on first use and caches; PER_STEP redraws on
    every call. Each trajectory owns its own source and generator.
    """

    def __init__(self, pos: ConditionPair, cfg: PerturbConfig, rng: np.random.Generator):
        self._pos = pos
        self._cfg = cfg
        self._rng = rng
        self._cached: ConditionPair | NullCondition | None = None

    def for_step(self, t: int) -> ConditionPair | NullCondition:
        if self._cfg.resample_mode is ResampleMode.PER_STEP:
            return make_negative(self._pos, self._cfg, self._rng)
        if self._cached is None:
            self._cached = make_negative(self._pos, self._cfg, self._rng)
        return self._cached
