"""Combination rules turning raw noise predictions into the applied one.

Strategies:

* NONE — the conditional prediction, untouched.
* CFG  — eps_u + gs * (eps_c - eps_u).
* APG  — like CFG, but the update is split against eps_c and the parallel
  part is down-weighted.
* DOG  — clip the negative prediction's norm, remove its component along
  the positive prediction, and push away from the remaining orthogonal
  direction with a (optionally triangular-scheduled) scale.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .perturb import PerturbConfig
from .schedule import TriangularSchedule

AUTO_TAU = "auto"


class Strategy(enum.Enum):
    NONE = "none"
    CFG = "cfg"
    APG = "apg"
    DOG = "dog"


@dataclass(frozen=True)
class GuidanceConfig:
    strategy: Strategy = Strategy.NONE
    gs: float = 0.0
    tau: float | str = AUTO_TAU
    apg_parallel_weight: float = 0.1
    schedule_on: bool = True
    project: bool = True  # ablation switch: False uses the raw clipped negative
    perturb: PerturbConfig | None = None
    triangular: TriangularSchedule | None = None

    def __post_init__(self):
        if self.gs < 0.0:
            raise ConfigurationError(f"gs must be nonnegative, got {self.gs}")
        if self.tau != AUTO_TAU and (not isinstance(self.tau, (int, float)) or self.tau <= 0.0):
            raise ConfigurationError(f"tau must be positive or 'auto', got {self.tau!r}")
        if not 0.0 <= self.apg_parallel_weight <= 1.0:
            raise ConfigurationError("apg_parallel_weight must be in [0, 1]")
        if self.strategy is Strategy.DOG:
            if self.perturb is None:
                raise ConfigurationError("DOG requires a perturbation config")
            if self.schedule_on and self.triangular is None:
                raise ConfigurationError("DOG with scheduling requires a triangular schedule")


def project_onto(eps_n: np.ndarray, eps_p: np.ndarray) -> np.ndarray:
    """Projection of eps_n onto eps_p over the fully-flattened tensors.

    A zero eps_p has no span; the projection degenerates to the zero tensor.
    """
    if eps_n.shape != eps_p.shape:
        raise ValueError(f"shape mismatch {eps_n.shape} vs {eps_p.shape}")
    denom = float(np.vdot(eps_p, eps_p))
    if denom == 0.0:
        return np.zeros_like(eps_p)
    return (float(np.vdot(eps_n, eps_p)) / denom) * eps_p


def orthogonal_component(eps_n: np.ndarray, eps_p: np.ndarray) -> np.ndarray:
    """eps_n minus its projection onto eps_p; orthogonal to eps_p."""
    return eps_n - project_onto(eps_n, eps_p)


def clip_norm(eps_n: np.ndarray, tau: float) -> np.ndarray:
    """Rescale so the norm never exceeds tau; direction preserved."""
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    norm = float(np.linalg.norm(eps_n))
    if norm <= tau:
        return eps_n
    return (tau / norm) * eps_n


def dog_combine(
    eps_p: np.ndarray, eps_n: np.ndarray, t: int, cfg: GuidanceConfig
) -> np.ndarray:
    """Clip -> orthogonalize -> residual: eps_p + g(t) * (eps_p - eps_star)."""
    if eps_p.shape != eps_n.shape:
        raise ValueError(f"shape mismatch {eps_p.shape} vs {eps_n.shape}")
    g = cfg.triangular.scale_at(t) if cfg.schedule_on else cfg.gs
    if g == 0.0:
        return eps_p
    tau = float(np.linalg.norm(eps_p)) if cfg.tau == AUTO_TAU else float(cfg.tau)
    if tau > 0.0:
        eps_n = clip_norm(eps_n, tau)
    eps_star = orthogonal_component(eps_n, eps_p) if cfg.project else eps_n
    return eps_p + g * (eps_p - eps_star)


def cfg_combine(eps_c: np.ndarray, eps_u: np.ndarray, gs: float) -> np.ndarray:
    """Conditional/unconditional extrapolation eps_u + gs * (eps_c - eps_u)."""
    if eps_c.shape != eps_u.shape:
        raise ValueError(f"shape mismatch {eps_c.shape} vs {eps_u.shape}")
    if gs == 1.0:
        return eps_c
    return eps_u + gs * (eps_c - eps_u)


def apg_combine(
    eps_c: np.ndarray, eps_u: np.ndarray, gs: float, parallel_weight: float
) -> np.ndarray:
    """CFG update with the component parallel to eps_c down-weighted.

    Falls back to plain CFG when eps_c is the zero tensor (no projection axis).
    """
    if eps_c.shape != eps_u.shape:
        raise ValueError(f"shape mismatch {eps_c.shape} vs {eps_u.shape}")
    if float(np.vdot(eps_c, eps_c)) == 0.0:
        return cfg_combine(eps_c, eps_u, gs)
    delta = eps_c - eps_u
    parallel = project_onto(delta, eps_c)
    perpendicular = delta - parallel
    return eps_c + gs * (perpendicular + parallel_weight * parallel)
