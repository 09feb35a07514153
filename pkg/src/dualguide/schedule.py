"""Diffusion noise schedule and the triangular guidance-scale schedule.

Timestep convention used everywhere in this package: t = T is pure noise,
t = 0 is clean data. ``alpha_bar(0) == 1`` by definition.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance-preserving forward-process tables over T timesteps.

    ``betas[i]``, ``alphas[i]`` and ``alpha_bars[i]`` belong to timestep
    ``t = i + 1``; use :meth:`alpha_bar` for t-indexed access.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        if self.T < 1:
            raise ConfigurationError("T must be a positive integer")
        for name in ("betas", "alphas", "alpha_bars"):
            if len(getattr(self, name)) != self.T:
                raise ConfigurationError(f"{name} must have length T={self.T}")
        if not (np.all(self.betas > 0.0) and np.all(self.betas < 1.0)):
            raise ConfigurationError("betas must lie strictly in (0, 1)")
        if np.any(np.diff(self.alpha_bars) >= 0.0):
            raise ConfigurationError("alpha_bars must be strictly decreasing")
        if self.alpha_bars[-1] <= 0.0:
            raise ConfigurationError("alpha_bar at t=T must stay positive")

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal-retention factor at timestep t (t=0 gives 1)."""
        if not 0 <= t <= self.T:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> DiffusionSchedule:
    """Linear beta schedule, endpoints inclusive (conventional DDPM default)."""
    if T < 2:
        raise ConfigurationError(f"T must be >= 2, got {T}")
    if not 0.0 < beta_start <= beta_end:
        raise ConfigurationError(
            f"beta_start must satisfy 0 < beta_start <= beta_end, got beta_start={beta_start}"
        )
    if beta_end >= 1.0:
        raise ConfigurationError(f"beta_end must be < 1, got {beta_end}")
    betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return DiffusionSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _check_integer_t(t, T: int) -> int:
    # Samplers only visit integer timesteps; fractional t is a caller bug.
    if isinstance(t, float) and not t.is_integer():
        raise ValueError(f"t must be an integer timestep, got {t}")
    t = int(t)
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    return t


@dataclass(frozen=True)
class TriangularSchedule:
    """Piecewise-linear guidance weight: 0 at both ends, peaking at u_T.

    ``gamma`` ramps t/u_T up to the peak and 1 - (t - u_T)/(T - u_T) past it;
    the applied scale is ``gs * gamma(t)``.
    """

    T: int
    u_T: int
    gs: float

    def __post_init__(self):
        if not 0 < self.u_T < self.T:
            raise ConfigurationError(f"u_T must lie strictly inside (0, {self.T}), got {self.u_T}")
        if self.gs < 0.0:
            raise ConfigurationError(f"gs must be nonnegative, got {self.gs}")

    def gamma(self, t: int) -> float:
        t = _check_integer_t(t, self.T)
        if t <= self.u_T:
            return t / self.u_T
        return 1.0 - (t - self.u_T) / (self.T - self.u_T)

    def scale_at(self, t: int) -> float:
        """Guidance scale g(t) = gs * gamma(t)."""
        return self.gs * self.gamma(t)
