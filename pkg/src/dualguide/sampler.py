"""Deterministic DDIM reverse loop with per-step guidance and trajectory records."""

from dataclasses import dataclass, field

import numpy as np

from .conditions import NULL_CONDITION, ConditionPair
from .errors import ConfigurationError, NumericalAbort
from .guidance import GuidanceConfig, Strategy, apg_combine, cfg_combine, dog_combine
from .perturb import NegativePromptSource
from .schedule import DiffusionSchedule


@dataclass(frozen=True)
class TrajectoryStep:
    t: int
    x: np.ndarray
    eps_hat: np.ndarray
    g: float


@dataclass
class Trajectory:
    """Record of one sampling run, ordered from t=T down to t=0."""

    steps: list[TrajectoryStep] = field(default_factory=list)
    seed: int = 0
    config_digest: str = ""
    degenerate_step_count: int = 0
    max_state_norm: float = 0.0
    final: np.ndarray | None = None


def ddim_transition(
    x_t: np.ndarray, eps_hat: np.ndarray, t: int, t_prev: int, schedule: DiffusionSchedule
) -> np.ndarray:
    """Deterministic DDIM update from timestep t to t_prev (eta = 0)."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [1, {schedule.T}]")
    if not 0 <= t_prev < t:
        raise ValueError(f"t_prev={t_prev} must lie in [0, t)")
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t_prev)
    x0_hat = (x_t - np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(abar_t)
    return np.sqrt(abar_prev) * x0_hat + np.sqrt(1.0 - abar_prev) * eps_hat


def ddim_step(
    x_t: np.ndarray, eps_hat: np.ndarray, t: int, schedule: DiffusionSchedule
) -> np.ndarray:
    """Single-step DDIM update t -> t-1; the t=1 step returns x0_hat exactly."""
    return ddim_transition(x_t, eps_hat, t, t - 1, schedule)


def sample(
    model,
    cond: ConditionPair,
    gcfg: GuidanceConfig,
    schedule: DiffusionSchedule,
    seed: int,
    stride: int = 1,
    record_every: int = 1,
    config_digest: str = "",
) -> Trajectory:
    """Run one guided reverse trajectory from seeded pure noise.

    ``record_every``: 1 records every visited step, k every k-th (plus the
    last), 0 only the final state. The returned trajectory is a pure function
    of (model, cond, gcfg, schedule, seed).
    """
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(model.d)
    traj = Trajectory(seed=seed, config_digest=config_digest)
    neg_source = None
    if gcfg.strategy is Strategy.DOG:
        neg_source = NegativePromptSource(cond, gcfg.perturb, rng)

    timesteps = list(range(schedule.T, 0, -stride))
    traj.max_state_norm = float(np.linalg.norm(x))
    for i, t in enumerate(timesteps):
        eps_p = model.predict_eps(x, t, cond)
        g = 0.0
        if gcfg.strategy is Strategy.NONE:
            eps_hat = eps_p
        elif gcfg.strategy is Strategy.CFG:
            eps_u = model.predict_eps(x, t, NULL_CONDITION)
            eps_hat = cfg_combine(eps_p, eps_u, gcfg.gs)
            g = gcfg.gs
        elif gcfg.strategy is Strategy.APG:
            eps_u = model.predict_eps(x, t, NULL_CONDITION)
            if float(np.vdot(eps_p, eps_p)) == 0.0:
                traj.degenerate_step_count += 1
            eps_hat = apg_combine(eps_p, eps_u, gcfg.gs, gcfg.apg_parallel_weight)
            g = gcfg.gs
        else:  # DOG
            neg = neg_source.for_step(t)
            eps_n = model.predict_eps(x, t, neg)
            if float(np.vdot(eps_p, eps_p)) == 0.0:
                traj.degenerate_step_count += 1
            eps_hat = dog_combine(eps_p, eps_n, t, gcfg)
            g = gcfg.triangular.scale_at(t) if gcfg.schedule_on else gcfg.gs

        if record_every and i % record_every == 0:
            traj.steps.append(TrajectoryStep(t=t, x=x.copy(), eps_hat=eps_hat.copy(), g=g))

        t_prev = max(t - stride, 0)
        x = ddim_transition(x, eps_hat, t, t_prev, schedule)
        if not np.all(np.isfinite(x)):
            raise NumericalAbort(
                f"non-finite state at step t={t_prev} with strategy {gcfg.strategy.value}"
            )
        traj.max_state_norm = max(traj.max_state_norm, float(np.linalg.norm(x)))

    traj.steps.append(TrajectoryStep(t=0, x=x.copy(), eps_hat=np.zeros_like(x), g=0.0))
    traj.final = x
    return traj


def sample_batch(
    model,
    conds: list[ConditionPair],
    gcfg: GuidanceConfig,
    schedule: DiffusionSchedule,
    seeds: list[int],
    stride: int = 1,
    record_every: int = 1,
    config_digest: str = "",
) -> list[Trajectory]:
    """Independent trajectories; element i is bit-identical to a lone sample() call."""
    if len(conds) != len(seeds):
        raise ConfigurationError(
            f"conds and seeds must have equal length, got {len(conds)} vs {len(seeds)}"
        )
    return [
        sample(model, c, gcfg, schedule, s, stride=stride, record_every=record_every,
               config_digest=config_digest)
        for c, s in zip(conds, seeds)
    ]
