"""Desk-scale evaluation: distribution fidelity, multi-seed diversity, blowups.

fidelity_w2 (sliced Wasserstein-2 to target samples) plays the readability
role, diversity the multi-seed variance role, and blowup_rate the visible
artifact role.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import NumericalAbort
from .guidance import GuidanceConfig
from .sampler import sample


@dataclass(frozen=True)
class MetricReport:
    strategy: str
    gs: float
    fidelity_w2: float
    diversity: float
    blowup_rate: float
    n_samples: int

    def __post_init__(self):
        vals = (self.fidelity_w2, self.diversity, self.blowup_rate)
        if not all(np.isfinite(v) and v >= 0.0 for v in vals):
            raise ValueError("metrics must be finite and nonnegative")
        if not 0.0 <= self.blowup_rate <= 1.0:
            raise ValueError("blowup_rate must lie in [0, 1]")


def _w2_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W2 between 1-D empirical measures via merged quantile functions."""
    a = np.sort(a)
    b = np.sort(b)
    n, m = len(a), len(b)
    # Breakpoints of both piecewise-constant quantile functions on (0, 1].
    edges = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], edges]))
    mids = edges - widths / 2.0
    va = a[np.minimum((mids * n).astype(int), n - 1)]
    vb = b[np.minimum((mids * m).astype(int), m - 1)]
    return float(np.sqrt(np.sum(widths * (va - vb) ** 2)))


def wasserstein2(
    a: np.ndarray, b: np.ndarray, n_projections: int = 128, projection_seed: int = 0
) -> float:
    """W2 between sample sets: exact in 1-D, sliced over seeded projections else."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("sample sets must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    d = a.shape[1]
    if d == 1:
        return _w2_1d(a[:, 0], b[:, 0])
    rng = np.random.default_rng(projection_seed)
    dirs = rng.standard_normal((n_projections, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    sq = [_w2_1d(a @ u, b @ u) ** 2 for u in dirs]
    return float(np.sqrt(np.mean(sq)))


def diversity(samples: np.ndarray) -> float:
    """Mean pairwise Euclidean distance; needs at least two samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise ValueError("diversity needs at least 2 samples")
    return float(pdist(samples).mean())


def default_blowup_bound(gmm) -> float:
    """10x the largest mode-mean norm plus 5 sigma; configurable upstream."""
    return 10.0 * gmm.max_mean_norm() + 5.0 * gmm.max_sigma()


def collect_finals(
    model, cond, gcfg: GuidanceConfig, schedule, seeds, blowup_bound: float, stride: int = 1
) -> tuple[np.ndarray, int, int]:
    """Run one trajectory per seed; aborted runs count as blowups.

    Returns (finals array, n_blowups, n_run). Finals exclude aborted runs.
    """
    finals = []
    blowups = 0
    for s in seeds:
        try:
            traj = sample(model, cond, gcfg, schedule, s, stride=stride, record_every=0)
        except NumericalAbort:
            blowups += 1
            continue
        if traj.max_state_norm > blowup_bound:
            blowups += 1
        finals.append(traj.final)
    return np.array(finals), blowups, len(seeds)


def stability_curve(
    model,
    cond,
    gcfg: GuidanceConfig,
    gs_list,
    schedule,
    seeds,
    target_samples: np.ndarray,
    blowup_bound: float,
    stride: int = 1,
    n_projections: int = 128,
    projection_seed: int = 0,
) -> list[MetricReport]:
    """One MetricReport per gs with every other setting held fixed.

    If every trajectory at a gs aborts, fidelity and diversity are reported
    as the largest finite surrogate (distance of the target to itself is not
    defined then); in practice the blowup_rate of 1.0 carries the signal.
    """
    from dataclasses import replace

    reports = []
    for gs in gs_list:
        tri = gcfg.triangular
        if tri is not None:
            tri = replace(tri, gs=float(gs))
        cur = replace(gcfg, gs=float(gs), triangular=tri)
        finals, blowups, n = collect_finals(
            model, cond, cur, schedule, seeds, blowup_bound, stride=stride
        )
        if len(finals) >= 2:
            fid = wasserstein2(finals, target_samples, n_projections, projection_seed)
            div = diversity(finals)
        elif len(finals) == 1:
            fid = wasserstein2(finals, target_samples, n_projections, projection_seed)
            div = 0.0
        else:
            fid = float(np.linalg.norm(target_samples, axis=1).max()) * 1e6
            div = 0.0
        reports.append(
            MetricReport(
                strategy=cur.strategy.value,
                gs=float(gs),
                fidelity_w2=fid,
                diversity=div,
                blowup_rate=blowups / n,
                n_samples=n,
            )
        )
    return reports
