"""Noise-prediction models sharing the interface eps(x_t, t, cond).

Two implementations:

* :class:`AnalyticDenoiser` — exact posterior-mean denoiser for a
  :class:`~dualguide.conditions.ConditionalGMM`. Conditions are resolved to a
  mixture slice by nearest-neighbor lookup against the embedding tables, so
  arbitrary (e.g. perturbed) condition vectors still yield a well-defined
  prediction; the null condition marginalizes over all slices.
* :class:`MLPDenoiser` — a small numpy MLP trained on the epsilon-MSE
  objective with condition dropout, giving CFG/APG a genuine unconditional
  branch. Checkpoints are flat binary files (see ``save``/``load``).
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .conditions import (
    NULL_CONDITION,
    ConditionPair,
    ConditionalGMM,
    GMMSlice,
    NullCondition,
    embedding_tables,
)
from .errors import ConfigurationError
from .schedule import DiffusionSchedule

CHECKPOINT_FORMAT_VERSION = 1


def analytic_posterior_mean(
    sl: GMMSlice, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
) -> np.ndarray:
    """Closed-form E[x_0 | x_t] for a Gaussian mixture under the forward process.

    Responsibilities are normalized with log-sum-exp; if every responsibility
    underflows to -inf the nearest component (in noised-mean distance) is
    assigned deterministically.
    """
    abar = schedule.alpha_bar(t)
    sq = np.sqrt(abar)
    var = abar * sl.sigmas**2 + (1.0 - abar)  # (K,)
    diff = x_t[None, :] - sq * sl.means  # (K, d)
    sqdist = np.einsum("kd,kd->k", diff, diff)
    logr = np.log(sl.weights) - 0.5 * sqdist / var - 0.5 * x_t.size * np.log(var)
    if not np.any(np.isfinite(logr)):
        k = int(np.argmin(sqdist))
        resp = np.zeros(len(sl.weights))
        resp[k] = 1.0
    else:
        resp = np.exp(logr - logsumexp(logr))
    shrink = sq * sl.sigmas**2 / var  # (K,)
    comp_means = sl.means + shrink[:, None] * diff
    return resp @ comp_means


def posterior_responsibilities(
    sl: GMMSlice, x_t: np.ndarray, t: int, schedule: DiffusionSchedule
) -> np.ndarray:
    """Component responsibilities at (x_t, t); always sums to 1."""
    abar = schedule.alpha_bar(t)
    var = abar * sl.sigmas**2 + (1.0 - abar)
    diff = x_t[None, :] - np.sqrt(abar) * sl.means
    sqdist = np.einsum("kd,kd->k", diff, diff)
    logr = np.log(sl.weights) - 0.5 * sqdist / var - 0.5 * x_t.size * np.log(var)
    if not np.any(np.isfinite(logr)):
        resp = np.zeros(len(sl.weights))
        resp[int(np.argmin(sqdist))] = 1.0
        return resp
    return np.exp(logr - logsumexp(logr))


def _check_prediction(eps: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(eps)):
        raise FloatingPointError("denoiser produced non-finite noise prediction")
    return eps


class AnalyticDenoiser:
    """Exact epsilon predictor for a conditional Gaussian-mixture target."""

    def __init__(
        self,
        gmm: ConditionalGMM,
        schedule: DiffusionSchedule,
        d_c: int = 8,
        d_s: int = 8,
        embed_seed: int = 0,
    ):
        self.gmm = gmm
        self.schedule = schedule
        self.d = gmm.d
        self.content_table, self.style_table = embedding_tables(
            gmm.content_vocab, gmm.style_vocab, d_c, d_s, embed_seed
        )
        self._marginal = self._build_marginal()

    @property
    def supports_null(self) -> bool:
        return True

    def _build_marginal(self) -> GMMSlice:
        n = len(self.gmm.slices)
        weights, means, sigmas = [], [], []
        for key in sorted(self.gmm.slices):
            sl = self.gmm.slices[key]
            weights.append(sl.weights / n)
            means.append(sl.means)
            sigmas.append(sl.sigmas)
        return GMMSlice(
            weights=np.concatenate(weights),
            means=np.concatenate(means),
            sigmas=np.concatenate(sigmas),
        )

    def resolve_slice(self, cond: ConditionPair | NullCondition) -> GMMSlice:
        """Mixture slice for a condition; nearest-neighbor in embedding space.

        Ties break toward the lowest id (argmax on exact equality).
        """
        if isinstance(cond, NullCondition):
            return self._marginal
        c = int(np.argmax(self.content_table @ cond.r_t))
        s = int(np.argmax(self.style_table @ cond.r_s))
        return self.gmm.slice(c, s)

    def predict_eps(
        self, x_t: np.ndarray, t: int, cond: ConditionPair | NullCondition
    ) -> np.ndarray:
        if x_t.shape != (self.d,):
            raise ValueError(f"x_t has shape {x_t.shape}, expected ({self.d},)")
        if not 1 <= t <= self.schedule.T:
            raise ValueError(f"t={t} outside [1, {self.schedule.T}]")
        sl = self.resolve_slice(cond)
        abar = self.schedule.alpha_bar(t)
        mean = analytic_posterior_mean(sl, x_t, t, self.schedule)
        eps = (x_t - np.sqrt(abar) * mean) / np.sqrt(1.0 - abar)
        return _check_prediction(eps)


def epsilon_disagreement(
    model_a,
    model_b,
    gmm: ConditionalGMM,
    schedule: DiffusionSchedule,
    conds: list[ConditionPair],
    n_points: int = 256,
    seed: int = 0,
) -> float:
    """Mean squared epsilon difference between two denoisers.

    Evaluated on forward-noised draws from the named condition slices, i.e.
    on (x_t, t) pairs the models actually see during sampling, not at
    arbitrary off-distribution states.
    """
    if not conds:
        raise ValueError("conds must be nonempty")
    rng = np.random.default_rng(seed)
    total = 0.0
    count = 0
    for cond in conds:
        sl = gmm.slice(cond.content_id, cond.style_id)
        idx = rng.choice(len(sl.weights), size=n_points, p=sl.weights)
        x0 = sl.means[idx] + sl.sigmas[idx, None] * rng.standard_normal((n_points, gmm.d))
        ts = rng.integers(1, schedule.T + 1, size=n_points)
        for x, t in zip(x0, ts):
            t = int(t)
            abar = schedule.alpha_bar(t)
            x_t = np.sqrt(abar) * x + np.sqrt(1.0 - abar) * rng.standard_normal(gmm.d)
            diff = model_a.predict_eps(x_t, t, cond) - model_b.predict_eps(x_t, t, cond)
            total += float(np.mean(diff**2))
            count += 1
    return total / count


def _time_features(t: int, T: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of t/T, `dim` values (dim must be even)."""
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(T), half))
    angles = freqs * (t / T)
    return np.concatenate([np.sin(angles), np.cos(angles)])


@dataclass
class _MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    null_rt: np.ndarray
    null_rs: np.ndarray

    def flat(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, self.null_rt, self.null_rs]


class MLPDenoiser:
    """Tanh MLP over [x_t, time features, r_t, r_s]; predicts epsilon."""

    TIME_DIM = 16

    def __init__(self, schedule: DiffusionSchedule, d: int, d_c: int, d_s: int, params: _MLPParams):
        self.schedule = schedule
        self.d = d
        self.d_c = d_c
        self.d_s = d_s
        self.params = params

    @property
    def supports_null(self) -> bool:
        return True

    def _features(self, x_t: np.ndarray, t: np.ndarray, rt: np.ndarray, rs: np.ndarray):
        tf = np.stack([_time_features(int(ti), self.schedule.T, self.TIME_DIM) for ti in t])
        return np.concatenate([x_t, tf, rt, rs], axis=1)

    def _forward(self, feats: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        h = feats
        acts = [h]
        n = len(self.params.weights)
        for i, (W, b) in enumerate(zip(self.params.weights, self.params.biases)):
            h = h @ W + b
            if i < n - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def predict_eps(
        self, x_t: np.ndarray, t: int, cond: ConditionPair | NullCondition
    ) -> np.ndarray:
        if x_t.shape != (self.d,):
            raise ValueError(f"x_t has shape {x_t.shape}, expected ({self.d},)")
        if not 1 <= t <= self.schedule.T:
            raise ValueError(f"t={t} outside [1, {self.schedule.T}]")
        if isinstance(cond, NullCondition):
            rt, rs = self.params.null_rt, self.params.null_rs
        else:
            if cond.r_t.shape != (self.d_c,) or cond.r_s.shape != (self.d_s,):
                raise ValueError("condition vector dimensions do not match the model")
            rt, rs = cond.r_t, cond.r_s
        feats = self._features(x_t[None, :], np.array([t]), rt[None, :], rs[None, :])
        out, _ = self._forward(feats)
        return _check_prediction(out[0])

    # Checkpoint layout: magic line, one JSON header line (shapes in order),
    # then the raw float64 little-endian array bytes back to back. Chosen over
    # npz because zip archives embed timestamps, breaking byte-identical saves.
    _MAGIC = b"DUALGUIDE-CKPT v1\n"

    def save(self, path) -> None:
        arrays = self.params.flat()
        meta = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "T": self.schedule.T,
            "beta_start": float(self.schedule.betas[0]),
            "beta_end": float(self.schedule.betas[-1]),
            "d": self.d,
            "d_c": self.d_c,
            "d_s": self.d_s,
            "n_layers": len(self.params.weights),
            "shapes": [list(a.shape) for a in arrays],
        }
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
            for a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MLPDenoiser":
        from .schedule import make_linear_schedule

        with open(path, "rb") as fh:
            if fh.readline() != cls._MAGIC:
                raise ConfigurationError(f"not a denoiser checkpoint: {path}")
            meta = json.loads(fh.readline().decode())
            if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
                raise ConfigurationError(
                    f"unsupported checkpoint format version {meta['format_version']}"
                )
            arrays = []
            for shape in meta["shapes"]:
                count = int(np.prod(shape)) if shape else 1
                buf = fh.read(count * 8)
                arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
        n = meta["n_layers"]
        params = _MLPParams(
            weights=arrays[:n],
            biases=arrays[n : 2 * n],
            null_rt=arrays[2 * n],
            null_rs=arrays[2 * n + 1],
        )
        schedule = make_linear_schedule(meta["T"], meta["beta_start"], meta["beta_end"])
        return cls(schedule, meta["d"], meta["d_c"], meta["d_s"], params)


def _init_params(sizes: list[int], d_c: int, d_s: int, rng: np.random.Generator) -> _MLPParams:
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return _MLPParams(
        weights=weights, biases=biases, null_rt=np.zeros(d_c), null_rs=np.zeros(d_s)
    )


def train_toy_denoiser(
    dataset: list[tuple[np.ndarray, ConditionPair]],
    schedule: DiffusionSchedule,
    epochs: int = 20,
    cond_dropout_prob: float = 0.2,
    seed: int = 0,
    hidden: tuple[int, ...] = (128, 128, 128),
    lr: float = 1e-3,
    batch_size: int = 128,
) -> tuple[MLPDenoiser, list[float]]:
    """Train the MLP denoiser on epsilon-MSE with condition dropout.

    Dropped rows are fed the trainable null embeddings, so the unconditional
    branch is learned jointly. Returns (model, per-epoch mean loss).
    Deterministic given the seed.
    """
    if not dataset:
        raise ConfigurationError("training dataset is empty")
    if not 0.0 <= cond_dropout_prob < 1.0:
        raise ConfigurationError(f"cond_dropout_prob must be in [0, 1), got {cond_dropout_prob}")
    x0 = np.stack([x for x, _ in dataset])
    rt = np.stack([c.r_t for _, c in dataset])
    rs = np.stack([c.r_s for _, c in dataset])
    n, d = x0.shape
    d_c, d_s = rt.shape[1], rs.shape[1]

    rng = np.random.default_rng(seed)
    sizes = [d + MLPDenoiser.TIME_DIM + d_c + d_s, *hidden, d]
    params = _init_params(sizes, d_c, d_s, rng)
    model = MLPDenoiser(schedule, d, d_c, d_s, params)

    # Adam state
    flat = params.flat()
    m = [np.zeros_like(p) for p in flat]
    v = [np.zeros_like(p) for p in flat]
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    step = 0

    losses: list[float] = []
    abars = np.concatenate([[1.0], schedule.alpha_bars])
    for _epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            b = len(idx)
            t = rng.integers(1, schedule.T + 1, size=b)
            noise = rng.standard_normal((b, d))
            abar = abars[t][:, None]
            x_t = np.sqrt(abar) * x0[idx] + np.sqrt(1.0 - abar) * noise

            drop = rng.random(b) < cond_dropout_prob
            brt = np.where(drop[:, None], params.null_rt[None, :], rt[idx])
            brs = np.where(drop[:, None], params.null_rs[None, :], rs[idx])
            feats = model._features(x_t, t, brt, brs)

            out, acts = model._forward(feats)
            resid = out - noise
            loss = float(np.mean(resid**2))
            epoch_loss += loss
            n_batches += 1

            # Backprop through the tanh MLP.
            grad_w = [np.zeros_like(W) for W in params.weights]
            grad_b = [np.zeros_like(bb) for bb in params.biases]
            delta = 2.0 * resid / resid.size
            for i in range(len(params.weights) - 1, -1, -1):
                grad_w[i] = acts[i].T @ delta
                grad_b[i] = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ params.weights[i].T) * (1.0 - acts[i] ** 2)
            grad_in = delta @ params.weights[0].T  # (b, input_dim)
            off = d + MLPDenoiser.TIME_DIM
            grad_null_rt = grad_in[drop, off : off + d_c].sum(axis=0)
            grad_null_rs = grad_in[drop, off + d_c :].sum(axis=0)

            grads = [*grad_w, *grad_b, grad_null_rt, grad_null_rs]
            step += 1
            for p, g, mi, vi in zip(flat, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g**2
                mhat = mi / (1 - beta1**step)
                vhat = vi / (1 - beta2**step)
                p -= lr * mhat / (np.sqrt(vhat) + eps_adam)
        losses.append(epoch_loss / n_batches)
    return model, losses
