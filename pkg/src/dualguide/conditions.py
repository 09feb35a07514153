"""Content/style condition pairs and the synthetic conditional target.

The target distribution is a per-(content, style) Gaussian mixture in the
plane: the content id picks an arrangement of mode means, the style id
applies a rotation plus isotropic scale to it. Content controls topology,
style controls geometry.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


class NullCondition:
    """Sentinel standing in for the absent condition of unconditional prediction."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NullCondition()"


NULL_CONDITION = NullCondition()


@dataclass(frozen=True)
class ConditionPair:
    """Dual prompt: content vector r_t and style vector r_s, with their ids.

    Ids are -1 for vectors that no longer correspond to a vocabulary entry
    (e.g. perturbed negatives).
    """

    r_t: np.ndarray
    r_s: np.ndarray
    content_id: int = -1
    style_id: int = -1


_CONTENT_TAG = 0
_STYLE_TAG = 1


def _unit_embedding(tag: int, idx: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, tag, idx]))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def embed_condition(
    content_id: int,
    style_id: int,
    d_c: int = 8,
    d_s: int = 8,
    seed: int = 0,
    content_vocab: int | None = None,
    style_vocab: int | None = None,
) -> ConditionPair:
    """Deterministic unit-norm embedding of (content_id, style_id).

    Content and style tables are independent, so perturbing one id never
    changes the other vector.
    """
    if content_id < 0 or (content_vocab is not None and content_id >= content_vocab):
        raise ValueError(f"content_id {content_id} outside vocabulary")
    if style_id < 0 or (style_vocab is not None and style_id >= style_vocab):
        raise ValueError(f"style_id {style_id} outside vocabulary")
    return ConditionPair(
        r_t=_unit_embedding(_CONTENT_TAG, content_id, d_c, seed),
        r_s=_unit_embedding(_STYLE_TAG, style_id, d_s, seed),
        content_id=content_id,
        style_id=style_id,
    )


def embedding_tables(
    content_vocab: int, style_vocab: int, d_c: int, d_s: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Full (vocab, dim) embedding matrices for content and style."""
    content = np.stack([_unit_embedding(_CONTENT_TAG, i, d_c, seed) for i in range(content_vocab)])
    style = np.stack([_unit_embedding(_STYLE_TAG, i, d_s, seed) for i in range(style_vocab)])
    return content, style


@dataclass(frozen=True)
class GMMSlice:
    """One conditional mixture: parallel arrays of weights, means, sigmas."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    sigmas: np.ndarray  # (K,)

    def __post_init__(self):
        if np.any(self.weights <= 0.0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError("component weights must be positive and sum to 1")
        if np.any(self.sigmas < 0.0):
            raise ConfigurationError("component sigmas must be >= 0")


@dataclass(frozen=True)
class ConditionalGMM:
    """Family of Gaussian mixtures indexed by (content_id, style_id)."""

    d: int
    content_vocab: int
    style_vocab: int
    slices: dict[tuple[int, int], GMMSlice] = field(repr=False)

    def slice(self, content_id: int, style_id: int) -> GMMSlice:
        key = (content_id, style_id)
        if key not in self.slices:
            raise ValueError(f"unknown condition pair {key}")
        return self.slices[key]

    def max_mean_norm(self) -> float:
        return max(float(np.linalg.norm(s.means, axis=1).max()) for s in self.slices.values())

    def max_sigma(self) -> float:
        return max(float(s.sigmas.max()) for s in self.slices.values())

    def to_dict(self) -> dict:
        """Nested record for the run manifest."""
        return {
            "d": self.d,
            "content_vocab": self.content_vocab,
            "style_vocab": self.style_vocab,
            "slices": {
                f"{c},{s}": [
                    {"weight": float(w), "mean": [float(x) for x in m], "sigma": float(sg)}
                    for w, m, sg in zip(sl.weights, sl.means, sl.sigmas)
                ]
                for (c, s), sl in sorted(self.slices.items())
            },
        }


def style_transform(style_id: int, style_vocab: int) -> tuple[np.ndarray, float]:
    """Rotation matrix and isotropic scale applied by a style id.

    Style 0 is the identity; styles of equal parity differ only by rotation.
    """
    theta = 2.0 * np.pi * style_id / style_vocab
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    scale = 1.25 if style_id % 2 else 1.0
    return rot, scale


def build_toy_gmm(
    content_vocab: int,
    style_vocab: int,
    modes_per_content: int,
    seed: int,
    sigma: float = 0.05,
    spread: float = 2.0,
) -> ConditionalGMM:
    """Planar mixture family: seeded base arrangement per content, styled copies.

    Base means are drawn uniformly in [-spread, spread]^2. Mode weights are
    uniform 1/K; every component shares the given sigma.
    """
    if min(content_vocab, style_vocab, modes_per_content) < 1:
        raise ConfigurationError("vocabulary sizes and modes_per_content must be >= 1")
    rng = np.random.default_rng(seed)
    slices: dict[tuple[int, int], GMMSlice] = {}
    weights = np.full(modes_per_content, 1.0 / modes_per_content)
    sigmas = np.full(modes_per_content, float(sigma))
    for c in range(content_vocab):
        base = rng.uniform(-spread, spread, size=(modes_per_content, 2))
        for s in range(style_vocab):
            rot, scale = style_transform(s, style_vocab)
            means = scale * base @ rot.T
            slices[(c, s)] = GMMSlice(weights=weights, means=means, sigmas=sigmas)
    return ConditionalGMM(d=2, content_vocab=content_vocab, style_vocab=style_vocab, slices=slices)


def sample_data(
    gmm: ConditionalGMM, content_id: int, style_id: int, n: int, seed: int
) -> np.ndarray:
    """Ancestral samples (n, d) from one conditional slice."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    sl = gmm.slice(content_id, style_id)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(sl.weights), size=n, p=sl.weights)
    return sl.means[idx] + sl.sigmas[idx, None] * rng.standard_normal((n, gmm.d))
