"""Condition embeddings and the synthetic conditional mixture family."""

import numpy as np
import pytest

from dualguide.conditions import (
    GMMSlice,
    build_toy_gmm,
    embed_condition,
    embedding_tables,
    sample_data,
    style_transform,
)
from dualguide.errors import ConfigurationError


def test_embedding_deterministic():
    a = embed_condition(3, 1, seed=5)
    b = embed_condition(3, 1, seed=5)
    assert np.array_equal(a.r_t, b.r_t)
    assert np.array_equal(a.r_s, b.r_s)


def test_embedding_factorized():
    a = embed_condition(0, 0)
    b = embed_condition(0, 1)
    assert np.array_equal(a.r_t, b.r_t)
    assert not np.array_equal(a.r_s, b.r_s)


def test_embedding_unit_norm():
    for i in range(100):
        pair = embed_condition(i, i, d_c=8, d_s=8, seed=2)
        assert abs(np.linalg.norm(pair.r_t) - 1.0) < 1e-12
        assert abs(np.linalg.norm(pair.r_s) - 1.0) < 1e-12


def test_embedding_vocab_bounds():
    with pytest.raises(ValueError):
        embed_condition(4, 0, content_vocab=4)
    with pytest.raises(ValueError):
        embed_condition(0, -1)


def test_embedding_tables_match_single_lookups():
    content, style = embedding_tables(3, 2, 8, 8, seed=7)
    for c in range(3):
        for s in range(2):
            pair = embed_condition(c, s, 8, 8, seed=7)
            assert np.array_equal(content[c], pair.r_t)
            assert np.array_equal(style[s], pair.r_s)


def test_style_zero_is_identity():
    gmm = build_toy_gmm(2, 3, 4, seed=0)
    rot, scale = style_transform(0, 3)
    assert np.allclose(rot, np.eye(2))
    assert scale == 1.0
    # Style 0 means equal the base arrangement transformed by identity.
    base = gmm.slice(0, 0).means
    assert np.allclose(base, scale * base @ rot.T)


def test_equal_parity_styles_related_by_rotation():
    gmm = build_toy_gmm(1, 4, 3, seed=9)
    a = gmm.slice(0, 0).means  # scale 1.0
    b = gmm.slice(0, 2).means  # scale 1.0, rotation by pi
    rot, scale = style_transform(2, 4)
    assert scale == 1.0
    assert np.allclose(b, a @ rot.T, atol=1e-12)


def test_weights_uniform():
    gmm = build_toy_gmm(2, 2, 5, seed=1)
    for sl in gmm.slices.values():
        assert np.allclose(sl.weights, 1.0 / 5)


def test_slice_invariants():
    with pytest.raises(ConfigurationError):
        GMMSlice(weights=np.array([0.5, 0.6]), means=np.zeros((2, 2)),
                 sigmas=np.ones(2))
    with pytest.raises(ConfigurationError):
        GMMSlice(weights=np.array([0.5, 0.5]), means=np.zeros((2, 2)),
                 sigmas=np.array([0.1, -0.1]))


def test_build_validation():
    with pytest.raises(ConfigurationError):
        build_toy_gmm(0, 1, 1, seed=0)


def test_sample_point_mass():
    gmm = build_toy_gmm(1, 1, 1, seed=4, sigma=0.0)
    xs = sample_data(gmm, 0, 0, 50, seed=0)
    assert np.allclose(xs, gmm.slice(0, 0).means[0])


def test_sample_component_frequencies_binomial():
    gmm = build_toy_gmm(1, 1, 4, seed=2, sigma=0.01)
    sl = gmm.slice(0, 0)
    n = 10000
    xs = sample_data(gmm, 0, 0, n, seed=3)
    # Assign each sample to the nearest mode; sigma is tiny so this is exact.
    d2 = ((xs[:, None, :] - sl.means[None, :, :]) ** 2).sum(axis=2)
    counts = np.bincount(np.argmin(d2, axis=1), minlength=4)
    for k in range(4):
        p = sl.weights[k]
        bound = 3.0 * np.sqrt(n * p * (1 - p))
        assert abs(counts[k] - n * p) <= bound


def test_sample_deterministic():
    gmm = build_toy_gmm(2, 2, 3, seed=0)
    assert np.array_equal(sample_data(gmm, 1, 1, 20, seed=8),
                          sample_data(gmm, 1, 1, 20, seed=8))


def test_sample_errors():
    gmm = build_toy_gmm(1, 1, 1, seed=0)
    with pytest.raises(ValueError):
        sample_data(gmm, 0, 0, 0, seed=0)
    with pytest.raises(ValueError):
        gmm.slice(5, 0)


def test_to_dict_roundtrippable():
    gmm = build_toy_gmm(2, 2, 2, seed=6)
    rec = gmm.to_dict()
    assert rec["content_vocab"] == 2
    assert len(rec["slices"]) == 4
    got = np.array([m["mean"] for m in rec["slices"]["1,1"]])
    assert np.allclose(got, gmm.slice(1, 1).means)
