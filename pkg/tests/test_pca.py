import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foldnet.pca import StreamingCovariance, dimensionality, participation_ratio, pca, streaming_pca


def _split(X, cuts):
    cuts = sorted(set(int(c) for c in cuts if 0 < c < len(X)))
    return np.split(X, cuts)


@settings(max_examples=100)
@given(st.integers(2, 300), st.integers(1, 8), st.lists(st.integers(0, 300), max_size=10), st.integers(0, 10_000))
def test_partition_invariance(n, d, cuts, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 10, d) + rng.normal(0, 100, d)
    whole = streaming_pca([X])
    parts = streaming_pca(_split(X, cuts))
    assert np.max(np.abs(whole.covariance - parts.covariance)) <= 1e-9
    assert np.max(np.abs(whole.mean - parts.mean)) <= 1e-9
    np.testing.assert_allclose(whole.covariance, np.cov(X.T).reshape(d, d), atol=1e-9)


def test_eigen_ordering_and_orthonormality():
    X = np.random.default_rng(0).normal(size=(500, 5)) @ np.diag([5, 4, 3, 2, 1])
    s = pca(X, batch_size=64)
    assert np.all(np.diff(s.eigenvalues) <= 0)
    np.testing.assert_allclose(s.components @ s.components.T, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(s.components @ s.covariance @ s.components.T, np.diag(s.eigenvalues), atol=1e-9)


def test_dimensionality_of_embedded_subspace():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(2000, 3))
    X = Z @ rng.normal(size=(3, 12))
    assert dimensionality(pca(X)) == 3
    assert dimensionality(pca(X + 1e-2 * rng.normal(size=X.shape)), 1e-6) == 12


def test_zero_variance_is_dimension_zero():
    s = pca(np.ones((10, 4)))
    assert dimensionality(s) == 0
    assert participation_ratio(s) == 0.0


def test_participation_ratio():
    X = np.random.default_rng(2).normal(size=(20000, 4))
    assert participation_ratio(pca(X)) == pytest.approx(4, rel=0.05)


def test_errors():
    acc = StreamingCovariance(3)
    with pytest.raises(ValueError):
        acc.update(np.ones((2, 4)))
    with pytest.raises(ValueError):
        StreamingCovariance(2).update(np.ones((1, 2))).covariance()
    with pytest.raises(ValueError):
        streaming_pca([])
