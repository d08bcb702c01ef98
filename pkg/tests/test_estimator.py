import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from agreekit import AgreementProjector
from agreekit.graph import generate_graph


def test_orthogonal_projection_of_rows():
    rng = np.random.default_rng(0)
    H = np.column_stack([np.ones(6), np.arange(6.0)])
    X = rng.standard_normal((4, 6))
    est = AgreementProjector(basis=H, graph=generate_graph("circulant", 6, alpha=4))
    out = est.fit(X).transform(X)
    P = H @ np.linalg.solve(H.T @ H, H.T)
    np.testing.assert_allclose(out, X @ P.T, atol=1e-6)
    assert est.certificate_.passed


def test_oblique_weighted_average():
    w = np.array([0.5, 0.3, 0.2])
    est = AgreementProjector(basis=np.ones(3), ray_basis=w, objective="spectral")
    out = est.fit_transform(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(out, [[1.7, 1.7, 1.7]], atol=1e-6)


def test_params_and_clone():
    est = AgreementProjector(basis=np.ones(3), seed=4)
    assert est.get_params()["seed"] == 4
    assert clone(est).seed == 4


def test_unfitted_and_shape_errors():
    est = AgreementProjector(basis=np.ones(3))
    with pytest.raises(NotFittedError):
        est.transform(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        est.fit(np.zeros((2, 4)))
    est.fit()
    with pytest.raises(ValueError):
        est.transform(np.zeros((1, 4)))
