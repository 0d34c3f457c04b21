import numpy as np
import pytest
import scipy.sparse as sp

from eddyinv.linalg import Factorization, SingularSystemError, dump_matrix, nested_dissection


def test_complex_symmetric_two_by_two():
    A = sp.csc_matrix(np.array([[1, 1j], [1j, 1]]))
    f = Factorization(A)
    x = f.solve(np.array([1.0, 0.0]))
    # inverse of [[1, i], [i, 1]] is [[1, -i], [-i, 1]] / 2
    assert np.allclose(x, [0.5, -0.5j])


def test_identity_and_zero_rhs():
    f = Factorization(sp.identity(5, format="csc"))
    b = np.arange(5.0)
    assert np.array_equal(f.solve(b), b)
    assert np.array_equal(f.solve(np.zeros(5)), np.zeros(5))


def random_saddle(n, m, rng):
    K = sp.random(n, n, density=0.05, random_state=1)
    A = (K @ K.T + sp.identity(n)) - 0.3j * sp.identity(n)
    B = sp.random(m, n, density=0.2, random_state=2) + sp.eye(m, n)
    return sp.bmat([[A, B.T], [B, None]], format="csc")


def test_round_trip_with_ordering(rng):
    S = random_saddle(80, 10, rng)
    order = nested_dissection(S)
    x = rng.standard_normal(90) + 1j * rng.standard_normal(90)
    b = S @ x
    for perm in (None, order):
        f = Factorization(S, perm)
        assert np.linalg.norm(f.solve(b) - x) <= 1e-9 * np.linalg.norm(x)
    if order is not None:
        assert np.array_equal(np.sort(order), np.arange(90))


def test_deterministic(rng):
    S = random_saddle(60, 6, rng)
    b = rng.standard_normal(66)
    x1 = Factorization(S, nested_dissection(S)).solve(b)
    x2 = Factorization(S, nested_dissection(S)).solve(b)
    assert np.array_equal(x1, x2)


def test_singular_matrix_reported():
    A = sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularSystemError):
        Factorization(A).solve(np.array([1.0, 0.0]))


def test_shape_checks():
    with pytest.raises(ValueError):
        Factorization(sp.csc_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        Factorization(sp.identity(3, format="csc")).solve(np.ones(2))


def test_dump_matrix(tmp_path):
    import scipy.io
    A = sp.csc_matrix(np.array([[1, 2j], [2j, 3]]))
    dump_matrix(tmp_path / "a.mtx", A)
    B = scipy.io.mmread(str(tmp_path / "a.mtx"))
    assert np.allclose(B.toarray(), A.toarray())
