"""Random streams, Householder QR and Haar rotations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from htboost.exceptions import DegenerateMatrixError, InvalidParameterError, RngDegeneracyError
from htboost.rng import RngStream, gaussian_matrix, householder_qr, sample_rotation


# --- streams -----------------------------------------------------------------

def test_stream_repeats_exactly():
    a = RngStream(7, 3).generator().random(50)
    b = RngStream(7, 3).generator().random(50)
    assert np.array_equal(a, b)


def test_distinct_streams_differ_and_look_independent():
    a = RngStream(7, 0).generator().standard_normal(20000)
    b = RngStream(7, 1).generator().standard_normal(20000)
    assert not np.array_equal(a[:10], b[:10])
    # correlation of independent N(0,1) samples is O(1/sqrt(n))
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(a.size)


def test_child_paths_are_deterministic_and_distinct():
    root = RngStream(11)
    assert root.child(1, 2) == root.child(1, 2)
    ids = {root.child(i).stream_id for i in range(100)} | {root.child(0, i).stream_id for i in range(100)}
    assert len(ids) == 200


@pytest.mark.parametrize("seed", [-1, 1 << 64])
def test_seed_out_of_range(seed):
    with pytest.raises(InvalidParameterError):
        RngStream(seed)


# --- gaussian matrices -------------------------------------------------------

def test_gaussian_scalar_mean():
    gen = RngStream(1).generator()
    draws = np.array([gaussian_matrix(1, gen)[0, 0] for _ in range(100000)])
    assert abs(draws.mean()) < 0.02


def test_gaussian_entry_variance():
    gen = RngStream(2).generator()
    entries = np.concatenate([gaussian_matrix(2, gen).ravel() for _ in range(10000)])
    assert abs(entries.var() - 1.0) < 0.05


def test_gaussian_matrix_is_deterministic():
    assert np.array_equal(gaussian_matrix(3, RngStream(5)), gaussian_matrix(3, RngStream(5)))


def test_gaussian_rejects_zero_dimension():
    with pytest.raises(InvalidParameterError):
        gaussian_matrix(0, RngStream(0))


# --- Householder QR ------------------------------------------------------------

def test_qr_identity():
    q, w = householder_qr(np.eye(4))
    assert np.max(np.abs(q - np.eye(4))) < 1e-15
    assert np.max(np.abs(w - np.eye(4))) < 1e-15


def test_qr_quarter_turn():
    m = np.array([[0.0, -1.0], [1.0, 0.0]])
    q, w = householder_qr(m)
    assert np.max(np.abs(q.T @ q - np.eye(2))) < 1e-12
    assert np.max(np.abs(q @ w - m)) < 1e-12


def _numpy_qr_positive(m):
    # reference factorisation: LAPACK QR with the diagonal of R made positive
    q, r = np.linalg.qr(m)
    s = np.sign(np.diag(r))
    return q * s, r * s[:, None]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_qr_matches_lapack_after_sign_fix(d, seed):
    m = RngStream(seed).generator().standard_normal((d, d))
    q, w = householder_qr(m)
    q_ref, w_ref = _numpy_qr_positive(m)
    assert np.max(np.abs(q @ w - m)) < 1e-10
    assert np.max(np.abs(q.T @ q - np.eye(d))) < 1e-10
    assert np.all(np.diag(w) > 0)
    assert np.array_equal(w, np.triu(w))
    assert np.max(np.abs(q - q_ref)) < 1e-8
    assert np.max(np.abs(w - w_ref)) < 1e-8


def test_qr_random_5x5_orthogonal():
    m = RngStream(3).generator().standard_normal((5, 5))
    q, _ = householder_qr(m)
    assert np.max(np.abs(q.T @ q - np.eye(5))) <= 1e-10


def test_qr_degenerate_column():
    m = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 1.0], [3.0, 6.0, 5.0]])
    with pytest.raises(DegenerateMatrixError):
        householder_qr(m)


# --- rotations -----------------------------------------------------------------

def test_rotation_one_dimensional_is_one():
    for s in range(20):
        assert np.array_equal(sample_rotation(1, RngStream(s)), np.ones((1, 1)))


def test_rotation_det_three():
    for s in range(50):
        assert abs(np.linalg.det(sample_rotation(3, RngStream(s))) - 1) < 1e-10


def test_rotation_angle_uniform_on_circle():
    gen = RngStream(99).generator()
    theta = np.array([np.arctan2(r[1, 0], r[0, 0]) for r in (sample_rotation(2, gen) for _ in range(10000))])
    theta = np.mod(theta, 2 * np.pi)
    assert stats.kstest(theta, stats.uniform(0, 2 * np.pi).cdf).pvalue > 0.01


class _ZeroGenerator:
    def standard_normal(self, size):
        return np.zeros(size)


def test_rotation_retry_cap(monkeypatch):
    import htboost.rng as rng_mod

    monkeypatch.setattr(rng_mod, "as_generator", lambda rng: _ZeroGenerator())
    with pytest.raises(RngDegeneracyError):
        rng_mod.sample_rotation(3, 0)
