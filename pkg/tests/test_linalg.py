import json

import numpy as np
import pytest

from conftest import cofactor_det, make_proper, random_orthogonal
from dirtymimo.errors import ParseError, RankDeficient
from dirtymimo.linalg import (
    DEFAULT_TOL,
    ProperChannel,
    as_matrix,
    dumps_matrix,
    loads_matrix,
    matrix_from_json,
    matrix_to_json,
    normalize_to_proper,
    orthonormality_residual,
    qr_lower,
    random_proper,
    svd,
    validate_proper,
)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(a)


# qr_lower


def test_qr_identity():
    q, t = qr_lower(np.eye(3))
    np.testing.assert_allclose(q, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(t, np.eye(3), atol=1e-15)


def test_qr_permutation():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    q, t = qr_lower(a)
    assert abs(abs(np.prod(np.diag(t))) - 1) < 1e-12
    assert orthonormality_residual(q) < 1e-12
    assert rel(a, t @ q.T) < 1e-12


def test_qr_proper_wide_diag_product(rng):
    for _ in range(20):
        h = make_proper(rng, 2, 3)
        _, t = qr_lower(h)
        assert abs(t[0, 0] * t[1, 1] - 1) < 1e-9
        assert t[0, 1] == 0 and t[0, 2] == 0 and t[1, 2] == 0


def test_qr_random_shapes(rng):
    for _ in range(1000):
        r = int(rng.integers(1, 9))
        c = int(rng.integers(r, 13))
        a = rng.standard_normal((r, c))
        q, t = qr_lower(a)
        assert np.max(np.abs(q.T @ q - np.eye(c))) <= 1e-9
        assert rel(a, t @ q.T) <= 1e-8
        assert np.all(np.diag(t) >= 0)
        assert np.max(np.abs(np.triu(t, 1))) == 0


def test_qr_rank_deficient():
    with pytest.raises(RankDeficient):
        qr_lower(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))
    with pytest.raises(RankDeficient):
        qr_lower(np.ones((3, 2)))


# svd


def test_svd_diagonal():
    _, s, _ = svd(np.diag([4.0, 0.25]))
    np.testing.assert_allclose(s, [4.0, 0.25])


def test_svd_padded():
    _, s, _ = svd(np.array([[2.0, 0, 0], [0, 0.5, 0]]))
    np.testing.assert_allclose(s, [2.0, 0.5])


def test_svd_det_cofactor(rng):
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        _, s, _ = svd(a)
        assert abs(np.prod(s) - abs(cofactor_det(a))) <= 1e-8 * max(1.0, np.prod(s))


def test_svd_random_shapes(rng):
    for _ in range(1000):
        r, c = int(rng.integers(1, 9)), int(rng.integers(1, 13))
        a = rng.standard_normal((r, c))
        u, s, v = svd(a)
        assert orthonormality_residual(u) <= 1e-9 and orthonormality_residual(v) <= 1e-9
        assert rel(a, u @ np.diag(s) @ v.T) <= 1e-8
        assert np.all(np.diff(s) <= 0)


def test_svd_orthogonal_invariance(rng):
    for _ in range(100):
        n, m = 4, 6
        a = rng.standard_normal((n, m))
        b = random_orthogonal(rng, n) @ a @ random_orthogonal(rng, m)
        np.testing.assert_allclose(svd(a)[1], svd(b)[1], atol=1e-9)


# proper matrices


def test_validate_example_channel():
    r = validate_proper(np.diag([0.25, 4.0]))
    assert r.accepted and r.failures == ()
    assert abs(r.det_gram - 1) < 1e-15
    assert isinstance(r.channel, ProperChannel)


def test_validate_rejects_scaled():
    r = validate_proper(np.diag([2.0, 2.0]))
    assert not r.accepted
    assert r.det_gram == pytest.approx(16.0)
    assert len(r.failures) == 1 and "det" in r.failures[0]


def test_validate_rejects_tall():
    r = validate_proper(np.array([[1.0, 0], [0, 1.0], [0, 0]]))
    assert not r.accepted
    assert any("more rows" in f for f in r.failures)


def test_validate_lists_all_failures():
    r = validate_proper(np.zeros((3, 2)) + 1.0)
    assert len(r.failures) == 3


@pytest.mark.parametrize(
    "h, p, h_out, p_out",
    [
        (np.diag([2.0, 2.0]), 1.0, np.eye(2), 4.0),
        # a = 16, scale 2, power 4 * 16**(1/2) = 16
        (np.diag([8.0, 0.5]), 4.0, np.diag([4.0, 0.25]), 16.0),
    ],
)
def test_normalize_examples(h, p, h_out, p_out):
    c = normalize_to_proper(h, p)
    np.testing.assert_allclose(c.h, h_out, rtol=1e-14)
    assert c.power == pytest.approx(p_out, rel=1e-14)


def test_normalize_already_proper():
    h = np.diag([0.25, 4.0])
    c = normalize_to_proper(h, 3.0)
    np.testing.assert_array_equal(c.h, h)
    assert c.power == 3.0


def test_normalize_round_trip(rng):
    for _ in range(200):
        r = int(rng.integers(1, 6))
        c = int(rng.integers(r, 9))
        h = rng.standard_normal((r, c)) * rng.uniform(0.1, 10)
        p = rng.uniform(0.1, 100)
        ch = normalize_to_proper(h, p)
        assert validate_proper(ch.h, DEFAULT_TOL.proper).accepted
        # received SNR scale P * det(HH^T)^(1/n_r) is preserved
        a = cofactor_det(h @ h.T)
        assert ch.power == pytest.approx(p * a ** (1 / r), rel=1e-9)


def test_normalize_rank_deficient():
    with pytest.raises(RankDeficient):
        normalize_to_proper(np.array([[1.0, 1.0], [1.0, 1.0]]), 1.0)


def test_random_proper(rng):
    h = random_proper(rng, 3, 5)
    assert abs(cofactor_det(h @ h.T) - 1) < 1e-10


def test_proper_channel_immutable():
    c = ProperChannel(np.eye(2), 2.0)
    with pytest.raises(ValueError):
        c.h[0, 0] = 5.0
    with pytest.raises(ValueError):
        ProperChannel(np.eye(2), 0.0)


def test_as_matrix_rejects_nan():
    with pytest.raises(ValueError):
        as_matrix([[1.0, float("nan")]])


# JSON


def test_json_bit_exact(rng):
    a = rng.standard_normal((4, 7)) * 10.0 ** rng.integers(-300, 300, size=(4, 7))
    b = loads_matrix(dumps_matrix(a))
    assert np.array_equal(a, b)
    assert matrix_to_json(a)["rows"] == 4 and matrix_to_json(a)["cols"] == 7


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        json.dumps({"rows": 2, "cols": 2, "data": [1, 2, 3]}),
        json.dumps({"rows": 1, "cols": 1}),
        json.dumps({"rows": 1, "cols": 1, "data": ["x"]}),
        json.dumps({"rows": 0, "cols": 0, "data": []}),
    ],
)
def test_json_malformed(text):
    with pytest.raises(ParseError):
        loads_matrix(text)


def test_json_non_finite():
    with pytest.raises(ParseError):
        matrix_from_json({"rows": 1, "cols": 1, "data": [float("inf")]})
