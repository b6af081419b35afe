import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcnforecast import PoseSequence
from gcnforecast.dct import (
    decode,
    decode_coords,
    decode_sequence,
    encode,
    encode_coords,
    encode_sequence,
    make_basis,
    pad_future,
)


def loop_basis(n, l):
    """Entry-by-entry construction from the cosine formula with 1-based indices."""
    m = np.zeros((l, n))
    for li in range(1, l + 1):
        for t in range(1, n + 1):
            v = math.sqrt(2.0 / n) * math.cos(math.pi / (2 * n) * (2 * t - 1) * (li - 1))
            m[li - 1, t - 1] = v / math.sqrt(2.0) if li == 1 else v
    return m


@pytest.mark.parametrize("n,l", [(1, 1), (4, 4), (7, 3), (30, 30), (30, 20)])
def test_basis_matches_formula(n, l):
    np.testing.assert_allclose(make_basis(n, l).matrix, loop_basis(n, l), atol=1e-14)


def test_first_row_constant():
    np.testing.assert_allclose(make_basis(4, 4).matrix[0], [0.5, 0.5, 0.5, 0.5], atol=1e-15)


@given(st.integers(1, 64))
def test_orthonormal(n):
    b = make_basis(n).matrix
    assert np.abs(b @ b.T - np.eye(n)).max() < 1e-10


@pytest.mark.parametrize("n,l", [(0, 1), (4, 5), (4, 0)])
def test_basis_errors(n, l):
    with pytest.raises(ValueError):
        make_basis(n, l)


def test_constant_signal():
    b = make_basis(4, 4)
    np.testing.assert_allclose(encode(np.ones(4), b), [2, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(decode(np.array([2.0, 0, 0, 0]), b), np.ones(4), atol=1e-12)
    assert not np.any(encode(np.zeros(4), b))
    assert not np.any(decode(np.zeros(4), b))


def test_length_mismatch():
    b = make_basis(5, 3)
    with pytest.raises(ValueError):
        encode(np.zeros(4), b)
    with pytest.raises(ValueError):
        decode(np.zeros(5), b)


def test_pad_future():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    out = pad_future(np.stack([a, b]), 2)
    np.testing.assert_array_equal(out, np.stack([a, b, b, b]))
    x = np.arange(3.0)
    np.testing.assert_array_equal(pad_future(x, 0), x)
    long = pad_future(np.random.default_rng(0).normal(size=(16, 13, 3)), 14)
    assert long.shape == (30, 13, 3)
    assert np.all(long[16:] == long[15])
    with pytest.raises(ValueError):
        pad_future(np.zeros((0, 3)), 2)


@given(st.integers(1, 10), st.integers(0, 6), st.integers(0, 6))
def test_pad_future_idempotent(t, tau1, tau2):
    x = np.random.default_rng(t).normal(size=(t, 2))
    once = pad_future(x, tau1)
    np.testing.assert_array_equal(pad_future(once, tau2), pad_future(x, tau1 + tau2))
    np.testing.assert_array_equal(pad_future(pad_future(x, 0), 0), x)


@pytest.mark.parametrize("n", [4, 16, 30])
def test_roundtrip_and_parseval(n, rng):
    b = make_basis(n)
    for _ in range(20):
        x = rng.uniform(-10, 10, size=n)
        c = encode(x, b)
        assert np.abs(decode(c, b) - x).max() < 1e-9
        assert abs(np.linalg.norm(c) - np.linalg.norm(x)) < 1e-9


def test_truncation_error_energy(rng):
    full, part = make_basis(30), make_basis(30, 20)
    x = rng.normal(size=30)
    c = encode(x, full)
    approx = decode(encode(x, part), part)
    err = np.sum((approx - x) ** 2)
    dropped = sum(c[i] ** 2 for i in range(20, 30))
    assert abs(err - dropped) < 1e-9
    # best L-term approximation: any other combination of the kept rows is worse
    other = decode(encode(x, part) + rng.normal(size=20) * 0.1, part)
    assert np.sum((other - x) ** 2) > err


def test_sequence_layout_is_channel_major(rng):
    b = make_basis(30)
    coords = rng.normal(size=(30, 13, 3))
    feats = encode_sequence(PoseSequence.from_coords(coords), b)
    assert feats.shape == (13, 90)
    for j in (0, 7):
        for d in range(3):
            np.testing.assert_allclose(feats[j, d * 30 : (d + 1) * 30], encode(coords[:, j, d], b), atol=1e-12)


def test_single_joint_single_channel_reduces_to_encode(rng):
    b = make_basis(8)
    x = rng.normal(size=(8, 1, 1))
    np.testing.assert_allclose(encode_coords(x, b)[0], encode(x[:, 0, 0], b), atol=1e-14)


def test_sequence_roundtrip(rng):
    b = make_basis(30)
    seq = PoseSequence.from_coords(rng.uniform(-10, 10, size=(30, 5, 2)))
    back = decode_sequence(encode_sequence(seq, b), b)
    assert np.abs(back.coords - seq.coords).max() < 1e-9
    assert np.all(back.visibility == 1)
    zero = decode_sequence(np.zeros((5, 60)), b)
    assert not np.any(zero.coords)


def test_dc_only_features_give_constant_trajectory():
    b = make_basis(10)
    feats = np.zeros((1, 30))
    feats[0, [0, 10, 20]] = np.array([1.0, 2.0, 3.0]) * math.sqrt(10)
    seq = decode_sequence(feats, b)
    np.testing.assert_allclose(seq.coords[:, 0], np.tile([1.0, 2.0, 3.0], (10, 1)), atol=1e-12)


def test_batched_coords_roundtrip(rng):
    b = make_basis(12, 12)
    x = rng.normal(size=(4, 12, 3, 2))
    np.testing.assert_allclose(decode_coords(encode_coords(x, b), b), x, atol=1e-12)
