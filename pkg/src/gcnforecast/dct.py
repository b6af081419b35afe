"""Orthonormal DCT-II encoding of joint trajectories.

Feature layout for a whole pose sequence is channel-major per joint: row ``j``
holds the ``L`` coefficients of channel 0, then channel 1, and so on, so a
(J, D*L) feature matrix reshapes to (J*D, L) without moving any values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PoseSequence


@dataclass(frozen=True, eq=False)
class DctBasis:
    """``matrix[l, t]`` maps frame ``t`` to coefficient ``l`` (both 0-based)."""

    matrix: np.ndarray
    n: int
    l: int

    @property
    def inverse(self):
        return self.matrix.T


def make_basis(n, l=None):
    if l is None:
        l = n
    if n < 1:
        raise ValueError(f"sequence length must be positive, got {n}")
    if not 1 <= l <= n:
        raise ValueError(f"coefficient count must satisfy 1 <= l <= n, got l={l}, n={n}")
    t = np.arange(1, n + 1)
    k = np.arange(1, l + 1)[:, None]
    m = np.sqrt(2.0 / n) * np.cos(np.pi / (2 * n) * (2 * t - 1) * (k - 1))
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return DctBasis(m, n, l)


def pad_future(traj, tau):
    """Append ``tau`` copies of the last frame along axis 0."""
    traj = np.asarray(traj)
    if traj.shape[0] < 1:
        raise ValueError("cannot pad an empty trajectory")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    tail = np.repeat(traj[-1:], tau, axis=0)
    return np.concatenate([traj, tail], axis=0)


def encode(traj, basis: DctBasis):
    """DCT coefficients along axis 0; trailing axes are carried through."""
    traj = np.asarray(traj, dtype=np.float64)
    if traj.shape[0] != basis.n:
        raise ValueError(f"trajectory length {traj.shape[0]} != basis length {basis.n}")
    return np.tensordot(basis.matrix, traj, axes=(1, 0))


def decode(coeffs, basis: DctBasis):
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[0] != basis.l:
        raise ValueError(f"got {coeffs.shape[0]} coefficients, basis keeps {basis.l}")
    return np.tensordot(basis.matrix.T, coeffs, axes=(1, 0))


def encode_coords(coords, basis: DctBasis):
    """(..., N, J, D) coordinates -> (..., J, D*L) channel-major features."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-3] != basis.n:
        raise ValueError(f"sequence length {coords.shape[-3]} != basis length {basis.n}")
    c = np.einsum("ln,...njd->...jdl", basis.matrix, coords)
    return c.reshape(c.shape[:-2] + (-1,))


def decode_coords(features, basis: DctBasis):
    """(..., J, D*L) features -> (..., N, J, D) coordinates."""
    features = np.asarray(features, dtype=np.float64)
    f = features.shape[-1]
    if f % basis.l:
        raise ValueError(f"feature width {f} is not a multiple of {basis.l} coefficients")
    c = features.reshape(features.shape[:-1] + (f // basis.l, basis.l))
    return np.einsum("ln,...jdl->...njd", basis.matrix, c)


def encode_sequence(seq: PoseSequence, basis: DctBasis):
    return encode_coords(seq.coords, basis)


def decode_sequence(features, basis: DctBasis, frame_interval_ms=1.0, **ids):
    """Inverse of :func:`encode_sequence`; visibility comes back all ones."""
    coords = decode_coords(features, basis)
    return PoseSequence.from_coords(coords, frame_interval_ms=frame_interval_ms, **ids)
