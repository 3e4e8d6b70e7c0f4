"""Block-circulant and squeeze embeddings of third-order tensors.

``circ_tensor`` maps an ``N1 x N2 x N3`` tensor to the ``N1*N3 x N2*N3``
block-circulant matrix whose ``(i, j)`` block is ``circ(A[i, j, :])``.  The
squeeze matrix keeps only the first column of every block, which already
holds every tensor entry exactly once.

These identities characterize the FFT (circular convolution) product only.
"""
from __future__ import annotations

import numpy as np

from .tensor import TensorShapeError, as_tensor

CIRC_TOL = 1e-9


class CirculantError(ValueError):
    pass


def _shift_index(n3: int) -> np.ndarray:
    p = np.arange(n3)
    return (p[:, None] - p[None, :]) % n3


def circ_tube(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1:
        raise TensorShapeError("a tube is one-dimensional")
    return t[_shift_index(len(t))]


def circ_tensor(A) -> np.ndarray:
    A = as_tensor(A)
    n1, n2, n3 = A.shape
    blocks = A[:, :, _shift_index(n3)]  # (n1, n2, p, q)
    return np.ascontiguousarray(blocks.transpose(0, 2, 1, 3).reshape(n1 * n3, n2 * n3))


def _blocks(M: np.ndarray, dims) -> np.ndarray:
    n1, n2, n3 = dims
    M = np.asarray(M, dtype=float)
    if M.shape != (n1 * n3, n2 * n3):
        raise TensorShapeError(f"matrix shape {M.shape} does not match dims {tuple(dims)}")
    return M.reshape(n1, n3, n2, n3).transpose(0, 2, 1, 3)


def uncirc_tensor(M, dims, tol: float = CIRC_TOL) -> np.ndarray:
    """Inverse of :func:`circ_tensor`; rejects blocks that are not circulant."""
    blocks = _blocks(M, dims)
    A = np.ascontiguousarray(blocks[:, :, :, 0])
    dev = np.max(np.abs(blocks - A[:, :, _shift_index(dims[2])]), initial=0.0)
    if dev > tol:
        raise CirculantError(f"blocks deviate from circulant structure by {dev:.3e}")
    return A


def project_circulant(M, dims) -> np.ndarray:
    """Tensor whose circulant embedding is nearest to ``M`` in Frobenius norm.

    Averages each block along its wrapped diagonals.
    """
    blocks = _blocks(M, dims)
    n3 = dims[2]
    idx = _shift_index(n3)
    out = np.zeros(tuple(dims))
    for t in range(n3):
        p, q = np.nonzero(idx == t)
        out[:, :, t] = blocks[:, :, p, q].mean(axis=-1)
    return out


def squeeze_tensor(A) -> np.ndarray:
    A = as_tensor(A)
    n1, n2, n3 = A.shape
    return np.ascontiguousarray(A.transpose(0, 2, 1).reshape(n1 * n3, n2))


def unsqueeze(S, dims) -> np.ndarray:
    n1, n2, n3 = dims
    S = np.asarray(S, dtype=float)
    if S.shape != (n1 * n3, n2):
        raise TensorShapeError(f"squeeze matrix shape {S.shape} does not match dims {tuple(dims)}")
    return np.ascontiguousarray(S.reshape(n1, n3, n2).transpose(0, 2, 1))


def squeeze_product(Uc, Vs) -> np.ndarray:
    """``X^s = U^c V^s``: squeezed form of the FFT L-product ``U * V``."""
    Uc = np.asarray(Uc, dtype=float)
    Vs = np.asarray(Vs, dtype=float)
    if Uc.ndim != 2 or Vs.ndim != 2 or Uc.shape[1] != Vs.shape[0]:
        raise TensorShapeError(f"cannot multiply {Uc.shape} by {Vs.shape}")
    return Uc @ Vs
