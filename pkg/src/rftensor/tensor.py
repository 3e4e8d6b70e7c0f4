"""Transform-based third-order tensor algebra.

Tensors are plain ``numpy`` arrays of shape ``(N1, N2, N3)`` in C order, so
every mode-3 tube ``A[i, j, :]`` is contiguous.  A :class:`TransformSpec`
fixes the invertible mode-3 transform that defines the L-product.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft

FFT = "fft"
DCT = "dct"
KINDS = (FFT, DCT)

IMAG_TOL = 1e-10


class TensorShapeError(ValueError):
    pass


class RealnessError(ValueError):
    """Inverse FFT produced a non-negligible imaginary part."""


@dataclass(frozen=True)
class TransformSpec:
    """Invertible length-``length`` transform applied along mode 3.

    FFT uses the unnormalized forward DFT (inverse scaled by ``1/N3``) so
    that the tubal product is plain circular convolution.  DCT is the
    orthonormal type-II / type-III pair.
    """

    kind: str
    length: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("transform length must be positive")

    @property
    def complex(self) -> bool:
        return self.kind == FFT

    @property
    def parseval_scale(self) -> float:
        """Factor mapping ``||forward(a)||`` to ``||a||``."""
        return 1.0 / np.sqrt(self.length) if self.kind == FFT else 1.0

    def _check(self, a: np.ndarray):
        if a.shape[-1] != self.length:
            raise TensorShapeError(
                f"transform length {self.length} does not match N3={a.shape[-1]}"
            )

    def forward(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        self._check(a)
        if self.kind == FFT:
            return np.fft.fft(a, axis=-1)
        if np.iscomplexobj(a):
            raise TypeError("DCT transform expects real input")
        return scipy.fft.dct(a, type=2, norm="ortho", axis=-1)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        self._check(a)
        if self.kind == DCT:
            if np.iscomplexobj(a):
                raise TypeError("DCT codomain is real; got complex data")
            return scipy.fft.idct(a, type=2, norm="ortho", axis=-1)
        out = np.fft.ifft(a, axis=-1)
        scale = max(1.0, float(np.max(np.abs(out.real), initial=0.0)))
        resid = float(np.max(np.abs(out.imag), initial=0.0))
        if resid > IMAG_TOL * scale:
            raise RealnessError(
                f"imaginary residue {resid:.3e} after inverse FFT; input is not "
                "conjugate symmetric"
            )
        return np.ascontiguousarray(out.real)

    def matrix(self) -> np.ndarray:
        """Dense ``N3 x N3`` matrix of the forward transform."""
        return self.forward(np.eye(self.length)).T


def as_tensor(a, ndim: int = 3) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    if a.ndim != ndim:
        raise TensorShapeError(f"expected a {ndim}-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains non-finite entries")
    return a


def forward_transform(t: np.ndarray, T: TransformSpec) -> np.ndarray:
    return T.forward(as_tensor(t))


def inverse_transform(ft: np.ndarray, T: TransformSpec) -> np.ndarray:
    if ft.ndim != 3:
        raise TensorShapeError(f"expected a 3-d array, got shape {ft.shape}")
    if T.kind == FFT and not np.iscomplexobj(ft):
        ft = ft.astype(complex)
    return T.inverse(ft)


def tubal_mult(a: np.ndarray, b: np.ndarray, T: TransformSpec) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise TensorShapeError(f"tube shapes differ: {a.shape} vs {b.shape}")
    return T.inverse(T.forward(a) * T.forward(b))


def slice_product(Bh: np.ndarray, Ch: np.ndarray) -> np.ndarray:
    """Frontal-slice-wise matrix product of two transformed tensors."""
    return np.einsum("isk,sjk->ijk", Bh, Ch)


def l_product(B: np.ndarray, C: np.ndarray, T: TransformSpec) -> np.ndarray:
    B = as_tensor(B)
    C = as_tensor(C)
    if B.shape[2] != C.shape[2]:
        raise TensorShapeError(f"N3 mismatch: {B.shape[2]} vs {C.shape[2]}")
    if B.shape[1] != C.shape[0]:
        raise TensorShapeError(
            f"inner dimension mismatch: {B.shape} and {C.shape}"
        )
    return T.inverse(slice_product(T.forward(B), T.forward(C)))


def l_transpose(A: np.ndarray, T: TransformSpec) -> np.ndarray:
    # conjugate transpose per transformed slice; plain transpose for real transforms
    Ah = T.forward(as_tensor(A))
    return T.inverse(np.conj(Ah).transpose(1, 0, 2))


def identity_tensor(n: int, n3: int, T: TransformSpec) -> np.ndarray:
    if n < 1 or n3 < 1:
        raise ValueError("identity tensor needs n, n3 >= 1")
    Ih = np.zeros((n, n, n3), dtype=complex if T.complex else float)
    idx = np.arange(n)
    Ih[idx, idx, :] = 1.0
    return T.inverse(Ih)


def frobenius_norm(A: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(A, dtype=float)))))


class LSvdFactors(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    singular_tubes: np.ndarray


def _independent_slices(T: TransformSpec) -> range:
    # real input under FFT: slice n3-k is the conjugate of slice k
    return range(T.length // 2 + 1) if T.kind == FFT else range(T.length)


def _mirror(Xh: np.ndarray, T: TransformSpec) -> None:
    n3 = T.length
    if T.kind == FFT:
        for k in range(n3 // 2 + 1, n3):
            Xh[..., k] = np.conj(Xh[..., n3 - k])


def l_svd(A: np.ndarray, T: TransformSpec) -> LSvdFactors:
    A = as_tensor(A)
    n1, n2, n3 = A.shape
    T._check(A)
    Ah = T.forward(A)
    dtype = Ah.dtype
    Uh = np.zeros((n1, n1, n3), dtype=dtype)
    Sh = np.zeros((n1, n2, n3), dtype=dtype)
    Vh = np.zeros((n2, n2, n3), dtype=dtype)
    p = min(n1, n2)
    for k in _independent_slices(T):
        block = Ah[:, :, k]
        if T.kind == FFT and (k == 0 or 2 * k == n3):
            # these slices are real for real input; keep factors real
            block = block.real
        try:
            u, s, vh = np.linalg.svd(block)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"SVD failed on transformed slice {k}") from exc
        Uh[:, :, k] = u
        Sh[np.arange(p), np.arange(p), k] = s
        Vh[:, :, k] = np.conj(vh.T)
    _mirror(Uh, T)
    _mirror(Sh, T)
    _mirror(Vh, T)
    U = T.inverse(Uh)
    S = T.inverse(Sh)
    V = T.inverse(Vh)
    tubes = S[np.arange(p), np.arange(p), :].copy()
    return LSvdFactors(U, S, V, tubes)


def l_qr(A: np.ndarray, T: TransformSpec) -> tuple[np.ndarray, np.ndarray]:
    """Reduced L-QR: ``A = Q * R`` with ``Q^dagger * Q = I`` (for ``N1 >= N2``)."""
    A = as_tensor(A)
    n1, n2, n3 = A.shape
    p = min(n1, n2)
    Ah = T.forward(A)
    Qh = np.zeros((n1, p, n3), dtype=Ah.dtype)
    Rh = np.zeros((p, n2, n3), dtype=Ah.dtype)
    for k in _independent_slices(T):
        block = Ah[:, :, k]
        if T.kind == FFT and (k == 0 or 2 * k == n3):
            block = block.real
        Qh[:, :, k], Rh[:, :, k] = np.linalg.qr(block)
    _mirror(Qh, T)
    _mirror(Rh, T)
    return T.inverse(Qh), T.inverse(Rh)


def transformed_singular_values(A: np.ndarray, T: TransformSpec) -> np.ndarray:
    """Singular values of every transformed frontal slice, shape ``(N3, p)``.

    Each row is sorted nonincreasing.
    """
    Ah = T.forward(as_tensor(A))
    return np.linalg.svd(np.moveaxis(Ah, 2, 0), compute_uv=False)


def l_rank(A: np.ndarray, T: TransformSpec, rel_tol: float = 1e-8) -> int:
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    sv = transformed_singular_values(A, T)
    smax = sv.max(initial=0.0)
    if smax == 0.0:
        return 0
    return int(np.max(np.sum(sv > rel_tol * smax, axis=1)))


def energy_cdf(values: np.ndarray) -> list[tuple[int, float]]:
    """Cumulative energy fraction of ``values`` sorted in decreasing order."""
    v = np.sort(np.abs(np.ravel(values)))[::-1]
    energy = np.square(v)
    total = energy.sum()
    if total == 0.0:
        raise ValueError("zero tensor has no singular-value energy distribution")
    frac = np.cumsum(energy) / total
    frac[-1] = 1.0
    return [(k + 1, float(f)) for k, f in enumerate(frac)]


def singular_value_cdf(
    A: np.ndarray, T: TransformSpec, pooling: str = "tubes"
) -> list[tuple[int, float]]:
    """Cumulative energy (sigma**2) fraction of the L-SVD singular values.

    ``pooling="tubes"`` gives one value per singular tube ``S(i, i, :)``, its
    Frobenius norm, so an ``N1 x N2 x N3`` tensor has ``min(N1, N2)`` values.
    ``pooling="slices"`` pools every transformed-slice singular value.
    """
    sv = transformed_singular_values(A, T)
    if pooling == "tubes":
        sv = np.sqrt(np.sum(np.square(sv), axis=0)) * T.parseval_scale
    elif pooling != "slices":
        raise ValueError(f"unknown pooling {pooling!r}")
    return energy_cdf(sv)


def mode3_unfolding(A: np.ndarray) -> np.ndarray:
    A = as_tensor(A)
    return A.reshape(-1, A.shape[2]).T


def count_to_energy(cdf: list[tuple[int, float]], level: float = 0.95) -> int:
    for count, frac in cdf:
        if frac >= level:
            return count
    return cdf[-1][0]
