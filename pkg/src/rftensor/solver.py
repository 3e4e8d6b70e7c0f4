"""Alternating minimization for low L-rank tensor sensing.

The field is factored as ``X = U * V`` (L-product) with ``U`` of shape
``N1 x r x N3`` and ``V`` of shape ``r x N2 x N3``.  Each half-step is a
linear least-squares problem; three interchangeable backends build it:

``circulant``
    Block-diagonal ``B1`` and vectorized circulant sensing rows ``B2``
    (FFT only, memory hungry, kept as an oracle).
``squeeze``
    Squeezed sensing operators applied to the columns of ``circ(U)``
    (FFT only).
``transform``
    Design assembled slice-wise in the transform domain (any transform).
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import circulant as circ
from .rf_sim import SensingEnsemble
from .tensor import FFT, TransformSpec, as_tensor, l_product, l_qr, l_transpose

BACKENDS = ("circulant", "squeeze", "transform")
_BACKEND_ALIASES = {
    "circulant_naive": "circulant",
    "squeeze_opt": "squeeze",
    "transform_domain": "transform",
}


class SolverError(RuntimeError):
    pass


def normalize_backend(name: str) -> str:
    name = _BACKEND_ALIASES.get(name, name)
    if name not in BACKENDS:
        raise ValueError(f"unknown least-squares backend {name!r}")
    return name


@dataclass(frozen=True)
class SolverConfig:
    rank: int
    max_iters: int = 20
    transform: str = FFT
    backend: str = "transform"
    init_seed: int = 0
    # Tikhonov weight relative to trace(G^T G) / n_unknowns; 0 selects min-norm LS
    ridge: float = 0.0
    early_stop_tol: float | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        object.__setattr__(self, "backend", normalize_backend(self.backend))
        if self.backend in ("circulant", "squeeze") and self.transform != FFT:
            raise ValueError(f"backend {self.backend!r} requires the FFT transform")

    def transform_spec(self, n3: int) -> TransformSpec:
        return TransformSpec(self.transform, n3)


class FactorPair(NamedTuple):
    U: np.ndarray
    V: np.ndarray


@dataclass
class IterationTrace:
    residual: list[float] = field(default_factory=list)
    rse: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    # residual before the first half-step, then after every half-step
    half_residuals: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.residual)


@dataclass
class AllocationLog:
    """Element counts of the arrays a backend materializes.

    ``nominal`` is the dense size of the array's shape, ``stored`` the number
    of values actually held (nonzeros for sparse storage).
    """

    entries: list[tuple[str, str, tuple[int, ...], int, int]] = field(default_factory=list)

    def record(self, category: str, name: str, array) -> None:
        shape = tuple(int(s) for s in array.shape)
        stored = int(array.nnz) if sp.issparse(array) else int(np.asarray(array).size)
        self.entries.append((category, name, shape, math.prod(shape), stored))

    def nominal(self, category: str) -> int:
        return sum(e[3] for e in self.entries if e[0] == category)

    def stored(self, category: str) -> int:
        return sum(e[4] for e in self.entries if e[0] == category)


def init_factor(n1: int, r: int, n3: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n1, r, n3))


def reconstruct(f: FactorPair, T: TransformSpec) -> np.ndarray:
    return l_product(f.U, f.V, T)


# ---------------------------------------------------------------------------
# dense least squares


def vec_columns(Mx) -> np.ndarray:
    return np.asarray(Mx).reshape(-1, order="F")


def unvec_columns(v, shape) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


def ridge_weight(G: np.ndarray, ridge: float) -> float:
    if ridge == 0.0 or G.size == 0:
        return 0.0
    return ridge * float(np.sum(G * G)) / G.shape[1]


def solve_least_squares(G, y, lam: float = 0.0) -> np.ndarray:
    """``argmin ||y - G b||^2 + lam ||b||^2`` by orthogonal factorization.

    ``lam == 0`` returns the minimum-norm solution.
    """
    G = np.asarray(G, dtype=float)
    y = np.asarray(y, dtype=float)
    if G.shape[0] != y.shape[0]:
        raise ValueError(f"design has {G.shape[0]} rows but y has {y.shape[0]}")
    if lam < 0:
        raise ValueError("regularization must be >= 0")
    n = G.shape[1]
    if lam == 0.0:
        # same rank cutoff as matrix_rank; the bare eps default keeps round-off directions
        cond = max(G.shape) * np.finfo(float).eps
        b = scipy.linalg.lstsq(G, y, cond=cond, lapack_driver="gelsd", check_finite=False)[0]
    else:
        stacked = np.vstack([G, math.sqrt(lam) * np.eye(n)])
        rhs = np.concatenate([y, np.zeros(n)])
        Q, R = scipy.linalg.qr(stacked, mode="economic", check_finite=False)
        b = scipy.linalg.solve_triangular(R, Q.T @ rhs, check_finite=False)
    if not np.all(np.isfinite(b)):
        raise np.linalg.LinAlgError("least-squares solve produced non-finite values")
    return b


def build_B1(Uc, n2: int, n3: int) -> sp.csr_matrix:
    """Block diagonal with ``n2 * n3`` copies of ``Uc`` (stored sparse)."""
    return sp.block_diag([np.asarray(Uc, dtype=float)] * (n2 * n3), format="csr")


def build_B2(circ_sensing: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Rows ``vec_columns(A_m^c) * scale`` for a stack ``(M, rows, cols)``."""
    A = np.asarray(circ_sensing, dtype=float)
    if A.ndim != 3 or A.shape[0] < 1:
        raise ValueError(f"expected a nonempty (M, rows, cols) stack, got {A.shape}")
    return np.ascontiguousarray(A.transpose(0, 2, 1).reshape(A.shape[0], -1)) * scale


def ls_standard(B2, B1, y, lam: float = 0.0) -> np.ndarray:
    """Minimize ``||y - B2 B1 b||^2 + lam ||b||^2``."""
    G = np.asarray(B1.T @ np.asarray(B2).T).T if sp.issparse(B1) else np.asarray(B2) @ B1
    if G.shape[0] != len(y):
        raise ValueError("B2 row count must match the measurement count")
    return solve_least_squares(G, y, lam)


# ---------------------------------------------------------------------------
# sensing-operator views


def transpose_ensemble(H: SensingEnsemble, T: TransformSpec) -> SensingEnsemble:
    """Ensemble of transposed sensing tensors; ``<A_m^T, X^T> = <A_m, X>``."""
    n1, n2, n3 = H.dims
    lin = np.arange(n1 * n2 * n3)
    i, rem = np.divmod(lin, n2 * n3)
    j, k = np.divmod(rem, n3)
    # L-transpose of a real tensor is an index permutation for both transforms
    kt = (-k) % n3 if T.kind == FFT else k
    perm = (j * n1 + i) * n3 + kt
    A = H.matrix.tocoo()
    At = sp.csr_matrix((A.data, (A.row, perm[A.col])), shape=A.shape)
    At.sort_indices()
    return SensingEnsemble((n2, n1, n3), At, H.y, H.link_ids, H.links)


@dataclass
class _Tubes:
    """Nonzero sensing tubes ``A_m(i, j, :)`` and their transforms."""

    m: np.ndarray
    i: np.ndarray
    j: np.ndarray
    hat: np.ndarray


def _sensing_tubes(H: SensingEnsemble, T: TransformSpec) -> _Tubes:
    n1, n2, n3 = H.dims
    A = H.matrix.tocoo()
    key = A.row.astype(np.int64) * (n1 * n2) + A.col // n3
    uniq, inv = np.unique(key, return_inverse=True)
    dense = np.zeros((len(uniq), n3))
    np.add.at(dense, (inv, A.col % n3), A.data)
    m, ij = np.divmod(uniq, n1 * n2)
    i, j = np.divmod(ij, n2)
    return _Tubes(m, i, j, T.forward(dense))


def _scatter(rows: np.ndarray, n_rows: int) -> sp.csr_matrix:
    n = len(rows)
    return sp.csr_matrix((np.ones(n), (rows, np.arange(n))), shape=(n_rows, n))


def _design_V_transform(H: SensingEnsemble, U: np.ndarray, T: TransformSpec, tubes=None) -> np.ndarray:
    # row m is U^dagger * A_m, assembled slice-wise as conj(L(U))^T L(A_m)
    n1, n2, n3 = H.dims
    r = U.shape[1]
    tb = tubes if tubes is not None else _sensing_tubes(H, T)
    Uh = T.forward(U)
    contrib = np.conj(Uh[tb.i]) * tb.hat[:, None, :]  # (tubes, r, n3)
    C = _scatter(tb.m * n2 + tb.j, H.M * n2) @ contrib.reshape(len(tb.m), r * n3)
    C = C.reshape(H.M, n2, r, n3).transpose(0, 2, 1, 3)
    return T.inverse(C).reshape(H.M, r * n2 * n3)


def _design_U_transform(H: SensingEnsemble, V: np.ndarray, T: TransformSpec, tubes=None) -> np.ndarray:
    # row m is A_m * V^dagger
    n1, n2, n3 = H.dims
    r = V.shape[0]
    tb = tubes if tubes is not None else _sensing_tubes(H, T)
    Vh = T.forward(V)
    contrib = tb.hat[:, None, :] * np.conj(Vh[:, tb.j, :]).transpose(1, 0, 2)
    C = _scatter(tb.m * n1 + tb.i, H.M * n1) @ contrib.reshape(len(tb.m), r * n3)
    return T.inverse(C.reshape(H.M, n1, r, n3)).reshape(H.M, n1 * r * n3)


def squeezed_sensing(H: SensingEnsemble) -> sp.csr_matrix:
    """Stack of squeezed sensing matrices ``A_m^s`` as ``(M*N2) x (N1*N3)``.

    Row ``m*N2 + j`` is column ``j`` of ``A_m^s``.
    """
    n1, n2, n3 = H.dims
    A = H.matrix.tocoo()
    i, rem = np.divmod(A.col, n2 * n3)
    j, k = np.divmod(rem, n3)
    return sp.csr_matrix((A.data, (A.row * n2 + j, i * n3 + k)), shape=(H.M * n2, n1 * n3))


def circulant_sensing(H: SensingEnsemble) -> np.ndarray:
    """Dense circulant embeddings of all sensing tensors, ``(M, N1*N3, N2*N3)``."""
    n1, n2, n3 = H.dims
    A = H.dense_tensors()
    idx = (np.arange(n3)[:, None] - np.arange(n3)[None, :]) % n3
    blocks = A[:, :, :, idx]  # (M, n1, n2, p, q)
    return blocks.transpose(0, 1, 3, 2, 4).reshape(H.M, n1 * n3, n2 * n3)


# ---------------------------------------------------------------------------
# half-step solvers


def _check_factor(name: str, F: np.ndarray, shape) -> np.ndarray:
    F = as_tensor(F)
    if F.shape != tuple(shape):
        raise ValueError(f"{name} has shape {F.shape}, expected {tuple(shape)}")
    return F


def _solve(G: np.ndarray, y: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    return solve_least_squares(G, y, ridge_weight(G, cfg.ridge))


def ls_solve_V_squeeze(H: SensingEnsemble, Uc: np.ndarray, cfg: SolverConfig, log: AllocationLog | None = None, As=None) -> np.ndarray:
    """Solve for ``V^s`` given ``U^c``; returns the ``r*N3 x N2`` squeeze matrix."""
    n1, n2, n3 = H.dims
    Uc = np.asarray(Uc, dtype=float)
    if Uc.shape[0] != n1 * n3 or Uc.shape[1] % n3:
        raise ValueError(f"circulant factor shape {Uc.shape} inconsistent with dims {H.dims}")
    rn3 = Uc.shape[1]
    if As is None:
        As = squeezed_sensing(H)
    if log is not None:
        log.record("sensing", "A_s", As)
    # column j of U^c^T A_m^s, stacked as rows m*N2 + j
    G = np.asarray(As @ Uc).reshape(H.M, n2, rn3).transpose(0, 2, 1).reshape(H.M, -1)
    if log is not None:
        log.record("design", "G_s", G)
    return _solve(G, H.y, cfg).reshape(rn3, n2)


def _ls_V_circulant(H: SensingEnsemble, U: np.ndarray, cfg: SolverConfig, log: AllocationLog | None = None, B2=None) -> np.ndarray:
    n1, n2, n3 = H.dims
    r = U.shape[1]
    Uc = circ.circ_tensor(U)
    B1 = build_B1(Uc, n2, n3)
    if B2 is None:
        # 1/N3 keeps y identical to the tensor-domain measurements
        B2 = build_B2(circulant_sensing(H), 1.0 / n3)
    if log is not None:
        log.record("sensing", "B2", B2)
        log.record("design", "B1", B1)
    G = np.asarray((B1.T @ B2.T).T)
    # ridge weight from the compact design so every backend minimizes the same objective
    compact = _compact_from_circulant(G, r, n2, n3)
    lam = ridge_weight(compact, cfg.ridge) / n3
    b = solve_least_squares(G, H.y, lam)
    Vc = unvec_columns(b, (r * n3, n2 * n3))
    return circ.project_circulant(Vc, (r, n2, n3))


def _compact_from_circulant(G: np.ndarray, r: int, n2: int, n3: int) -> np.ndarray:
    """Design in tensor unknowns ``V(s, j, t)`` from the vec(V^c) design."""
    M = G.shape[0]
    # vec_columns(V^c): index = col * (r*n3) + row, col = j*n3 + q, row = s*n3 + p
    Gr = G.reshape(M, n2, n3, r, n3)  # (m, j, q, s, p)
    out = np.zeros((M, r, n2, n3))
    for t in range(n3):
        for q in range(n3):
            out[:, :, :, t] += Gr[:, :, q, :, (q + t) % n3].transpose(0, 2, 1)
    return out.reshape(M, -1)


def ls_solve_V(H: SensingEnsemble, U: np.ndarray, cfg: SolverConfig, log: AllocationLog | None = None) -> np.ndarray:
    n1, n2, n3 = H.dims
    U = _check_factor("U", U, (n1, cfg.rank, n3))
    T = cfg.transform_spec(n3)
    if cfg.backend == "transform":
        G = _design_V_transform(H, U, T)
        return _solve(G, H.y, cfg).reshape(cfg.rank, n2, n3)
    if cfg.backend == "squeeze":
        Vs = ls_solve_V_squeeze(H, circ.circ_tensor(U), cfg, log)
        return circ.unsqueeze(Vs, (cfg.rank, n2, n3))
    return _ls_V_circulant(H, U, cfg, log)


def ls_solve_U(H: SensingEnsemble, V: np.ndarray, cfg: SolverConfig, log: AllocationLog | None = None) -> np.ndarray:
    n1, n2, n3 = H.dims
    V = _check_factor("V", V, (cfg.rank, n2, n3))
    T = cfg.transform_spec(n3)
    if cfg.backend == "transform":
        G = _design_U_transform(H, V, T)
        return _solve(G, H.y, cfg).reshape(n1, cfg.rank, n3)
    # X^T = V^T * U^T: the U-step is a V-step on the transposed problem
    Ht = transpose_ensemble(H, T)
    Ut = ls_solve_V(Ht, l_transpose(V, T), cfg, log)
    return l_transpose(Ut, T)


# ---------------------------------------------------------------------------
# alternating minimization


class _HalfSteps:
    """Per-run cache of backend-specific sensing structures."""

    def __init__(self, H: SensingEnsemble, cfg: SolverConfig):
        self.H = H
        self.cfg = cfg
        n3 = H.dims[2]
        self.T = cfg.transform_spec(n3)
        self.Ht = transpose_ensemble(H, self.T)
        if cfg.backend == "transform":
            self.tubes = _sensing_tubes(H, self.T)
        elif cfg.backend == "squeeze":
            self.As = squeezed_sensing(H)
            self.As_t = squeezed_sensing(self.Ht)
        else:
            self.B2 = build_B2(circulant_sensing(H), 1.0 / n3)
            self.B2_t = build_B2(circulant_sensing(self.Ht), 1.0 / n3)

    def solve_V(self, U):
        H, cfg, T = self.H, self.cfg, self.T
        r, (n1, n2, n3) = cfg.rank, H.dims
        if cfg.backend == "transform":
            G = _design_V_transform(H, U, T, self.tubes)
            return _solve(G, H.y, cfg).reshape(r, n2, n3)
        if cfg.backend == "squeeze":
            Vs = ls_solve_V_squeeze(H, circ.circ_tensor(U), cfg, As=self.As)
            return circ.unsqueeze(Vs, (r, n2, n3))
        return _ls_V_circulant(H, U, cfg, B2=self.B2)

    def solve_U(self, V):
        H, cfg, T = self.H, self.cfg, self.T
        r, (n1, n2, n3) = cfg.rank, H.dims
        if cfg.backend == "transform":
            G = _design_U_transform(H, V, T, self.tubes)
            return _solve(G, H.y, cfg).reshape(n1, r, n3)
        Vt = l_transpose(V, T)
        if cfg.backend == "squeeze":
            Ut_s = ls_solve_V_squeeze(self.Ht, circ.circ_tensor(Vt), cfg, As=self.As_t)
            Ut = circ.unsqueeze(Ut_s, (r, n1, n3))
        else:
            Ut = _ls_V_circulant(self.Ht, Vt, cfg, B2=self.B2_t)
        return l_transpose(Ut, T)

    def residual(self, U, V) -> float:
        X = l_product(U, V, self.T)
        return float(np.linalg.norm(self.H.y - self.H.matrix @ X.ravel()))


def alt_min(
    H: SensingEnsemble,
    cfg: SolverConfig,
    X_true: np.ndarray | None = None,
    U0: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> tuple[FactorPair, IterationTrace]:
    """Run ``cfg.max_iters`` rounds of ``V <- LS(U)``, ``U <- LS(V)``.

    ``callback(it, U, V)`` is called after every iteration with the current
    factors.
    """
    n1, n2, n3 = H.dims
    r = cfg.rank
    if r * (n1 + n2) * n3 > H.M:
        warnings.warn(
            f"{H.M} measurements for {r * (n1 + n2) * n3} factor unknowns; "
            "recovery is likely to fail",
            RuntimeWarning,
            stacklevel=2,
        )
    steps = _HalfSteps(H, cfg)
    U = init_factor(n1, r, n3, cfg.init_seed) if U0 is None else _check_factor("U0", U0, (n1, r, n3))
    V = np.zeros((r, n2, n3))
    truth_norm = None if X_true is None else np.linalg.norm(X_true)
    y_norm = float(np.linalg.norm(H.y))
    trace = IterationTrace(half_residuals=[y_norm])
    start = time.perf_counter()
    for it in range(1, cfg.max_iters + 1):
        try:
            # re-gauge the fixed factor; U * V is unchanged, only its scale drifts
            U = l_qr(U, steps.T)[0]
            V = steps.solve_V(U)
            trace.half_residuals.append(steps.residual(U, V))
            V = l_transpose(l_qr(l_transpose(V, steps.T), steps.T)[0], steps.T)
            U = steps.solve_U(V)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"least-squares solve failed at iteration {it}: {exc}") from exc
        res = steps.residual(U, V)
        trace.half_residuals.append(res)
        trace.residual.append(res)
        if X_true is not None:
            X = l_product(U, V, steps.T)
            trace.rse.append(float(np.linalg.norm(X - X_true) / truth_norm) if truth_norm > 0 else float("nan"))
        trace.seconds.append(time.perf_counter() - start)
        if callback is not None:
            callback(it, U, V)
        if cfg.early_stop_tol is not None and res <= cfg.early_stop_tol * max(y_norm, 1e-300):
            break
    return FactorPair(U, V), trace
