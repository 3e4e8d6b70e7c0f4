"""Synthetic ground-truth loss fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    FFT,
    TransformSpec,
    count_to_energy,
    frobenius_norm,
    l_product,
    l_rank,
    singular_value_cdf,
)

SHAPES = ("chair", "table", "box", "cross")
KINDS = ("low_rank_random",) + SHAPES


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "low_rank_random"
    dims: tuple[int, int, int] = (20, 20, 5)
    rank: int = 2
    attenuation: float = 1.0
    seed: int = 0
    transform: str = FFT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PhantomError(f"unknown phantom kind {self.kind!r}")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise PhantomError(f"dims must be three positive ints: {self.dims}")
        if self.attenuation <= 0:
            raise PhantomError("attenuation must be > 0")
        if self.rank < 1:
            raise PhantomError("rank must be >= 1")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


def make_low_rank_phantom(spec: PhantomSpec) -> np.ndarray:
    """``U0 * V0`` with standard normal factors under ``spec.transform``."""
    n1, n2, n3 = spec.dims
    r = spec.rank
    if r > min(n1, n2):
        raise PhantomError(f"rank {r} exceeds min(N1, N2) = {min(n1, n2)}")
    rng = np.random.default_rng(spec.seed)
    U0 = rng.standard_normal((n1, r, n3))
    V0 = rng.standard_normal((r, n2, n3))
    return l_product(U0, V0, TransformSpec(spec.transform, n3)) * spec.attenuation


@dataclass(frozen=True)
class _Layout:
    lo: int  # footprint start (x and y)
    hi: int  # footprint end, inclusive
    floor: int
    top: int


def _layout(dims) -> _Layout:
    n1, n2, n3 = dims
    n = min(n1, n2)
    lo, hi = n // 3, (2 * n) // 3
    margin = int(0.1 * n3)
    floor, top = margin, n3 - 1 - margin
    if hi - lo < 2 or top - floor < 3 or lo < int(0.1 * n):
        raise PhantomError(f"shape does not fit in dims {tuple(dims)} with a 10% margin")
    return _Layout(lo, hi, floor, top)


def shape_slabs(kind: str, dims) -> list[tuple[tuple[int, int], tuple[int, int], tuple[int, int]]]:
    """Axis-aligned slabs ``((x0, x1), (y0, y1), (z0, z1))``, bounds inclusive."""
    n1, n2, n3 = dims
    L = _layout(dims)
    fx = (L.lo + (n1 - min(n1, n2)) // 2, L.hi + (n1 - min(n1, n2)) // 2)
    fy = (L.lo + (n2 - min(n1, n2)) // 2, L.hi + (n2 - min(n1, n2)) // 2)
    height = L.top - L.floor
    corners = [(x, y) for x in fx for y in fy]

    if kind == "box":
        return [(fx, fy, (n3 // 3, (2 * n3) // 3))]
    if kind == "chair":
        seat = L.floor + round(0.4 * height)
        slabs = [(fx, fy, (seat, seat))]
        slabs.append(((fx[1], fx[1]), fy, (seat + 1, L.top)))  # back
        slabs += [((x, x), (y, y), (L.floor, seat - 1)) for x, y in corners]
        return slabs
    if kind == "table":
        top = L.floor + round(0.6 * height)
        slabs = [(fx, fy, (top, top))]
        slabs += [((x, x), (y, y), (L.floor, top - 1)) for x, y in corners]
        return slabs
    if kind == "cross":
        cx, cy, cz = n1 // 2, n2 // 2, (L.floor + L.top) // 2
        return [
            (fx, (cy, cy), (cz, cz)),
            ((cx, cx), fy, (cz, cz)),
            ((cx, cx), (cy, cy), (L.floor, L.top)),
        ]
    raise PhantomError(f"unknown shape {kind!r}")


def make_shape_phantom(spec: PhantomSpec) -> np.ndarray:
    if spec.kind not in SHAPES:
        raise PhantomError(f"{spec.kind!r} is not a shape phantom")
    X = np.zeros(spec.dims)
    for (x0, x1), (y0, y1), (z0, z1) in shape_slabs(spec.kind, spec.dims):
        X[x0 : x1 + 1, y0 : y1 + 1, z0 : z1 + 1] = spec.attenuation
    return X


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    if spec.kind == "low_rank_random":
        return make_low_rank_phantom(spec)
    return make_shape_phantom(spec)


def phantom_report(X: np.ndarray, T: TransformSpec, rel_tol: float = 1e-8) -> dict:
    """Dims, nonzero count, norm, L-rank and singular-value CDF of a field."""
    report = {
        "dims": tuple(X.shape),
        "nonzeros": int(np.count_nonzero(X)),
        "frobenius_norm": frobenius_norm(X),
        "l_rank": l_rank(X, T, rel_tol),
        "transform": T.kind,
    }
    try:
        cdf = singular_value_cdf(X, T)
        report["cdf"] = cdf
        report["count_95"] = count_to_energy(cdf, 0.95)
    except ValueError as exc:
        report["cdf"] = []
        report["count_95"] = None
        report["cdf_error"] = str(exc)
    return report
