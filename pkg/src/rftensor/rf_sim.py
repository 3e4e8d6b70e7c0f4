"""RF tomography measurement simulation.

Geometry convention: tensor axis 0 is x, axis 1 is y, axis 2 is height z.
Voxel ``(i, j, k)`` has linear index ``(i * N2 + j) * N3 + k`` which matches
the C-order flattening of the loss-field tensor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .tensor import as_tensor

EDGE_EPS = 1e-10


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class VoxelGrid:
    counts: tuple[int, int, int]
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.counts) != 3 or min(self.counts) < 1:
            raise GeometryError(f"voxel counts must be three positive ints: {self.counts}")
        if len(self.voxel_size) != 3 or min(self.voxel_size) <= 0:
            raise GeometryError(f"voxel sizes must be positive: {self.voxel_size}")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "voxel_size", tuple(float(s) for s in self.voxel_size))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def n_voxels(self) -> int:
        return math.prod(self.counts)

    @property
    def extent(self) -> np.ndarray:
        return np.multiply(self.counts, self.voxel_size)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.extent

    def linear_index(self, ijk: np.ndarray) -> np.ndarray:
        ijk = np.asarray(ijk)
        n1, n2, n3 = self.counts
        return (ijk[..., 0] * n2 + ijk[..., 1]) * n3 + ijk[..., 2]


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple[float, float, float]


@dataclass(frozen=True)
class Link:
    tx: int
    rx: int
    length: float


@dataclass(frozen=True)
class ChannelParams:
    tx_power: float = 20.0
    path_loss_exponent: float = 2.0
    reference_loss: float = 40.0
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("tx_power", "path_loss_exponent", "reference_loss", "noise_sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be > 0")

    def path_loss(self, d: float) -> float:
        """Log-distance large-scale path loss in dB."""
        return self.reference_loss + 10.0 * self.path_loss_exponent * math.log10(d)


@dataclass
class SensingEnsemble:
    """The linear map H as a sparse ``M x (N1*N2*N3)`` matrix plus measurements.

    Row ``m`` holds the overlap distances of the m-th selected link.
    """

    dims: tuple[int, int, int]
    matrix: sp.csr_matrix
    y: np.ndarray
    link_ids: np.ndarray
    links: list[Link] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.y = np.asarray(self.y, dtype=float)
        self.link_ids = np.asarray(self.link_ids, dtype=int)
        if self.matrix.shape != (len(self.y), math.prod(self.dims)):
            raise GeometryError(
                f"sensing matrix shape {self.matrix.shape} inconsistent with "
                f"M={len(self.y)}, dims={self.dims}"
            )
        if len(self.y) < 1:
            raise GeometryError("ensemble needs at least one measurement")

    @property
    def M(self) -> int:
        return len(self.y)

    def dense_tensors(self) -> np.ndarray:
        """All sensing tensors as a dense ``(M, N1, N2, N3)`` array."""
        return self.matrix.toarray().reshape((self.M, *self.dims))

    def with_y(self, y: np.ndarray) -> "SensingEnsemble":
        return SensingEnsemble(self.dims, self.matrix, y, self.link_ids, self.links)


def default_rings(K: int, grid: VoxelGrid) -> int:
    """Ring count whose vertical spacing best matches the perimeter spacing."""
    ex = grid.extent
    perimeter = 2.0 * (ex[0] + ex[1])
    target = math.sqrt(K * ex[2] / perimeter)
    candidates = [R for R in range(1, K + 1) if K % R == 0 and K // R >= 4]
    return min(candidates, key=lambda R: (abs(R - target), R))


def _perimeter_point(s: float, lo: np.ndarray, ex: np.ndarray) -> tuple[float, float]:
    # arc-length walk starting at the midpoint of the y = lo[1] face, counterclockwise
    lx, ly = float(ex[0]), float(ex[1])
    legs = [
        (lx / 2, (lo[0] + lx / 2, lo[1]), (1.0, 0.0)),
        (ly, (lo[0] + lx, lo[1]), (0.0, 1.0)),
        (lx, (lo[0] + lx, lo[1] + ly), (-1.0, 0.0)),
        (ly, (lo[0], lo[1] + ly), (0.0, -1.0)),
        (lx / 2, (lo[0], lo[1]), (1.0, 0.0)),
    ]
    for length, start, direction in legs:
        if s <= length:
            return start[0] + direction[0] * s, start[1] + direction[1] * s
        s -= length
    return float(lo[0] + lx / 2), float(lo[1])


def place_nodes(
    K: int, grid: VoxelGrid, rings: int | None = None, stagger: bool = False
) -> list[Node]:
    """Nodes on the four lateral faces, ``rings`` rings at equally spaced heights.

    With ``stagger`` ring ``q`` is rotated by ``q / rings`` of the node spacing,
    which breaks the coincidences between rays of different rings.
    """
    if K < 4:
        raise GeometryError(f"need at least 4 nodes, got K={K}")
    R = default_rings(K, grid) if rings is None else int(rings)
    if R < 1 or K % R != 0 or K // R < 4:
        raise GeometryError(f"K={K} cannot be split into {R} rings of >= 4 nodes")
    per_ring = K // R
    lo, ex = grid.lower, grid.extent
    perimeter = 2.0 * (ex[0] + ex[1])
    nodes = []
    for ring in range(R):
        z = lo[2] + ex[2] * (ring + 0.5) / R
        for q in range(per_ring):
            shift = ring / R if stagger else 0.0
            x, y = _perimeter_point(perimeter * (q + shift) / per_ring, lo, ex)
            nodes.append(Node(len(nodes), (x, y, float(z))))
    return nodes


def enumerate_links(nodes: Sequence[Node]) -> list[Link]:
    if len(nodes) < 2:
        raise GeometryError("need at least 2 nodes to form a link")
    ordered = sorted(nodes, key=lambda n: n.id)
    if len({n.id for n in ordered}) != len(ordered):
        raise GeometryError("node ids must be unique")
    links = []
    for a in range(len(ordered)):
        pa = np.asarray(ordered[a].position)
        for b in range(a + 1, len(ordered)):
            d = float(np.linalg.norm(np.asarray(ordered[b].position) - pa))
            links.append(Link(ordered[a].id, ordered[b].id, d))
    return links


def _clip_to_box(p0, d, lo, hi) -> tuple[float, float] | None:
    t0, t1 = 0.0, 1.0
    for ax in range(3):
        if d[ax] == 0.0:
            if p0[ax] < lo[ax] or p0[ax] > hi[ax]:
                return None
            continue
        ta = (lo[ax] - p0[ax]) / d[ax]
        tb = (hi[ax] - p0[ax]) / d[ax]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 >= t1:
            return None
    return t0, t1


def segment_voxel_distances(p0, p1, grid: VoxelGrid) -> tuple[np.ndarray, np.ndarray]:
    """Chord length of segment ``p0 -> p1`` inside each voxel it crosses.

    Returns ``(linear_indices, distances)`` in traversal order.  The segment
    is clipped to the grid box; the parameters of all axis-plane crossings
    inside the clipped range split it into per-voxel pieces.  A piece lying
    exactly on a voxel boundary plane goes to the lower-index voxel.
    """
    size = np.asarray(grid.voxel_size)
    counts = np.asarray(grid.counts)
    # voxel units
    a = (np.asarray(p0, dtype=float) - grid.lower) / size
    b = (np.asarray(p1, dtype=float) - grid.lower) / size
    d = b - a
    length = float(np.linalg.norm((b - a) * size))
    if length == 0.0:
        raise GeometryError("degenerate zero-length link")
    clip = _clip_to_box(a, d, np.zeros(3), counts.astype(float))
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0))
    if clip is None:
        return empty
    t0, t1 = clip
    ts = [np.array([t0, t1])]
    for ax in range(3):
        if d[ax] == 0.0:
            continue
        ca, cb = a[ax] + t0 * d[ax], a[ax] + t1 * d[ax]
        lo_plane = math.floor(min(ca, cb)) + 1
        hi_plane = math.ceil(max(ca, cb)) - 1
        if hi_plane >= lo_plane:
            planes = np.arange(lo_plane, hi_plane + 1, dtype=float)
            ts.append((planes - a[ax]) / d[ax])
    t = np.unique(np.clip(np.concatenate(ts), t0, t1))
    dt = np.diff(t)
    keep = dt > 0.0
    if not np.any(keep):
        return empty
    mid = (t[:-1] + t[1:])[keep] / 2.0
    pts = a[None, :] + mid[:, None] * d[None, :]
    near = np.rint(pts)
    on_plane = (d == 0.0) & (np.abs(pts - near) <= EDGE_EPS * np.maximum(1.0, np.abs(pts)))
    ijk = np.where(on_plane, near - 1, np.floor(pts)).astype(np.int64)
    ijk = np.clip(ijk, 0, counts - 1)
    dist = dt[keep] * length
    idx = grid.linear_index(ijk)
    # merge consecutive pieces that landed in the same voxel
    if len(idx) > 1:
        starts = np.concatenate(([True], idx[1:] != idx[:-1]))
        group = np.cumsum(starts) - 1
        dist = np.bincount(group, weights=dist)
        idx = idx[starts]
    return idx.astype(np.int64), dist


def _node_map(nodes: Sequence[Node]) -> dict[int, np.ndarray]:
    return {n.id: np.asarray(n.position, dtype=float) for n in nodes}


def link_voxel_distances(link: Link, grid: VoxelGrid, nodes: Sequence[Node]):
    pos = _node_map(nodes)
    return segment_voxel_distances(pos[link.tx], pos[link.rx], grid)


def _check_dims(X: np.ndarray, grid: VoxelGrid) -> np.ndarray:
    X = as_tensor(X)
    if X.shape != grid.counts:
        raise GeometryError(f"field dims {X.shape} do not match grid {grid.counts}")
    return X


def shadowing_loss(link: Link, X: np.ndarray, grid: VoxelGrid, nodes: Sequence[Node]) -> float:
    X = _check_dims(X, grid)
    idx, dist = link_voxel_distances(link, grid, nodes)
    return float(np.dot(dist, X.ravel()[idx]))


def simulate_rss(
    link: Link,
    X: np.ndarray,
    p: ChannelParams,
    grid: VoxelGrid,
    nodes: Sequence[Node],
    rng: np.random.Generator | None = None,
) -> float:
    """Received power ``P_t - Pbar(d) - Z1 - Z2`` in dBm."""
    if link.length <= 0.0:
        raise GeometryError("link length must be positive")
    if rng is None:
        rng = np.random.default_rng(p.rng_seed)
    z1 = shadowing_loss(link, X, grid, nodes)
    z2 = rng.normal(0.0, p.noise_sigma) if p.noise_sigma > 0 else 0.0
    return p.tx_power - p.path_loss(link.length) - z1 - z2


def sample_links(links: Sequence[Link], rate: float, seed: int) -> list[int]:
    """Indices of ``round(rate * S)`` links drawn without replacement, sorted."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"sampling rate must lie in (0, 1], got {rate}")
    S = len(links)
    M = int(round(rate * S))
    if M < 1:
        raise ValueError(f"rate {rate} selects no links out of {S}")
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(S, size=M, replace=False))


def sensing_matrix(
    links: Sequence[Link], grid: VoxelGrid, nodes: Sequence[Node]
) -> sp.csr_matrix:
    pos = _node_map(nodes)
    indptr = [0]
    indices, data = [], []
    for link in links:
        idx, dist = segment_voxel_distances(pos[link.tx], pos[link.rx], grid)
        order = np.argsort(idx)
        indices.append(idx[order])
        data.append(dist[order])
        indptr.append(indptr[-1] + len(idx))
    return sp.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.asarray(indptr),
        ),
        shape=(len(links), grid.n_voxels),
    )


def build_sensing_ensemble(
    selected: Sequence[int],
    links: Sequence[Link],
    nodes: Sequence[Node],
    X_true: np.ndarray,
    grid: VoxelGrid,
    p: ChannelParams,
) -> SensingEnsemble:
    """Measurements ``y_m = <A_m, X_true> + w_m`` for the selected link indices.

    Noise is drawn from one generator seeded with ``p.rng_seed`` in the order
    of ``selected``.
    """
    if len(selected) == 0:
        raise GeometryError("no links selected")
    X_true = _check_dims(X_true, grid)
    chosen = [links[i] for i in selected]
    A = sensing_matrix(chosen, grid, nodes)
    y = A @ X_true.ravel()
    if p.noise_sigma > 0:
        y = y + np.random.default_rng(p.rng_seed).normal(0.0, p.noise_sigma, len(y))
    return SensingEnsemble(grid.counts, A, y, np.asarray(selected), chosen)


def apply_linear_map(H: SensingEnsemble, X: np.ndarray) -> np.ndarray:
    X = as_tensor(X)
    if X.shape != tuple(H.dims):
        raise GeometryError(f"field dims {X.shape} do not match ensemble {H.dims}")
    return H.matrix @ X.ravel()
