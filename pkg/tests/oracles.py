"""Independent reference computations shared by the tests."""
import numpy as np

from rftensor.tensor import TransformSpec


def spec(kind, n3):
    return TransformSpec(kind, n3)


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    denom = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


def circconv(a, b):
    """Circular convolution by the defining double loop."""
    n = len(a)
    out = np.zeros(n)
    for k in range(n):
        for s in range(n):
            out[k] += a[s] * b[(k - s) % n]
    return out


def dft_matrix(n):
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n)


def dct_matrix(n):
    """Orthonormal DCT-II matrix from the cosine formula."""
    k, m = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    C = np.cos(np.pi * k * (2 * m + 1) / (2 * n)) * np.sqrt(2.0 / n)
    C[0] /= np.sqrt(2.0)
    return C


def fine_sampling(p0, p1, grid, pieces=1_000_000):
    """Split the segment into equal pieces and bin each midpoint into its voxel.

    A midpoint lying exactly on a voxel face belongs to the lower-index voxel,
    and the closed box counts as inside.
    """
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    length = np.linalg.norm(p1 - p0)
    t = (np.arange(pieces) + 0.5) / pieces
    pts = p0 + t[:, None] * (p1 - p0)
    rel = (pts - grid.lower) / np.asarray(grid.voxel_size)
    counts = np.asarray(grid.counts)
    inside = np.all((rel >= 0) & (rel <= counts), axis=1)
    ijk = np.clip(np.ceil(rel[inside]).astype(int) - 1, 0, counts - 1)
    lin = grid.linear_index(ijk)
    return np.bincount(lin, minlength=grid.n_voxels) * (length / pieces)


def dense_row(idx, dist, grid):
    row = np.zeros(grid.n_voxels)
    np.add.at(row, idx, dist)
    return row


def clipped_length(p0, p1, grid, samples=None):
    """Length of the segment inside the grid box via slab clipping, by hand."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for ax in range(3):
        lo, hi = grid.lower[ax], grid.upper[ax]
        if d[ax] == 0:
            if not lo <= p0[ax] <= hi:
                return 0.0
            continue
        a, b = sorted(((lo - p0[ax]) / d[ax], (hi - p0[ax]) / d[ax]))
        t0, t1 = max(t0, a), min(t1, b)
    return max(0.0, t1 - t0) * float(np.linalg.norm(d))
