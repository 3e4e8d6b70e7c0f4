import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rftensor.rf_sim import (
    ChannelParams,
    GeometryError,
    Link,
    Node,
    VoxelGrid,
    apply_linear_map,
    build_sensing_ensemble,
    default_rings,
    enumerate_links,
    link_voxel_distances,
    place_nodes,
    sample_links,
    segment_voxel_distances,
    sensing_matrix,
    shadowing_loss,
    simulate_rss,
)

from oracles import clipped_length, dense_row, fine_sampling

DESK = VoxelGrid((20, 20, 5))


def perimeter_position(x, y, grid):
    """Arc length from the midpoint of the y = 0 face, counterclockwise."""
    lx, ly = grid.extent[0], grid.extent[1]
    if y == 0 and x >= lx / 2:
        return x - lx / 2
    if x == lx:
        return lx / 2 + y
    if y == ly:
        return lx / 2 + ly + (lx - x)
    if x == 0:
        return 1.5 * lx + ly + (ly - y)
    return 1.5 * lx + 2 * ly + x


# ---------------------------------------------------------------------------
# geometry


def test_voxel_grid_validation():
    with pytest.raises(GeometryError):
        VoxelGrid((0, 2, 2))
    with pytest.raises(GeometryError):
        VoxelGrid((2, 2, 2), (1.0, 0.0, 1.0))


def test_four_nodes_on_face_midpoints():
    grid = VoxelGrid((10, 6, 4))
    pos = sorted(n.position for n in place_nodes(4, grid, rings=1))
    assert pos == sorted([(5.0, 0.0, 2.0), (10.0, 3.0, 2.0), (5.0, 6.0, 2.0), (0.0, 3.0, 2.0)])


def test_eight_nodes_uniform_arc_spacing():
    grid = VoxelGrid((10, 6, 4))
    s = [perimeter_position(n.position[0], n.position[1], grid) for n in place_nodes(8, grid, rings=1)]
    np.testing.assert_allclose(np.diff(s), 32.0 / 8, atol=1e-9)


def test_forty_nodes_on_lateral_surface():
    grid = VoxelGrid((60, 60, 15))
    nodes = place_nodes(40, grid)
    assert len({n.id for n in nodes}) == 40
    for n in nodes:
        x, y, z = n.position
        on_face = math.isclose(x, 0) or math.isclose(x, 60) or math.isclose(y, 0) or math.isclose(y, 60)
        assert on_face and 0 <= x <= 60 and 0 <= y <= 60 and 0 < z < 15


def test_rings_equally_spaced_and_staggered():
    grid = VoxelGrid((20, 20, 5), (1, 1, 4))
    nodes = place_nodes(20, grid, rings=5, stagger=True)
    z = sorted({n.position[2] for n in nodes})
    np.testing.assert_allclose(z, [2, 6, 10, 14, 18])
    first = [perimeter_position(*nodes[4 * q].position[:2], grid) for q in range(5)]
    np.testing.assert_allclose(first, [80 / 4 * q / 5 for q in range(5)], atol=1e-9)


def test_place_nodes_errors():
    with pytest.raises(GeometryError):
        place_nodes(3, DESK)
    with pytest.raises(GeometryError):
        place_nodes(10, DESK, rings=3)


def test_default_rings_matches_spacing():
    # perimeter spacing 80/24 for 5 rings of 24 over a 20 m height: both about 4 m
    assert default_rings(120, VoxelGrid((20, 20, 5), (1, 1, 4))) == 5
    assert default_rings(4, DESK) == 1


def test_link_counts_small():
    nodes = [Node(i, (float(i), 0.0, 0.0)) for i in range(5)]
    links = enumerate_links(nodes)
    assert [(l.tx, l.rx) for l in links] == list(itertools.combinations(range(5), 2))
    assert len(enumerate_links(nodes[:2])) == 1
    assert links[3].length == pytest.approx(4.0)


def test_forty_nodes_give_780_links():
    assert len(enumerate_links(place_nodes(40, VoxelGrid((60, 60, 15))))) == 780


@settings(max_examples=20, deadline=None)
@given(K=st.integers(2, 50))
def test_link_count_property(K):
    nodes = [Node(i, (float(i), 1.0, 2.0)) for i in range(K)]
    assert len(enumerate_links(nodes)) == (K * K - K) // 2


def test_link_errors():
    with pytest.raises(GeometryError):
        enumerate_links([Node(0, (0.0, 0.0, 0.0))])
    with pytest.raises(GeometryError):
        enumerate_links([Node(0, (0.0, 0.0, 0.0)), Node(0, (1.0, 0.0, 0.0))])


# ---------------------------------------------------------------------------
# traversal


def test_axis_aligned_row():
    grid = VoxelGrid((10, 3, 3))
    idx, dist = segment_voxel_distances((0, 1.5, 1.5), (10, 1.5, 1.5), grid)
    assert len(idx) == 10
    np.testing.assert_allclose(dist, 1.0, atol=1e-12)
    np.testing.assert_array_equal(idx, grid.linear_index(np.array([[i, 1, 1] for i in range(10)])))


def test_cube_diagonal():
    idx, dist = segment_voxel_distances((0, 0, 0), (1, 1, 1), VoxelGrid((1, 1, 1)))
    assert list(idx) == [0]
    assert dist[0] == pytest.approx(math.sqrt(3), abs=1e-12)


def test_segment_on_boundary_plane_goes_to_lower_voxel():
    grid = VoxelGrid((4, 4, 4))
    idx, dist = segment_voxel_distances((-1, 0.5, 2.0), (5, 0.5, 2.0), grid)
    ijk = np.stack(np.unravel_index(idx, grid.counts), axis=1)
    assert np.all(ijk[:, 2] == 1)
    assert dist.sum() == pytest.approx(4.0)


def test_segment_on_outer_face_stays_in_grid():
    grid = VoxelGrid((4, 4, 4))
    idx, dist = segment_voxel_distances((0, 0, 0), (4, 0, 0), grid)
    assert list(idx) == [grid.linear_index(np.array([i, 0, 0])) for i in range(4)]
    np.testing.assert_allclose(dist, 1.0)


def test_segment_missing_grid():
    idx, dist = segment_voxel_distances((-5, -5, 0), (-1, 30, 0), DESK)
    assert idx.size == 0 and dist.size == 0


def test_zero_length_segment_raises():
    with pytest.raises(GeometryError):
        segment_voxel_distances((1, 1, 1), (1, 1, 1), DESK)


def test_anisotropic_voxels_and_origin():
    grid = VoxelGrid((4, 2, 3), (0.5, 2.0, 1.5), (1.0, -2.0, 0.5))
    p0, p1 = (0.7, -2.5, 0.2), (3.4, 2.3, 5.1)
    idx, dist = segment_voxel_distances(p0, p1, grid)
    np.testing.assert_allclose(dense_row(idx, dist, grid), fine_sampling(p0, p1, grid), atol=1e-4)


def test_random_links_match_fine_sampling():
    rng = np.random.default_rng(7)
    for _ in range(5):
        p0 = rng.uniform([-2, -2, -1], [22, 22, 6])
        p1 = rng.uniform([-2, -2, -1], [22, 22, 6])
        idx, dist = segment_voxel_distances(p0, p1, DESK)
        err = np.abs(dense_row(idx, dist, DESK) - fine_sampling(p0, p1, DESK))
        assert err.max() < 1e-4


@settings(max_examples=100, deadline=None)
@given(
    p0=st.tuples(*[st.floats(-3, 23, allow_nan=False)] * 2, st.floats(-2, 7, allow_nan=False)),
    p1=st.tuples(*[st.floats(-3, 23, allow_nan=False)] * 2, st.floats(-2, 7, allow_nan=False)),
)
def test_distance_conservation_property(p0, p1):
    if np.linalg.norm(np.subtract(p1, p0)) < 1e-6:
        return
    idx, dist = segment_voxel_distances(p0, p1, DESK)
    assert np.all(dist >= 0)
    assert len(set(idx.tolist())) == len(idx)
    assert np.all((idx >= 0) & (idx < DESK.n_voxels))
    assert dist.sum() == pytest.approx(clipped_length(p0, p1, DESK), abs=1e-9)


@pytest.mark.parametrize("grid", [DESK, VoxelGrid((20, 20, 5), (1, 1, 4))])
def test_conservation_all_links(grid):
    nodes = place_nodes(24, grid)
    pos = {n.id: n.position for n in nodes}
    for link in enumerate_links(nodes):
        idx, dist = link_voxel_distances(link, grid, nodes)
        assert dist.sum() == pytest.approx(clipped_length(pos[link.tx], pos[link.rx], grid), abs=1e-9)
        assert dist.sum() <= link.length + 1e-9
        assert np.all(dist >= 0)


# ---------------------------------------------------------------------------
# channel model


@pytest.fixture(scope="module")
def scene():
    grid = VoxelGrid((10, 10, 4))
    nodes = place_nodes(24, grid)
    return grid, nodes, enumerate_links(nodes)


def test_shadowing_examples(scene):
    grid, nodes, links = scene
    link = links[37]
    assert shadowing_loss(link, np.zeros(grid.counts), grid, nodes) == 0.0
    idx, dist = link_voxel_distances(link, grid, nodes)
    assert shadowing_loss(link, np.full(grid.counts, 0.7), grid, nodes) == pytest.approx(0.7 * dist.sum())


def test_shadowing_matches_dense_inner_product(scene, rng):
    grid, nodes, links = scene
    X = rng.uniform(0, 1, grid.counts)
    for link in links[::25]:
        D = dense_row(*link_voxel_distances(link, grid, nodes), grid).reshape(grid.counts)
        assert shadowing_loss(link, X, grid, nodes) == pytest.approx(float(np.sum(D * X)), rel=1e-12)
        assert shadowing_loss(link, X, grid, nodes) >= 0


def test_shadowing_dims_mismatch(scene):
    grid, nodes, links = scene
    with pytest.raises(GeometryError):
        shadowing_loss(links[0], np.zeros((3, 3, 3)), grid, nodes)


def test_rss_noiseless(scene):
    grid, nodes, links = scene
    p = ChannelParams()
    link = links[11]
    base = simulate_rss(link, np.zeros(grid.counts), p, grid, nodes)
    assert base == p.tx_power - (p.reference_loss + 10 * p.path_loss_exponent * math.log10(link.length))
    c = 0.3
    clipped = link_voxel_distances(link, grid, nodes)[1].sum()
    shaded = simulate_rss(link, np.full(grid.counts, c), p, grid, nodes)
    assert base - shaded == pytest.approx(c * clipped, abs=1e-12)


def test_rss_noise_statistics(scene):
    grid, nodes, links = scene
    p = ChannelParams(noise_sigma=2.0)
    link = links[5]
    X = np.zeros(grid.counts)
    clean = simulate_rss(link, X, ChannelParams(), grid, nodes)
    rng = np.random.default_rng(99)
    draws = np.array([simulate_rss(link, X, p, grid, nodes, rng) for _ in range(10_000)])
    assert abs(draws.mean() - clean) < 3 * 2.0 / 100
    assert abs(draws.std() - 2.0) < 0.05 * 2.0


def test_rss_zero_length_link(scene):
    grid, nodes, _ = scene
    with pytest.raises(GeometryError):
        simulate_rss(Link(0, 0, 0.0), np.zeros(grid.counts), ChannelParams(), grid, nodes)


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelParams(noise_sigma=-1)
    with pytest.raises(ValueError):
        ChannelParams(path_loss_exponent=0)


# ---------------------------------------------------------------------------
# sampling and ensembles


def test_sample_links_examples():
    links = [Link(0, 1, 1.0)] * 780
    assert sample_links(links, 1.0, 3) == list(range(780))
    half = sample_links(links, 0.5, 3)
    assert len(half) == 390 and len(set(half)) == 390
    assert sample_links(links, 0.5, 3) == half
    assert sample_links(links, 0.5, 4) != half


def test_sample_links_errors():
    links = [Link(0, 1, 1.0)] * 10
    with pytest.raises(ValueError):
        sample_links(links, 0.0, 0)
    with pytest.raises(ValueError):
        sample_links(links, 0.01, 0)
    with pytest.raises(ValueError):
        sample_links(links, 1.5, 0)


def test_ensemble_noiseless_zero_field(scene):
    grid, nodes, links = scene
    H = build_sensing_ensemble(sample_links(links, 0.5, 0), links, nodes, np.zeros(grid.counts), grid, ChannelParams())
    assert np.all(H.y == 0)


def test_ensemble_matches_shadowing(scene, rng):
    grid, nodes, links = scene
    X = rng.uniform(0, 1, grid.counts)
    sel = sample_links(links, 0.3, 1)
    H = build_sensing_ensemble(sel, links, nodes, X, grid, ChannelParams())
    for m, i in enumerate(sel):
        assert H.y[m] == pytest.approx(shadowing_loss(links[i], X, grid, nodes), rel=1e-12)


def test_ensemble_dense_vectorized_oracle():
    from rftensor.phantom import PhantomSpec, make_phantom

    grid = DESK
    nodes = place_nodes(40, grid)
    links = enumerate_links(nodes)
    X = make_phantom(PhantomSpec(dims=grid.counts, rank=2, seed=4))
    H = build_sensing_ensemble(sample_links(links, 0.5, 2), links, nodes, X, grid, ChannelParams())
    assert H.M == 390
    A = H.dense_tensors()
    ref = np.array([A[m].ravel() @ X.ravel() for m in range(H.M)])
    np.testing.assert_allclose(H.y, ref, atol=1e-10 * np.abs(ref).max())
    assert np.all(H.matrix.data >= 0)


def test_noise_determinism(scene, rng):
    grid, nodes, links = scene
    X = rng.uniform(0, 1, grid.counts)
    sel = sample_links(links, 0.5, 0)
    y = [build_sensing_ensemble(sel, links, nodes, X, grid, ChannelParams(noise_sigma=1.0, rng_seed=s)).y for s in (5, 5, 6)]
    assert np.array_equal(y[0], y[1])
    assert not np.array_equal(y[0], y[2])


def test_empty_selection_raises(scene):
    grid, nodes, links = scene
    with pytest.raises(GeometryError):
        build_sensing_ensemble([], links, nodes, np.zeros(grid.counts), grid, ChannelParams())


def test_linear_map_oracle_and_linearity():
    grid = VoxelGrid((10, 10, 4))
    nodes = place_nodes(24, grid)
    links = enumerate_links(nodes)
    rng = np.random.default_rng(3)
    H = build_sensing_ensemble(sample_links(links, 0.6, 0), links, nodes, np.zeros(grid.counts), grid, ChannelParams())
    assert np.all(apply_linear_map(H, np.zeros(grid.counts)) == 0)
    A = H.dense_tensors()
    for _ in range(100):
        X, Y = rng.standard_normal((2, *grid.counts))
        a, b = rng.standard_normal(2)
        lhs = apply_linear_map(H, a * X + b * Y)
        rhs = a * apply_linear_map(H, X) + b * apply_linear_map(H, Y)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))
    X = rng.standard_normal(grid.counts)
    ref = np.einsum("mijk,ijk->m", A, X)
    np.testing.assert_allclose(apply_linear_map(H, X), ref, atol=1e-10)
    with pytest.raises(GeometryError):
        apply_linear_map(H, np.zeros((2, 2, 2)))


def test_sensing_matrix_rows_sorted(scene):
    grid, nodes, links = scene
    A = sensing_matrix(links[:50], grid, nodes)
    assert A.has_sorted_indices
    assert A.shape == (50, grid.n_voxels)
