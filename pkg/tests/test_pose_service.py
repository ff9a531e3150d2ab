import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.base_model import CropVolume, Detection3D, JointHeatmap3D, Pose3D, VoxelGrid
from services.errors import ContractViolation
from services.geometry_service import build_projection_table, project_points, project_to_views, voxel_center
from services.heatmap_service import render_gaussian_heatmap
from services.pose_service import (
    attach_projections,
    decode_pose,
    decode_poses,
    detect_roots,
    extract_crop,
    filter_by_view_support,
    loss_arn,
    root_view_support,
    soft_argmax,
)
from services.volume_service import gt_heatmap3d

SMALL_GRID = VoxelGrid(origin=(0, 0, 0), extent=(4000, 4000, 2000), bins=(64, 64, 32))
CUBE_GRID = VoxelGrid(origin=(0, 0, 0), extent=(2000, 2000, 2000), bins=(32, 32, 32))
SUPPORT_GRID = VoxelGrid(origin=(0, 0, 0), extent=(4000, 4000, 2000), bins=(16, 16, 8))


def root_volume(peaks, grid=SMALL_GRID):
    values = np.zeros((1,) + grid.bins, dtype=np.float32)
    for index, value in peaks:
        values[(0,) + tuple(index)] = value
    return JointHeatmap3D(grid=grid, values=values)


def nearest_voxel(grid, point):
    index = (np.asarray(point, dtype=np.float64) - np.asarray(grid.origin)) / grid.voxel_size - 0.5
    return tuple(int(i) for i in np.rint(index))


def random_root_volume(seed):
    rng = np.random.default_rng(seed)
    grid = VoxelGrid(origin=(0, 0, 0), extent=(750, 750, 750), bins=(12, 12, 12))
    return JointHeatmap3D(grid=grid, values=rng.random((1, 12, 12, 12)))


# ✅ 루트 NMS ---------------------------------------------------------------------

def test_zero_heatmap_has_no_roots():
    assert detect_roots(root_volume([]), 0, 0.3, 500.0) == []


def test_far_apart_peaks_are_both_kept():
    roots = detect_roots(root_volume([((8, 8, 8), 1.0), ((56, 8, 8), 1.0)]), 0, 0.3, 500.0)

    assert [index for index, _ in roots] == [(8, 8, 8), (56, 8, 8)]


def test_weaker_peak_within_radius_is_suppressed():
    roots = detect_roots(root_volume([((10, 10, 10), 0.8), ((13, 10, 10), 0.9)]), 0, 0.3, 500.0)

    assert roots == [((13, 10, 10), pytest.approx(0.9))]


def test_roots_below_confidence_are_dropped():
    roots = detect_roots(root_volume([((8, 8, 8), 0.2), ((40, 40, 20), 0.7)]), 0, 0.3, 500.0)

    assert [index for index, _ in roots] == [(40, 40, 20)]


@pytest.mark.parametrize("min_confidence, radius", [(0.0, 500.0), (1.0, 500.0), (0.3, 0.0)])
def test_detect_roots_validates_arguments(min_confidence, radius):
    with pytest.raises(ContractViolation):
        detect_roots(root_volume([]), 0, min_confidence, radius)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.95), st.floats(60.0, 400.0))
def test_roots_are_sorted_separated_strict_maxima(seed, min_confidence, radius):
    heatmap = random_root_volume(seed)
    values = heatmap.values[0]
    roots = detect_roots(heatmap, 0, min_confidence, radius)

    confidences = [c for _, c in roots]
    assert confidences == sorted(confidences, reverse=True)
    assert all(c >= min_confidence for c in confidences)
    padded = np.pad(values, 1)
    for index, confidence in roots:
        x, y, z = index
        neighborhood = padded[x:x + 3, y:y + 3, z:z + 3].copy()
        neighborhood[1, 1, 1] = -1.0
        assert confidence == values[index] > neighborhood.max()
    size = heatmap.grid.voxel_size
    for i, (a, _) in enumerate(roots):
        for b, _ in roots[i + 1:]:
            assert np.linalg.norm((np.array(a) - np.array(b)) * size) >= radius


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.9), st.floats(0.0, 0.09), st.floats(60.0, 400.0))
def test_raising_min_confidence_only_drops_the_weakest(seed, low, delta, radius):
    heatmap = random_root_volume(seed)
    high = low + delta
    loose = detect_roots(heatmap, 0, low, radius)
    strict = detect_roots(heatmap, 0, high, radius)

    assert strict == [(index, c) for index, c in loose if c >= high]
    assert len(strict) <= len(loose)


# ✅ 크롭 / soft-argmax -----------------------------------------------------------

def joint_volume(joints, grid=CUBE_GRID):
    return gt_heatmap3d([Pose3D(np.asarray(joints, dtype=np.float64))], grid, sigma_mm=62.5)


def test_crop_at_grid_corner_is_zero_padded():
    values = np.zeros((1,) + SMALL_GRID.bins)
    values[0, 0, 0, 0] = 1.0
    values[0, 1, 0, 0] = 0.5
    crop = extract_crop(JointHeatmap3D(grid=SMALL_GRID, values=values), (0, 0, 0), 32, 6.0, 0.5)

    assert crop.values.shape == (1, 32, 32, 32)
    np.testing.assert_array_equal(crop.offset, [-16, -16, -16])
    assert not crop.values[0, :16].any()
    assert not crop.values[0, :, :16].any()
    assert crop.values[0].sum() == pytest.approx(1.0)
    assert crop.values[0, 16, 16, 16] == pytest.approx(2.0 / 3.0)


def test_crop_keeps_only_the_blob_nearest_the_anchor():
    values = np.zeros((1,) + SMALL_GRID.bins)
    values[0, 22, 20, 16] = 0.6
    values[0, 32, 20, 16] = 1.0
    crop = extract_crop(JointHeatmap3D(grid=SMALL_GRID, values=values), (20, 20, 16), 32, 6.0, 0.5)

    local = crop.values[0]
    assert local[18, 16, 16] == pytest.approx(1.0)
    assert local[28, 16, 16] == 0.0


def test_extract_crop_rejects_anchor_outside_the_grid():
    with pytest.raises(ContractViolation):
        extract_crop(root_volume([]), (64, 0, 0))


def test_soft_argmax_single_voxel_and_midpoint():
    single = np.zeros((2, 4, 4, 4))
    single[0, 1, 2, 3] = 1.0
    single[1, 1, 1, 1] = 0.5
    single[1, 2, 1, 1] = 0.5
    crop = CropVolume(anchor=(2, 2, 2), offset=np.array([10, 10, 10]), values=single, degenerate=np.zeros(2, bool))

    position, degenerate = soft_argmax(crop, 0, SMALL_GRID)
    assert not degenerate
    np.testing.assert_allclose(position, voxel_center(SMALL_GRID, (11, 12, 13)))
    midpoint, _ = soft_argmax(crop, 1, SMALL_GRID)
    expected = (voxel_center(SMALL_GRID, (11, 11, 11)) + voxel_center(SMALL_GRID, (12, 11, 11))) / 2
    np.testing.assert_allclose(midpoint, expected)


def test_empty_joint_channel_falls_back_to_the_anchor():
    values = np.zeros((2,) + SMALL_GRID.bins)
    values[0, 20, 20, 10] = 1.0
    detection = decode_pose(JointHeatmap3D(grid=SMALL_GRID, values=values), (20, 20, 10), 0.9)

    assert detection.pose.degenerate.tolist() == [False, True]
    np.testing.assert_allclose(detection.pose.joints[1], voxel_center(SMALL_GRID, (20, 20, 10)))
    assert detection.confidence == 0.9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_soft_argmax_stays_within_active_voxels(seed, count):
    rng = np.random.default_rng(seed)
    values = np.zeros((1, 6, 6, 6))
    active = rng.integers(0, 6, size=(count, 3))
    values[(0,) + tuple(active.T)] = rng.uniform(0.1, 1.0, size=count)
    values /= values.sum()
    crop = CropVolume(anchor=(3, 3, 3), offset=np.zeros(3, dtype=np.int64), values=values, degenerate=np.zeros(1, bool))

    position, _ = soft_argmax(crop, 0, SMALL_GRID)
    centers = np.array([voxel_center(SMALL_GRID, a) for a in active])
    assert np.all(position >= centers.min(axis=0) - 1e-9)
    assert np.all(position <= centers.max(axis=0) + 1e-9)


@pytest.mark.slow
def test_off_lattice_gaussians_are_recovered_below_voxel_pitch():
    # 70 자세 × 15 관절 = 1050 개의 격자 밖 위치
    errors = []
    for seed in range(70):
        rng = np.random.default_rng(seed)
        joints = 1000.0 + rng.uniform(-300.0, 300.0, size=(15, 3))
        detection = decode_pose(joint_volume(joints), nearest_voxel(CUBE_GRID, joints[0]), 1.0)
        errors.extend(np.linalg.norm(detection.pose.joints - joints, axis=1))

    assert len(errors) >= 1000
    assert max(errors) < 5.0


def shifted(heatmap, shift):
    """정수 복셀만큼 평행 이동한 볼륨 (밀려난 자리는 0)"""
    values = np.zeros_like(heatmap.values)
    src = tuple(slice(max(0, -s), b - max(0, s)) for s, b in zip(shift, heatmap.grid.bins))
    dst = tuple(slice(max(0, s), b - max(0, -s)) for s, b in zip(shift, heatmap.grid.bins))
    values[(slice(None),) + dst] = heatmap.values[(slice(None),) + src]
    return JointHeatmap3D(grid=heatmap.grid, values=values)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.tuples(*[st.integers(-3, 3)] * 3))
def test_decoding_commutes_with_grid_translation(seed, shift):
    joints = 1000.0 + np.random.default_rng(seed).uniform(-300.0, 300.0, size=(15, 3))
    heatmap = joint_volume(joints)
    anchor = nearest_voxel(CUBE_GRID, joints[0])
    moved_anchor = tuple(a + s for a, s in zip(anchor, shift))

    original = decode_pose(heatmap, anchor, 1.0).pose.joints
    moved = decode_pose(shifted(heatmap, shift), moved_anchor, 1.0).pose.joints
    expected = np.tile(np.array(shift) * CUBE_GRID.voxel_size, (len(original), 1))
    np.testing.assert_allclose(moved - original, expected, atol=1e-6)


def test_isolated_person_ignores_far_away_persons():
    grid = VoxelGrid(origin=(0, 0, 0), extent=(10000, 10000, 2000), bins=(80, 80, 16))
    near = 1500.0 + np.random.default_rng(0).uniform(-200, 200, size=(15, 3))
    near[:, 2] = np.abs(near[:, 2] - 1000.0)
    far = near + np.array([6500.0, 6500.0, 0.0])
    alone = gt_heatmap3d([Pose3D(near)], grid, 62.5)
    together = gt_heatmap3d([Pose3D(near), Pose3D(far)], grid, 62.5)
    anchor = nearest_voxel(grid, near[0])

    np.testing.assert_allclose(decode_pose(together, anchor, 1.0).pose.joints, decode_pose(alone, anchor, 1.0).pose.joints)


def test_decode_poses_keeps_detection_order(executor):
    joints = 1000.0 + np.random.default_rng(1).uniform(-200.0, 200.0, size=(15, 3))
    heatmap = joint_volume(joints)
    anchor = nearest_voxel(CUBE_GRID, joints[0])
    roots = [(anchor, 0.9), ((4, 4, 4), 0.5)]

    assert decode_poses(heatmap, []) == []
    sequential = decode_poses(heatmap, roots)
    parallel = decode_poses(heatmap, roots, executor=executor)
    assert [d.confidence for d in parallel] == [0.9, 0.5]
    for a, b in zip(sequential, parallel):
        np.testing.assert_array_equal(a.pose.joints, b.pose.joints)


# ✅ 뷰 지지 / 투영 ----------------------------------------------------------------

def pelvis_heatmaps(table, cameras, point, views):
    """point 의 골반 블롭을 views 에만 그린 1채널 히트맵"""
    projections = project_to_views(cameras, point, table.stride)
    heatmaps = []
    for view, (height, width) in enumerate(table.heatmap_shapes):
        u, v, _ = projections[view]
        heatmaps.append(render_gaussian_heatmap([np.array([[u, v, float(view in views)]])], 2.0, (1, height, width)))
    return heatmaps


@pytest.fixture
def support_table(cameras):
    return build_projection_table(SUPPORT_GRID, cameras, 4)


def test_root_needs_a_majority_of_supporting_views(cameras, support_table):
    anchor = (8, 8, 3)
    point = voxel_center(SUPPORT_GRID, anchor)
    roots = [(anchor, 0.9)]
    assert len(cameras) == 5
    assert support_table.visible[:, np.ravel_multi_index(anchor, SUPPORT_GRID.bins)].all()

    for count in range(6):
        heatmaps = pelvis_heatmaps(support_table, cameras, point, set(range(count)))
        assert root_view_support(heatmaps, support_table, [anchor]).tolist() == [count]
        assert filter_by_view_support(roots, heatmaps, support_table) == (roots if count >= 3 else [])


def test_two_view_crossing_is_kept_only_with_a_looser_fraction(cameras, support_table):
    anchor = (8, 8, 3)
    heatmaps = pelvis_heatmaps(support_table, cameras, voxel_center(SUPPORT_GRID, anchor), {0, 1})
    roots = [(anchor, 0.4)]

    assert filter_by_view_support(roots, heatmaps, support_table, min_fraction=0.5) == []
    assert filter_by_view_support(roots, heatmaps, support_table, min_fraction=0.2) == roots


def test_view_support_checks_its_inputs(cameras, support_table):
    heatmaps = pelvis_heatmaps(support_table, cameras, voxel_center(SUPPORT_GRID, (8, 8, 3)), set())

    assert root_view_support(heatmaps, support_table, []).shape == (0,)
    assert filter_by_view_support([], heatmaps, support_table) == []
    with pytest.raises(ContractViolation):
        root_view_support(heatmaps[:2], support_table, [(8, 8, 3)])


def test_attached_projections_are_the_pelvis_in_heatmap_pixels(cameras):
    joints = 2000.0 + np.random.default_rng(4).uniform(-300.0, 300.0, size=(15, 3))
    joints[:, 2] -= 1000.0
    detection = Detection3D(pose=Pose3D(joints), confidence=0.8, anchor=(8, 8, 3))

    [attached] = attach_projections([detection], cameras, 4)
    assert detection.projections is None
    assert attached.projections.shape == (len(cameras), 3)
    assert (attached.anchor, attached.confidence) == (detection.anchor, detection.confidence)
    for view, camera in enumerate(cameras):
        uv, depth = project_points(camera, joints[:1])
        np.testing.assert_allclose(attached.projections[view], [uv[0, 0] / 4, uv[0, 1] / 4, depth[0]])


# ✅ L_ARN -----------------------------------------------------------------------

def test_loss_arn_examples():
    target = Pose3D(np.zeros((15, 3)))
    shifted = np.zeros((15, 3))
    shifted[4] = [1.0, 2.0, 3.0]

    assert loss_arn(target, target) == 0.0
    assert loss_arn(Pose3D(shifted), target) == pytest.approx(6.0)
    with pytest.raises(ContractViolation):
        loss_arn(Pose3D(np.zeros((14, 3))), target)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_loss_arn_matches_naive_sum(seed):
    rng = np.random.default_rng(seed)
    pred, target = rng.normal(0, 500, size=(2, 15, 3))
    naive = 0.0
    for k in range(15):
        for axis in range(3):
            naive += abs(target[k, axis] - pred[k, axis])

    assert loss_arn(Pose3D(pred), Pose3D(target)) == pytest.approx(naive, abs=1e-9)
