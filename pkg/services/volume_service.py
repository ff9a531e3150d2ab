"""
3D 특징 볼륨 서비스 (JEN 대체).

- 모든 뷰의 2D 히트맵을 복셀 중심 투영 위치에서 샘플링해 평균 → 특징 볼륨
- 임계값(0.15) 미만 복셀 제거 → 정렬 COO 희소 볼륨
- 밀집/희소 3D 합성곱, 분리형 가우시안 스무딩 → 3D 관절 히트맵
- 학습 타깃(GT 3D 히트맵)과 L_JEN 손실 (평가 전용)

합성곱 누적 순서는 커널 오프셋 (dx, dy, dz) 의 x-major 순서로 고정되어
스레드 수와 무관하게 같은 결과를 냅니다.
"""
import logging
from itertools import product
from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

from models.base_model import (
    FeatureVolume,
    Heatmap2D,
    JointHeatmap3D,
    Pose3D,
    ProjectionTable,
    SparseVolume,
    VoxelGrid,
)
from services.errors import ContractViolation, InvariantViolation
from services.heatmap_service import sample_bilinear_many

logger = logging.getLogger(__name__)

SAMPLE_CHUNK = 1 << 18


# ✅ 특징 볼륨 생성 ----------------------------------------------------------------

def _check_views(heatmaps: Sequence[Heatmap2D], table: ProjectionTable):
    if len(heatmaps) == 0:
        raise ContractViolation("특징 볼륨 생성에는 최소 1개의 뷰가 필요합니다.")
    if len(heatmaps) != table.num_views:
        raise ContractViolation(
            f"히트맵 뷰 수({len(heatmaps)})와 투영 테이블 뷰 수({table.num_views})가 다릅니다."
        )
    for view, heatmap in enumerate(heatmaps):
        if heatmap.values.shape[1:] != table.heatmap_shapes[view]:
            raise ContractViolation(
                f"view {view}: 히트맵 크기 {heatmap.values.shape[1:]} 가 "
                f"테이블 {table.heatmap_shapes[view]} 와 다릅니다."
            )


def _fused_samples(maps: Sequence[np.ndarray], table: ProjectionTable, voxel_ids: np.ndarray) -> np.ndarray:
    """
    voxel_ids 에 대해 (1/V) Σ_v sample(H_v) 를 계산합니다 (n×C, float32).
    보이지 않는 뷰의 기여는 0 이고, 나누는 값은 전체 카메라 수 V 입니다.
    """
    channels = maps[0].shape[0]
    fused = np.zeros((len(voxel_ids), channels), dtype=np.float32)
    for start in range(0, len(voxel_ids), SAMPLE_CHUNK):
        ids = voxel_ids[start:start + SAMPLE_CHUNK]
        acc = np.zeros((len(ids), channels), dtype=np.float32)
        for view, values in enumerate(maps):
            samples = sample_bilinear_many(values, table.u[view, ids], table.v[view, ids])
            samples[~table.visible[view, ids]] = 0.0
            acc += samples
        fused[start:start + SAMPLE_CHUNK] = acc / np.float32(table.num_views)
    return fused


def build_feature_volume(heatmaps: Sequence[Heatmap2D], table: ProjectionTable) -> FeatureVolume:
    _check_views(heatmaps, table)
    grid = table.grid
    maps = [h.values.astype(np.float32, copy=False) for h in heatmaps]
    fused = _fused_samples(maps, table, np.arange(grid.num_voxels))
    return FeatureVolume(grid=grid, values=fused.T.reshape((maps[0].shape[0],) + grid.bins))


def build_sparse_feature_volume(
    heatmaps: Sequence[Heatmap2D], table: ProjectionTable, threshold: float = 0.15
) -> SparseVolume:
    """
    sparsify(build_feature_volume(...), threshold) 와 같은 결과를 밀집 볼륨 없이 계산합니다.

    쌍선형 샘플링은 음이 아닌 가중치의 선형 결합이므로 채널별 최댓값 맵을 먼저
    샘플링한 값 Σ_v max_c 는 max_c Σ_v 의 상한입니다. 상한이 임계값보다 작은
    복셀은 후보에서 제외하고, 남은 후보만 전체 채널로 다시 계산합니다.
    """
    _check_views(heatmaps, table)
    grid = table.grid
    maps = [h.values.astype(np.float32, copy=False) for h in heatmaps]
    channels = maps[0].shape[0]

    envelopes = [values.max(axis=0, keepdims=True) for values in maps]
    bound = _fused_samples(envelopes, table, np.arange(grid.num_voxels))[:, 0]
    candidates = np.nonzero((bound >= threshold - 1e-5) & (bound > 0))[0]

    fused = _fused_samples(maps, table, candidates)
    peak = fused.max(axis=1) if len(fused) else np.zeros(0, dtype=np.float32)
    keep = (peak >= threshold) & (peak > 0)
    ids = candidates[keep]
    coords = np.stack(np.unravel_index(ids, grid.bins), axis=1).astype(np.int64)
    logger.debug(f"🔹 희소 볼륨: 후보 {len(candidates)} → 유지 {len(ids)}")
    return SparseVolume(grid=grid, coords=coords, features=fused[keep], channels=channels)


def sparsify(volume: FeatureVolume, threshold: float = 0.15) -> SparseVolume:
    if threshold < 0:
        raise ContractViolation(f"threshold 는 0 이상이어야 합니다: {threshold}")
    grid = volume.grid
    flat = volume.values.reshape(volume.channels, -1)
    peak = flat.max(axis=0)
    ids = np.nonzero((peak >= threshold) & (peak > 0))[0]
    coords = np.stack(np.unravel_index(ids, grid.bins), axis=1).astype(np.int64)
    return SparseVolume(grid=grid, coords=coords, features=flat[:, ids].T.copy(), channels=volume.channels)


def densify(sparse: SparseVolume) -> FeatureVolume:
    return FeatureVolume(grid=sparse.grid, values=sparse.to_dense())


# ✅ 희소 좌표 인덱스 --------------------------------------------------------------

def linear_keys(coords: np.ndarray, bins: Tuple[int, int, int]) -> np.ndarray:
    _, y_bins, z_bins = bins
    return (coords[:, 0] * y_bins + coords[:, 1]) * z_bins + coords[:, 2]


def lookup(sorted_keys: np.ndarray, query_keys: np.ndarray):
    """정렬된 키에서 query 의 위치를 이진 탐색으로 찾습니다. (index, found)"""
    if len(sorted_keys) == 0:
        return np.zeros(len(query_keys), dtype=np.int64), np.zeros(len(query_keys), dtype=bool)
    pos = np.searchsorted(sorted_keys, query_keys)
    pos = np.minimum(pos, len(sorted_keys) - 1)
    return pos, sorted_keys[pos] == query_keys


def _in_bounds(coords: np.ndarray, bins) -> np.ndarray:
    return np.all((coords >= 0) & (coords < np.asarray(bins)), axis=1)


def _unique_coords(coords: np.ndarray, bins) -> np.ndarray:
    coords = coords[_in_bounds(coords, bins)]
    keys = np.unique(linear_keys(coords, bins))
    return np.stack(np.unravel_index(keys, bins), axis=1).astype(np.int64)


# ✅ 3D 합성곱 ---------------------------------------------------------------------

def _check_kernel(kernel: np.ndarray, bias: np.ndarray, in_channels: int):
    if kernel.ndim != 5 or len(set(kernel.shape[2:])) != 1:
        raise ContractViolation(f"커널은 C_out×C_in×k×k×k 이어야 합니다: {kernel.shape}")
    if kernel.shape[2] % 2 == 0:
        raise ContractViolation(f"커널 크기는 홀수여야 합니다: {kernel.shape[2]}")
    if kernel.shape[1] != in_channels:
        raise ContractViolation(f"입력 채널 불일치: kernel {kernel.shape[1]} vs volume {in_channels}")
    if bias.shape != (kernel.shape[0],):
        raise ContractViolation(f"bias shape 불일치: {bias.shape} vs ({kernel.shape[0]},)")


def kernel_offsets(size: int) -> np.ndarray:
    """x-major 순서의 커널 오프셋 (k³×3), 합성곱 누적 순서를 정의합니다."""
    return np.array(list(product(range(size), repeat=3)), dtype=np.int64)


def conv3d_dense(volume: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    zero-padding same-size 3D 교차상관 (C_in×X×Y×Z → C_out×X×Y×Z).
    out[:, p] = bias + Σ_d W[:, :, d] · in[:, p + d - r]
    """
    volume = np.asarray(volume, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_kernel(kernel, bias, volume.shape[0])

    size = kernel.shape[2]
    r = size // 2
    _, x_bins, y_bins, z_bins = volume.shape
    padded = np.pad(volume, ((0, 0), (r, r), (r, r), (r, r)))
    out = np.empty((kernel.shape[0], x_bins, y_bins, z_bins), dtype=np.float64)
    out[...] = bias[:, None, None, None]
    for dx, dy, dz in kernel_offsets(size):
        window = padded[:, dx:dx + x_bins, dy:dy + y_bins, dz:dz + z_bins]
        out += np.tensordot(kernel[:, :, dx, dy, dz], window, axes=(1, 0))
    return out


def conv3d_sparse(sparse: SparseVolume, kernel: np.ndarray, bias: np.ndarray) -> SparseVolume:
    """
    희소 3D 교차상관. 출력 좌표는 입력 좌표를 커널 범위만큼 팽창한 집합이며,
    그 위에서 conv3d_dense 와 같은 값을 냅니다.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_kernel(kernel, bias, sparse.channels)
    out_channels, size = kernel.shape[0], kernel.shape[2]
    grid = sparse.grid

    if sparse.nnz == 0:
        return SparseVolume(grid=grid, coords=np.zeros((0, 3), dtype=np.int64),
                            features=np.zeros((0, out_channels)), channels=out_channels)

    r = size // 2
    offsets = kernel_offsets(size)
    shifts = offsets - r
    out_coords = _unique_coords((sparse.coords[:, None, :] - shifts[None]).reshape(-1, 3), grid.bins)
    out_keys = linear_keys(out_coords, grid.bins)
    features = sparse.features.astype(np.float64)

    out = np.empty((len(out_coords), out_channels), dtype=np.float64)
    out[...] = bias[None, :]
    # 입력 복셀에서 출력 복셀로 흩뿌림. 오프셋 하나 안에서는 대상 행이 겹치지 않음
    for (dx, dy, dz), shift in zip(offsets, shifts):
        target = sparse.coords - shift
        valid = _in_bounds(target, grid.bins)
        rows, found = lookup(out_keys, linear_keys(target[valid], grid.bins))
        if not found.all():
            raise InvariantViolation("희소 합성곱 출력 좌표 집합에 없는 대상이 있습니다.")
        if rows.size:
            out[rows] += features[valid] @ kernel[:, :, dx, dy, dz].T
    return SparseVolume(grid=grid, coords=out_coords, features=out, channels=out_channels)


# ✅ 스무딩 (JEN 대체) -------------------------------------------------------------

def gaussian_taps(kernel_size: int, sigma: float) -> np.ndarray:
    if kernel_size % 2 == 0:
        raise ContractViolation(f"스무딩 커널 크기는 홀수여야 합니다: {kernel_size}")
    r = kernel_size // 2
    taps = np.exp(-(np.arange(-r, r + 1) ** 2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _renormalize(smoothed: np.ndarray, reference_peak: np.ndarray) -> np.ndarray:
    """채널별 최댓값을 입력 최댓값으로 되돌린 뒤 [0, 1] 로 자릅니다. (axis 0 = 채널)"""
    flat = smoothed.reshape(smoothed.shape[0], -1)
    peak = flat.max(axis=1) if flat.shape[1] else np.zeros(smoothed.shape[0])
    scale = np.divide(reference_peak, peak, out=np.zeros_like(peak, dtype=np.float64), where=peak > 0)
    return np.clip(smoothed * scale.reshape((-1,) + (1,) * (smoothed.ndim - 1)), 0.0, 1.0)


def smooth_volume(sparse: SparseVolume, kernel_size: int = 5, sigma_voxels: float = 1.0) -> JointHeatmap3D:
    """
    희소 볼륨에 축별 1D 가우시안(분리형)을 적용한 뒤 채널별로 재정규화합니다.
    각 축 패스는 지지 집합을 그 축 방향으로만 팽창시킵니다.
    """
    grid = sparse.grid
    dense = np.zeros((sparse.channels,) + grid.bins, dtype=np.float32)
    if sparse.nnz == 0:
        return JointHeatmap3D(grid=grid, values=dense)

    taps = gaussian_taps(kernel_size, sigma_voxels)
    r = kernel_size // 2
    coords, features = sparse.coords, sparse.features.astype(np.float64)
    for axis in range(3):
        step = np.zeros(3, dtype=np.int64)
        step[axis] = 1
        shifts = np.arange(-r, r + 1)
        out_coords = _unique_coords((coords[:, None, :] + shifts[:, None] * step).reshape(-1, 3), grid.bins)
        keys = linear_keys(coords, grid.bins)
        out = np.zeros((len(out_coords), features.shape[1]))
        for tap, shift in zip(taps, shifts):
            neighbor = out_coords + shift * step
            valid = _in_bounds(neighbor, grid.bins)
            idx, found = lookup(keys, linear_keys(neighbor, grid.bins))
            rows = np.nonzero(valid & found)[0]
            out[rows] += tap * features[idx[rows]]
        coords, features = out_coords, out

    features = _renormalize(features.T, sparse.features.max(axis=0).astype(np.float64)).T
    x, y, z = coords.T
    dense[:, x, y, z] = features.T
    return JointHeatmap3D(grid=grid, values=dense)


def smooth_volume_dense(volume: FeatureVolume, threshold: float = 0.15,
                        kernel_size: int = 5, sigma_voxels: float = 1.0) -> JointHeatmap3D:
    """밀집 경로: 임계값 미만을 0 으로 만든 뒤 scipy 분리형 상관 연산으로 스무딩합니다."""
    values = volume.values.astype(np.float64)
    peak = values.max(axis=0)
    values = np.where(((peak >= threshold) & (peak > 0))[None], values, 0.0)
    taps = gaussian_taps(kernel_size, sigma_voxels)
    smoothed = values
    for axis in (1, 2, 3):
        smoothed = ndimage.correlate1d(smoothed, taps, axis=axis, mode="constant", cval=0.0)
    reference = values.reshape(values.shape[0], -1).max(axis=1)
    smoothed = _renormalize(smoothed, reference)
    return JointHeatmap3D(grid=volume.grid, values=smoothed.astype(np.float32))


# ✅ GT 타깃 / 손실 ----------------------------------------------------------------

def gt_heatmap3d(poses: Sequence[Pose3D], grid: VoxelGrid, sigma_mm: float, num_joints: int = 15) -> JointHeatmap3D:
    """U*[j] = max_p exp(-‖center − joint_{p,j}‖² / 2σ²) (분리형으로 계산)"""
    if sigma_mm <= 0:
        raise ContractViolation(f"sigma_mm 는 양수여야 합니다: {sigma_mm}")
    axes = [
        origin + (np.arange(bins) + 0.5) * size
        for origin, bins, size in zip(grid.origin, grid.bins, grid.voxel_size)
    ]
    values = np.zeros((num_joints,) + grid.bins, dtype=np.float64)
    denom = 2.0 * sigma_mm * sigma_mm
    for pose in poses:
        for joint, (px, py, pz) in enumerate(pose.joints):
            gx = np.exp(-((axes[0] - px) ** 2) / denom)
            gy = np.exp(-((axes[1] - py) ** 2) / denom)
            gz = np.exp(-((axes[2] - pz) ** 2) / denom)
            field = gx[:, None, None] * gy[None, :, None] * gz[None, None, :]
            np.maximum(values[joint], field, out=values[joint])
    return JointHeatmap3D(grid=grid, values=values)


def loss_jen(pred: FeatureVolume, target: FeatureVolume) -> float:
    if pred.values.shape != target.values.shape:
        raise ContractViolation(f"3D 히트맵 shape 불일치: {pred.values.shape} vs {target.values.shape}")
    diff = pred.values.astype(np.float64) - target.values.astype(np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def occupancy_of(heatmaps: Sequence[Heatmap2D], table: ProjectionTable, threshold: float) -> float:
    return build_sparse_feature_volume(heatmaps, table, threshold).occupancy

