"""
사람 검출과 관절 디코딩 (ARN 대체).

루트(골반) 채널에서 NMS 로 후보를 찾고, 후보마다 32³ 크롭을 잘라
관절 채널별로 앵커에 가장 가까운 피크 주변 창만 남긴 뒤 soft-argmax 로
서브 복셀 좌표를 구합니다. 과반의 뷰가 골반 응답으로 받쳐 주지 않는 후보는 버립니다.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from models.base_model import (
    CameraParams,
    CropVolume,
    Detection3D,
    Heatmap2D,
    JointHeatmap3D,
    Pose3D,
    ProjectionTable,
    VoxelGrid,
)
from services.errors import ContractViolation
from services.geometry_service import index_to_world, project_to_views, voxel_center
from services.heatmap_service import sample_bilinear_many

logger = logging.getLogger(__name__)

_STRICT_FOOTPRINT = np.ones((3, 3, 3), dtype=bool)
_STRICT_FOOTPRINT[1, 1, 1] = False


def detect_roots(
    heatmap: JointHeatmap3D, root_channel: int = 0,
    min_confidence: float = 0.3, nms_radius_mm: float = 500.0,
) -> List[Tuple[Tuple[int, int, int], float]]:
    """
    루트 채널의 3³ strict local maximum 을 신뢰도 내림차순으로 정렬하고
    nms_radius_mm 이내의 약한 피크를 제거합니다.
    """
    if not (0 < min_confidence < 1):
        raise ContractViolation(f"min_confidence 는 (0, 1) 범위여야 합니다: {min_confidence}")
    if nms_radius_mm <= 0:
        raise ContractViolation(f"nms_radius_mm 는 양수여야 합니다: {nms_radius_mm}")

    root = np.asarray(heatmap.values[root_channel], dtype=np.float64)
    neighbor_max = ndimage.maximum_filter(root, footprint=_STRICT_FOOTPRINT, mode="constant", cval=0.0)
    peaks = np.argwhere((root > neighbor_max) & (root >= min_confidence))
    if len(peaks) == 0:
        return []

    scores = root[tuple(peaks.T)]
    # 신뢰도 내림차순, 동점이면 선형 인덱스 오름차순 (argwhere 순서 유지)
    order = np.argsort(-scores, kind="stable")
    voxel_size = heatmap.grid.voxel_size

    kept: List[Tuple[Tuple[int, int, int], float]] = []
    kept_positions: List[np.ndarray] = []
    for i in order:
        position = peaks[i] * voxel_size
        if any(np.linalg.norm(position - other) < nms_radius_mm for other in kept_positions):
            continue
        kept.append((tuple(int(c) for c in peaks[i]), float(scores[i])))
        kept_positions.append(position)
    return kept


def root_view_support(
    heatmaps: Sequence[Heatmap2D], table: ProjectionTable, anchors: Sequence[Tuple[int, int, int]],
    root_channel: int = 0, threshold: float = 0.3,
) -> np.ndarray:
    """앵커 복셀 중심의 투영 위치에서 2D 루트 히트맵 값이 threshold 이상인 뷰 수"""
    if len(heatmaps) != table.num_views:
        raise ContractViolation(f"히트맵 뷰 수({len(heatmaps)})와 투영 테이블 뷰 수({table.num_views})가 다릅니다.")
    if len(anchors) == 0:
        return np.zeros(0, dtype=np.int64)
    ids = np.ravel_multi_index(np.asarray(anchors, dtype=np.int64).T, table.grid.bins)
    support = np.zeros(len(ids), dtype=np.int64)
    for view, heatmap in enumerate(heatmaps):
        root = heatmap.values[root_channel:root_channel + 1]
        samples = sample_bilinear_many(root, table.u[view, ids], table.v[view, ids])[:, 0]
        support += table.visible[view, ids] & (samples >= threshold)
    return support


def filter_by_view_support(
    roots: Sequence[Tuple[Tuple[int, int, int], float]], heatmaps: Sequence[Heatmap2D],
    table: ProjectionTable, root_channel: int = 0, threshold: float = 0.3, min_fraction: float = 0.5,
) -> List[Tuple[Tuple[int, int, int], float]]:
    """
    뷰 수 × min_fraction 보다 많은 뷰가 골반 응답으로 받쳐 주는 루트 피크만 남깁니다.

    두 뷰의 골반 광선이 엇갈리는 빈 공간은 평균 특징이 2/V 까지 올라가
    신뢰도 임계값을 넘을 수 있지만, 나머지 뷰에는 응답이 없습니다.
    """
    if not roots:
        return []
    required = int(np.floor(min_fraction * table.num_views)) + 1
    support = root_view_support(heatmaps, table, [anchor for anchor, _ in roots], root_channel, threshold)
    kept = [root for root, count in zip(roots, support) if count >= required]
    if len(kept) < len(roots):
        logger.debug(f"🔹 뷰 지지 부족 루트 피크 {len(roots) - len(kept)}개 제외 (필요 {required}/{table.num_views})")
    return kept


def _select_peak(channel: np.ndarray, center: np.ndarray, peak_ratio: float) -> Optional[np.ndarray]:
    """크롭 안에서 앵커에 가장 가까운 유효 피크 (동점: 값이 큰 쪽, 그 다음 인덱스 순)"""
    top = channel.max()
    if top <= 0:
        return None
    local_max = ndimage.maximum_filter(channel, size=3, mode="constant", cval=0.0)
    candidates = np.argwhere((channel >= local_max) & (channel >= peak_ratio * top))
    distances = np.linalg.norm(candidates - center, axis=1)
    values = channel[tuple(candidates.T)]
    best = np.lexsort((-values, distances))[0]
    return candidates[best]


def extract_crop(
    heatmap: JointHeatmap3D, anchor, crop_size: int = 32,
    mask_radius: float = 6.0, peak_ratio: float = 0.5,
) -> CropVolume:
    """
    앵커 중심 crop_size³ 창을 잘라(그리드 밖은 0) 관절별 피크 창 마스킹 후 합 1로 정규화합니다.
    값이 전부 0 인 관절은 degenerate 로 표시합니다.
    """
    anchor = np.asarray(anchor, dtype=np.int64)
    bins = np.asarray(heatmap.grid.bins)
    if anchor.shape != (3,) or np.any(anchor < 0) or np.any(anchor >= bins):
        raise ContractViolation(f"앵커 {tuple(anchor)} 가 그리드 밖입니다.")

    channels = heatmap.values.shape[0]
    offset = anchor - crop_size // 2
    crop = np.zeros((channels, crop_size, crop_size, crop_size), dtype=np.float64)
    lo = np.maximum(offset, 0)
    hi = np.minimum(offset + crop_size, bins)
    src = tuple(slice(a, b) for a, b in zip(lo, hi))
    dst = tuple(slice(a - o, b - o) for a, b, o in zip(lo, hi, offset))
    crop[(slice(None),) + dst] = heatmap.values[(slice(None),) + src]

    center = np.full(3, crop_size // 2)
    grid_idx = np.indices((crop_size,) * 3).reshape(3, -1).T
    degenerate = np.zeros(channels, dtype=bool)
    for joint in range(channels):
        peak = _select_peak(crop[joint], center, peak_ratio)
        if peak is None:
            degenerate[joint] = True
            crop[joint] = 0.0
            continue
        window = (np.linalg.norm(grid_idx - peak, axis=1) <= mask_radius).reshape((crop_size,) * 3)
        crop[joint] = np.where(window, crop[joint], 0.0)
        crop[joint] /= crop[joint].sum()

    return CropVolume(anchor=tuple(int(a) for a in anchor), offset=offset, values=crop, degenerate=degenerate)


def soft_argmax(crop: CropVolume, joint: int, grid: VoxelGrid) -> Tuple[np.ndarray, bool]:
    """A_k 의 질량 중심을 world 좌표(mm)로 돌려줍니다. (좌표, degenerate)"""
    values = crop.values[joint]
    total = values.sum()
    if crop.degenerate[joint] or total <= 0:
        return voxel_center(grid, crop.anchor), True
    size = crop.size
    axis = np.arange(size, dtype=np.float64)
    expected = np.array([
        (values.sum(axis=(1, 2)) * axis).sum(),
        (values.sum(axis=(0, 2)) * axis).sum(),
        (values.sum(axis=(0, 1)) * axis).sum(),
    ]) / total
    return index_to_world(grid, crop.offset + expected), False


def decode_pose(heatmap: JointHeatmap3D, anchor, confidence: float,
                crop_size: int = 32, mask_radius: float = 6.0, peak_ratio: float = 0.5) -> Detection3D:
    crop = extract_crop(heatmap, anchor, crop_size, mask_radius, peak_ratio)
    joints, flags = [], []
    for joint in range(crop.values.shape[0]):
        position, degenerate = soft_argmax(crop, joint, heatmap.grid)
        joints.append(position)
        flags.append(degenerate)
    return Detection3D(pose=Pose3D(np.stack(joints), np.array(flags)),
                       confidence=float(confidence), anchor=crop.anchor)


def decode_poses(
    heatmap: JointHeatmap3D, detections: Sequence[Tuple[Tuple[int, int, int], float]],
    crop_size: int = 32, mask_radius: float = 6.0, peak_ratio: float = 0.5,
    executor: Optional[ThreadPoolExecutor] = None,
) -> List[Detection3D]:
    """검출마다 독립적으로 디코딩합니다. executor 가 있으면 순서를 유지하며 병렬 처리합니다."""
    def decode(item):
        anchor, confidence = item
        return decode_pose(heatmap, anchor, confidence, crop_size, mask_radius, peak_ratio)

    if executor is None:
        results = [decode(item) for item in detections]
    else:
        results = list(executor.map(decode, detections))

    degenerate = sum(int(d.pose.degenerate.any()) for d in results)
    if degenerate:
        logger.warning(f"⚠️ 관절 일부가 비어 있는 검출 {degenerate}개 (앵커 좌표로 대체)")
    return results


def attach_projections(detections: Sequence[Detection3D], cameras: Sequence[CameraParams],
                       stride: int) -> List[Detection3D]:
    """검출마다 골반의 뷰별 투영 (u, v, depth) 을 히트맵 해상도로 채웁니다."""
    return [replace(d, projections=project_to_views(cameras, d.pose.root, stride)) for d in detections]


def loss_arn(pred: Pose3D, target: Pose3D) -> float:
    """Σ_k ‖J*_k − J_k‖₁"""
    if pred.joints.shape != target.joints.shape:
        raise ContractViolation(f"관절 수 불일치: {pred.joints.shape} vs {target.joints.shape}")
    return float(np.abs(target.joints - pred.joints).sum())
