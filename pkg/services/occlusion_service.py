"""
사람-사람 가림 추론과 가림 가중 Re-ID 융합.

뷰마다 사람을 (평균 관절 깊이, 투영 관절을 감싸는 박스) 로 표현하고,
더 가까운 사람들의 박스가 덮는 비율을 가림 비율로 봅니다.
가림이 심한 뷰(> 0.7)는 Re-ID 융합에서 제외합니다.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from embedding_utils import normalize_embedding
from models.base_model import CameraParams, FusedReid, PersonDepthBox, Pose3D, ReidMap2D, ReliabilityWeights
from services.errors import ContractViolation
from services.geometry_service import project_points, project_to_views
from services.heatmap_service import sample_bilinear_many

logger = logging.getLogger(__name__)


def person_depth_boxes(poses: Sequence[Pose3D], camera: CameraParams) -> List[PersonDepthBox]:
    boxes = []
    for pose in poses:
        uv, depth = project_points(camera, pose.joints)
        mean_depth = float(depth.mean())
        front = depth > 0
        if mean_depth <= 0 or not front.any():
            boxes.append(PersonDepthBox(camera.camera_id, mean_depth, (0.0, 0.0, 0.0, 0.0), visible=False))
            continue
        u, v = uv[front, 0], uv[front, 1]
        boxes.append(PersonDepthBox(
            view_id=camera.camera_id, depth=mean_depth,
            bbox=(float(u.min()), float(v.min()), float(u.max()), float(v.max())),
        ))
    return boxes


def _nearer_boxes(target: PersonDepthBox, others: Sequence[PersonDepthBox]) -> List[Tuple[float, float, float, float]]:
    return [o.bbox for o in others if o.visible and o.depth < target.depth]


def occluded_fraction(target: PersonDepthBox, others: Sequence[PersonDepthBox], resolution: float = 4.0) -> float:
    """
    target 박스를 resolution 간격의 격자로 래스터화하고,
    더 가까운 다른 박스가 덮는 격자점의 비율을 돌려줍니다.
    보이지 않는 target 은 1.0, 면적 0 인 박스는 0.0 입니다.
    """
    if resolution <= 0:
        raise ContractViolation(f"resolution 은 양수여야 합니다: {resolution}")
    if not target.visible:
        return 1.0
    if target.area <= 0:
        return 0.0
    u_min, v_min, u_max, v_max = target.bbox
    width, height = u_max - u_min, v_max - v_min

    nx = max(1, int(np.ceil(width / resolution)))
    ny = max(1, int(np.ceil(height / resolution)))
    us = u_min + (np.arange(nx) + 0.5) * width / nx
    vs = v_min + (np.arange(ny) + 0.5) * height / ny
    covered = np.zeros((ny, nx), dtype=bool)
    for o_umin, o_vmin, o_umax, o_vmax in _nearer_boxes(target, others):
        in_u = (us >= o_umin) & (us <= o_umax)
        in_v = (vs >= o_vmin) & (vs <= o_vmax)
        covered |= in_v[:, None] & in_u[None, :]
    return float(covered.mean())


def occluded_fraction_analytic(target: PersonDepthBox, others: Sequence[PersonDepthBox]) -> float:
    """더 가까운 박스들과의 교집합 사각형 합집합 넓이 / target 넓이 (좌표 압축)"""
    if not target.visible:
        return 1.0
    area = target.area
    if area <= 0:
        return 0.0
    u_min, v_min, u_max, v_max = target.bbox
    clipped = []
    for o_umin, o_vmin, o_umax, o_vmax in _nearer_boxes(target, others):
        a, b = max(u_min, o_umin), min(u_max, o_umax)
        c, d = max(v_min, o_vmin), min(v_max, o_vmax)
        if a < b and c < d:
            clipped.append((a, c, b, d))
    if not clipped:
        return 0.0
    rects = np.array(clipped)
    xs = np.unique(np.concatenate([rects[:, 0], rects[:, 2]]))
    ys = np.unique(np.concatenate([rects[:, 1], rects[:, 3]]))
    cx = (xs[:-1] + xs[1:]) / 2.0
    cy = (ys[:-1] + ys[1:]) / 2.0
    covered = np.zeros((len(cy), len(cx)), dtype=bool)
    for a, c, b, d in rects:
        covered |= ((cy >= c) & (cy <= d))[:, None] & ((cx >= a) & (cx <= b))[None, :]
    cell_area = np.outer(np.diff(ys), np.diff(xs))
    return float((cell_area * covered).sum() / area)


def occlusion_matrix(
    poses: Sequence[Pose3D], cameras: Sequence[CameraParams],
    resolution: float = 4.0, method: str = "raster",
    executor: Optional[ThreadPoolExecutor] = None,
) -> np.ndarray:
    """사람 × 뷰 가림 비율 행렬 (P×V)"""
    def per_view(camera: CameraParams) -> np.ndarray:
        boxes = person_depth_boxes(poses, camera)
        column = np.zeros(len(boxes))
        for i, box in enumerate(boxes):
            others = boxes[:i] + boxes[i + 1:]
            if method == "analytic":
                column[i] = occluded_fraction_analytic(box, others)
            else:
                column[i] = occluded_fraction(box, others, resolution)
        return column

    if not poses:
        return np.zeros((0, len(cameras)))
    columns = list(executor.map(per_view, cameras)) if executor else [per_view(c) for c in cameras]
    return np.stack(columns, axis=1)


def reliability_weights(fractions: np.ndarray, threshold: float = 0.7, weighting: str = "linear") -> ReliabilityWeights:
    """
    ω_raw = 0 (가림 > threshold), 아니면 1 − 가림 (hard 모드는 1).
    사람별로 뷰 합이 1 이 되도록 정규화하며, 전부 0 이면 invalid 로 표시합니다.
    """
    fractions = np.atleast_2d(np.asarray(fractions, dtype=np.float64))
    if np.any(fractions < 0) or np.any(fractions > 1):
        raise ContractViolation("가림 비율은 [0, 1] 범위여야 합니다.")
    keep = 1.0 if weighting == "hard" else 1.0 - fractions
    raw = np.where(fractions > threshold, 0.0, keep)
    totals = raw.sum(axis=1, keepdims=True)
    valid = totals[:, 0] > 0
    weights = np.divide(raw, totals, out=np.zeros_like(raw), where=totals > 0)
    return ReliabilityWeights(weights=weights, valid=valid)


def fuse_reid(features: np.ndarray, weights: np.ndarray) -> FusedReid:
    """G = normalize(Σ_v ω_v G_v)"""
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if features.shape[0] != weights.shape[0]:
        raise ContractViolation(f"뷰 수 불일치: features {features.shape[0]} vs weights {weights.shape[0]}")
    if weights.sum() <= 0:
        return FusedReid(np.zeros(features.shape[1]), False)
    fused = normalize_embedding(weights @ features)
    return FusedReid(fused, bool(np.linalg.norm(fused) > 0))


def sample_reid_features(
    pelvis: np.ndarray, cameras: Sequence[CameraParams], reid_maps: Sequence[ReidMap2D], stride: int,
    projections: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    투영된 골반 위치에서 뷰별 Re-ID 특징을 샘플링해 단위 벡터로 만듭니다. (V×d, 유효 마스크)
    projections(V×3, 히트맵 해상도 u, v, depth) 가 있으면 다시 투영하지 않습니다.
    """
    if projections is None:
        projections = project_to_views(cameras, pelvis, stride)
    dim = reid_maps[0].dim
    features = np.zeros((len(cameras), dim))
    defined = np.zeros(len(cameras), dtype=bool)
    for view, reid_map in enumerate(reid_maps):
        u, v, depth = projections[view]
        if not depth > 0:
            continue
        sample = sample_bilinear_many(reid_map.values, np.array([u]), np.array([v]))[0]
        features[view] = normalize_embedding(sample)
        defined[view] = np.linalg.norm(features[view]) > 0
    return features, defined


def fuse_person_reid(
    poses: Sequence[Pose3D], cameras: Sequence[CameraParams], reid_maps: Sequence[ReidMap2D],
    stride: int, threshold: float = 0.7, weighting: str = "linear", use_mask: bool = True,
    resolution: float = 4.0, method: str = "raster",
    executor: Optional[ThreadPoolExecutor] = None,
    projections: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> List[FusedReid]:
    """
    한 프레임의 추정 포즈 전체에 대해 Re-ID 를 융합합니다.
    use_mask=False 이면 가림을 무시하고 특징이 있는 뷰를 같은 비중으로 더합니다.
    """
    if not poses:
        return []
    fractions = occlusion_matrix(poses, cameras, resolution, method, executor) if use_mask else None
    fused = []
    for person, pose in enumerate(poses):
        projection = projections[person] if projections is not None else None
        features, defined = sample_reid_features(pose.root, cameras, reid_maps, stride, projection)
        if use_mask:
            person_fraction = np.where(defined, fractions[person], 1.0)
            weights = reliability_weights(person_fraction[None], threshold, weighting).weights[0]
        else:
            weights = defined.astype(np.float64)
            weights = weights / weights.sum() if weights.sum() > 0 else weights
        result = fuse_reid(features, weights)
        if not result.valid:
            logger.warning(f"⚠️ person {person}: 신뢰할 수 있는 Re-ID 뷰가 없어 위치 거리로 대체합니다.")
        fused.append(result)
    return fused
