"""
프레임 간 ID 연결 (tracking-by-detection).

비용 = (정규화된 위치 거리 + 코사인 외관 거리) / 2, 원시 평균 관절 거리가
게이트를 넘는 쌍은 금지. 헝가리안 할당 후 매칭 안 된 검출은 새 트랙,
30 프레임을 초과해 매칭되지 않은 트랙렛은 비활성화합니다.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics.pairwise import cosine_similarity

from embedding_utils import blend_embedding
from models.base_model import CostMatrix, Detection3D, FusedReid, Tracklet, TrackerState
from models.config_model import TrackerConfig
from models.record_model import TrackRecord
from services.errors import ContractViolation

logger = logging.getLogger(__name__)

# 금지된 쌍에 부여하는 비용 (유효 비용 합보다 충분히 큼)
FORBIDDEN_COST = 1e5


def location_distance(track_poses: np.ndarray, det_poses: np.ndarray, mode: str = "mean_joints"):
    """
    Returns:
        (raw, normalized): raw 는 평균 관절 유클리드 거리(mm), normalized 는 행 최댓값으로 나눈 값
    """
    track_poses = np.asarray(track_poses, dtype=np.float64)
    det_poses = np.asarray(det_poses, dtype=np.float64)
    if len(det_poses) == 0:
        raise ContractViolation("location_distance 에는 최소 1개의 검출이 필요합니다.")
    if mode == "pelvis":
        raw = np.linalg.norm(track_poses[:, None, 0] - det_poses[None, :, 0], axis=-1)
    else:
        raw = np.linalg.norm(track_poses[:, None] - det_poses[None], axis=-1).mean(axis=-1)
    row_max = raw.max(axis=1, keepdims=True)
    normalized = np.divide(raw, row_max, out=np.zeros_like(raw), where=row_max > 0)
    return raw, normalized


def appearance_distance(
    track_embeddings: np.ndarray, det_embeddings: np.ndarray, det_valid: np.ndarray,
    loc_normalized: np.ndarray, track_valid: Optional[np.ndarray] = None,
) -> np.ndarray:
    """0.5·(1 − cos). 무효 임베딩이 낀 항목은 위치 거리로 대체합니다."""
    similarity = cosine_similarity(np.atleast_2d(track_embeddings), np.atleast_2d(det_embeddings))
    distance = np.clip(0.5 * (1.0 - similarity), 0.0, 1.0)
    if track_valid is None:
        track_valid = np.ones(distance.shape[0], dtype=bool)
    invalid = ~np.asarray(track_valid)[:, None] | ~np.asarray(det_valid)[None, :]
    return np.where(invalid, loc_normalized, distance)


def final_cost(
    loc: np.ndarray, app: np.ndarray, raw: np.ndarray, gate_mm: float = 500.0,
    use_pose: bool = True, use_reid: bool = True,
) -> CostMatrix:
    if loc.shape != app.shape or loc.shape != raw.shape:
        raise ContractViolation(f"비용 행렬 shape 불일치: {loc.shape}, {app.shape}, {raw.shape}")
    if use_pose and use_reid:
        values = (loc + app) / 2.0
    elif use_pose:
        values = loc.copy()
    else:
        values = app.copy()
    return CostMatrix(values=values, forbidden=raw > gate_mm, raw=raw)


def assign(cost: CostMatrix) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """금지되지 않은 항목 중 최대 매칭 + 최소 비용 할당 (행=트랙렛 id 순, 열=검출 순)"""
    n_tracks, n_dets = cost.values.shape
    if n_tracks == 0 or n_dets == 0:
        return [], list(range(n_tracks)), list(range(n_dets))
    matrix = np.where(cost.forbidden, FORBIDDEN_COST, cost.values)
    rows, cols = linear_sum_assignment(matrix)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if not cost.forbidden[r, c]]
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    unmatched_tracks = [r for r in range(n_tracks) if r not in matched_rows]
    unmatched_dets = [c for c in range(n_dets) if c not in matched_cols]
    return matches, unmatched_tracks, unmatched_dets


def _record(frame_index: int, tracklet: Tracklet) -> TrackRecord:
    return TrackRecord(
        frame=frame_index, track_id=tracklet.track_id,
        joints=tracklet.pose.joints.tolist(), confidence=float(tracklet.confidence),
    )


def step(
    state: TrackerState, detections: Sequence[Detection3D], fused: Sequence[FusedReid],
    frame_index: int, config: TrackerConfig,
) -> Tuple[TrackerState, List[TrackRecord]]:
    """
    한 프레임을 처리합니다. state 는 제자리에서 갱신되어 그대로 반환됩니다.
    레코드는 이번 프레임에 검출을 받은 트랙렛(매칭 + 신규)에 대해서만 생성됩니다.
    """
    if state.last_frame is not None and frame_index <= state.last_frame:
        raise ContractViolation(f"프레임 번호는 증가해야 합니다: {frame_index} <= {state.last_frame}")
    if len(fused) != len(detections):
        raise ContractViolation(f"검출 수({len(detections)})와 Re-ID 수({len(fused)})가 다릅니다.")
    state.last_frame = frame_index

    active = sorted(state.active_tracklets, key=lambda t: t.track_id)
    matches: List[Tuple[int, int]] = []
    unmatched_tracks = list(range(len(active)))
    unmatched_dets = list(range(len(detections)))

    if active and detections:
        raw, loc = location_distance(
            np.stack([t.pose.joints for t in active]),
            np.stack([d.pose.joints for d in detections]),
            config.distance,
        )
        dim = len(fused[0].embedding)
        track_embeddings = np.stack([t.embedding if t.embedding is not None else np.zeros(dim) for t in active])
        track_valid = np.array([t.embedding is not None for t in active])
        app = appearance_distance(
            track_embeddings, np.stack([f.embedding for f in fused]),
            np.array([f.valid for f in fused]), loc, track_valid,
        )
        cost = final_cost(loc, app, raw, config.gate_mm, config.use_pose, config.use_reid)
        matches, unmatched_tracks, unmatched_dets = assign(cost)

    touched: List[Tracklet] = []
    for row, col in matches:
        tracklet, detection, reid = active[row], detections[col], fused[col]
        tracklet.pose = detection.pose
        tracklet.confidence = detection.confidence
        tracklet.frames_since_match = 0
        if reid.valid:
            tracklet.embedding = (
                reid.embedding.copy() if tracklet.embedding is None
                else blend_embedding(tracklet.embedding, reid.embedding, config.alpha)
            )
        touched.append(tracklet)

    for col in unmatched_dets:
        detection, reid = detections[col], fused[col]
        tracklet = Tracklet(
            track_id=state.next_id, pose=detection.pose,
            embedding=reid.embedding.copy() if reid.valid else None,
            confidence=detection.confidence,
        )
        state.next_id += 1
        state.tracklets.append(tracklet)
        touched.append(tracklet)

    for row in unmatched_tracks:
        tracklet = active[row]
        tracklet.frames_since_match += 1
        if tracklet.frames_since_match > config.max_inactive_frames:
            tracklet.active = False
            logger.info(f"🔹 track {tracklet.track_id} 비활성화 (frame {frame_index})")

    records = [_record(frame_index, t) for t in sorted(touched, key=lambda t: t.track_id)]
    return state, records


class TrackerService:
    """순차 호출용 상태 보관 래퍼"""

    def __init__(self, config: TrackerConfig):
        self.config = config
        self.state = TrackerState()

    def update(self, detections: Sequence[Detection3D], fused: Sequence[FusedReid], frame_index: int) -> List[TrackRecord]:
        self.state, records = step(self.state, detections, fused, frame_index, self.config)
        return records
