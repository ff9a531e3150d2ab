"""
평가 지표: PCP3D, AP_K / MPJPE, 관절별 MOTA · IDF1 · ID Switch.

MOT 지표는 motmetrics 누적기를 관절마다 하나씩 만들어 계산합니다.
관절 거리가 150mm 를 넘는 GT-예측 쌍은 매칭 후보에서 제외(NaN)합니다.
"""
import logging
from typing import Dict, List, Sequence, Tuple

import motmetrics as mm
import numpy as np
import pandas as pd

from models.base_model import NUM_JOINTS, EvalFrame
from models.config_model import MetricsConfig
from models.record_model import GTRecord, MetricsReport, TrackRecord
from services.errors import ContractViolation

logger = logging.getLogger(__name__)

MOT_METRICS = ["mota", "idf1", "num_switches", "num_objects", "num_predictions"]


def mean_joint_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1).mean())


def build_eval_frames(gt_records: Sequence[GTRecord], track_records: Sequence[TrackRecord]) -> List[EvalFrame]:
    """GT / 트랙 레코드를 프레임 번호 기준으로 묶습니다. (둘 중 한쪽에만 있는 프레임도 포함)"""
    gt_by_frame: Dict[int, List[GTRecord]] = {}
    pred_by_frame: Dict[int, List[TrackRecord]] = {}
    for record in gt_records:
        gt_by_frame.setdefault(record.frame, []).append(record)
    for record in track_records:
        pred_by_frame.setdefault(record.frame, []).append(record)

    frames = []
    for frame in sorted(set(gt_by_frame) | set(pred_by_frame)):
        gts = gt_by_frame.get(frame, [])
        preds = pred_by_frame.get(frame, [])
        frames.append(EvalFrame(
            frame_index=frame,
            gt_ids=np.array([r.person_id for r in gts], dtype=np.int64),
            gt_poses=np.array([r.joints for r in gts], dtype=np.float64).reshape(-1, NUM_JOINTS, 3),
            pred_ids=np.array([r.track_id for r in preds], dtype=np.int64),
            pred_poses=np.array([r.joints for r in preds], dtype=np.float64).reshape(-1, NUM_JOINTS, 3),
            pred_confidences=np.array([r.confidence for r in preds], dtype=np.float64),
        ))
    return frames


def limb_correctness(gt_pose: np.ndarray, pred_pose: np.ndarray, limbs: Sequence[Tuple[int, int]],
                     threshold: float = 0.5) -> np.ndarray:
    """림마다 양 끝점 오차가 모두 threshold × GT 림 길이 이하이면 True"""
    correct = np.zeros(len(limbs), dtype=bool)
    for i, (a, b) in enumerate(limbs):
        length = np.linalg.norm(gt_pose[a] - gt_pose[b])
        error_a = np.linalg.norm(pred_pose[a] - gt_pose[a])
        error_b = np.linalg.norm(pred_pose[b] - gt_pose[b])
        correct[i] = error_a <= threshold * length and error_b <= threshold * length
    return correct


def pcp3d(frames: Sequence[EvalFrame], limbs: Sequence[Tuple[int, int]],
          threshold: float = 0.5) -> Tuple[Dict[int, float], float]:
    """
    GT 포즈마다 평균 관절 거리가 가장 가까운 추정을 골라 맞은 림 비율을 구합니다.
    오탐은 벌점이 없고, 예측이 없는 프레임의 GT 는 0 점입니다.

    Returns:
        (actor id → [0, 1] 비율, 액터 평균)
    """
    if not limbs:
        raise ContractViolation("limbs 목록이 비어 있습니다.")
    scores: Dict[int, List[float]] = {}
    for frame in frames:
        for gt_id, gt_pose in zip(frame.gt_ids.tolist(), frame.gt_poses):
            if len(frame.pred_poses) == 0:
                scores.setdefault(gt_id, []).append(0.0)
                continue
            errors = [mean_joint_error(gt_pose, pred) for pred in frame.pred_poses]
            closest = frame.pred_poses[int(np.argmin(errors))]
            scores.setdefault(gt_id, []).append(float(limb_correctness(gt_pose, closest, limbs, threshold).mean()))

    per_actor = {actor: float(np.mean(values)) for actor, values in sorted(scores.items())}
    average = float(np.mean(list(per_actor.values()))) if per_actor else 0.0
    return per_actor, average


def average_precision(tp_flags: np.ndarray, num_gt: int) -> float:
    """all-points 보간 precision-recall 적분 (VOC 방식)"""
    if num_gt == 0 or len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    ranks = np.arange(1, len(tp_flags) + 1)
    recall = np.concatenate([[0.0], tp / num_gt, [1.0]])
    precision = np.concatenate([[0.0], tp / ranks, [0.0]])
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    changed = np.where(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[changed + 1] - recall[changed]) * precision[changed + 1]))


def _greedy_matches(frames: Sequence[EvalFrame], k: float) -> Tuple[np.ndarray, List[float]]:
    """신뢰도 내림차순으로 예측을 같은 프레임의 미매칭 GT 중 MPJPE 최소인 것에 붙입니다."""
    predictions = [
        (confidence, f, p)
        for f, frame in enumerate(frames)
        for p, confidence in enumerate(frame.pred_confidences.tolist())
    ]
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i][0])
    used = [np.zeros(len(frame.gt_ids), dtype=bool) for frame in frames]
    flags = np.zeros(len(predictions), dtype=bool)
    errors: List[float] = []
    for rank, index in enumerate(order):
        _, f, p = predictions[index]
        frame = frames[f]
        candidates = np.flatnonzero(~used[f])
        if len(candidates) == 0:
            continue
        mpjpe = np.array([mean_joint_error(frame.gt_poses[g], frame.pred_poses[p]) for g in candidates])
        best = int(np.argmin(mpjpe))
        if mpjpe[best] < k:
            used[f][candidates[best]] = True
            flags[rank] = True
            errors.append(float(mpjpe[best]))
    return flags, errors


def ap_and_mpjpe(frames: Sequence[EvalFrame], thresholds: Sequence[float]) -> Tuple[Dict[str, float], float]:
    """
    K 별 AP 와, 가장 큰 K 에서의 TP 쌍 평균 MPJPE 를 계산합니다.
    GT 가 하나도 없으면 AP 는 0, TP 가 없으면 MPJPE 는 NaN 입니다.
    """
    if not thresholds:
        raise ContractViolation("AP 임계값 목록이 비어 있습니다.")
    num_gt = sum(len(frame.gt_ids) for frame in frames)
    ap: Dict[str, float] = {}
    mpjpe = float("nan")
    for k in sorted(thresholds):
        flags, errors = _greedy_matches(frames, k)
        ap[f"{k:g}"] = average_precision(flags, num_gt)
        mpjpe = float(np.mean(errors)) if errors else float("nan")
    return ap, mpjpe


def _joint_accumulator(frames: Sequence[EvalFrame], joint: int, threshold: float) -> mm.MOTAccumulator:
    acc = mm.MOTAccumulator(auto_id=True)
    for frame in frames:
        gt = frame.gt_poses[:, joint] if len(frame.gt_ids) else np.zeros((0, 3))
        pred = frame.pred_poses[:, joint] if len(frame.pred_ids) else np.zeros((0, 3))
        dists = np.linalg.norm(gt[:, None] - pred[None], axis=-1).reshape(len(gt), len(pred))
        dists = np.where(dists > threshold, np.nan, dists)
        acc.update(frame.gt_ids.tolist(), frame.pred_ids.tolist(), dists)
    return acc


def mot_per_joint(frames: Sequence[EvalFrame], threshold: float = 150.0) -> Dict[str, np.ndarray]:
    """
    관절마다 독립적인 CLEAR-MOT / IDF1 을 계산합니다.

    Returns:
        {"mota": (J,), "idf1": (J,), "id_switch": (J,)}
    """
    if not frames:
        raise ContractViolation("MOT 평가에는 최소 1개의 프레임이 필요합니다.")
    accs = [_joint_accumulator(frames, joint, threshold) for joint in range(NUM_JOINTS)]
    names = [f"joint_{joint}" for joint in range(NUM_JOINTS)]
    mh = mm.metrics.create()
    summary = mh.compute_many(accs, metrics=MOT_METRICS, names=names, generate_overall=False)

    mota = summary["mota"].to_numpy(dtype=np.float64)
    idf1 = summary["idf1"].to_numpy(dtype=np.float64)
    objects = summary["num_objects"].to_numpy()
    predictions = summary["num_predictions"].to_numpy()
    # GT 가 없는 시퀀스: 예측도 없으면 완전, 있으면 0
    no_gt = objects == 0
    mota = np.where(no_gt, np.where(predictions == 0, 1.0, 0.0), mota)
    idf1 = np.where((objects + predictions) == 0, 1.0, np.nan_to_num(idf1, nan=0.0))
    return {
        "mota": mota,
        "idf1": idf1,
        "id_switch": summary["num_switches"].to_numpy(dtype=np.int64),
    }


def evaluate_frames(frames: Sequence[EvalFrame], config: MetricsConfig) -> MetricsReport:
    per_actor, average = pcp3d(frames, config.limbs, config.pcp_threshold)
    ap, mpjpe = ap_and_mpjpe(frames, config.ap_thresholds)
    mot = mot_per_joint(frames, config.mot_threshold_mm)
    report = MetricsReport(
        pcp3d_per_actor=per_actor,
        pcp3d_average=average,
        mpjpe_mm=mpjpe,
        ap=ap,
        mota=float(mot["mota"].mean()),
        idf1=float(mot["idf1"].mean()),
        id_switch=int(mot["id_switch"].sum()),
        per_joint_mota=[float(v) for v in mot["mota"]],
        per_joint_idf1=[float(v) for v in mot["idf1"]],
        per_joint_id_switch=[int(v) for v in mot["id_switch"]],
    )
    logger.info(
        f"✅ 평가 완료: PCP3D {average * 100:.2f}, MPJPE {mpjpe:.2f}mm, "
        f"MOTA {report.mota:.4f}, IDF1 {report.idf1:.4f}, IDSW {report.id_switch}"
    )
    return report


def evaluate_sequence(gt_records: Sequence[GTRecord], track_records: Sequence[TrackRecord],
                      config: MetricsConfig) -> MetricsReport:
    return evaluate_frames(build_eval_frames(gt_records, track_records), config)


def format_report_table(report: MetricsReport) -> str:
    """표 형식 리포트 (PCP3D 는 백분율)"""
    row: Dict[str, object] = {
        f"Actor {actor}": round(value * 100, 2) for actor, value in report.pcp3d_per_actor.items()
    }
    row["Average PCP3D"] = round(report.pcp3d_average * 100, 2)
    row["MPJPE"] = round(report.mpjpe_mm, 2)
    for k, value in report.ap.items():
        row[f"AP{k}"] = round(value * 100, 2)
    row["MOTA"] = round(report.mota * 100, 2)
    row["ID Switch"] = report.id_switch
    row["IDF1"] = round(report.idf1 * 100, 2)
    return pd.DataFrame([row]).to_string(index=False)
