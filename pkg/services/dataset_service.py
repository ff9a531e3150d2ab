"""
데이터셋 디렉터리 입출력.

    <dir>/config.json        시뮬레이션 당시 RunConfig 스냅샷
    <dir>/cameras.json       카메라 캘리브레이션 (JSON 배열)
    <dir>/gt.jsonl           GT 레코드 (프레임 × 사람)
    <dir>/observations/      frame_XXXXX_view_V_{heatmap,reid}.vxhm (선택)

모든 JSON 은 orjson 으로 키 정렬해 쓰므로 같은 입력이면 같은 바이트가 나옵니다.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import jsonschema
import numpy as np
import orjson
from pydantic import ValidationError

from models.base_model import NUM_JOINTS, CameraParams, FrameObservations, GTFrame, Heatmap2D, ReidMap2D
from models.config_model import RunConfig
from models.record_model import CAMERA_FILE_SCHEMA, CameraRecord, GTRecord, TrackRecord
from services.errors import ConfigValidationError, DatasetIOError
from services.geometry_service import camera_from_record, camera_to_record
from services.heatmap_service import read_vxhm, write_vxhm

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
CAMERAS_FILE = "cameras.json"
GT_FILE = "gt.jsonl"
OBSERVATIONS_DIR = "observations"

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
JSONL_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_APPEND_NEWLINE


@dataclass
class Dataset:
    path: Path
    config: RunConfig
    cameras: List[CameraParams]
    gt_records: List[GTRecord]

    @property
    def gt_frames(self) -> List[GTFrame]:
        return gt_frames_from_records(self.gt_records, self.config.scenario.duration_frames)


# ✅ 저수준 읽기/쓰기 --------------------------------------------------------------

def _write_bytes(path: Path, payload: bytes):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise DatasetIOError(f"파일 저장 실패: {e}", path=path)


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DatasetIOError(f"파일을 읽을 수 없습니다: {e}", path=path)


def write_json(path: Path, payload):
    _write_bytes(Path(path), orjson.dumps(payload, option=JSON_OPTIONS) + b"\n")


def read_json(path: Path):
    try:
        return orjson.loads(_read_bytes(path))
    except orjson.JSONDecodeError as e:
        raise DatasetIOError(f"JSON 파싱 실패: {e}", path=path)


def write_jsonl(path: Path, rows: Sequence[Dict]):
    _write_bytes(Path(path), b"".join(orjson.dumps(row, option=JSONL_OPTIONS) for row in rows))


def read_jsonl(path: Path) -> List[Dict]:
    rows = []
    for number, line in enumerate(_read_bytes(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(orjson.loads(line))
        except orjson.JSONDecodeError as e:
            raise DatasetIOError(f"{number}번째 줄 JSON 파싱 실패: {e}", path=path)
    return rows


# ✅ 카메라 -----------------------------------------------------------------------

def write_cameras(path: Path, cameras: Sequence[CameraParams]):
    write_json(path, [camera_to_record(camera).model_dump() for camera in cameras])


def read_cameras(path: Path) -> List[CameraParams]:
    """스키마 검증 후 CameraParams 목록으로 변환합니다."""
    payload = read_json(path)
    try:
        jsonschema.validate(payload, CAMERA_FILE_SCHEMA)
    except jsonschema.ValidationError as e:
        location = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigValidationError(f"카메라 파일 형식 오류: {e.message}", field=f"cameras.{location}")
    try:
        return [camera_from_record(CameraRecord(**record)) for record in payload]
    except ValueError as e:
        raise ConfigValidationError(f"카메라 파라미터가 유효하지 않습니다: {e}", field="cameras")


# ✅ GT / 트랙 레코드 -------------------------------------------------------------

def gt_records_from_frames(frames: Sequence[GTFrame]) -> List[GTRecord]:
    records = []
    for frame in frames:
        for person in range(frame.num_persons):
            occlusion = frame.occlusion[person].tolist() if frame.occlusion is not None else []
            records.append(GTRecord(
                frame=frame.frame_index,
                person_id=int(frame.person_ids[person]),
                joints=frame.poses[person].tolist(),
                embedding=frame.embeddings[person].tolist(),
                occlusion=occlusion,
            ))
    return records


def gt_frames_from_records(records: Sequence[GTRecord], num_frames: Optional[int] = None) -> List[GTFrame]:
    """프레임별로 묶습니다. num_frames 가 주어지면 사람이 없는 프레임도 빈 GTFrame 으로 채웁니다."""
    grouped: Dict[int, List[GTRecord]] = {}
    for record in records:
        grouped.setdefault(record.frame, []).append(record)
    indices = sorted(set(grouped) | set(range(num_frames or 0)))
    frames = []
    for index in indices:
        rows = sorted(grouped.get(index, []), key=lambda r: r.person_id)
        dim = len(rows[0].embedding) if rows else 0
        views = len(rows[0].occlusion) if rows else 0
        frames.append(GTFrame(
            frame_index=index,
            person_ids=np.array([r.person_id for r in rows], dtype=np.int64),
            poses=np.array([r.joints for r in rows], dtype=np.float64).reshape(len(rows), NUM_JOINTS, 3),
            embeddings=np.array([r.embedding for r in rows], dtype=np.float64).reshape(len(rows), dim),
            occlusion=np.array([r.occlusion for r in rows], dtype=np.float64).reshape(len(rows), views)
            if views else None,
        ))
    return frames


def read_gt(path: Path) -> List[GTRecord]:
    try:
        return [GTRecord(**row) for row in read_jsonl(path)]
    except (ValidationError, TypeError) as e:
        raise DatasetIOError(f"GT 레코드 형식 오류: {e}", path=path)


def write_tracks(path: Path, records: Sequence[TrackRecord]):
    write_jsonl(path, [record.model_dump() for record in records])


def read_tracks(path: Path) -> List[TrackRecord]:
    try:
        return [TrackRecord(**row) for row in read_jsonl(path)]
    except (ValidationError, TypeError) as e:
        raise DatasetIOError(f"트랙 레코드 형식 오류: {e}", path=path)


# ✅ 관측 덤프 --------------------------------------------------------------------

def observation_path(root: Path, frame: int, view: int, kind: str) -> Path:
    return Path(root) / OBSERVATIONS_DIR / f"frame_{frame:05d}_view_{view}_{kind}.vxhm"


def write_observations(root: Path, observations: FrameObservations):
    for view, (heatmap, reid) in enumerate(zip(observations.heatmaps, observations.reid_maps)):
        heatmap_path = observation_path(root, observations.frame_index, view, "heatmap")
        heatmap_path.parent.mkdir(parents=True, exist_ok=True)
        write_vxhm(heatmap_path, heatmap.values)
        write_vxhm(observation_path(root, observations.frame_index, view, "reid"), reid.values)


def read_observations(root: Path, frame: int, num_views: int) -> FrameObservations:
    """덤프된 뷰 파일을 읽습니다. 하나라도 없으면 프레임 번호와 함께 실패합니다."""
    heatmaps, reid_maps = [], []
    for view in range(num_views):
        for kind, bucket, wrap in (("heatmap", heatmaps, Heatmap2D), ("reid", reid_maps, ReidMap2D)):
            path = observation_path(root, frame, view, kind)
            if not path.exists():
                raise DatasetIOError(f"view {view} 의 {kind} 덤프가 없습니다.", path=path, frame=frame)
            bucket.append(wrap(read_vxhm(path)))
    return FrameObservations(frame_index=frame, heatmaps=heatmaps, reid_maps=reid_maps)


# ✅ 데이터셋 단위 ----------------------------------------------------------------

def export_dataset(root: Path, config: RunConfig, cameras: Sequence[CameraParams], gt_frames: Sequence[GTFrame],
                   observations: Optional[Iterator[FrameObservations]] = None) -> Path:
    """
    데이터셋 디렉터리를 씁니다. observations 가 주어지면 VXHM 덤프도 함께 저장합니다.

    Raises:
        DatasetIOError: 파일 쓰기 실패 (경로 포함)
    """
    root = Path(root)
    write_json(root / CONFIG_FILE, config.model_dump(mode="json"))
    write_cameras(root / CAMERAS_FILE, cameras)
    records = gt_records_from_frames(gt_frames)
    write_jsonl(root / GT_FILE, [record.model_dump() for record in records])
    dumped = 0
    if observations is not None:
        for frame in observations:
            write_observations(root, frame)
            dumped += 1
    logger.info(f"✅ 데이터셋 저장: {root} (GT 레코드 {len(records)}개, 관측 덤프 {dumped}프레임)")
    return root


def load_dataset(root: Path) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise DatasetIOError("데이터셋 디렉터리가 없습니다.", path=root)
    try:
        config = RunConfig.model_validate(read_json(root / CONFIG_FILE))
    except ValidationError as e:
        raise ConfigValidationError(f"데이터셋 설정 스냅샷이 유효하지 않습니다: {e}", field="config.json")
    cameras = read_cameras(root / CAMERAS_FILE)
    gt_records = read_gt(root / GT_FILE)
    logger.info(f"🔹 데이터셋 로드: {root} (카메라 {len(cameras)}대, GT 레코드 {len(gt_records)}개)")
    return Dataset(path=root, config=config, cameras=cameras, gt_records=gt_records)
