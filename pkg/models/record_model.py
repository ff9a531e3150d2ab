"""
파일로 주고받는 레코드 스키마 (카메라, 트랙 결과, GT, 평가 리포트).
필드 이름은 파일 포맷의 일부이므로 바꾸지 않습니다.
"""
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.base_model import NUM_JOINTS

CAMERA_FILE_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "fx", "fy", "cx", "cy", "R", "t", "width", "height"],
        "properties": {
            "id": {"type": "integer"},
            "fx": {"type": "number", "exclusiveMinimum": 0},
            "fy": {"type": "number", "exclusiveMinimum": 0},
            "cx": {"type": "number"},
            "cy": {"type": "number"},
            "R": {"type": "array", "items": {"type": "number"}, "minItems": 9, "maxItems": 9},
            "t": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            "width": {"type": "integer", "minimum": 1},
            "height": {"type": "integer", "minimum": 1},
        },
        "additionalProperties": False,
    },
}


def _check_joints(value: List[List[float]]) -> List[List[float]]:
    if len(value) != NUM_JOINTS or any(len(joint) != 3 for joint in value):
        raise ValueError(f"joints 는 {NUM_JOINTS}×3 이어야 합니다.")
    return value


class CameraRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    fx: float
    fy: float
    cx: float
    cy: float
    R: List[float] = Field(min_length=9, max_length=9)
    t: List[float] = Field(min_length=3, max_length=3)
    width: int
    height: int


class TrackRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frame: int
    track_id: int
    joints: List[List[float]]
    confidence: float

    @field_validator("joints")
    @classmethod
    def _joint_shape(cls, value):
        return _check_joints(value)


class GTRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frame: int
    person_id: int
    joints: List[List[float]]
    embedding: List[float]
    occlusion: List[float]

    @field_validator("joints")
    @classmethod
    def _joint_shape(cls, value):
        return _check_joints(value)


class MetricsReport(BaseModel):
    pcp3d_per_actor: Dict[int, float]
    pcp3d_average: float
    mpjpe_mm: float
    ap: Dict[str, float]
    mota: float
    idf1: float
    id_switch: int
    per_joint_mota: List[float]
    per_joint_idf1: List[float]
    per_joint_id_switch: List[int]
