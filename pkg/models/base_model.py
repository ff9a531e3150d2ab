"""
도메인 데이터 모델.

카메라, 복셀 그리드, 2D/3D 히트맵, 검출 결과, 트랙렛 등
파이프라인 단계 사이를 오가는 값 객체들을 정의합니다.
배열은 numpy 로 보관하며, 생성 후에는 변경하지 않는 것을 원칙으로 합니다.
"""
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from services.errors import ContractViolation

POSE_LIBRARY_PATH = Path(__file__).resolve().parent / "pose_library.json"

NUM_JOINTS = 15
ROOT_JOINT = 0


@lru_cache(maxsize=1)
def load_pose_library() -> Dict:
    """관절 이름표, 림(limb) 표, 표준 스켈레톤 4종을 로드합니다."""
    with open(POSE_LIBRARY_PATH, "r", encoding="utf-8") as file:
        library = json.load(file)
    if len(library["joints"]) != NUM_JOINTS:
        raise ContractViolation("pose_library.json 의 관절 수가 15가 아닙니다.")
    return library


def default_limbs() -> List[Tuple[int, int]]:
    return [tuple(limb) for limb in load_pose_library()["limbs"]]


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


# ✅ 기하 -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CameraParams:
    """핀홀 카메라 (world → camera 회전/평행이동, 단위 mm / pixel)"""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    image_width: int
    image_height: int
    camera_id: int = 0

    def __post_init__(self):
        rotation = _frozen_array(self.rotation).reshape(3, 3)
        translation = _frozen_array(self.translation).reshape(3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

        if not (self.fx > 0 and self.fy > 0):
            raise ContractViolation(f"초점 거리는 양수여야 합니다: fx={self.fx}, fy={self.fy}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ContractViolation(
                f"이미지 크기는 양수여야 합니다: {self.image_width}x{self.image_height}"
            )
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-6):
            raise ContractViolation(f"camera {self.camera_id}: 회전 행렬이 직교 행렬이 아닙니다.")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-6:
            raise ContractViolation(f"camera {self.camera_id}: 회전 행렬의 행렬식이 +1 이 아닙니다.")

    @property
    def center(self) -> np.ndarray:
        """world 좌표계에서의 카메라 중심"""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class VoxelGrid:
    origin: Tuple[float, float, float]
    extent: Tuple[float, float, float]
    bins: Tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        object.__setattr__(self, "bins", tuple(int(v) for v in self.bins))
        if len(self.origin) != 3 or len(self.extent) != 3 or len(self.bins) != 3:
            raise ContractViolation("origin/extent/bins 는 3차원이어야 합니다.")
        if any(v <= 0 for v in self.extent):
            raise ContractViolation(f"extent 는 양수여야 합니다: {self.extent}")
        if any(v < 1 for v in self.bins):
            raise ContractViolation(f"bins 는 1 이상이어야 합니다: {self.bins}")

    @property
    def voxel_size(self) -> np.ndarray:
        return np.asarray(self.extent) / np.asarray(self.bins)

    @property
    def num_voxels(self) -> int:
        x, y, z = self.bins
        return x * y * z


@dataclass(frozen=True, eq=False)
class Pose3D:
    """15관절 3D 스켈레톤 (mm). degenerate 는 관절별 퇴화 플래그"""

    joints: np.ndarray
    degenerate: Optional[np.ndarray] = None

    def __post_init__(self):
        joints = _frozen_array(self.joints)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise ContractViolation(f"joints 는 J×3 이어야 합니다: {joints.shape}")
        if not np.all(np.isfinite(joints)):
            raise ContractViolation("joints 에 유한하지 않은 좌표가 있습니다.")
        object.__setattr__(self, "joints", joints)
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", _frozen_array(np.zeros(len(joints)), bool))
        else:
            object.__setattr__(self, "degenerate", _frozen_array(self.degenerate, bool))

    @property
    def root(self) -> np.ndarray:
        return self.joints[ROOT_JOINT]


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    """
    복셀별 투영 결과 사전 계산 테이블.
    u, v 는 히트맵 해상도 (이미지 픽셀 / stride), shape (V, N).
    """

    grid: VoxelGrid
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    visible: np.ndarray
    heatmap_shapes: Tuple[Tuple[int, int], ...]
    stride: int

    @property
    def num_views(self) -> int:
        return self.u.shape[0]


# ✅ 2D 관측 ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Heatmap2D:
    values: np.ndarray  # J×H×W

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class ReidMap2D:
    values: np.ndarray  # d×H×W

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


# ✅ 3D 볼륨 ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureVolume:
    grid: VoxelGrid
    values: np.ndarray  # C×X×Y×Z

    @property
    def channels(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class JointHeatmap3D(FeatureVolume):
    """3D 관절 히트맵 U (FeatureVolume 과 같은 배치)"""


@dataclass(frozen=True, eq=False)
class SparseVolume:
    """
    정렬된 COO 희소 볼륨.
    coords 는 (x, y, z) 사전식 정렬, keys 는 (x·Y + y)·Z + z 선형 키.
    """

    grid: VoxelGrid
    coords: np.ndarray  # N×3 int64
    features: np.ndarray  # N×C
    channels: int

    def __post_init__(self):
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ContractViolation(f"coords 는 N×3 이어야 합니다: {self.coords.shape}")
        if len(self.features) != len(self.coords):
            raise ContractViolation(f"coords({len(self.coords)})와 features({len(self.features)}) 행 수가 다릅니다.")
        if np.any(np.diff(self.keys) <= 0):
            raise ContractViolation("coords 는 중복 없이 사전식으로 정렬되어 있어야 합니다.")

    @property
    def nnz(self) -> int:
        return int(self.coords.shape[0])

    @property
    def occupancy(self) -> float:
        return self.nnz / self.grid.num_voxels

    @property
    def keys(self) -> np.ndarray:
        _, y_bins, z_bins = self.grid.bins
        c = self.coords
        return (c[:, 0] * y_bins + c[:, 1]) * z_bins + c[:, 2]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.channels,) + self.grid.bins, dtype=self.features.dtype)
        if self.nnz:
            x, y, z = self.coords.T
            dense[:, x, y, z] = self.features.T
        return dense


# ✅ 포즈 디코딩 ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CropVolume:
    anchor: Tuple[int, int, int]
    offset: np.ndarray  # 크롭 (0,0,0) 의 그리드 인덱스
    values: np.ndarray  # J×S×S×S, 관절별 합 1
    degenerate: np.ndarray  # J bool

    @property
    def size(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Detection3D:
    pose: Pose3D
    confidence: float
    anchor: Tuple[int, int, int]
    projections: Optional[np.ndarray] = None  # V×3 (u, v, depth), 히트맵 해상도


# ✅ 가림 / Re-ID -----------------------------------------------------------------

@dataclass(frozen=True)
class PersonDepthBox:
    view_id: int
    depth: float
    bbox: Tuple[float, float, float, float]  # u_min, v_min, u_max, v_max
    visible: bool = True

    @property
    def area(self) -> float:
        u_min, v_min, u_max, v_max = self.bbox
        return max(0.0, u_max - u_min) * max(0.0, v_max - v_min)


@dataclass(frozen=True, eq=False)
class ReliabilityWeights:
    weights: np.ndarray  # P×V
    valid: np.ndarray  # P bool


@dataclass(frozen=True, eq=False)
class FusedReid:
    embedding: np.ndarray
    valid: bool


# ✅ 추적 -------------------------------------------------------------------------

@dataclass
class Tracklet:
    track_id: int
    pose: Pose3D
    embedding: Optional[np.ndarray]
    frames_since_match: int = 0
    active: bool = True
    confidence: float = 0.0


@dataclass
class TrackerState:
    tracklets: List[Tracklet] = field(default_factory=list)
    next_id: int = 1
    last_frame: Optional[int] = None

    @property
    def active_tracklets(self) -> List[Tracklet]:
        return [t for t in self.tracklets if t.active]


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray  # T×D, [0, 1]
    forbidden: np.ndarray  # T×D bool
    raw: np.ndarray  # T×D, mm


# ✅ 시뮬레이터 / 평가 -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GTFrame:
    frame_index: int
    person_ids: np.ndarray  # P
    poses: np.ndarray  # P×J×3
    embeddings: np.ndarray  # P×d
    occlusion: Optional[np.ndarray] = None  # P×V

    @property
    def num_persons(self) -> int:
        return int(len(self.person_ids))


@dataclass(frozen=True, eq=False)
class FrameObservations:
    frame_index: int
    heatmaps: List[Heatmap2D]
    reid_maps: List[ReidMap2D]
    ground_truth: Optional[GTFrame] = None  # 평가/오라클 전용


@dataclass(frozen=True, eq=False)
class EvalFrame:
    frame_index: int
    gt_ids: np.ndarray
    gt_poses: np.ndarray  # G×J×3
    pred_ids: np.ndarray
    pred_poses: np.ndarray  # P×J×3
    pred_confidences: np.ndarray

    def __post_init__(self):
        if len(set(self.gt_ids.tolist())) != len(self.gt_ids):
            raise ContractViolation(f"frame {self.frame_index}: GT id 가 중복되었습니다.")
        if len(set(self.pred_ids.tolist())) != len(self.pred_ids):
            raise ContractViolation(f"frame {self.frame_index}: track id 가 중복되었습니다.")
