import logging
from typing import List, NamedTuple, Sequence

import numpy as np

from models.base_model import CameraParams, ProjectionTable, VoxelGrid
from models.record_model import CameraRecord
from services.errors import ContractViolation

logger = logging.getLogger(__name__)


class Projection(NamedTuple):
    u: float
    v: float
    depth: float
    in_front: bool


def project_points(camera: CameraParams, points: np.ndarray):
    """
    world 좌표 점들을 이미지 픽셀로 투영합니다.

    Args:
        camera (CameraParams): 핀홀 카메라
        points (np.ndarray): N×3 world 좌표 (mm)

    Returns:
        (uv, depth): N×2 픽셀 좌표, N 카메라 좌표계 깊이.
        depth ≤ 0 인 점의 픽셀 좌표는 NaN 입니다.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    camera_points = points @ camera.rotation.T + camera.translation
    depth = camera_points[:, 2]
    uv = np.full((len(points), 2), np.nan)
    in_front = depth > 0
    z = depth[in_front]
    uv[in_front, 0] = camera.fx * camera_points[in_front, 0] / z + camera.cx
    uv[in_front, 1] = camera.fy * camera_points[in_front, 1] / z + camera.cy
    return uv, depth


def project_point(camera: CameraParams, point) -> Projection:
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (3,) or not np.all(np.isfinite(point)):
        raise ContractViolation(f"투영할 점은 유한한 3차원 벡터여야 합니다: {point}")
    uv, depth = project_points(camera, point[None])
    return Projection(float(uv[0, 0]), float(uv[0, 1]), float(depth[0]), bool(depth[0] > 0))


def back_project(camera: CameraParams, u: float, v: float, depth: float) -> np.ndarray:
    """픽셀 (u, v) 와 깊이로부터 world 좌표를 복원합니다."""
    if depth <= 0:
        raise ContractViolation("역투영 깊이는 양수여야 합니다.")
    camera_point = np.array(
        [(u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth]
    )
    return camera.rotation.T @ (camera_point - camera.translation)


def voxel_center(grid: VoxelGrid, index) -> np.ndarray:
    index = np.asarray(index)
    if index.shape != (3,) or np.any(index < 0) or np.any(index >= np.asarray(grid.bins)):
        raise ContractViolation(f"복셀 인덱스 {tuple(index)} 가 그리드 {grid.bins} 범위를 벗어났습니다.")
    return np.asarray(grid.origin) + (index + 0.5) * grid.voxel_size


def voxel_centers(grid: VoxelGrid) -> np.ndarray:
    """모든 복셀 중심 (N×3), 선형 인덱스 순서 ((x·Y + y)·Z + z)"""
    axes = [
        origin + (np.arange(bins) + 0.5) * size
        for origin, bins, size in zip(grid.origin, grid.bins, grid.voxel_size)
    ]
    xs, ys, zs = np.meshgrid(*axes, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)


def index_to_world(grid: VoxelGrid, index) -> np.ndarray:
    """실수 복셀 인덱스를 world 좌표로 사상합니다 (soft-argmax 결과용)."""
    return np.asarray(grid.origin) + (np.asarray(index, dtype=np.float64) + 0.5) * grid.voxel_size


def project_to_views(cameras: Sequence[CameraParams], point, stride: int = 1) -> np.ndarray:
    """한 점의 뷰별 투영 (V×3: u, v, depth). u, v 는 이미지 픽셀 / stride, 카메라 뒤쪽이면 NaN"""
    point = np.asarray(point, dtype=np.float64).reshape(1, 3)
    rows = np.zeros((len(cameras), 3))
    for view, camera in enumerate(cameras):
        uv, depth = project_points(camera, point)
        rows[view] = (uv[0, 0] / stride, uv[0, 1] / stride, depth[0])
    return rows


def heatmap_shape(camera: CameraParams, stride: int):
    return camera.image_height // stride, camera.image_width // stride


def build_projection_table(
    grid: VoxelGrid, cameras: Sequence[CameraParams], stride: int = 4
) -> ProjectionTable:
    """
    복셀 중심을 모든 뷰에 투영한 테이블을 만듭니다.
    좌표는 히트맵 해상도(이미지 / stride)이며 반올림하지 않습니다.
    """
    if not cameras:
        raise ContractViolation("투영 테이블에는 최소 1개의 카메라가 필요합니다.")

    centers = voxel_centers(grid)
    num_views, num_voxels = len(cameras), len(centers)
    u = np.zeros((num_views, num_voxels), dtype=np.float32)
    v = np.zeros((num_views, num_voxels), dtype=np.float32)
    depth = np.zeros((num_views, num_voxels), dtype=np.float32)
    visible = np.zeros((num_views, num_voxels), dtype=bool)
    shapes = []

    for view, camera in enumerate(cameras):
        uv, z = project_points(camera, centers)
        height, width = heatmap_shape(camera, stride)
        shapes.append((height, width))
        uh = uv[:, 0] / stride
        vh = uv[:, 1] / stride
        with np.errstate(invalid="ignore"):
            inside = (z > 0) & (uh >= 0) & (uh < width) & (vh >= 0) & (vh < height)
        u[view] = np.where(inside, uh, 0.0)
        v[view] = np.where(inside, vh, 0.0)
        depth[view] = z
        visible[view] = inside
        logger.debug(f"🔹 view {view}: visible {inside.mean():.3f}")

    return ProjectionTable(
        grid=grid, u=u, v=v, depth=depth, visible=visible,
        heatmap_shapes=tuple(shapes), stride=stride,
    )


def look_at_camera(
    position, target, focal_px: float, image_width: int, image_height: int,
    camera_id: int = 0, up=(0.0, 0.0, 1.0),
) -> CameraParams:
    """position 에서 target 을 바라보는 카메라 (x 오른쪽, y 아래, z 전방)"""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        raise ContractViolation("카메라 시선이 up 벡터와 평행합니다.")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return CameraParams(
        fx=focal_px, fy=focal_px,
        cx=image_width / 2.0, cy=image_height / 2.0,
        rotation=rotation, translation=-rotation @ position,
        image_width=image_width, image_height=image_height, camera_id=camera_id,
    )


def build_camera_ring(
    count: int, center_xy, radius_mm: float, height_mm: float, target_height_mm: float,
    focal_px: float, image_width: int, image_height: int,
) -> List[CameraParams]:
    """공간 중심을 둘러싼 원 위에 같은 간격으로 카메라를 배치합니다."""
    cx, cy = center_xy
    cameras = []
    for index in range(count):
        angle = 2.0 * np.pi * index / count
        position = (cx + radius_mm * np.cos(angle), cy + radius_mm * np.sin(angle), height_mm)
        cameras.append(
            look_at_camera(position, (cx, cy, target_height_mm), focal_px,
                           image_width, image_height, camera_id=index)
        )
    return cameras


def camera_to_record(camera: CameraParams) -> CameraRecord:
    return CameraRecord(
        id=camera.camera_id, fx=camera.fx, fy=camera.fy, cx=camera.cx, cy=camera.cy,
        R=camera.rotation.ravel().tolist(), t=camera.translation.tolist(),
        width=camera.image_width, height=camera.image_height,
    )


def camera_from_record(record: CameraRecord) -> CameraParams:
    return CameraParams(
        fx=record.fx, fy=record.fy, cx=record.cx, cy=record.cy,
        rotation=np.asarray(record.R).reshape(3, 3), translation=np.asarray(record.t),
        image_width=record.width, image_height=record.height, camera_id=record.id,
    )
