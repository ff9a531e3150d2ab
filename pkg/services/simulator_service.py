"""
합성 장면 시뮬레이터 (2D CNN 대체).

사람마다 표준 스켈레톤을 웨이포인트 궤적 위로 움직이고, 카메라 링의 각 뷰에
관절 가우시안 히트맵과 Re-ID 맵을 렌더링합니다.

난수는 (seed, 스트림, 개체 id...) 마다 독립 생성기를 만들어 쓰므로
렌더링 순서나 스레드 수와 무관하게 같은 결과가 나옵니다.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from enum import IntEnum
from typing import Iterator, List, Optional, Sequence

import numpy as np

from embedding_utils import mix_embedding, random_unit_embedding
from models.base_model import (
    NUM_JOINTS,
    CameraParams,
    FrameObservations,
    GTFrame,
    Pose3D,
    ReidMap2D,
    load_pose_library,
)
from models.config_model import RunConfig, ScenarioConfig
from services.errors import ConfigValidationError
from services.geometry_service import build_camera_ring, heatmap_shape, project_points
from services.heatmap_service import draw_gaussian, loss_2d, render_gaussian_heatmap
from services.occlusion_service import occlusion_matrix

logger = logging.getLogger(__name__)

MAX_SPAWN_ATTEMPTS = 1000
GT_OCCLUSION_PITCH_PX = 4.0


class Stream(IntEnum):
    SPAWN = 1
    WAYPOINT = 2
    EMBED = 3
    JITTER = 4
    DROPOUT = 5
    FALSE_PEAK = 6
    DISTRACTOR = 7


def entity_rng(seed: int, stream: Stream, *ids: int) -> np.random.Generator:
    """(seed, 스트림, 개체 id...) 로 결정되는 독립 난수 생성기"""
    return np.random.default_rng([int(seed), int(stream), *(int(i) for i in ids)])


# ✅ 장면 샘플링 -------------------------------------------------------------------

def walk_area(config: RunConfig) -> np.ndarray:
    """사람의 지면 좌표가 움직일 수 있는 xy 사각형 [[x0, y0], [x1, y1]]"""
    origin = np.asarray(config.grid.origin[:2], dtype=np.float64)
    extent = np.asarray(config.grid.extent[:2], dtype=np.float64)
    margin = config.scenario.walk_margin_mm
    low, high = origin + margin, origin + extent - margin
    if np.any(high < low):
        raise ConfigValidationError(
            f"walk_margin_mm({margin}) 가 공간 크기 {tuple(extent)} 에 비해 너무 큽니다.",
            field="scenario.walk_margin_mm",
        )
    return np.stack([low, high])


def spawn_points(config: RunConfig, area: np.ndarray) -> np.ndarray:
    """최소 간격을 지키는 균등 무작위 시작점 (거절 샘플링)"""
    scenario = config.scenario
    points: List[np.ndarray] = []
    for person in range(scenario.n_persons):
        rng = entity_rng(scenario.seed, Stream.SPAWN, person)
        for _ in range(MAX_SPAWN_ATTEMPTS):
            candidate = rng.uniform(area[0], area[1])
            if all(np.linalg.norm(candidate - p) >= scenario.min_separation_mm for p in points):
                points.append(candidate)
                break
        else:
            raise ConfigValidationError(
                f"{scenario.n_persons}명을 {scenario.min_separation_mm}mm 간격으로 배치할 공간이 부족합니다.",
                field="scenario.n_persons",
            )
    return np.array(points).reshape(-1, 2)


def person_paths(config: RunConfig) -> List[np.ndarray]:
    scenario = config.scenario
    area = walk_area(config)
    if scenario.trajectories is not None:
        paths = [np.asarray(path, dtype=np.float64).reshape(-1, 2) for path in scenario.trajectories]
        for person, path in enumerate(paths):
            if np.any(path < area[0]) or np.any(path > area[1]):
                raise ConfigValidationError(
                    f"person {person} 의 궤적이 이동 가능 영역을 벗어납니다.", field="scenario.trajectories"
                )
        return paths

    starts = spawn_points(config, area)
    paths = []
    for person, start in enumerate(starts):
        rng = entity_rng(scenario.seed, Stream.WAYPOINT, person)
        waypoints = rng.uniform(area[0], area[1], size=(scenario.waypoint_count, 2))
        paths.append(np.vstack([start[None], waypoints]))
    return paths


def position_on_path(path: np.ndarray, distance: float) -> np.ndarray:
    """구간 선형 경로를 따라 distance 만큼 간 지점. 끝에 닿으면 되돌아옵니다."""
    segments = np.linalg.norm(np.diff(path, axis=0), axis=1)
    total = float(segments.sum())
    if total <= 0:
        return path[0].copy()
    s = distance % (2.0 * total)
    if s > total:
        s = 2.0 * total - s
    cumulative = np.concatenate([[0.0], np.cumsum(segments)])
    index = int(np.clip(np.searchsorted(cumulative, s, side="right") - 1, 0, len(segments) - 1))
    if segments[index] <= 0:
        return path[index].copy()
    w = (s - cumulative[index]) / segments[index]
    return (1.0 - w) * path[index] + w * path[index + 1]


def pose_at(scenario: ScenarioConfig, person: int, frame: int) -> np.ndarray:
    """포즈 라이브러리를 순환하며 인접 포즈 사이를 선형 보간합니다. (원점 기준 J×3)"""
    library = load_pose_library()["poses"]
    poses = [np.asarray(library[name], dtype=np.float64) for name in scenario.poses]
    t = frame / scenario.pose_hold_frames + person
    current = int(np.floor(t)) % len(poses)
    following = (current + 1) % len(poses)
    w = t - np.floor(t)
    return (1.0 - w) * poses[current] + w * poses[following]


def sample_scene(config: RunConfig) -> List[GTFrame]:
    """
    GT 프레임 시퀀스를 생성합니다. (occlusion 은 카메라가 정해진 뒤 annotate_occlusion 으로 채움)

    Raises:
        ConfigValidationError: 공간이 부족하거나 궤적이 영역 밖인 경우
    """
    scenario = config.scenario
    paths = person_paths(config)
    embeddings = np.array([
        random_unit_embedding(entity_rng(scenario.seed, Stream.EMBED, person), scenario.reid.dim)
        for person in range(scenario.n_persons)
    ]).reshape(scenario.n_persons, scenario.reid.dim)
    ids = np.arange(scenario.n_persons, dtype=np.int64)

    frames = []
    for frame in range(scenario.duration_frames):
        distance = scenario.speed_mm_s * frame / scenario.fps
        poses = []
        for person, path in enumerate(paths):
            ground = position_on_path(path, distance)
            poses.append(pose_at(scenario, person, frame) + np.array([ground[0], ground[1], 0.0]))
        frames.append(GTFrame(
            frame_index=frame,
            person_ids=ids,
            poses=np.array(poses).reshape(scenario.n_persons, NUM_JOINTS, 3),
            embeddings=embeddings,
        ))
    logger.info(f"✅ 장면 생성 완료: {scenario.n_persons}명, {scenario.duration_frames}프레임 (seed={scenario.seed})")
    return frames


def annotate_occlusion(frame: GTFrame, cameras: Sequence[CameraParams],
                       executor: Optional[ThreadPoolExecutor] = None) -> GTFrame:
    poses = [Pose3D(p) for p in frame.poses]
    fractions = occlusion_matrix(poses, cameras, GT_OCCLUSION_PITCH_PX, "raster", executor)
    return replace(frame, occlusion=fractions.reshape(frame.num_persons, len(cameras)))


# ✅ 관측 렌더링 -------------------------------------------------------------------

def _render_view(gt: GTFrame, camera: CameraParams, view: int, config: RunConfig):
    scenario = config.scenario
    noise = scenario.noise
    stride = config.heatmap.stride
    height, width = heatmap_shape(camera, stride)
    num_joints = gt.poses.shape[1] if gt.num_persons else NUM_JOINTS

    joints2d, pelvis_pixels, depths = [], [], []
    for person in range(gt.num_persons):
        uv, depth = project_points(camera, gt.poses[person])
        uv = uv / stride
        visible = depth > 0
        if noise.jitter_px > 0:
            uv = uv + entity_rng(scenario.seed, Stream.JITTER, gt.frame_index, person, view).normal(
                0.0, noise.jitter_px, size=uv.shape
            )
        if noise.missing_joint_rate > 0:
            dropped = entity_rng(scenario.seed, Stream.DROPOUT, gt.frame_index, person, view).random(
                len(uv)) < noise.missing_joint_rate
            visible = visible & ~dropped
        joints2d.append(np.column_stack([np.nan_to_num(uv), visible]))
        pelvis_pixels.append(uv[0] if depth[0] > 0 else None)
        depths.append(float(depth.mean()))

    heatmap = render_gaussian_heatmap(joints2d, config.heatmap.sigma_px, (num_joints, height, width))
    if noise.false_peak_rate > 0:
        rng = entity_rng(scenario.seed, Stream.FALSE_PEAK, gt.frame_index, view)
        counts = rng.poisson(noise.false_peak_rate, size=num_joints)
        for channel, count in enumerate(counts):
            for u, v in zip(rng.uniform(0, width, count), rng.uniform(0, height, count)):
                draw_gaussian(heatmap.values[channel], u, v, config.heatmap.sigma_px)

    reid = np.zeros((scenario.reid.dim, height, width), dtype=np.float32)
    radius = scenario.reid.patch_radius_px
    # 먼 사람부터 칠해서 가까운 사람이 위에 남도록
    for person in sorted(range(gt.num_persons), key=lambda p: -depths[p]):
        pixel = pelvis_pixels[person]
        if pixel is None or not np.all(np.isfinite(pixel)):
            continue
        fraction = float(gt.occlusion[person, view]) if gt.occlusion is not None else 0.0
        distractor = random_unit_embedding(
            entity_rng(scenario.seed, Stream.DISTRACTOR, gt.frame_index, person, view), scenario.reid.dim
        )
        embedding = mix_embedding(gt.embeddings[person], distractor, fraction)
        cu, cv = int(np.rint(pixel[0])), int(np.rint(pixel[1]))
        u0, u1 = max(0, cu - radius), min(width, cu + radius + 1)
        v0, v1 = max(0, cv - radius), min(height, cv + radius + 1)
        if u0 < u1 and v0 < v1:
            reid[:, v0:v1, u0:u1] = embedding.astype(np.float32)[:, None, None]
    return heatmap, ReidMap2D(reid)


def render_frame(gt: GTFrame, cameras: Sequence[CameraParams], config: RunConfig,
                 executor: Optional[ThreadPoolExecutor] = None) -> FrameObservations:
    """
    한 프레임의 뷰별 히트맵과 Re-ID 맵을 렌더링합니다.
    Re-ID 패치는 골반 주변 정사각형이며 그 뷰의 가림 비율만큼 방해 임베딩이 섞입니다.
    """
    def render(item):
        view, camera = item
        return _render_view(gt, camera, view, config)

    items = list(enumerate(cameras))
    views = list(executor.map(render, items)) if executor else [render(item) for item in items]
    return FrameObservations(
        frame_index=gt.frame_index,
        heatmaps=[h for h, _ in views],
        reid_maps=[r for _, r in views],
        ground_truth=gt,
    )


class SimulatorService:
    """카메라 링 구성 + 장면 생성 + 프레임 렌더링"""

    def __init__(self, config: RunConfig, cameras: Optional[Sequence[CameraParams]] = None,
                 executor: Optional[ThreadPoolExecutor] = None):
        self.config = config
        self.executor = executor
        if cameras is None:
            ring = config.scenario.cameras
            grid = config.grid
            center = (grid.origin[0] + grid.extent[0] / 2.0, grid.origin[1] + grid.extent[1] / 2.0)
            cameras = build_camera_ring(
                ring.count, center, ring.radius_mm, ring.height_mm, ring.target_height_mm,
                ring.focal_px, ring.image_width, ring.image_height,
            )
        self.cameras = list(cameras)

    def simulate(self) -> List[GTFrame]:
        """GT 시퀀스 (뷰별 실제 가림 비율 포함)"""
        frames = sample_scene(self.config)
        return [annotate_occlusion(frame, self.cameras, self.executor) for frame in frames]

    def render(self, gt: GTFrame) -> FrameObservations:
        return render_frame(gt, self.cameras, self.config, self.executor)

    def iter_observations(self, gt_frames: Sequence[GTFrame]) -> Iterator[FrameObservations]:
        for gt in gt_frames:
            yield self.render(gt)

    def noise_report(self, gt_frames: Sequence[GTFrame], max_frames: int = 5) -> np.ndarray:
        """잡음 있는 히트맵과 무잡음 히트맵 사이 뷰별 평균 L_2D"""
        clean_config = self.config.model_copy(deep=True)
        clean_config.scenario.noise.jitter_px = 0.0
        clean_config.scenario.noise.false_peak_rate = 0.0
        clean_config.scenario.noise.missing_joint_rate = 0.0
        losses = np.zeros((0, len(self.cameras)))
        for gt in gt_frames[:max_frames]:
            noisy = self.render(gt)
            clean = render_frame(gt, self.cameras, clean_config, self.executor)
            row = [loss_2d(n, c) for n, c in zip(noisy.heatmaps, clean.heatmaps)]
            losses = np.vstack([losses, row])
        per_view = losses.mean(axis=0) if len(losses) else np.zeros(len(self.cameras))
        logger.info(f"🔹 뷰별 평균 L_2D (잡음): {np.round(per_view, 4).tolist()}")
        return per_view
