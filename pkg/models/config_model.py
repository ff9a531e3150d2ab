"""
실행 설정(RunConfig) 스키마.

모든 상수는 이름 있는 필드로 노출되며, 기본값은 models/default_config.json 과 같습니다.
"""
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, StrictInt, field_validator, model_validator

from models.base_model import NUM_JOINTS, VoxelGrid, default_limbs, load_pose_library


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Section):
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    extent: Tuple[float, float, float] = (10000.0, 10000.0, 4000.0)
    bins: Tuple[int, int, int] = (160, 160, 64)

    @field_validator("extent")
    @classmethod
    def _positive_extent(cls, value):
        if any(v <= 0 for v in value):
            raise ValueError("extent 의 모든 성분은 양수여야 합니다.")
        return value

    @field_validator("bins")
    @classmethod
    def _positive_bins(cls, value):
        if any(v < 1 for v in value):
            raise ValueError("bins 의 모든 성분은 1 이상이어야 합니다.")
        return value

    def to_voxel_grid(self) -> VoxelGrid:
        return VoxelGrid(origin=self.origin, extent=self.extent, bins=self.bins)


class HeatmapConfig(_Section):
    sigma_px: float = Field(2.0, gt=0)
    stride: int = Field(4, ge=1)


class VolumeConfig(_Section):
    sparsify_threshold: float = Field(0.15, ge=0, le=1)
    use_sparse: bool = True
    smooth_kernel: int = Field(5, ge=1)
    smooth_sigma_voxels: float = Field(1.0, gt=0)
    gt_sigma_mm: float = Field(62.5, gt=0)

    @field_validator("smooth_kernel")
    @classmethod
    def _odd_kernel(cls, value):
        if value % 2 == 0:
            raise ValueError("smooth_kernel 은 홀수여야 합니다.")
        return value


class PoseConfig(_Section):
    root_joint: int = Field(0, ge=0, lt=NUM_JOINTS)
    min_confidence: float = Field(0.3, gt=0, lt=1)
    nms_radius_mm: float = Field(500.0, gt=0)
    crop_size: int = Field(32, ge=2)
    mask_radius_voxels: float = Field(6.0, gt=0)
    peak_ratio: float = Field(0.5, gt=0, le=1)
    view_support_threshold: float = Field(0.3, gt=0, le=1)
    min_view_fraction: float = Field(0.5, ge=0, lt=1)


class OcclusionConfig(_Section):
    threshold: float = Field(0.7, ge=0, le=1)
    weighting: Literal["linear", "hard"] = "linear"
    method: Literal["raster", "analytic"] = "raster"
    raster_pitch_px: float = Field(4.0, gt=0)


class TrackerConfig(_Section):
    alpha: float = Field(0.9, ge=0, le=1)
    gate_mm: float = Field(500.0, gt=0)
    max_inactive_frames: int = Field(30, ge=0)
    distance: Literal["mean_joints", "pelvis"] = "mean_joints"
    use_pose: bool = True
    use_reid: bool = True
    use_occlusion_mask: bool = True

    @model_validator(mode="after")
    def _at_least_one_cue(self):
        if not (self.use_pose or self.use_reid):
            raise ValueError("use_pose 와 use_reid 중 하나는 켜져 있어야 합니다.")
        return self


class MetricsConfig(_Section):
    pcp_threshold: float = Field(0.5, gt=0)
    ap_thresholds: List[float] = Field(default_factory=lambda: [25.0, 50.0, 75.0, 100.0, 125.0, 150.0])
    mot_threshold_mm: float = Field(150.0, gt=0)
    limbs: List[Tuple[int, int]] = Field(default_factory=default_limbs)

    @field_validator("ap_thresholds")
    @classmethod
    def _sorted_thresholds(cls, value):
        if not value or any(v <= 0 for v in value):
            raise ValueError("ap_thresholds 는 양수 목록이어야 합니다.")
        return sorted(value)

    @field_validator("limbs")
    @classmethod
    def _limb_indices(cls, value):
        for a, b in value:
            if not (0 <= a < NUM_JOINTS and 0 <= b < NUM_JOINTS):
                raise ValueError(f"림 인덱스 범위 초과: ({a}, {b})")
        return value


class CameraRingConfig(_Section):
    count: int = Field(5, ge=1)
    radius_mm: float = Field(7000.0, gt=0)
    height_mm: float = 2500.0
    target_height_mm: float = 1000.0
    focal_px: float = Field(400.0, gt=0)
    image_width: int = Field(800, ge=1)
    image_height: int = Field(608, ge=1)


class NoiseConfig(_Section):
    jitter_px: float = Field(0.0, ge=0)
    false_peak_rate: float = Field(0.0, ge=0)
    missing_joint_rate: float = Field(0.0, ge=0, le=1)


class ReidConfig(_Section):
    dim: int = Field(64, ge=1)
    patch_radius_px: int = Field(2, ge=1)
    corruption: Literal["linear"] = "linear"


class ScenarioConfig(_Section):
    seed: StrictInt = Field(0, ge=0)
    n_persons: int = Field(2, ge=0)
    duration_frames: int = Field(50, ge=1)
    fps: float = Field(15.0, gt=0)
    walk_margin_mm: float = Field(2000.0, ge=0)
    min_separation_mm: float = Field(500.0, ge=0)
    speed_mm_s: float = Field(1000.0, ge=0)
    waypoint_count: int = Field(4, ge=0)
    poses: List[str] = Field(default_factory=lambda: ["stand", "walk_left", "walk_right", "sit"])
    pose_hold_frames: int = Field(30, ge=1)
    trajectories: Optional[List[List[Tuple[float, float]]]] = None
    cameras: CameraRingConfig = Field(default_factory=CameraRingConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    reid: ReidConfig = Field(default_factory=ReidConfig)

    @field_validator("poses")
    @classmethod
    def _known_poses(cls, value):
        library = load_pose_library()["poses"]
        unknown = [name for name in value if name not in library]
        if not value or unknown:
            raise ValueError(f"알 수 없는 포즈 이름: {unknown} (가능: {sorted(library)})")
        return value

    @model_validator(mode="after")
    def _trajectory_count(self):
        if self.trajectories is not None:
            if len(self.trajectories) != self.n_persons:
                raise ValueError("trajectories 개수는 n_persons 와 같아야 합니다.")
            if any(len(path) == 0 for path in self.trajectories):
                raise ValueError("각 trajectory 에는 최소 1개의 waypoint 가 필요합니다.")
        return self


class BenchConfig(_Section):
    grids: List[Tuple[int, int, int]] = Field(
        default_factory=lambda: [(80, 80, 32), (120, 120, 48), (160, 160, 64)]
    )
    occupancies: List[float] = Field(default_factory=lambda: [0.005, 0.01, 0.02, 0.05])
    channels: int = Field(4, ge=1)
    kernel_size: int = Field(3, ge=1)
    repeats: int = Field(3, ge=1)
    warmup: int = Field(1, ge=0)
    scene_persons: int = Field(10, ge=0)
    include_torch: bool = True

    @field_validator("occupancies")
    @classmethod
    def _occupancy_range(cls, value):
        if any(not (0 < v <= 1) for v in value):
            raise ValueError("occupancies 는 (0, 1] 범위여야 합니다.")
        return value


class OutputConfig(_Section):
    format: Literal["json", "table"] = "table"
    store_observations: bool = False


class RunConfig(_Section):
    grid: GridConfig = Field(default_factory=GridConfig)
    heatmap: HeatmapConfig = Field(default_factory=HeatmapConfig)
    volume: VolumeConfig = Field(default_factory=VolumeConfig)
    pose: PoseConfig = Field(default_factory=PoseConfig)
    occlusion: OcclusionConfig = Field(default_factory=OcclusionConfig)
    tracker: TrackerConfig = Field(default_factory=TrackerConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
