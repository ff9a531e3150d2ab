"""
트랙 결과 시각화 (SVG).

프레임 × 뷰마다 투영된 스켈레톤을 트랙 id 색으로 그리고,
위에서 내려다본 골반 궤적과 카메라 위치 그림을 하나 추가로 만듭니다.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from models.base_model import ROOT_JOINT, CameraParams  # noqa: E402
from models.record_model import TrackRecord  # noqa: E402
from services.errors import DatasetIOError  # noqa: E402
from services.geometry_service import project_points  # noqa: E402

logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "voxtrack", "svg.fonttype": "none"}
SVG_METADATA = {"Date": None}
TRAJECTORY_FILE = "trajectories.svg"

Segment = Tuple[Tuple[float, float], Tuple[float, float]]


def track_color(track_id: int):
    return matplotlib.colormaps["tab10"](track_id % 10)


def project_limbs(joints: np.ndarray, camera: CameraParams, limbs: Sequence[Tuple[int, int]]) -> List[Segment]:
    """두 끝점이 모두 카메라 앞에 있는 림만 이미지 픽셀 선분으로 돌려줍니다."""
    uv, depth = project_points(camera, np.asarray(joints, dtype=np.float64))
    segments = []
    for a, b in limbs:
        if depth[a] > 0 and depth[b] > 0:
            segments.append(((float(uv[a, 0]), float(uv[a, 1])), (float(uv[b, 0]), float(uv[b, 1]))))
    return segments


def _save(figure: Figure, path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with matplotlib.rc_context(SVG_RC):
            figure.savefig(path, format="svg", metadata=SVG_METADATA)
    except OSError as e:
        raise DatasetIOError(f"SVG 저장 실패: {e}", path=path)
    finally:
        plt.close(figure)


def render_view(records: Sequence[TrackRecord], camera: CameraParams,
                limbs: Sequence[Tuple[int, int]], path: Path):
    """한 프레임 한 뷰의 투영 스켈레톤 그림 (이미지 좌표, v 축 아래 방향)"""
    width, height = camera.image_width, camera.image_height
    figure = plt.figure(figsize=(width / 100.0, height / 100.0), dpi=100)
    ax = figure.add_axes([0, 0, 1, 1])
    ax.set_xlim(0, width)
    ax.set_ylim(height, 0)
    ax.set_axis_off()
    for record in sorted(records, key=lambda r: r.track_id):
        color = track_color(record.track_id)
        joints = np.asarray(record.joints)
        for (u0, v0), (u1, v1) in project_limbs(joints, camera, limbs):
            ax.plot([u0, u1], [v0, v1], color=color, linewidth=2)
        uv, depth = project_points(camera, joints[ROOT_JOINT][None])
        if depth[0] > 0:
            ax.text(uv[0, 0], uv[0, 1], str(record.track_id), color=color, fontsize=10)
    _save(figure, path)


def render_trajectories(records: Sequence[TrackRecord], path: Path,
                        extent: Optional[Tuple[float, float, float, float]] = None,
                        cameras: Sequence[CameraParams] = ()):
    """트랙별 골반 xy 궤적 (mm). 카메라가 주어지면 중심 위치를 함께 표시합니다."""
    figure = plt.figure(figsize=(6, 6), dpi=100)
    ax = figure.add_subplot(1, 1, 1)
    tracks: Dict[int, List[TrackRecord]] = {}
    for record in records:
        tracks.setdefault(record.track_id, []).append(record)
    for track_id in sorted(tracks):
        points = np.array([r.joints[ROOT_JOINT][:2] for r in sorted(tracks[track_id], key=lambda r: r.frame)])
        ax.plot(points[:, 0], points[:, 1], color=track_color(track_id), linewidth=1.5, label=f"track {track_id}")
    for camera in cameras:
        x, y = camera.center[:2]
        ax.plot([x], [y], marker="^", color="black", markersize=6)
        ax.annotate(f"cam {camera.camera_id}", (x, y), textcoords="offset points", xytext=(4, 4), fontsize=7)
    if extent is not None:
        ax.set_xlim(extent[0], extent[1])
        ax.set_ylim(extent[2], extent[3])
    ax.set_aspect("equal")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    if tracks:
        ax.legend(loc="upper right", fontsize=8)
    _save(figure, path)


def render_tracks(records: Sequence[TrackRecord], cameras: Sequence[CameraParams],
                  limbs: Sequence[Tuple[int, int]], out_dir: Path,
                  frames: Optional[Sequence[int]] = None,
                  extent: Optional[Tuple[float, float, float, float]] = None) -> List[Path]:
    """
    frame_XXXXX_view_V.svg 와 trajectories.svg 를 씁니다.
    frames 를 주지 않으면 레코드의 프레임 범위를 쓰고, 레코드가 없으면 0번 프레임 빈 캔버스를 만듭니다.
    """
    out_dir = Path(out_dir)
    by_frame: Dict[int, List[TrackRecord]] = {}
    for record in records:
        by_frame.setdefault(record.frame, []).append(record)
    if frames is None:
        frames = range(min(by_frame), max(by_frame) + 1) if by_frame else [0]

    written = []
    for frame in frames:
        for view, camera in enumerate(cameras):
            path = out_dir / f"frame_{frame:05d}_view_{view}.svg"
            render_view(by_frame.get(frame, []), camera, limbs, path)
            written.append(path)
    trajectory_path = out_dir / TRAJECTORY_FILE
    render_trajectories(records, trajectory_path, extent, cameras)
    written.append(trajectory_path)
    logger.info(f"✅ SVG {len(written)}개 저장: {out_dir}")
    return written
