import numpy as np

from models.base_model import default_limbs
from models.record_model import TrackRecord
from scenes import identity_camera
from services.render_service import TRAJECTORY_FILE, project_limbs, render_tracks


def record(frame, track_id, x):
    joints = np.column_stack([np.full(15, x), np.full(15, 2000.0), np.linspace(900.0, 1700.0, 15)])
    return TrackRecord(frame=frame, track_id=track_id, joints=joints.tolist(), confidence=0.9)


def test_limbs_with_an_endpoint_behind_the_camera_are_dropped():
    joints = np.array([[0.0, 0.0, 1000.0], [100.0, 0.0, 1000.0], [0.0, 0.0, -50.0]])
    segments = project_limbs(joints, identity_camera(), [(0, 1), (1, 2)])

    assert segments == [((0.0, 0.0), (10.0, 0.0))]


def test_render_writes_one_svg_per_frame_and_view(tmp_path, cameras):
    records = [record(f, t, 1500.0 * t) for f in (2, 3, 4) for t in (1, 2)]
    written = render_tracks(records, cameras, default_limbs(), tmp_path)

    expected = [f"frame_{f:05d}_view_{v}.svg" for f in (2, 3, 4) for v in range(len(cameras))] + [TRAJECTORY_FILE]
    assert [p.name for p in written] == expected
    assert all(p.read_bytes().startswith(b"<?xml") for p in written)


def test_rendering_is_byte_identical(tmp_path, cameras):
    records = [record(f, 1, 2000.0 + 50.0 * f) for f in range(2)]
    first = render_tracks(records, cameras, default_limbs(), tmp_path / "a", extent=(0, 4000, 0, 4000))
    second = render_tracks(records, cameras, default_limbs(), tmp_path / "b", extent=(0, 4000, 0, 4000))

    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_no_records_still_draws_frame_zero(tmp_path, cameras):
    written = render_tracks([], cameras[:1], default_limbs(), tmp_path)

    assert [p.name for p in written] == ["frame_00000_view_0.svg", TRAJECTORY_FILE]


def test_explicit_frame_list_is_respected(tmp_path, cameras):
    written = render_tracks([record(0, 1, 2000.0)], cameras[:2], default_limbs(), tmp_path, frames=[5])

    assert [p.name for p in written] == ["frame_00005_view_0.svg", "frame_00005_view_1.svg", TRAJECTORY_FILE]


def test_trajectory_plot_marks_every_camera(tmp_path, cameras):
    render_tracks([record(0, 1, 2000.0)], cameras, default_limbs(), tmp_path, frames=[0])

    svg = (tmp_path / TRAJECTORY_FILE).read_text(encoding="utf-8")
    assert all(f"cam {camera.camera_id}" in svg for camera in cameras)
