import numpy as np
import orjson
import pytest

from models.record_model import TrackRecord
from scenes import small_config
from services.dataset_service import (
    CAMERAS_FILE,
    CONFIG_FILE,
    GT_FILE,
    export_dataset,
    gt_frames_from_records,
    load_dataset,
    observation_path,
    read_cameras,
    read_gt,
    read_observations,
    read_tracks,
    write_tracks,
)
from services.errors import ConfigValidationError, DatasetIOError
from services.simulator_service import SimulatorService


@pytest.fixture
def simulated(config):
    simulator = SimulatorService(config)
    return simulator, simulator.simulate()


def test_exported_dataset_loads_back(tmp_path, config, simulated):
    simulator, frames = simulated
    export_dataset(tmp_path / "ds", config, simulator.cameras, frames)
    dataset = load_dataset(tmp_path / "ds")

    assert dataset.config == config
    assert len(dataset.gt_records) == config.scenario.n_persons * config.scenario.duration_frames
    for original, loaded in zip(simulator.cameras, dataset.cameras):
        np.testing.assert_array_equal(original.rotation, loaded.rotation)
        np.testing.assert_array_equal(original.translation, loaded.translation)
        assert original.fx == loaded.fx
    for original, loaded in zip(frames, dataset.gt_frames):
        np.testing.assert_array_equal(original.poses, loaded.poses)
        np.testing.assert_array_equal(original.embeddings, loaded.embeddings)
        np.testing.assert_array_equal(original.occlusion, loaded.occlusion)


def test_re_export_is_byte_identical(tmp_path, config, simulated):
    simulator, frames = simulated
    export_dataset(tmp_path / "a", config, simulator.cameras, frames)
    dataset = load_dataset(tmp_path / "a")
    export_dataset(tmp_path / "b", dataset.config, dataset.cameras, dataset.gt_frames)

    for name in (CONFIG_FILE, CAMERAS_FILE, GT_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gt_file_has_one_line_per_person_and_frame(tmp_path, config, simulated):
    simulator, frames = simulated
    export_dataset(tmp_path, config, simulator.cameras, frames)
    lines = (tmp_path / GT_FILE).read_bytes().splitlines()

    assert len(lines) == 20
    first = orjson.loads(lines[0])
    assert sorted(first) == ["embedding", "frame", "joints", "occlusion", "person_id"]
    assert len(first["occlusion"]) == len(simulator.cameras)


def test_observation_dump_round_trips(tmp_path, config, simulated):
    simulator, frames = simulated
    export_dataset(tmp_path, config, simulator.cameras, frames[:2], simulator.iter_observations(frames[:2]))

    original = simulator.render(frames[1])
    loaded = read_observations(tmp_path, 1, len(simulator.cameras))
    assert loaded.frame_index == 1
    for a, b in zip(original.heatmaps, loaded.heatmaps):
        np.testing.assert_array_equal(a.values, b.values)
    for a, b in zip(original.reid_maps, loaded.reid_maps):
        np.testing.assert_array_equal(a.values, b.values)
    assert observation_path(tmp_path, 1, 0, "heatmap").name == "frame_00001_view_0_heatmap.vxhm"


def test_missing_observation_names_the_frame(tmp_path, config, simulated):
    simulator, frames = simulated
    export_dataset(tmp_path, config, simulator.cameras, frames[:1], simulator.iter_observations(frames[:1]))

    with pytest.raises(DatasetIOError) as error:
        read_observations(tmp_path, 3, len(simulator.cameras))
    assert error.value.frame == 3


def test_cameras_file_is_schema_checked(tmp_path, cameras):
    path = tmp_path / "cameras.json"
    path.write_bytes(orjson.dumps([{"id": 0, "fx": -1.0}]))
    with pytest.raises(ConfigValidationError) as error:
        read_cameras(path)
    assert error.value.field.startswith("cameras")

    record = {"id": 0, "fx": 400.0, "fy": 400.0, "cx": 400.0, "cy": 304.0,
              "R": [1, 0, 0, 0, 1, 0, 0, 0, -1], "t": [0, 0, 0], "width": 800, "height": 608}
    path.write_bytes(orjson.dumps([record]))
    with pytest.raises(ConfigValidationError) as error:
        read_cameras(path)
    assert error.value.field == "cameras"


def test_unreadable_files_raise_dataset_errors(tmp_path):
    with pytest.raises(DatasetIOError):
        load_dataset(tmp_path / "nowhere")

    broken = tmp_path / "cameras.json"
    broken.write_text("[{", encoding="utf-8")
    with pytest.raises(DatasetIOError):
        read_cameras(broken)

    gt = tmp_path / "gt.jsonl"
    gt.write_text('{"frame": 0}\n', encoding="utf-8")
    with pytest.raises(DatasetIOError):
        read_gt(gt)


def test_tracks_file_round_trip_and_validation(tmp_path):
    records = [TrackRecord(frame=f, track_id=1, joints=[[float(f), 0.0, 0.0]] * 15, confidence=0.75) for f in range(3)]
    path = tmp_path / "tracks.jsonl"
    write_tracks(path, records)

    assert read_tracks(path) == records
    assert len(path.read_bytes().splitlines()) == 3

    path.write_text('{"frame": 0, "track_id": 1, "joints": [[0, 0, 0]], "confidence": 1.0}\n', encoding="utf-8")
    with pytest.raises(DatasetIOError):
        read_tracks(path)
    path.write_text("not json\n", encoding="utf-8")
    with pytest.raises(DatasetIOError):
        read_tracks(path)


def test_empty_frames_are_filled_in():
    frames = gt_frames_from_records([], num_frames=3)

    assert [f.frame_index for f in frames] == [0, 1, 2]
    assert all(f.num_persons == 0 for f in frames)


def test_dataset_without_persons_exports(tmp_path):
    config = small_config({"n_persons": 0})
    simulator = SimulatorService(config)
    export_dataset(tmp_path, config, simulator.cameras, simulator.simulate())

    assert (tmp_path / GT_FILE).read_bytes() == b""
    assert len(load_dataset(tmp_path).gt_frames) == 10
