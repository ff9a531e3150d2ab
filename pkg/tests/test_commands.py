import orjson
import pytest
from pydantic import ValidationError

from main import exit_code_for, main
from models.config_model import RunConfig
from scenes import lanes_config, small_config
from services.errors import ConfigValidationError, ContractViolation, DatasetIOError, InvariantViolation


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    monkeypatch.delenv("VOXTRACK_CONFIG", raising=False)
    monkeypatch.setenv("VOXTRACK_WORKERS", "2")
    path = tmp_path / "run.json"
    path.write_bytes(orjson.dumps(lanes_config(duration_frames=5).model_dump(mode="json")))
    return str(path)


def simulate_and_track(tmp_path, config_file, name="tracks"):
    dataset = tmp_path / "dataset"
    if not dataset.exists():
        assert main(["simulate", "--config", config_file, "--out", str(dataset)]) == 0
    assert main(["track", str(dataset), "--config", config_file, "--out", str(tmp_path / name)]) == 0
    return dataset, tmp_path / name / "tracks.jsonl"


def test_simulate_track_eval_render(tmp_path, config_file, capsys):
    dataset, tracks = simulate_and_track(tmp_path, config_file)
    assert len(tracks.read_bytes().splitlines()) == 10

    assert main(["eval", str(dataset), str(tracks), "--config", config_file,
                 "--out", str(tmp_path / "eval"), "--format", "json"]) == 0
    report = orjson.loads((tmp_path / "eval" / "metrics.json").read_bytes())
    assert report["id_switch"] == 0
    assert (tmp_path / "eval" / "metrics.txt").exists()
    assert orjson.loads(capsys.readouterr().out)["id_switch"] == 0

    assert main(["render", str(tracks), "--cameras", str(dataset), "--config", config_file,
                 "--out", str(tmp_path / "svg")]) == 0
    assert len(list((tmp_path / "svg").glob("frame_*_view_*.svg"))) == 5 * 5
    assert (tmp_path / "svg" / "trajectories.svg").exists()


def test_tracking_output_is_deterministic(tmp_path, config_file):
    _, first = simulate_and_track(tmp_path, config_file, "first")
    _, second = simulate_and_track(tmp_path, config_file, "second")

    assert first.read_bytes() == second.read_bytes()


def test_bench_writes_csv(tmp_path, config_file):
    assert main(["bench", "--config", config_file, "--out", str(tmp_path / "bench")]) == 0

    header = (tmp_path / "bench" / "bench.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("grid,occupancy,nnz")


def test_invalid_inputs_map_to_exit_codes(tmp_path, config_file):
    assert main(["simulate", "--config", config_file, "--grid", "10x10", "--out", str(tmp_path / "a")]) == 1
    assert main(["track", str(tmp_path / "missing"), "--config", config_file, "--out", str(tmp_path / "b")]) == 2

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["simulate", "--config", str(broken), "--out", str(tmp_path / "c")]) == 1

    assert main(["simulate", "--config", config_file, "--out", str(tmp_path / "ds")]) == 0
    assert main(["eval", str(tmp_path / "ds"), str(tmp_path / "nowhere.jsonl"),
                 "--config", config_file, "--out", str(tmp_path / "d")]) == 2


def test_exit_code_for_error_kinds():
    assert exit_code_for(ConfigValidationError("bad", field="grid.bins")) == 1
    assert exit_code_for(ContractViolation("shape")) == 3
    assert exit_code_for(ValueError("internal")) == 3
    with pytest.raises(ValidationError) as error:
        RunConfig.model_validate({"scenario": {"seed": -1}})
    assert exit_code_for(error.value) == 1
    assert exit_code_for(DatasetIOError("gone", path="x")) == 2
    assert exit_code_for(FileNotFoundError("x")) == 2
    assert exit_code_for(InvariantViolation("broken")) == 3
    assert exit_code_for(RuntimeError("unexpected")) == 3


def test_seed_override_changes_the_dataset(tmp_path, monkeypatch):
    monkeypatch.delenv("VOXTRACK_CONFIG", raising=False)
    path = tmp_path / "run.json"
    path.write_bytes(orjson.dumps(small_config({"duration_frames": 2}).model_dump(mode="json")))

    for seed in (1, 2):
        assert main(["simulate", "--config", str(path), "--seed", str(seed), "--out", str(tmp_path / f"s{seed}")]) == 0
    assert (tmp_path / "s1" / "gt.jsonl").read_bytes() != (tmp_path / "s2" / "gt.jsonl").read_bytes()
    assert orjson.loads((tmp_path / "s2" / "config.json").read_bytes())["scenario"]["seed"] == 2
