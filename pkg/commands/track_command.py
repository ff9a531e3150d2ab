import logging
from pathlib import Path

from models.config_model import RunConfig
from services.dataset_service import load_dataset, read_observations, write_tracks
from services.errors import VoxTrackError
from services.pipeline_service import TrackingPipeline
from services.simulator_service import SimulatorService

logger = logging.getLogger(__name__)

TRACKS_FILE = "tracks.jsonl"


def add_parser(subparsers, parents):
    parser = subparsers.add_parser("track", parents=parents, help="데이터셋에 대해 3D 포즈 추정 + 추적 실행")
    parser.add_argument("dataset", help="simulate 로 만든 데이터셋 디렉터리")
    parser.set_defaults(handler=run)
    return parser


def run(args, config: RunConfig, executor=None) -> int:
    """
    관측을 덤프 파일에서 읽거나(store_observations) 데이터셋 설정 스냅샷으로 다시 렌더링해
    파이프라인을 돌리고 tracks.jsonl 을 씁니다. 단계별 시간 표는 로그로 남깁니다.
    """
    out_dir = Path(args.out)
    try:
        dataset = load_dataset(Path(args.dataset))
        pipeline = TrackingPipeline(config, dataset.cameras, executor)
        if dataset.config.output.store_observations:
            def load(frame):
                return read_observations(dataset.path, frame, len(dataset.cameras))
        else:
            simulator = SimulatorService(dataset.config, dataset.cameras, executor)
            gt_frames = {gt.frame_index: gt for gt in dataset.gt_frames}

            def load(frame):
                return simulator.render(gt_frames[frame])

        records = pipeline.run(range(dataset.config.scenario.duration_frames), load)
        write_tracks(out_dir / TRACKS_FILE, records)
        logger.info("🔹 단계별 처리 시간 (ms)\n" + pipeline.timing_table().to_string(index=False))
    except VoxTrackError as e:
        logger.error(f"🚨 추적 실패: {e}")
        raise
    return 0
