import logging
from pathlib import Path

from models.config_model import RunConfig
from services.dataset_service import export_dataset
from services.errors import VoxTrackError
from services.simulator_service import SimulatorService

logger = logging.getLogger(__name__)


def add_parser(subparsers, parents):
    parser = subparsers.add_parser("simulate", parents=parents, help="합성 데이터셋 생성")
    parser.set_defaults(handler=run)
    return parser


def run(args, config: RunConfig, executor=None) -> int:
    """시뮬레이터로 GT 시퀀스를 만들고 데이터셋 디렉터리로 저장합니다."""
    out_dir = Path(args.out)
    try:
        simulator = SimulatorService(config, executor=executor)
        gt_frames = simulator.simulate()
        observations = simulator.iter_observations(gt_frames) if config.output.store_observations else None
        export_dataset(out_dir, config, simulator.cameras, gt_frames, observations)
        noise = config.scenario.noise
        if noise.jitter_px > 0 or noise.false_peak_rate > 0 or noise.missing_joint_rate > 0:
            simulator.noise_report(gt_frames)
    except VoxTrackError as e:
        logger.error(f"🚨 시뮬레이션 실패: {e}")
        raise
    return 0
