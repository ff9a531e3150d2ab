import logging
from pathlib import Path

from models.config_model import RunConfig
from services.dataset_service import CAMERAS_FILE, read_cameras, read_tracks
from services.errors import VoxTrackError
from services.render_service import render_tracks

logger = logging.getLogger(__name__)


def add_parser(subparsers, parents):
    parser = subparsers.add_parser("render", parents=parents, help="트랙 결과를 뷰별 SVG 로 출력")
    parser.add_argument("tracks", help="tracks.jsonl 파일")
    parser.add_argument("--cameras", required=True, help="cameras.json 파일 또는 데이터셋 디렉터리")
    parser.set_defaults(handler=run)
    return parser


def run(args, config: RunConfig, executor=None) -> int:
    cameras_path = Path(args.cameras)
    if cameras_path.is_dir():
        cameras_path = cameras_path / CAMERAS_FILE
    grid = config.grid
    extent = (grid.origin[0], grid.origin[0] + grid.extent[0], grid.origin[1], grid.origin[1] + grid.extent[1])
    try:
        render_tracks(
            read_tracks(Path(args.tracks)), read_cameras(cameras_path), config.metrics.limbs,
            Path(args.out), extent=extent,
        )
    except VoxTrackError as e:
        logger.error(f"🚨 렌더링 실패: {e}")
        raise
    return 0
