import logging
from pathlib import Path

import orjson

from models.config_model import RunConfig
from services.dataset_service import GT_FILE, JSON_OPTIONS, read_gt, read_tracks
from services.errors import VoxTrackError
from services.metrics_service import evaluate_sequence, format_report_table

logger = logging.getLogger(__name__)

REPORT_JSON = "metrics.json"
REPORT_TABLE = "metrics.txt"


def add_parser(subparsers, parents):
    parser = subparsers.add_parser("eval", parents=parents, help="트랙 결과를 GT 와 비교해 지표 계산")
    parser.add_argument("gt", help="gt.jsonl 파일 또는 데이터셋 디렉터리")
    parser.add_argument("tracks", help="tracks.jsonl 파일")
    parser.set_defaults(handler=run)
    return parser


def run(args, config: RunConfig, executor=None) -> int:
    out_dir = Path(args.out)
    gt_path = Path(args.gt)
    if gt_path.is_dir():
        gt_path = gt_path / GT_FILE
    try:
        report = evaluate_sequence(read_gt(gt_path), read_tracks(Path(args.tracks)), config.metrics)
        as_json = orjson.dumps(report.model_dump(mode="json"), option=JSON_OPTIONS | orjson.OPT_NON_STR_KEYS) + b"\n"
        table = format_report_table(report)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / REPORT_JSON).write_bytes(as_json)
        (out_dir / REPORT_TABLE).write_text(table + "\n", encoding="utf-8")
    except VoxTrackError as e:
        logger.error(f"🚨 평가 실패: {e}")
        raise
    print(as_json.decode("utf-8") if args.format == "json" else table)
    return 0
