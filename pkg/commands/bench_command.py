import logging
from pathlib import Path

from models.config_model import RunConfig
from services.bench_service import bench_csv, format_bench_table, run_bench
from services.errors import VoxTrackError

logger = logging.getLogger(__name__)

BENCH_FILE = "bench.csv"


def add_parser(subparsers, parents):
    parser = subparsers.add_parser("bench", parents=parents, help="희소/밀집 3D 합성곱 벤치마크")
    parser.set_defaults(handler=run)
    return parser


def run(args, config: RunConfig, executor=None) -> int:
    out_dir = Path(args.out)
    try:
        table = run_bench(config)
    except VoxTrackError as e:
        logger.error(f"🚨 벤치마크 실패: {e}")
        raise
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / BENCH_FILE).write_text(bench_csv(table), encoding="utf-8")
    print(format_bench_table(table, args.format))
    return 0
