import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
import argparse
import logging
from concurrent.futures import ThreadPoolExecutor

from dotenv import load_dotenv
from pydantic import ValidationError

from commands import bench_command, eval_command, render_command, simulate_command, track_command
from services.config_loader import ConfigLoader
from services.errors import ContractViolation, VoxTrackError

logger = logging.getLogger("voxtrack")

COMMANDS = [simulate_command, track_command, eval_command, bench_command, render_command]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="RunConfig JSON 경로 (기본: VOXTRACK_CONFIG 또는 기본 설정)")
    common.add_argument("--out", default="out", help="출력 디렉터리")
    common.add_argument("--seed", type=int, default=None, help="scenario.seed 오버라이드")
    common.add_argument("--views", type=int, default=None, help="카메라 수 오버라이드")
    common.add_argument("--grid", default=None, help="그리드 bins 오버라이드 (예: 160x160x64)")
    common.add_argument("--format", choices=["json", "table"], default=None, help="리포트 출력 형식")

    parser = argparse.ArgumentParser(
        prog="voxtrack",
        description="다시점 다중 인물 3D 포즈 추정 및 추적 엔진",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.add_parser(subparsers, [common])
    return parser


def exit_code_for(error: BaseException) -> int:
    """입력/설정 오류 1, 데이터셋 I/O 2, 그 밖의 내부 오류(ContractViolation 포함) 3"""
    if isinstance(error, VoxTrackError):
        return error.exit_code
    if isinstance(error, ContractViolation):
        return 3
    if isinstance(error, ValidationError):
        return 1
    if isinstance(error, OSError):
        return 2
    return 3


def main(argv=None) -> int:
    # 환경 변수 로드
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("VOXTRACK_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    workers = int(os.getenv("VOXTRACK_WORKERS", "4"))

    try:
        config = ConfigLoader(args.config).load(seed=args.seed, views=args.views, grid=args.grid)
        if args.format is None:
            args.format = config.output.format
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return args.handler(args, config, executor)
    except Exception as e:  # noqa: BLE001
        code = exit_code_for(e)
        logger.error(f"🚨 {args.command} 실패 (exit {code}): {e}")
        return code


if __name__ == "__main__":
    sys.exit(main())
