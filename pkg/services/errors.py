"""
voxtrack 전역 예외 정의.

CLI 진입점(main.py)은 예외 종류를 종료 코드로 변환합니다.
(0 성공 / 1 검증 실패 / 2 입출력 실패 / 3 내부 불변식 위반)
"""
from typing import Optional


class VoxTrackError(Exception):
    """모든 voxtrack 예외의 기반 클래스"""

    exit_code = 3


class ConfigValidationError(VoxTrackError, ValueError):
    """설정 값 검증 실패 (필드 경로를 메시지에 포함)"""

    exit_code = 1

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        prefix = f"[{field}] " if field else ""
        super().__init__(f"{prefix}{message}")


class DatasetIOError(VoxTrackError, OSError):
    """데이터셋 파일 입출력 실패 (경로와 프레임 번호 포함)"""

    exit_code = 2

    def __init__(self, message: str, path=None, frame: Optional[int] = None):
        self.path = str(path) if path is not None else None
        self.frame = frame
        context = []
        if self.path:
            context.append(f"path={self.path}")
        if frame is not None:
            context.append(f"frame={frame}")
        suffix = f" ({', '.join(context)})" if context else ""
        super().__init__(f"{message}{suffix}")


class InvariantViolation(VoxTrackError, RuntimeError):
    """실행 중 내부 불변식이 깨진 경우"""

    exit_code = 3


class ContractViolation(ValueError):
    """연산의 사전 조건 위반 (shape 불일치, 범위 밖 인덱스 등)"""
