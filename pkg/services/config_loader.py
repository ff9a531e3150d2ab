import logging
import os
from pathlib import Path
from typing import Optional

import orjson
from pydantic import ValidationError

from models.config_model import RunConfig
from services.errors import ConfigValidationError, DatasetIOError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "models" / "default_config.json"


def parse_grid(text: str):
    """'160x160x64' → (160, 160, 64)"""
    parts = text.lower().split("x")
    try:
        bins = tuple(int(p) for p in parts)
    except ValueError:
        bins = ()
    if len(bins) != 3 or any(b < 1 for b in bins):
        raise ConfigValidationError(f"그리드 형식은 XxYxZ (양의 정수) 여야 합니다: {text!r}", field="grid.bins")
    return bins


def _field_path(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"])


class ConfigLoader:
    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path or os.getenv("VOXTRACK_CONFIG") or DEFAULT_CONFIG_PATH)
        self.raw = self._load_raw()

    def _load_raw(self) -> dict:
        """
        JSON 설정 파일을 로드합니다.
        """
        try:
            payload = orjson.loads(self.config_path.read_bytes())
        except OSError as e:
            raise DatasetIOError(f"설정 파일을 읽을 수 없습니다: {e}", path=self.config_path)
        except orjson.JSONDecodeError as e:
            raise ConfigValidationError(f"설정 파일 JSON 파싱 실패: {e}")
        if not isinstance(payload, dict):
            raise ConfigValidationError("설정 파일 최상위는 객체여야 합니다.")
        return payload

    def load(self, seed: Optional[int] = None, views: Optional[int] = None, grid: Optional[str] = None) -> RunConfig:
        """
        검증된 RunConfig 를 돌려줍니다. CLI 오버라이드(seed, views, grid)를 적용한 뒤 다시 검증합니다.
        """
        config = validate_config(self.raw)
        overrides = config.model_dump()
        if seed is not None:
            overrides["scenario"]["seed"] = seed
        if views is not None:
            overrides["scenario"]["cameras"]["count"] = views
        if grid is not None:
            overrides["grid"]["bins"] = parse_grid(grid)
        config = validate_config(overrides)
        logger.info(f"🔹 설정 로드: {self.config_path}")
        return config


def validate_config(payload: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigValidationError(e.errors()[0]["msg"], field=_field_path(e))
