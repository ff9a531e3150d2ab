import logging
import struct
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from models.base_model import Heatmap2D, ReidMap2D
from services.errors import ContractViolation, DatasetIOError

logger = logging.getLogger(__name__)

VXHM_MAGIC = b"VXHM"
VXHM_HEADER = struct.Struct("<4sIII")

# ✅ 가우시안은 4σ 에서 잘라서 그립니다 (exp(-8) ≈ 3e-4 미만은 버림)
TRUNCATE_SIGMAS = 4.0


def render_gaussian_heatmap(
    joints2d: Sequence[np.ndarray], sigma: float, shape: Tuple[int, int, int]
) -> Heatmap2D:
    """
    관절별 가우시안 히트맵을 렌더링합니다.

    Args:
        joints2d: 사람별 J×3 배열 (u, v, visible), 히트맵 해상도 픽셀 단위
        sigma (float): 가우시안 표준편차 (픽셀)
        shape: (J, H, W)

    Returns:
        Heatmap2D: 여러 사람은 픽셀별 최댓값으로 합쳐집니다.
    """
    if sigma <= 0:
        raise ContractViolation(f"sigma 는 양수여야 합니다: {sigma}")
    values = np.zeros(shape, dtype=np.float32)
    for person in joints2d:
        person = np.asarray(person, dtype=np.float64)
        for channel, (u, v, visible) in enumerate(person):
            if visible:
                draw_gaussian(values[channel], u, v, sigma)
    return Heatmap2D(values)


def draw_gaussian(canvas: np.ndarray, u: float, v: float, sigma: float, amplitude: float = 1.0):
    """canvas(H×W) 에 (u, v) 중심 가우시안을 최댓값 규칙으로 그립니다."""
    if not (np.isfinite(u) and np.isfinite(v)):
        return
    height, width = canvas.shape
    radius = TRUNCATE_SIGMAS * sigma
    x0, x1 = max(0, int(np.floor(u - radius))), min(width, int(np.ceil(u + radius)) + 1)
    y0, y1 = max(0, int(np.floor(v - radius))), min(height, int(np.ceil(v + radius)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    xs = np.arange(x0, x1) - u
    ys = np.arange(y0, y1) - v
    blob = amplitude * np.exp(-(ys[:, None] ** 2 + xs[None, :] ** 2) / (2.0 * sigma * sigma))
    np.maximum(canvas[y0:y1, x0:x1], blob, out=canvas[y0:y1, x0:x1])


def sample_bilinear_many(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    C×H×W 맵을 N개의 실수 좌표에서 쌍선형 보간합니다.
    [0, W-1]×[0, H-1] 밖의 좌표는 0 벡터를 돌려줍니다. 반환 shape N×C.
    """
    channels, height, width = values.shape
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    with np.errstate(invalid="ignore"):
        inside = (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
    out = np.zeros((len(u), channels), dtype=values.dtype)
    if not inside.any():
        return out

    ui, vi = u[inside], v[inside]
    x0 = np.floor(ui).astype(np.int64)
    y0 = np.floor(vi).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    ax = (ui - x0)[:, None]
    ay = (vi - y0)[:, None]

    flat = values.reshape(channels, -1)
    v00 = flat[:, y0 * width + x0].T
    v01 = flat[:, y0 * width + x1].T
    v10 = flat[:, y1 * width + x0].T
    v11 = flat[:, y1 * width + x1].T
    top = v00 * (1 - ax) + v01 * ax
    bottom = v10 * (1 - ax) + v11 * ax
    out[inside] = top * (1 - ay) + bottom * ay
    return out


def sample_bilinear(map2d: Union[Heatmap2D, ReidMap2D], u: float, v: float) -> np.ndarray:
    return sample_bilinear_many(map2d.values, np.array([u]), np.array([v]))[0]


def loss_2d(pred: Heatmap2D, target: Heatmap2D) -> float:
    """뷰 하나에 대한 L2 (Frobenius) 히트맵 손실"""
    if pred.values.shape != target.values.shape:
        raise ContractViolation(
            f"히트맵 shape 불일치: {pred.values.shape} vs {target.values.shape}"
        )
    diff = pred.values.astype(np.float64) - target.values.astype(np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def write_vxhm(path: Path, values: np.ndarray):
    """VXHM 포맷 (16바이트 헤더 + little-endian float32) 으로 저장합니다."""
    channels, height, width = values.shape
    try:
        with open(path, "wb") as file:
            file.write(VXHM_HEADER.pack(VXHM_MAGIC, channels, height, width))
            file.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
    except OSError as e:
        raise DatasetIOError(f"VXHM 파일 저장 실패: {e}", path=path)


def read_vxhm(path: Path) -> np.ndarray:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise DatasetIOError(f"VXHM 파일을 읽을 수 없습니다: {e}", path=path)
    if len(payload) < VXHM_HEADER.size:
        raise DatasetIOError("VXHM 헤더가 잘렸습니다.", path=path)
    magic, channels, height, width = VXHM_HEADER.unpack_from(payload)
    if magic != VXHM_MAGIC:
        raise DatasetIOError(f"VXHM 매직 불일치: {magic!r}", path=path)
    expected = channels * height * width * 4
    body = payload[VXHM_HEADER.size:]
    if len(body) != expected:
        raise DatasetIOError(f"VXHM 본문 크기 불일치: {len(body)} != {expected}", path=path)
    return np.frombuffer(body, dtype="<f4").reshape(channels, height, width).astype(np.float32)
