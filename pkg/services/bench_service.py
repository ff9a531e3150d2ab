"""
희소 vs 밀집 3D 합성곱 벤치마크.

그리드 크기 × 점유율 조합마다 무작위 희소 볼륨을 만들고, 두 경로의 출력이
1e-5 이내로 같은지 먼저 확인한 뒤 warmup 이후 반복 실행 시간의 중앙값을 잽니다.
"""
import logging
import time
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from models.base_model import SparseVolume, VoxelGrid
from models.config_model import BenchConfig, RunConfig
from services.errors import InvariantViolation
from services.geometry_service import build_projection_table
from services.simulator_service import SimulatorService, render_frame
from services.volume_service import conv3d_dense, conv3d_sparse, occupancy_of

logger = logging.getLogger(__name__)

EQUALITY_TOLERANCE = 1e-5
SPARSE_PRECONDITION = 0.05

try:
    import torch
    import torch.nn.functional as F
except ImportError:  # pragma: no cover
    torch = None
    logger.warning("⚠️ torch 를 불러올 수 없어 torch 기준 열을 생략합니다.")


def random_sparse_volume(bins: Tuple[int, int, int], occupancy: float, channels: int,
                         rng: np.random.Generator) -> SparseVolume:
    grid = VoxelGrid(origin=(0.0, 0.0, 0.0), extent=tuple(float(b) for b in bins), bins=tuple(bins))
    nnz = max(1, int(round(occupancy * grid.num_voxels)))
    ids = np.sort(rng.choice(grid.num_voxels, size=nnz, replace=False))
    coords = np.stack(np.unravel_index(ids, grid.bins), axis=1).astype(np.int64)
    features = rng.uniform(0.0, 1.0, size=(nnz, channels))
    return SparseVolume(grid=grid, coords=coords, features=features, channels=channels)


def median_ms(fn: Callable[[], object], repeats: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1000.0)
    return float(np.median(samples))


def max_abs_difference(sparse_out: SparseVolume, dense_out: np.ndarray, bias: np.ndarray) -> float:
    """희소 출력 지지 집합 밖은 bias 와 비교합니다."""
    expected = np.broadcast_to(bias[:, None, None, None], dense_out.shape).copy()
    if sparse_out.nnz:
        x, y, z = sparse_out.coords.T
        expected[:, x, y, z] = sparse_out.features.T
    return float(np.max(np.abs(expected - dense_out)))


def _torch_conv(dense: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> Callable[[], object]:
    volume = torch.from_numpy(dense)[None]
    weight = torch.from_numpy(kernel)
    torch_bias = torch.from_numpy(bias)
    padding = kernel.shape[2] // 2

    def run():
        with torch.no_grad():
            return F.conv3d(volume, weight, torch_bias, padding=padding)
    return run


def bench_cell(bins: Tuple[int, int, int], occupancy: float, config: BenchConfig,
               rng: np.random.Generator) -> Dict[str, object]:
    """
    한 (그리드, 점유율) 조합을 측정합니다.

    Raises:
        InvariantViolation: 희소/밀집 출력 차이가 허용치를 넘는 경우
    """
    sparse = random_sparse_volume(bins, occupancy, config.channels, rng)
    size = config.kernel_size
    kernel = rng.normal(0.0, 1.0 / size ** 3, size=(config.channels, config.channels, size, size, size))
    bias = rng.normal(0.0, 0.1, size=config.channels)
    dense = sparse.to_dense()

    dense_out = conv3d_dense(dense, kernel, bias)
    sparse_out = conv3d_sparse(sparse, kernel, bias)
    diff = max_abs_difference(sparse_out, dense_out, bias)
    label = "x".join(str(b) for b in bins)
    if not diff < EQUALITY_TOLERANCE:
        raise InvariantViolation(f"희소/밀집 합성곱 결과 불일치: grid {label}, occupancy {occupancy}, diff {diff:.3e}")

    row: Dict[str, object] = {
        "grid": label,
        "occupancy": occupancy,
        "nnz": sparse.nnz,
        "max_abs_diff": diff,
        "dense_ms": median_ms(lambda: conv3d_dense(dense, kernel, bias), config.repeats, config.warmup),
        "sparse_ms": median_ms(lambda: conv3d_sparse(sparse, kernel, bias), config.repeats, config.warmup),
    }
    if config.include_torch and torch is not None:
        row["torch_ms"] = median_ms(_torch_conv(dense, kernel, bias), config.repeats, config.warmup)
    row["speedup"] = row["dense_ms"] / row["sparse_ms"] if row["sparse_ms"] > 0 else float("inf")
    logger.info(
        f"🔹 {label} @ {occupancy:.3%}: dense {row['dense_ms']:.1f}ms, sparse {row['sparse_ms']:.1f}ms"
    )
    return row


def scene_occupancy(config: RunConfig) -> float:
    """scene_persons 명 장면 첫 프레임의 특징 볼륨 점유율 (0.15 임계값 기준)"""
    scene_config = config.model_copy(deep=True)
    scene_config.scenario.n_persons = config.bench.scene_persons
    scene_config.scenario.duration_frames = 1
    simulator = SimulatorService(scene_config)
    gt = simulator.simulate()[0]
    observations = render_frame(gt, simulator.cameras, scene_config)
    table = build_projection_table(config.grid.to_voxel_grid(), simulator.cameras, config.heatmap.stride)
    return occupancy_of(observations.heatmaps, table, config.volume.sparsify_threshold)


def run_bench(config: RunConfig, check_scene: bool = True) -> pd.DataFrame:
    bench = config.bench
    rng = np.random.default_rng(config.scenario.seed)
    rows: List[Dict[str, object]] = [
        bench_cell(tuple(bins), occupancy, bench, rng)
        for bins in bench.grids
        for occupancy in bench.occupancies
    ]
    if check_scene and bench.scene_persons > 0:
        occupancy = scene_occupancy(config)
        if occupancy > SPARSE_PRECONDITION:
            logger.warning(
                f"⚠️ {bench.scene_persons}명 장면 점유율 {occupancy:.2%} 가 희소 경로 전제({SPARSE_PRECONDITION:.0%})를 넘습니다."
            )
        else:
            logger.info(f"✅ {bench.scene_persons}명 장면 점유율 {occupancy:.2%}")
    logger.info(f"✅ 벤치마크 완료: {len(rows)}개 조합")
    return pd.DataFrame(rows)


def format_bench_table(table: pd.DataFrame, fmt: str = "table") -> str:
    if fmt == "json":
        return table.to_json(orient="records", double_precision=6)
    return table.to_string(index=False, float_format=lambda v: f"{v:.4f}")


def bench_csv(table: pd.DataFrame) -> str:
    return table.to_csv(index=False, float_format="%.6f")