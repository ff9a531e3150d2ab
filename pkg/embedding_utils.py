import numpy as np


def normalize_embedding(embedding: np.ndarray) -> np.ndarray:
    """L2 정규화 (노름이 0 이면 0 벡터 그대로)"""
    embedding = np.asarray(embedding, dtype=np.float64)
    norm = np.linalg.norm(embedding)
    if norm == 0 or not np.isfinite(norm):
        return np.zeros_like(embedding)
    return embedding / norm


def random_unit_embedding(rng: np.random.Generator, dim: int) -> np.ndarray:
    """정규분포 샘플을 정규화한 단위 임베딩"""
    return normalize_embedding(rng.standard_normal(dim))


def blend_embedding(old: np.ndarray, new: np.ndarray, alpha: float) -> np.ndarray:
    """트랙렛 임베딩 선형 블렌딩: normalize(α·old + (1−α)·new)"""
    if alpha >= 1.0:
        return np.asarray(old, dtype=np.float64)
    return normalize_embedding(alpha * np.asarray(old) + (1.0 - alpha) * np.asarray(new))


def mix_embedding(true_embedding: np.ndarray, distractor: np.ndarray, fraction: float) -> np.ndarray:
    """가림 비율만큼 방해 임베딩을 섞은 뒤 정규화합니다."""
    return normalize_embedding((1.0 - fraction) * np.asarray(true_embedding) + fraction * np.asarray(distractor))
