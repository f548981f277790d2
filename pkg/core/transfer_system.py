"""
配分函数递推 - PolymerLab核心模块
负责路径权重、配分函数Z_n(β)、聚合物端点分布、最大路径权重，以及小n暴力枚举对照

递推在对数空间进行：
    L_0 = {原点: 0}
    L_k(x) = βη(k,x) + log[(2d)^{-1} Σ_{|y-x|_1=1} e^{L_{k-1}(y)}]
    log Z_n(β) = log Σ_x e^{L_n(x)}
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from core.environment import EnvironmentLike
from core.errors import EnvironmentBoundsError, PathError
from core.lattice import (SiteLike, as_site, box_shape, enumerate_paths,
                          neighbor_views, validate_path)

logger = logging.getLogger(__name__)

# 暴力枚举默认上限 (2d)^n <= 10^7
BRUTE_FORCE_LIMIT = 10 ** 7


@dataclass(frozen=True)
class SliceWeights:
    """第k步的对数权重 L_k(x)，覆盖半径k的盒子，不可达处为-inf"""
    step: int
    log_values: np.ndarray

    def log_total(self) -> float:
        return float(logsumexp(self.log_values))


@dataclass(frozen=True)
class SiteDistribution:
    """盒子上的概率表，probs[x + radius] = 概率"""
    radius: int
    probs: np.ndarray

    @property
    def d(self) -> int:
        return self.probs.ndim

    def prob(self, x: SiteLike) -> float:
        site = as_site(x, self.d)
        if any(abs(c) > self.radius for c in site):
            return 0.0
        return float(self.probs[tuple(c + self.radius for c in site)])

    def total(self) -> float:
        return float(np.sum(self.probs))

    def items(self) -> Iterator:
        """遍历正概率站点 (site, p)"""
        for index in zip(*np.nonzero(self.probs > 0.0)):
            yield tuple(int(i) - self.radius for i in index), float(self.probs[index])

    def total_variation(self, other: "SiteDistribution") -> float:
        radius = max(self.radius, other.radius)
        return 0.5 * float(np.sum(np.abs(_embed(self.probs, self.radius, radius)
                                          - _embed(other.probs, other.radius, radius))))


def _embed(array: np.ndarray, radius: int, target: int) -> np.ndarray:
    pad = target - radius
    return np.pad(array, [(pad, pad)] * array.ndim, mode="constant")


@dataclass(frozen=True)
class PartitionResult:
    """配分函数计算结果"""
    log_z: float
    n: int
    beta: float
    endpoint: Optional[SiteDistribution] = None


def _check_horizon(env: EnvironmentLike, n: int) -> None:
    if n < 0:
        raise EnvironmentBoundsError(f"路径长度 n={n} 不能为负")
    if n > env.horizon:
        raise EnvironmentBoundsError(f"路径长度 n={n} 超出环境窗口 {env.horizon}")


def transfer_slices(env: EnvironmentLike, n: int, beta: float) -> Iterator[SliceWeights]:
    """
    逐步产生 L_0, L_1, ..., L_n

    参数:
        env: 环境或平移视图
        n: 步数
        beta: 逆温度

    返回:
        SliceWeights迭代器
    """
    _check_horizon(env, n)
    d = env.d
    log_step = math.log(2 * d)
    current = np.zeros(box_shape(0, d), dtype=np.float64)
    yield SliceWeights(0, current)
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in range(1, n + 1):
            neighbors = np.stack(neighbor_views(current, d, -np.inf))
            current = logsumexp(neighbors, axis=0) - log_step
            if beta != 0.0:
                current = current + beta * env.slice(k)
            yield SliceWeights(k, current)


def log_partition_sequence(env: EnvironmentLike, n: int, beta: float) -> np.ndarray:
    """
    一次扫描得到 log Z_k(β)，k = 0..n

    β = 0 时按定义 Z_k(0) = 1，返回精确的0
    """
    if beta == 0.0:
        _check_horizon(env, n)
        return np.zeros(n + 1)
    return np.array([s.log_total() for s in transfer_slices(env, n, beta)])


def _last_slice(env: EnvironmentLike, n: int, beta: float) -> SliceWeights:
    last = None
    for last in transfer_slices(env, n, beta):
        pass
    return last


def partition_log(env: EnvironmentLike, n: int, beta: float,
                  with_endpoint: bool = False) -> PartitionResult:
    """
    计算 log Z_n(β)

    参数:
        env: 环境
        n: 路径长度（<= 窗口）
        beta: 逆温度
        with_endpoint: 是否同时给出端点分布 μ_n(S_n = x)

    返回:
        PartitionResult
    """
    last = _last_slice(env, n, beta)
    log_z = 0.0 if beta == 0.0 else last.log_total()
    endpoint = None
    if with_endpoint:
        endpoint = SiteDistribution(n, np.exp(last.log_values - last.log_total()))
    logger.debug(f"log Z_{n}({beta}) = {log_z:.12g}")
    return PartitionResult(log_z, n, float(beta), endpoint)


def endpoint_distribution(env: EnvironmentLike, n: int, beta: float) -> SiteDistribution:
    """聚合物测度的端点边缘分布 μ_n(S_n = x)"""
    return partition_log(env, n, beta, with_endpoint=True).endpoint


def path_weight(env: EnvironmentLike, path: Sequence[SiteLike]) -> float:
    """
    H_n(ω, η) = Σ_{k=1}^n η(k, ω_k)

    参数:
        path: 站点序列 ω_0 = 0, ω_1, ..., ω_n
    """
    sites = validate_path(path, env.d)
    n = len(sites) - 1
    if n > env.horizon:
        raise PathError(f"路径长度 {n} 超出环境窗口 {env.horizon}")
    return float(sum(env.weight(k, sites[k]) for k in range(1, n + 1)))


def max_path_weight(env: EnvironmentLike, n: int) -> float:
    """
    max_ω H_n，热带半环递推 M_k(x) = η(k,x) + max_{|y-x|_1=1} M_{k-1}(y)
    """
    _check_horizon(env, n)
    d = env.d
    current = np.zeros(box_shape(0, d), dtype=np.float64)
    for k in range(1, n + 1):
        current = np.max(np.stack(neighbor_views(current, d, -np.inf)), axis=0) + env.slice(k)
    return float(np.max(current))


def min_path_weight(env: EnvironmentLike, n: int) -> float:
    """min_ω H_n（ρ⁻ 的有限n代理），通过取负环境"""
    return -max_path_weight(env.negated(), n)


def walk_distribution(d: int, n: int) -> SiteDistribution:
    """简单随机游走的端点分布 P(S_n = x)"""
    current = np.ones(box_shape(0, d), dtype=np.float64)
    for _ in range(n):
        current = sum(neighbor_views(current, d, 0.0)) / (2 * d)
    return SiteDistribution(n, current)


def expected_path_weight(env: EnvironmentLike, n: int) -> float:
    """E_P[H_n] = Σ_k Σ_x P(S_k = x) η(k, x)"""
    _check_horizon(env, n)
    total = 0.0
    current = np.ones(box_shape(0, env.d), dtype=np.float64)
    for k in range(1, n + 1):
        current = sum(neighbor_views(current, env.d, 0.0)) / (2 * env.d)
        total += float(np.sum(current * env.slice(k)))
    return total


# ==================== 暴力枚举对照 ====================

@dataclass(frozen=True)
class EnumeratedPaths:
    """全部路径的端点与总权重"""
    n: int
    endpoints: np.ndarray  # (P, d)
    weights: np.ndarray  # (P,)


def enumerate_path_weights(env: EnvironmentLike, n: int,
                           limit: int = BRUTE_FORCE_LIMIT) -> EnumeratedPaths:
    """逐条路径计算 H_n（测试对照）"""
    _check_horizon(env, n)
    d = env.d
    positions = enumerate_paths(d, n, limit)
    weights = np.zeros(positions.shape[0], dtype=np.float64)
    for k in range(1, n + 1):
        index = tuple((positions[:, k - 1, axis] + k) for axis in range(d))
        weights += env.slice(k)[index]
    endpoints = positions[:, -1, :] if n > 0 else np.zeros((1, d), dtype=np.int64)
    return EnumeratedPaths(n, endpoints, weights)


def brute_force_partition(env: EnvironmentLike, n: int, beta: float,
                          limit: int = BRUTE_FORCE_LIMIT) -> float:
    """显式枚举全部(2d)^n条路径得到 log Z_n(β)"""
    paths = enumerate_path_weights(env, n, limit)
    return float(logsumexp(beta * paths.weights) - n * math.log(2 * env.d))


def brute_force_endpoint(env: EnvironmentLike, n: int, beta: float,
                         limit: int = BRUTE_FORCE_LIMIT) -> SiteDistribution:
    """逐条路径倾斜计数得到端点分布"""
    paths = enumerate_path_weights(env, n, limit)
    log_w = beta * paths.weights
    probs = np.exp(log_w - logsumexp(log_w))
    table = np.zeros(box_shape(n, env.d), dtype=np.float64)
    np.add.at(table, tuple(paths.endpoints[:, axis] + n for axis in range(env.d)), probs)
    return SiteDistribution(n, table)


def brute_force_max(env: EnvironmentLike, n: int, limit: int = BRUTE_FORCE_LIMIT) -> float:
    return float(np.max(enumerate_path_weights(env, n, limit).weights))


def brute_force_histogram(env: EnvironmentLike, n: int,
                          limit: int = BRUTE_FORCE_LIMIT) -> Dict[tuple, int]:
    """(端点, 总权重) -> 路径数"""
    paths = enumerate_path_weights(env, n, limit)
    histogram: Dict[tuple, int] = {}
    for end, h in zip(map(tuple, paths.endpoints.tolist()), paths.weights.tolist()):
        key = (end, int(round(h)))
        histogram[key] = histogram.get(key, 0) + 1
    return histogram
