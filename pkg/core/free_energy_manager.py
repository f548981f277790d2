"""
自由能估计 - PolymerLab核心模块
负责淬火自由能 (1/n)Q[log Z_n(β)] 的蒙特卡洛估计、Jensen间隙与临界区域扫描

M个环境副本的种子由主种子派生；同一组副本在整个β网格上复用（公共随机数）。
聚合按副本下标排序后进行，结果与线程完成顺序无关。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.check_report import CheckReport, check_at_least, check_at_most, check_identity
from core.environment import DistributionModel, derive_seed, sample_environment
from core.errors import ModelError
from core.transfer_system import log_partition_sequence

logger = logging.getLogger(__name__)

# 统计检验的标准误倍数
SE_MULTIPLIER = 3.0
# 零方差时的浮点容差
NUMERIC_FLOOR = 1e-12


def run_replicas(task: Callable[[int], Any], count: int, workers: int = 1) -> List[Any]:
    """
    执行count个独立副本任务

    参数:
        task: 副本下标 -> 结果
        count: 副本数
        workers: 线程数（<=1时串行）

    返回:
        按副本下标排序的结果列表
    """
    if workers <= 1 or count <= 1:
        return [task(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map保持输入顺序
        return list(pool.map(task, range(count)))


def mean_and_se(samples: np.ndarray, axis: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """样本均值与标准误 std(ddof=1)/√M"""
    samples = np.asarray(samples, dtype=np.float64)
    m = samples.shape[axis]
    mean = np.mean(samples, axis=axis)
    if m < 2:
        return mean, np.zeros_like(mean)
    return mean, np.std(samples, axis=axis, ddof=1) / math.sqrt(m)


@dataclass(frozen=True)
class CurvePoint:
    """曲线上的一点"""
    beta: float
    n: int
    mean: float
    se: float
    annealed: float


@dataclass(frozen=True)
class FreeEnergyCurve:
    """
    自由能曲线
    samples[r, i, j] = 第r个副本在β_i、n_j处的 (1/n_j) log Z_{n_j}(β_i)
    """
    model: DistributionModel
    d: int
    betas: np.ndarray
    n_list: Tuple[int, ...]
    samples: np.ndarray
    master_seed: int

    @property
    def replicas(self) -> int:
        return int(self.samples.shape[0])

    @property
    def means(self) -> np.ndarray:
        return mean_and_se(self.samples)[0]

    @property
    def ses(self) -> np.ndarray:
        return mean_and_se(self.samples)[1]

    @property
    def annealed(self) -> np.ndarray:
        """λ(β)"""
        return np.array([self.model.log_mgf(b) for b in self.betas.tolist()])

    @property
    def largest_n(self) -> int:
        return self.n_list[-1]

    def n_index(self, n: Optional[int] = None) -> int:
        n = self.largest_n if n is None else int(n)
        if n not in self.n_list:
            raise ModelError(f"曲线不包含 n={n}，可用 {list(self.n_list)}")
        return self.n_list.index(n)

    def beta_index(self, beta: float) -> Optional[int]:
        hits = np.nonzero(np.isclose(self.betas, beta, rtol=0.0, atol=1e-12))[0]
        return int(hits[0]) if hits.size else None

    def values(self, n: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """某个n上的 (均值, 标准误)"""
        j = self.n_index(n)
        return self.means[:, j], self.ses[:, j]

    def points(self) -> List[CurvePoint]:
        means, ses, annealed = self.means, self.ses, self.annealed
        return [CurvePoint(float(b), n, float(means[i, j]), float(ses[i, j]), float(annealed[i]))
                for j, n in enumerate(self.n_list) for i, b in enumerate(self.betas.tolist())]

    def rows(self) -> List[Tuple]:
        """CSV行 (β, n, M, mean, se, lambda)"""
        return [(p.beta, p.n, self.replicas, p.mean, p.se, p.annealed) for p in self.points()]

    def manifest(self) -> Dict[str, Any]:
        return {"model": self.model.to_dict(), "d": self.d, "grid": self.betas.tolist(),
                "n_list": list(self.n_list), "M": self.replicas, "master_seed": self.master_seed}


def _validate_grid(beta_grid: Sequence[float], n_list: Sequence[int], replicas: int) -> Tuple[np.ndarray, Tuple[int, ...]]:
    betas = np.array(sorted(set(float(b) for b in beta_grid)), dtype=np.float64)
    ns = tuple(sorted(set(int(n) for n in n_list)))
    if betas.size == 0:
        raise ModelError("β网格不能为空")
    if not np.all(np.isfinite(betas)):
        raise ModelError("β网格必须为有限实数")
    if not ns or ns[0] < 1:
        raise ModelError(f"n列表必须非空且n>=1，实际为 {list(n_list)}")
    if replicas < 2:
        raise ModelError(f"副本数M必须>=2，实际为 {replicas}")
    return betas, ns


def replica_free_energy(model: DistributionModel, d: int, betas: np.ndarray,
                        n_list: Sequence[int], seed: int) -> np.ndarray:
    """
    单个环境副本在全部(β, n)上的 (1/n) log Z_n(β)

    返回:
        形状(len(betas), len(n_list))
    """
    n_max = max(n_list)
    env = sample_environment(model, d, n_max, seed)
    out = np.zeros((len(betas), len(n_list)), dtype=np.float64)
    ns = np.asarray(n_list)
    for i, beta in enumerate(betas.tolist()):
        sequence = log_partition_sequence(env, n_max, beta)
        out[i] = sequence[ns] / ns
    return out


def estimate_free_energy(model: DistributionModel, d: int, beta_grid: Sequence[float],
                         n_list: Sequence[int], replicas: int, seed: int,
                         workers: int = 1) -> FreeEnergyCurve:
    """
    蒙特卡洛估计自由能曲线

    参数:
        model: 单点分布
        d: 维数
        beta_grid: β网格
        n_list: 路径长度列表
        replicas: 环境副本数M（>=2）
        seed: 主种子
        workers: 并行线程数

    返回:
        FreeEnergyCurve
    """
    betas, ns = _validate_grid(beta_grid, n_list, replicas)
    logger.info(f"自由能估计开始: {model!r}, d={d}, β点数={betas.size}, n={list(ns)}, M={replicas}")

    def task(r: int) -> np.ndarray:
        values = replica_free_energy(model, d, betas, ns, derive_seed(seed, r))
        logger.debug(f"副本 {r} 完成")
        return values

    samples = np.stack(run_replicas(task, replicas, workers))
    curve = FreeEnergyCurve(model, int(d), betas, ns, samples, int(seed))
    logger.info(f"自由能估计完成: 最大n={curve.largest_n}")
    return curve


# ==================== 间隙与临界区域 ====================

@dataclass(frozen=True)
class GapRow:
    beta: float
    n: int
    gap: float
    se: float


def jensen_gap(curve: FreeEnergyCurve, n: Optional[int] = None) -> List[GapRow]:
    """λ(β) - 估计值（默认最大n），附标准误"""
    j = curve.n_index(n)
    means, ses, annealed = curve.means[:, j], curve.ses[:, j], curve.annealed
    return [GapRow(float(b), curve.n_list[j], float(annealed[i] - means[i]), float(ses[i]))
            for i, b in enumerate(curve.betas.tolist())]


def critical_region_scan(curve: FreeEnergyCurve, tolerance: float = 0.0,
                         n: Optional[int] = None) -> List[float]:
    """
    标记 |间隙| <= max(tol, 3·SE) 的β（有限n启发式，不是极限结论）

    返回:
        被标记为与退火值一致的β列表
    """
    flagged = [row.beta for row in jensen_gap(curve, n)
               if abs(row.gap) <= max(tolerance, SE_MULTIPLIER * row.se)]
    logger.info(f"临界区域扫描（有限n启发式）: {len(flagged)}/{curve.betas.size} 个β与退火值一致")
    return flagged


# ==================== 曲线检查 ====================

def jensen_check(curve: FreeEnergyCurve, n: Optional[int] = None,
                 floor: float = NUMERIC_FLOOR) -> List[CheckReport]:
    """每个β：估计值 ≤ λ(β) + max(3·SE, floor)"""
    j = curve.n_index(n)
    means, ses, annealed = curve.means[:, j], curve.ses[:, j], curve.annealed
    return [check_at_most("jensen_bound", float(means[i]), float(annealed[i]),
                          max(floor, SE_MULTIPLIER * float(ses[i])),
                          details={"beta": b, "n": curve.n_list[j]})
            for i, b in enumerate(curve.betas.tolist())]


def convexity_check(curve: FreeEnergyCurve) -> List[CheckReport]:
    """
    每个n、每个内部网格点：插值 - 值 >= -3·传播SE
    不等距网格按线性插值权重计算二阶差分
    """
    reports = []
    betas = curve.betas
    for n in curve.n_list:
        means, ses = curve.values(n)
        for i in range(1, betas.size - 1):
            t = (betas[i] - betas[i - 1]) / (betas[i + 1] - betas[i - 1])
            chord = (1.0 - t) * means[i - 1] + t * means[i + 1]
            se = math.sqrt(((1.0 - t) * ses[i - 1]) ** 2 + (t * ses[i + 1]) ** 2 + ses[i] ** 2)
            reports.append(check_at_least("convexity", float(chord), float(means[i]),
                                          max(NUMERIC_FLOOR, SE_MULTIPLIER * se),
                                          details={"beta": float(betas[i]), "n": n}))
    return reports


def superadditive_trend_check(curve: FreeEnergyCurve) -> List[CheckReport]:
    """n与2n都在列表中时：mean(2n) >= mean(n) - 3·合并SE"""
    reports = []
    means, ses = curve.means, curve.ses
    for j, n in enumerate(curve.n_list):
        if 2 * n not in curve.n_list:
            continue
        k = curve.n_list.index(2 * n)
        for i, beta in enumerate(curve.betas.tolist()):
            pooled = math.hypot(ses[i, j], ses[i, k])
            reports.append(check_at_least("superadditive_trend", float(means[i, k]), float(means[i, j]),
                                          max(NUMERIC_FLOOR, SE_MULTIPLIER * pooled),
                                          details={"beta": beta, "n": n, "2n": 2 * n}))
    return reports


def symmetry_check(curve: FreeEnergyCurve, n: Optional[int] = None) -> List[CheckReport]:
    """
    对称分布：±β处的估计在3·SE内相等

    ±β使用同一批副本，SE取成对差值的标准误
    """
    j = curve.n_index(n)
    means = curve.means[:, j]
    reports = []
    for i, beta in enumerate(curve.betas.tolist()):
        if beta <= 0.0:
            continue
        k = curve.beta_index(-beta)
        if k is None:
            continue
        _, se = mean_and_se(curve.samples[:, i, j] - curve.samples[:, k, j])
        reports.append(check_identity("symmetry", float(means[i]), float(means[k]),
                                      max(NUMERIC_FLOOR, SE_MULTIPLIER * float(se)), details={"beta": beta}))
    return reports


def slope_at_zero_check(curve: FreeEnergyCurve, n: Optional[int] = None,
                        tolerance: float = NUMERIC_FLOOR) -> Optional[CheckReport]:
    """
    在0两侧最近的对称网格点±h上做中心差分，与分布均值比较

    返回:
        CheckReport；网格中没有对称的±h时返回None
    """
    means, ses = curve.values(n)
    positive = [b for b in curve.betas.tolist() if b > 0.0 and curve.beta_index(-b) is not None]
    if not positive:
        return None
    h = min(positive)
    i, k = curve.beta_index(h), curve.beta_index(-h)
    slope = (means[i] - means[k]) / (2.0 * h)
    se = math.hypot(ses[i], ses[k]) / (2.0 * h)
    return check_identity("slope_at_zero", float(slope), curve.model.mean(),
                          max(tolerance, SE_MULTIPLIER * se), details={"h": h})


def replica_environments(model: DistributionModel, d: int, n_max: int, replicas: int,
                         seed: int, margin: int = 0) -> List:
    """按主种子重建与估计时相同的M个环境副本"""
    return [sample_environment(model, d, n_max, derive_seed(seed, r), margin=margin)
            for r in range(replicas)]


def curve_environments(curve: FreeEnergyCurve) -> List:
    """自由能曲线所用的环境副本"""
    return replica_environments(curve.model, curve.d, curve.largest_n, curve.replicas, curve.master_seed)
