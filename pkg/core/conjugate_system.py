"""
Legendre变换 - PolymerLab核心模块
负责由自由能曲线得到速率函数 I = p*，V_η集合扫描，ρ±估计，以及路径计数增长率的收敛检查

网格上确界变换：I(ρ) = max_j (ρβ_j - p(β_j))，不做平滑也不拟合参数形式，
凸性由构造保证；I(ρ)的传播标准误取极大点β处曲线值的标准误。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.check_report import CheckReport, check_at_least, check_at_most
from core.count_system import EXACT_BITS, count_tables, histogram_rows, log_count_threshold
from core.environment import DistributionModel, EnvironmentLike, is_infinite
from core.errors import ModelError
from core.free_energy_manager import (NUMERIC_FLOOR, SE_MULTIPLIER, FreeEnergyCurve,
                                      curve_environments, mean_and_se, replica_environments,
                                      run_replicas)
from core.transfer_system import max_path_weight, min_path_weight

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RateFunctionGrid:
    """
    速率函数网格
    rhos上的I值、传播标准误、极大点β，以及有效区间 [ρ_lo, ρ_hi]（源曲线割线斜率范围）
    """
    rhos: np.ndarray
    values: np.ndarray
    ses: np.ndarray
    argmax_betas: np.ndarray
    validity: Tuple[float, float]
    betas: np.ndarray
    source_values: np.ndarray
    source_ses: np.ndarray
    source: Dict[str, Any] = field(default_factory=dict)

    def extrapolated(self, rho: float) -> bool:
        lo, hi = self.validity
        return not lo <= rho <= hi

    @property
    def flags(self) -> np.ndarray:
        return np.array([self.extrapolated(r) for r in self.rhos.tolist()], dtype=bool)

    def evaluate(self, rho: float) -> Tuple[float, float]:
        """
        任意ρ处的精确网格上确界

        返回:
            (I(ρ), 传播标准误)
        """
        objective = rho * self.betas - self.source_values
        j = int(np.argmax(objective))
        return float(objective[j]), float(self.source_ses[j])

    def minimum(self) -> Tuple[float, float, float]:
        """网格上的 (ρ, I最小值, 对应SE)"""
        i = int(np.argmin(self.values))
        return float(self.rhos[i]), float(self.values[i]), float(self.ses[i])

    def rows(self) -> List[Tuple]:
        """CSV行 (ρ, I, flagged_extrapolated, se)"""
        return [(float(r), float(v), bool(f), float(s))
                for r, v, f, s in zip(self.rhos.tolist(), self.values.tolist(),
                                      self.flags.tolist(), self.ses.tolist())]


def secant_slopes(betas: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.diff(values) / np.diff(betas)


def legendre(beta_grid: Sequence[float], values: Sequence[float],
             ses: Optional[Sequence[float]] = None,
             rho_grid: Optional[Sequence[float]] = None,
             source: Optional[Dict[str, Any]] = None) -> RateFunctionGrid:
    """
    网格Legendre变换

    参数:
        beta_grid: 严格递增的β网格
        values: 曲线值 p(β_j)
        ses: 曲线值的标准误（可选）
        rho_grid: ρ网格，默认取源曲线的割线斜率
        source: 来源元数据

    返回:
        RateFunctionGrid
    """
    betas = np.asarray(beta_grid, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if betas.ndim != 1 or betas.size < 2:
        raise ModelError(f"Legendre变换至少需要2个网格点，实际为 {betas.size}")
    if vals.shape != betas.shape:
        raise ModelError("β网格与曲线值长度不一致")
    if np.any(np.diff(betas) <= 0.0):
        raise ModelError("β网格必须严格递增")
    if not (np.all(np.isfinite(betas)) and np.all(np.isfinite(vals))):
        raise ModelError("Legendre变换的输入必须有限")
    errors = np.zeros_like(vals) if ses is None else np.asarray(ses, dtype=np.float64)
    slopes = secant_slopes(betas, vals)
    validity = (float(np.min(slopes)), float(np.max(slopes)))
    rhos = np.unique(slopes) if rho_grid is None else np.asarray(sorted(rho_grid), dtype=np.float64)

    objective = rhos[:, None] * betas[None, :] - vals[None, :]
    argmax = np.argmax(objective, axis=1)
    picked = objective[np.arange(rhos.size), argmax]
    return RateFunctionGrid(rhos, picked, errors[argmax], betas[argmax], validity,
                            betas, vals, errors, dict(source or {}))


def rate_from_curve(curve: FreeEnergyCurve, n: Optional[int] = None,
                    rho_grid: Optional[Sequence[float]] = None) -> RateFunctionGrid:
    """用曲线在某个n（默认最大n）上的估计做Legendre变换"""
    j = curve.n_index(n)
    means, ses = curve.values(curve.n_list[j])
    return legendre(curve.betas, means, ses, rho_grid,
                    source={"model": curve.model.to_dict(), "d": curve.d,
                            "n": curve.n_list[j], "M": curve.replicas})


def biconjugate(rate: RateFunctionGrid, beta_grid: Optional[Sequence[float]] = None) -> np.ndarray:
    """I*(β) = max_i (ρ_i β - I(ρ_i))，默认在源β网格上求值"""
    betas = rate.betas if beta_grid is None else np.asarray(beta_grid, dtype=np.float64)
    return np.max(betas[:, None] * rate.rhos[None, :] - rate.values[None, :], axis=1)


def convex_minorant(beta_grid: Sequence[float], values: Sequence[float]) -> np.ndarray:
    """网格数据的最大凸下界（下凸包）在网格点上的值"""
    betas = np.asarray(beta_grid, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    hull: List[int] = []
    for i in range(betas.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # b在a→i连线上方则不是下凸包顶点
            cross = (vals[b] - vals[a]) * (betas[i] - betas[a]) - (vals[i] - vals[a]) * (betas[b] - betas[a])
            if cross >= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(betas, betas[hull], vals[hull])


# ==================== V_η ====================

def v_set_scan(rate: RateFunctionGrid, model: DistributionModel, tolerance: float = 0.0,
               rho_grid: Optional[Sequence[float]] = None) -> List[float]:
    """
    标记 |I(ρ) - λ*(ρ)| <= max(tol, 传播SE) 的ρ（有限n启发式）
    λ*(ρ) = +∞ 的ρ永不标记
    """
    rhos = rate.rhos.tolist() if rho_grid is None else [float(r) for r in rho_grid]
    flagged = []
    for rho in rhos:
        annealed = model.conjugate(rho)
        if is_infinite(annealed):
            continue
        value, se = rate.evaluate(rho)
        if abs(value - annealed) <= max(tolerance, se):
            flagged.append(rho)
    logger.info(f"V_η扫描（有限n启发式）: {len(flagged)}/{len(rhos)} 个ρ与退火速率一致")
    return flagged


def annealed_order_check(rate: RateFunctionGrid, model: DistributionModel) -> List[CheckReport]:
    """p̂ ≤ λ 时共轭反序：I(ρ) ≥ λ*(ρ) - 传播SE"""
    reports = []
    for rho, value, se in zip(rate.rhos.tolist(), rate.values.tolist(), rate.ses.tolist()):
        annealed = model.conjugate(rho)
        if is_infinite(annealed):
            continue
        reports.append(check_at_least("conjugate_order", value, float(annealed),
                                      max(NUMERIC_FLOOR, SE_MULTIPLIER * se), details={"rho": rho}))
    return reports


# ==================== ρ± ====================

@dataclass(frozen=True)
class RhoEstimate:
    """ρ⁺/ρ⁻ 两种估计及其差距"""
    beta_max: float
    beta_min: float
    plus_curve: float
    minus_curve: float
    plus_direct: float
    plus_direct_se: float
    minus_direct: float
    minus_direct_se: float
    n: int
    diverging: bool

    @property
    def plus_gap(self) -> float:
        return self.plus_direct - self.plus_curve

    @property
    def minus_gap(self) -> float:
        return self.minus_direct - self.minus_curve

    def to_dict(self) -> Dict[str, Any]:
        return {"beta_max": self.beta_max, "beta_min": self.beta_min,
                "rho_plus_curve": self.plus_curve, "rho_minus_curve": self.minus_curve,
                "rho_plus_direct": self.plus_direct, "rho_plus_direct_se": self.plus_direct_se,
                "rho_minus_direct": self.minus_direct, "rho_minus_direct_se": self.minus_direct_se,
                "rho_plus_gap": self.plus_gap, "rho_minus_gap": self.minus_gap,
                "n": self.n, "diverging": self.diverging}


def rho_pm(curve: FreeEnergyCurve, environments: Optional[Sequence[EnvironmentLike]] = None,
           n: Optional[int] = None) -> RhoEstimate:
    """
    ρ± 的两种有限n估计：p̂(±β_max)/β_max 与 max H_n/n、-min H_n/n 的副本均值

    参数:
        curve: 自由能曲线（应包含较大的|β|）
        environments: 直接估计所用环境，默认为曲线自身的副本
        n: 路径长度，默认曲线最大n
    """
    n = curve.largest_n if n is None else int(n)
    means, _ = curve.values(n)
    beta_max, beta_min = float(curve.betas[-1]), float(curve.betas[0])
    if beta_max <= 0.0 or beta_min >= 0.0:
        raise ModelError("ρ±估计需要β网格同时包含正负值")
    envs = curve_environments(curve) if environments is None else list(environments)
    highs = np.array([max_path_weight(env, n) / n for env in envs])
    lows = np.array([-min_path_weight(env, n) / n for env in envs])
    high_mean, high_se = mean_and_se(highs)
    low_mean, low_se = mean_and_se(lows)
    lo, hi = curve.model.support()
    diverging = not (math.isfinite(lo) and math.isfinite(hi))
    if diverging:
        logger.warning(f"{curve.model!r} 权重无界：ρ±随β_max发散，报告值仅为当前β_max下的估计")
    return RhoEstimate(beta_max, beta_min, float(means[-1] / beta_max), float(means[0] / -beta_min),
                       float(high_mean), float(high_se), float(low_mean), float(low_se), n, diverging)


def rho_pm_bound_check(curve: FreeEnergyCurve, estimate: RhoEstimate) -> List[CheckReport]:
    """直接估计 >= p̂(β)/β - log(2d)/β - 3·SE（由 Z_n(β) ≤ e^{βH_max}）"""
    slack = math.log(2 * curve.d)
    return [
        check_at_least("rho_plus_bound", estimate.plus_direct,
                       estimate.plus_curve - slack / estimate.beta_max,
                       SE_MULTIPLIER * estimate.plus_direct_se),
        check_at_least("rho_minus_bound", estimate.minus_direct,
                       estimate.minus_curve - slack / -estimate.beta_min,
                       SE_MULTIPLIER * estimate.minus_direct_se),
    ]


def rho_pm_consistency(rate: RateFunctionGrid, estimate: RhoEstimate) -> List[CheckReport]:
    """有效区间 ⊂ [-ρ⁻ - ε, ρ⁺ + ε]，ε = log(2d)/β_max + 3·SE"""
    d = int(rate.source.get("d", 1))
    lo, hi = rate.validity
    eps_plus = math.log(2 * d) / estimate.beta_max + SE_MULTIPLIER * estimate.plus_direct_se
    eps_minus = math.log(2 * d) / -estimate.beta_min + SE_MULTIPLIER * estimate.minus_direct_se
    return [
        check_at_most("validity_upper", hi, estimate.plus_direct, eps_plus),
        check_at_least("validity_lower", lo, -estimate.minus_direct, eps_minus),
    ]


# ==================== 计数增长率 ====================

@dataclass(frozen=True)
class GrowthRow:
    n: int
    mean: float
    se: float
    zero_count: int
    target: float
    difference: float


@dataclass(frozen=True)
class CorollaryReport:
    """(1/n) log N_n(ρ) 的序列与 log(2d) - I(ρ) 的比较"""
    rho: float
    rate: float
    rate_se: float
    replicas: int
    rows: List[GrowthRow]
    window: Tuple[float, float] = (-math.inf, math.inf)

    @property
    def in_window(self) -> bool:
        lo, hi = self.window
        return lo < self.rho < hi

    @property
    def target(self) -> float:
        return self.rows[0].target if self.rows else math.nan

    def differences(self) -> List[float]:
        return [row.difference for row in self.rows]

    def trend_check(self) -> CheckReport:
        """|差值| 随n不增（每一步允许3·SE的统计松弛）"""
        worst = 0.0
        for prev, row in zip(self.rows, self.rows[1:]):
            if math.isnan(prev.difference) or math.isnan(row.difference):
                continue
            worst = max(worst, row.difference - prev.difference - SE_MULTIPLIER * math.hypot(prev.se, row.se))
        return check_at_most("growth_rate_trend", worst, 0.0, 0.0,
                             details={"rho": self.rho, "n_last": self.rows[-1].n if self.rows else 0,
                                      "in_window": self.in_window})

    def to_dict(self) -> Dict[str, Any]:
        return {"rho": self.rho, "rate": self.rate, "rate_se": self.rate_se, "M": self.replicas,
                "target": self.target, "window": list(self.window), "in_window": self.in_window,
                "sequence": [{"n": r.n, "mean": None if math.isnan(r.mean) else r.mean, "se": r.se,
                              "zero_count": r.zero_count, "difference":
                                  None if math.isnan(r.difference) else r.difference}
                             for r in self.rows]}


def corollary_check(model: DistributionModel, d: int, rho: float, n_list: Sequence[int],
                    rate: RateFunctionGrid, replicas: int, seed: int,
                    exact_bits: int = EXACT_BITS, workers: int = 1) -> CorollaryReport:
    """
    精确计数 (1/n) log N_n(ρ) 并与 log(2d) - I(ρ) 比较

    参数:
        model: 整数取值分布
        d: 维数
        rho: 水平ρ（应在 (-ρ⁻, ρ⁺) 内，窗口外记录告警并在报告中标出）
        n_list: 路径长度
        rate: 速率函数网格
        replicas: 环境副本数
        seed: 主种子

    返回:
        CorollaryReport；N_n(ρ)=0 的样本单独计数，不以-inf参与平均
    """
    if not model.is_integer_valued:
        raise ModelError(f"{model!r} 不是整数取值分布，无法精确计数")
    ns = sorted(set(int(n) for n in n_list))
    if not ns or ns[0] < 1:
        raise ModelError(f"n列表必须非空且n>=1，实际为 {list(n_list)}")
    m = model.mean()
    envs = replica_environments(model, d, ns[-1], replicas, seed)

    def task(r: int) -> Tuple[List[float], float, float]:
        tables = count_tables(envs[r], ns, exact_bits)
        weights = [h for h, _, _ in histogram_rows(tables[ns[-1]])]
        return ([log_count_threshold(tables[n], rho, m) for n in ns],
                min(weights) / ns[-1], max(weights) / ns[-1])

    results = run_replicas(task, replicas, workers)
    logs = np.array([r[0] for r in results])
    # 有限n下的 (-ρ⁻, ρ⁺)：最长n处 min/max H_n/n 的副本平均
    window = (float(np.mean([r[1] for r in results])), float(np.mean([r[2] for r in results])))
    if not window[0] < rho < window[1]:
        logger.warning(f"ρ={rho} 不在估计窗口 ({window[0]:.4f}, {window[1]:.4f}) 内，增长率比较不适用")
    value, value_se = rate.evaluate(rho)
    target = math.log(2 * d) - value
    rows = []
    for j, n in enumerate(ns):
        column = logs[:, j]
        finite = column[np.isfinite(column)] / n
        zero_count = int(column.size - finite.size)
        if zero_count:
            logger.warning(f"n={n}: {zero_count}/{replicas} 个样本 N_n({rho}) = 0，单独计数")
        if finite.size:
            mean, se = mean_and_se(finite)
            mean, se = float(mean), float(se)
        else:
            mean, se = math.nan, 0.0
        rows.append(GrowthRow(n, mean, se, zero_count, target, abs(mean - target)))
    logger.info(f"增长率检查完成: ρ={rho}, 目标={target:.6f}, 差值={[round(r.difference, 6) for r in rows]}")
    return CorollaryReport(float(rho), value, value_se, replicas, rows, window)
