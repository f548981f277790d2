"""
平滑泛函 - PolymerLab核心模块
负责 V^(λ)_n(x,a;η) = log P^x[e^{-λ|H_n - a|}]、倾斜端点测度σ_n、
超可加性（逐环境与均值两种形式）、次速率函数I^(λ)、集中不等式实验，以及两侧夹逼界

所有值都由精确计数表在对数空间求得；实值环境先量化（步长Δ），
每个结果附带量化误差界 λ·nΔ/2。
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from core.check_report import CheckReport, check_at_least, check_at_most, check_identity
from core.count_system import (EXACT_BITS, WeightCountTable, count_tables,
                               quantize_environment)
from core.environment import DistributionModel, EnvironmentLike, derive_seed, sample_environment
from core.errors import ModelError
from core.free_energy_manager import SE_MULTIPLIER, mean_and_se, run_replicas
from core.lattice import SiteLike, as_site, origin
from core.transfer_system import SiteDistribution

logger = logging.getLogger(__name__)

# 默认量化步长Δ
DEFAULT_STEP = 0.01
# 逐环境不等式的数值容差
PATHWISE_TOLERANCE = 1e-9


def _check_lambda(lam: float) -> None:
    if not lam > 0.0:
        raise ModelError(f"平滑参数λ必须为正，实际为 {lam}")


# ==================== 点到点计数表 ====================

def point_tables(env: EnvironmentLike, n_list: Sequence[int], x: Optional[SiteLike] = None,
                 step: float = DEFAULT_STEP,
                 exact_bits: int = EXACT_BITS) -> Dict[int, WeightCountTable]:
    """
    从x出发的计数表 C^x_n(y, h)（y为相对x的位移）

    参数:
        env: 环境
        n_list: 路径长度
        x: 起点，默认原点
        step: 环境非整数时的量化步长Δ

    返回:
        {n: 计数表}；量化时表的unit为Δ、path_error为nΔ/2
    """
    start = origin(env.d) if x is None else as_site(x, env.d)
    view = env.translate(0, start)
    ns = sorted(set(int(n) for n in n_list))
    if view.is_integer_valued(max(ns) if ns else 0):
        return count_tables(view, ns, exact_bits)
    quantized = quantize_environment(view, step)
    logger.debug(f"环境含非整数权重，按Δ={step}量化")
    return {n: quantized.with_error(t) for n, t in count_tables(quantized.integer_env, ns, exact_bits).items()}


def point_table(env: EnvironmentLike, n: int, x: Optional[SiteLike] = None,
                step: float = DEFAULT_STEP) -> WeightCountTable:
    return point_tables(env, [n], x, step)[n]


# ==================== V^(λ) 与 σ_n ====================

@dataclass(frozen=True)
class SmoothedValue:
    """V^(λ)_n(x, a; η)，error_bound为量化带来的误差界"""
    lam: float
    n: int
    start: Tuple[int, ...]
    a: float
    value: float
    error_bound: float = 0.0


def _penalty(table: WeightCountTable, lam: float, a: float) -> np.ndarray:
    return -lam * np.abs(table.scaled_weights() - a)


def smoothed_value(table: WeightCountTable, lam: float, a: float) -> SmoothedValue:
    """
    V = log Σ_h P^x(H_n = h) e^{-λ|h - a|}

    参数:
        table: 从起点x出发的计数表
        lam: λ > 0
        a: 中心
    """
    _check_lambda(lam)
    with np.errstate(divide="ignore"):
        value = float(logsumexp(table.log_masses() + _penalty(table, lam, a)))
    # e^{-λ|·|} ≤ 1，舍入误差不允许越过0
    value = min(value, 0.0)
    return SmoothedValue(float(lam), table.n, table.start, float(a), value, lam * table.path_error)


def smoothed_value_env(env: EnvironmentLike, n: int, lam: float, a: float,
                       x: Optional[SiteLike] = None, step: float = DEFAULT_STEP) -> SmoothedValue:
    return smoothed_value(point_table(env, n, x, step), lam, a)


@dataclass(frozen=True)
class SigmaMeasure:
    """σ_n(y) ∝ P^x[e^{-λ|H_n - b|} 1{S_n = y}]，y为相对起点的位移"""
    n: int
    b: float
    lam: float
    start: Tuple[int, ...]
    distribution: SiteDistribution
    log_normalizer: float

    def prob(self, y: SiteLike) -> float:
        return self.distribution.prob(y)

    def total(self) -> float:
        return self.distribution.total()

    def items(self):
        return self.distribution.items()


def sigma_from_table(table: WeightCountTable, b: float, lam: float) -> SigmaMeasure:
    """由计数表求σ_n；以指数矩 e^{V} 归一化"""
    _check_lambda(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_site = logsumexp(table.log_counts() + _penalty(table, lam, b), axis=-1)
        normalizer = float(logsumexp(per_site))
        probs = np.exp(per_site - normalizer)
    log_v = normalizer - table.log_total_paths
    return SigmaMeasure(table.n, float(b), float(lam), table.start,
                        SiteDistribution(table.n, probs), log_v)


def sigma_measure(env: EnvironmentLike, n: int, b: float, lam: float,
                  x: Optional[SiteLike] = None, step: float = DEFAULT_STEP) -> SigmaMeasure:
    return sigma_from_table(point_table(env, n, x, step), b, lam)


# ==================== 超可加性 ====================

def superadditivity_check_pathwise(env: EnvironmentLike, n: int, m: int, a: float, b: float,
                                   lam: float, x: Optional[SiteLike] = None) -> CheckReport:
    """
    逐环境验证
        V_{n+m}(x,a+b) ≥ V_n(x,b) + log Σ_y σ_n(y) e^{V_m(0,a;τ_{n,y}η)}
                       ≥ V_n(x,b) + Σ_y σ_n(y) V_m(0,a;τ_{n,y}η)

    返回:
        lhs为V_{n+m}，rhs为最后一项；details含中间的拼接界
    """
    _check_lambda(lam)
    if n < 0 or m < 0:
        raise ModelError(f"路径长度不能为负: n={n}, m={m}")
    start = origin(env.d) if x is None else as_site(x, env.d)
    view = env.translate(0, start)
    if n + m > view.horizon:
        raise ModelError(f"环境窗口 {view.horizon} 不足 n+m={n + m}")
    tables = count_tables(view, [n, n + m])
    lhs = smoothed_value(tables[n + m], lam, a + b).value
    first = smoothed_value(tables[n], lam, b).value
    sigma = sigma_from_table(tables[n], b, lam)

    weights, values = [], []
    for y, p in sigma.items():
        tail = count_tables(view.translate(n, y), [m])[m]
        weights.append(p)
        values.append(smoothed_value(tail, lam, a).value)
    weights_arr, values_arr = np.array(weights), np.array(values)
    gluing = first + float(logsumexp(values_arr, b=weights_arr))
    rhs = first + float(np.dot(weights_arr, values_arr))
    report = check_at_least("superadditivity_pathwise", lhs, rhs, PATHWISE_TOLERANCE,
                            details={"n": n, "m": m, "a": a, "b": b, "lambda": lam,
                                     "gluing_bound": gluing, "gluing_slack": lhs - gluing})
    logger.debug(f"逐环境超可加性: lhs={lhs:.12g}, 拼接界={gluing:.12g}, rhs={rhs:.12g}")
    return report


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    se: float


def _replica_env(model: DistributionModel, d: int, n_max: int, seed: int, r: int) -> EnvironmentLike:
    return sample_environment(model, d, max(n_max, 1), derive_seed(seed, r))


def superadditivity_check_mean(model: DistributionModel, d: int, n: int, m: int, a: float,
                               b: float, lam: float, replicas: int, seed: int,
                               step: float = DEFAULT_STEP, workers: int = 1) -> CheckReport:
    """
    蒙特卡洛验证 v_{n+m}(a+b) ≥ v_n(a) + v_m(b)，容差3·合并SE
    m = 0 时退化为 v_n(a+b) ≥ v_n(a) - λ|b|
    """
    _check_lambda(lam)
    if replicas < 2:
        raise ModelError(f"副本数M必须>=2，实际为 {replicas}")

    def task(r: int) -> Tuple[float, float, float]:
        env = _replica_env(model, d, n + m, seed, r)
        tables = point_tables(env, [n, m, n + m], step=step)
        return (smoothed_value(tables[n + m], lam, a + b).value,
                smoothed_value(tables[n], lam, a).value,
                smoothed_value(tables[m], lam, b).value)

    samples = np.array(run_replicas(task, replicas, workers))
    means, ses = mean_and_se(samples)
    pooled = math.sqrt(float(np.sum(ses ** 2)))
    return check_at_least("superadditivity_mean", float(means[0]), float(means[1] + means[2]),
                          SE_MULTIPLIER * pooled,
                          details={"n": n, "m": m, "a": a, "b": b, "lambda": lam, "M": replicas,
                                   "se": pooled})


# ==================== 次速率函数 I^(λ) ====================

@dataclass(frozen=True)
class LambdaRateRow:
    n: int
    estimate: float
    se: float
    jensen_bound: float
    jensen_se: float


@dataclass(frozen=True)
class LambdaRateReport:
    """-v̂_n(nξ)/n 序列；末项作为I^(λ)(ξ)的估计"""
    xi: float
    lam: float
    replicas: int
    rows: List[LambdaRateRow]
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def estimate(self) -> Tuple[float, float]:
        last = self.rows[-1]
        return last.estimate, last.se

    def trend_check(self) -> CheckReport:
        """每项都是I^(λ)(ξ)的上界：estimate_i - 3SE_i ≥ 末项 - 6SE_末"""
        last = self.rows[-1]
        floor = last.estimate - 2.0 * SE_MULTIPLIER * last.se
        worst = min(row.estimate - SE_MULTIPLIER * row.se for row in self.rows)
        return check_at_least("lambda_rate_trend", worst, floor, 0.0,
                              details={"xi": self.xi, "lambda": self.lam})

    def jensen_check(self) -> List[CheckReport]:
        """-v_n(nξ)/n ≤ λ·Q E_P|H_n/n - ξ|"""
        return [check_at_most("lambda_rate_jensen", row.estimate, row.jensen_bound,
                              SE_MULTIPLIER * math.hypot(row.se, row.jensen_se),
                              details={"n": row.n, "xi": self.xi, "lambda": self.lam})
                for row in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {"xi": self.xi, "lambda": self.lam, "M": self.replicas,
                "estimate": self.estimate[0], "se": self.estimate[1],
                "sequence": [{"n": r.n, "estimate": r.estimate, "se": r.se,
                              "jensen_bound": r.jensen_bound} for r in self.rows]}


def _mean_abs_deviation(table: WeightCountTable, xi: float) -> float:
    """E_P|H_n/n - ξ|"""
    masses = np.exp(table.log_masses())
    return float(np.dot(masses, np.abs(table.scaled_weights() / table.n - xi)))


def rate_lambda_estimate(model: DistributionModel, d: int, xi: float, lam: float,
                         n_list: Sequence[int], replicas: int, seed: int,
                         step: float = DEFAULT_STEP, workers: int = 1) -> LambdaRateReport:
    """
    次可加极限 -(1/n)v^(λ)_n(nξ) → I^(λ)(ξ) 的有限n序列

    参数:
        model: 单点分布（实值分布按Δ量化）
        xi: 水平ξ
        lam: λ
        n_list: 路径长度
        replicas: 副本数
        seed: 主种子（不同λ共用同一种子即为共享环境）
    """
    _check_lambda(lam)
    ns = sorted(set(int(n) for n in n_list))
    if not ns or ns[0] < 1:
        raise ModelError(f"n列表必须非空且n>=1，实际为 {list(n_list)}")
    if replicas < 2:
        raise ModelError(f"副本数M必须>=2，实际为 {replicas}")

    def task(r: int) -> np.ndarray:
        env = _replica_env(model, d, ns[-1], seed, r)
        tables = point_tables(env, ns, step=step)
        out = np.empty((len(ns), 2))
        for j, n in enumerate(ns):
            out[j, 0] = -smoothed_value(tables[n], lam, n * xi).value / n
            out[j, 1] = lam * _mean_abs_deviation(tables[n], xi)
        return out

    samples = np.stack(run_replicas(task, replicas, workers))
    means, ses = mean_and_se(samples)
    rows = [LambdaRateRow(n, float(means[j, 0]), float(ses[j, 0]), float(means[j, 1]), float(ses[j, 1]))
            for j, n in enumerate(ns)]
    logger.info(f"I^(λ)估计: ξ={xi}, λ={lam}, 末项={rows[-1].estimate:.6f} ± {rows[-1].se:.2g}")
    return LambdaRateReport(float(xi), float(lam), replicas, rows, samples[:, :, 0])


def lambda_monotonicity_check(reports: Sequence[LambdaRateReport]) -> List[CheckReport]:
    """按λ递增排列的估计应不减（3·合并SE）"""
    ordered = sorted(reports, key=lambda r: r.lam)
    checks = []
    for low, high in zip(ordered, ordered[1:]):
        (e_low, s_low), (e_high, s_high) = low.estimate, high.estimate
        checks.append(check_at_most("lambda_monotonicity", e_low, e_high,
                                    SE_MULTIPLIER * math.hypot(s_low, s_high),
                                    details={"xi": low.xi, "lambda_low": low.lam,
                                             "lambda_high": high.lam}))
    return checks


# ==================== 集中不等式 ====================

@dataclass(frozen=True)
class TailRow:
    u: float
    empirical: float
    derived_bound: float
    displayed_bound: float
    se: float
    passed: bool


@dataclass(frozen=True)
class ConcentrationReport:
    n: int
    a: float
    lam: float
    replicas: int
    mean: float
    rows: List[TailRow]

    def checks(self) -> List[CheckReport]:
        return [check_at_most("concentration_tail", row.empirical, min(1.0, row.derived_bound),
                              SE_MULTIPLIER * row.se, details={"u": row.u, "n": self.n, "lambda": self.lam})
                for row in self.rows]

    def csv_rows(self) -> List[Tuple]:
        """(u, empirical, bound, displayed_bound)"""
        return [(r.u, r.empirical, r.derived_bound, r.displayed_bound) for r in self.rows]


def concentration_experiment(model: DistributionModel, d: int, n: int, a: float, lam: float,
                             replicas: int, seed: int,
                             u_grid: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
                             step: float = DEFAULT_STEP, workers: int = 1) -> ConcentrationReport:
    """
    采样 V^(λ)_n(0,a;η)，比较经验尾概率 P(|V - mean| ≥ u) 与
    Lipschitz常数λ√n导出的界 2exp(-u²/(2λ²n))；同时报告 2exp(-λ²u²/(2n)) 但不作判定

    界 ≥ 1 时自动通过
    """
    _check_lambda(lam)
    if replicas < 100:
        raise ModelError(f"集中不等式实验需要M>=100，实际为 {replicas}")

    def task(r: int) -> float:
        env = _replica_env(model, d, n, seed, r)
        return smoothed_value(point_table(env, n, step=step), lam, a).value

    values = np.array(run_replicas(task, replicas, workers))
    center = float(np.mean(values))
    deviations = np.abs(values - center)
    rows = []
    for u in u_grid:
        u = float(u)
        empirical = float(np.mean(deviations >= u))
        derived = 2.0 * math.exp(-u * u / (2.0 * lam * lam * n)) if n > 0 else 0.0
        displayed = 2.0 * math.exp(-lam * lam * u * u / (2.0 * n)) if n > 0 else 0.0
        capped = min(1.0, derived)
        se = math.sqrt(capped * (1.0 - capped) / replicas)
        passed = derived >= 1.0 or empirical <= derived + SE_MULTIPLIER * se
        if not passed:
            logger.warning(f"集中不等式越界: u={u}, 经验={empirical:.4f}, 界={derived:.4f}")
        rows.append(TailRow(u, empirical, derived, displayed, se, passed))
    return ConcentrationReport(n, float(a), float(lam), replicas, center, rows)


# ==================== 两侧夹逼 ====================

@dataclass(frozen=True)
class SandwichReport:
    """
    夹逼界的四个对数量：
    log ν_n([ξ-δ,ξ+δ])、log ν_n((ξ-δ,ξ+δ))、log P[e^{-λ|H_n-nξ|}]、-λδn
    """
    log_closed: float
    log_open: float
    log_expectation: float
    log_penalty: float
    upper: CheckReport
    lower: CheckReport

    @property
    def passed(self) -> bool:
        return self.upper.passed and self.lower.passed

    def checks(self) -> List[CheckReport]:
        return [self.upper, self.lower]


def _window_masks(table: WeightCountTable, xi: float, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """|h·unit - nξ| 与 nδ 的精确比较（闭区间与开区间）"""
    center = Fraction(repr(float(xi))) * table.n
    radius = Fraction(repr(float(delta))) * table.n
    unit = Fraction(repr(float(table.unit)))
    distance = [abs(Fraction(int(h)) * unit - center) for h in table.h_values.tolist()]
    closed = np.array([dist <= radius for dist in distance], dtype=bool)
    open_ = np.array([dist < radius for dist in distance], dtype=bool)
    return closed, open_


def _log_mass(log_masses: np.ndarray, mask: np.ndarray) -> float:
    selected = log_masses[mask]
    if selected.size == 0:
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(logsumexp(selected))


def sandwich_bounds(table: WeightCountTable, xi: float, delta: float, lam: float,
                    tolerance: float = PATHWISE_TOLERANCE) -> SandwichReport:
    """
    逐环境精确验证
        (上) ν_n([ξ-δ,ξ+δ]) ≤ e^{λnδ}·P[e^{-λ|H_n-nξ|}]
        (下) ν_n((ξ-δ,ξ+δ)) ≥ P[e^{-λ|H_n-nξ|}] - e^{-λδn}

    参数:
        table: 从原点出发的精确计数表
        xi: 水平ξ
        delta: 窗口半宽δ > 0
        lam: λ > 0
    """
    _check_lambda(lam)
    if not delta > 0.0:
        raise ModelError(f"窗口半宽δ必须为正，实际为 {delta}")
    n = table.n
    log_masses = table.log_masses()
    closed, open_ = _window_masks(table, xi, delta)
    log_closed = _log_mass(log_masses, closed)
    log_open = _log_mass(log_masses, open_)
    log_expectation = smoothed_value(table, lam, n * xi).value
    log_penalty = -lam * delta * n
    details = {"n": n, "xi": xi, "delta": delta, "lambda": lam}
    upper = check_at_most("sandwich_upper", log_closed, lam * n * delta + log_expectation,
                          tolerance, details=details)
    lower = check_at_least("sandwich_lower", math.exp(log_open),
                           math.exp(log_expectation) - math.exp(log_penalty), tolerance,
                           details=details)
    return SandwichReport(log_closed, log_open, log_expectation, log_penalty, upper, lower)


def two_route_rate(environments: Sequence[EnvironmentLike], n: int, xi: float, delta: float,
                   lam: float, step: float = DEFAULT_STEP) -> MeanEstimate:
    """
    夹逼上界给出的速率 -(1/n)log(e^{λnδ}P[e^{-λ|H_n-nξ|}]) 的环境平均
    λ较大、δ较小时应接近Legendre路线得到的I(ξ)
    """
    values = np.array([-(lam * n * delta + smoothed_value(point_table(env, n, step=step), lam, n * xi).value) / n
                       for env in environments])
    mean, se = mean_and_se(values)
    return MeanEstimate(float(mean), float(se))


def two_route_check(estimate: MeanEstimate, rate_value: float, tolerance: float = 0.15) -> CheckReport:
    return check_identity("two_route_consistency", estimate.mean, rate_value, tolerance)
