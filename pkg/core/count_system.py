"""
精确路径计数 - PolymerLab核心模块
负责整数权重环境下全部(2d)^n条路径的(端点, 总权重)直方图、经验测度ν_n、ρ-渗流计数N_n(ρ)，
以及配分恒等式和指数紧性界的有限n精确验证

递推：C_k(x, h) = Σ_{|y-x|_1=1} C_{k-1}(y, h - η(k, x))
计数精度三档：
1. (2d)^n < 2^63：numpy int64
2. (2d)^n < 2^exact_bits（默认127）：Python任意精度整数（object数组）
3. 其余：对数空间浮点，结果标记为近似
"""

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Tuple

import numpy as np
from scipy.special import logsumexp

from core.check_report import CheckReport, check_at_most, check_identity
from core.environment import EnvironmentLike
from core.errors import CountPrecisionError, ModelError, NonIntegerWeightError
from core.lattice import SiteLike, as_site, ball_mask, box_shape, neighbor_views
from core.transfer_system import partition_log

logger = logging.getLogger(__name__)

# 精确计数允许的位数
EXACT_BITS = 127


class CountMode:
    """计数算术模式"""
    INT64 = "int64"
    EXACT = "exact"
    LOG = "log"


def choose_mode(d: int, n: int, exact_bits: int = EXACT_BITS) -> str:
    total_bits = n * math.log2(2 * d)
    if total_bits < 63:
        return CountMode.INT64
    if total_bits < exact_bits:
        return CountMode.EXACT
    return CountMode.LOG


@dataclass(frozen=True)
class WeightCountTable:
    """
    路径计数表
    counts[x + n, h - h_lo] = 长度n、终点x、总权重h的路径数；
    mode为log时counts存放对数计数（-inf表示0），exact为False
    """
    n: int
    d: int
    h_lo: int
    counts: np.ndarray
    mode: str
    start: Tuple[int, ...] = ()
    unit: float = 1.0
    path_error: float = 0.0

    @property
    def exact(self) -> bool:
        return self.mode != CountMode.LOG

    @property
    def h_values(self) -> np.ndarray:
        return np.arange(self.h_lo, self.h_lo + self.counts.shape[-1], dtype=np.int64)

    @property
    def log_total_paths(self) -> float:
        return self.n * math.log(2 * self.d)

    def require_exact(self) -> None:
        if not self.exact:
            raise CountPrecisionError(f"n={self.n}, d={self.d} 的计数表为对数近似，无法给出精确整数")

    def count(self, x: SiteLike, h: int) -> int:
        """C_n(x, h)"""
        self.require_exact()
        site = as_site(x, self.d)
        j = int(h) - self.h_lo
        if any(abs(c) > self.n for c in site) or not 0 <= j < self.counts.shape[-1]:
            return 0
        return int(self.counts[tuple(c + self.n for c in site) + (j,)])

    def total(self) -> int:
        """Σ_{x,h} C_n(x,h)，应精确等于(2d)^n"""
        self.require_exact()
        return int(sum(int(c) for c in self.counts.ravel().tolist()))

    def weight_counts(self) -> List[int]:
        """按h的边缘计数 Σ_x C_n(x, h)"""
        self.require_exact()
        flat = self.counts.reshape(-1, self.counts.shape[-1])
        return [int(sum(int(c) for c in column)) for column in flat.T.tolist()]

    def endpoint_counts(self) -> np.ndarray:
        """按终点的边缘计数 Σ_h C_n(x, h)（object数组）"""
        self.require_exact()
        out = np.empty(self.counts.shape[:-1], dtype=object)
        for index in np.ndindex(out.shape):
            out[index] = int(sum(int(c) for c in self.counts[index].tolist()))
        return out

    def log_counts(self) -> np.ndarray:
        """对数计数，形状同counts，零计数为-inf"""
        if self.mode == CountMode.LOG:
            return self.counts
        if self.mode == CountMode.INT64:
            with np.errstate(divide="ignore"):
                return np.log(self.counts.astype(np.float64))
        return _object_log(self.counts)

    def log_weight_counts(self) -> np.ndarray:
        """按h的边缘对数计数"""
        if self.exact:
            return _object_log(np.array(self.weight_counts(), dtype=object))
        flat = self.counts.reshape(-1, self.counts.shape[-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            return logsumexp(flat, axis=0)

    def log_masses(self) -> np.ndarray:
        """log ν_n({h/n}) = log Σ_x C_n(x,h) - n log(2d)"""
        return self.log_weight_counts() - self.log_total_paths

    def scaled_weights(self) -> np.ndarray:
        """每个h对应的实际路径权重 h·unit"""
        return self.h_values.astype(np.float64) * self.unit


def _object_log(values: np.ndarray) -> np.ndarray:
    flat = [math.log(int(c)) if int(c) > 0 else -math.inf for c in values.ravel().tolist()]
    return np.array(flat, dtype=np.float64).reshape(values.shape)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """经验测度 ν_n：原子h/n的质量为 count/(2d)^n"""
    n: int
    d: int
    counts: Dict[int, int]
    total: int
    unit: float = 1.0

    def mass(self, h: int) -> Fraction:
        return Fraction(self.counts.get(int(h), 0), self.total)

    def log_mass(self, h: int) -> float:
        c = self.counts.get(int(h), 0)
        return math.log(c) - math.log(self.total) if c > 0 else -math.inf

    def atoms(self) -> List[Tuple[float, Fraction]]:
        """(h·unit/n, 质量)列表，按h升序"""
        scale = self.unit / self.n if self.n > 0 else 0.0
        return [(h * scale, self.mass(h)) for h in sorted(self.counts)]

    def total_mass(self) -> Fraction:
        return Fraction(sum(self.counts.values()), self.total)


# ==================== 计数递推 ====================

def _integer_weights(env: EnvironmentLike, k: int) -> np.ndarray:
    weights = env.slice(k)
    mask = ball_mask(k, env.d)
    bad = mask & ~(np.isfinite(weights) & (weights == np.round(weights)))
    if bad.any():
        index = tuple(int(j[0]) for j in np.nonzero(bad))
        raise NonIntegerWeightError(k, tuple(i - k for i in index), float(weights[index]))
    lowest = int(np.min(weights[mask]))
    # 菱形外的站点不可达，统一按最小值处理
    return np.where(mask, weights, lowest).astype(np.int64)


def _initial(d: int, mode: str) -> np.ndarray:
    shape = box_shape(0, d) + (1,)
    if mode == CountMode.LOG:
        return np.zeros(shape, dtype=np.float64)
    if mode == CountMode.EXACT:
        out = np.empty(shape, dtype=object)
        out[...] = 1
        return out
    return np.ones(shape, dtype=np.int64)


def _advance(prev: np.ndarray, weights: np.ndarray, d: int, mode: str) -> Tuple[np.ndarray, int]:
    """
    推进一步

    返回:
        (新计数数组, 权重窗口下界的增量)
    """
    if mode == CountMode.LOG:
        with np.errstate(invalid="ignore", divide="ignore"):
            summed = logsumexp(np.stack(neighbor_views(prev, d, -np.inf)), axis=0)
        zero = -np.inf
    else:
        summed = sum(neighbor_views(prev, d, 0))
        zero = 0
    w_lo, w_hi = int(weights.min()), int(weights.max())
    width = prev.shape[-1]
    out = np.full(box_shape(weights.shape[0] // 2, d) + (width + w_hi - w_lo,), zero,
                  dtype=summed.dtype)
    for value in np.unique(weights).tolist():
        mask = weights == value
        offset = value - w_lo
        out[mask, offset:offset + width] = summed[mask]
    return out, w_lo


def count_tables(env: EnvironmentLike, n_list: Iterable[int],
                 exact_bits: int = EXACT_BITS) -> Dict[int, WeightCountTable]:
    """
    一次递推得到多个n的计数表

    参数:
        env: 整数权重环境
        n_list: 需要的路径长度
        exact_bits: 精确整数计数允许的位数

    返回:
        {n: WeightCountTable}
    """
    wanted = sorted(set(int(n) for n in n_list))
    if not wanted:
        return {}
    n_max = wanted[-1]
    if wanted[0] < 0 or n_max > env.horizon:
        raise ModelError(f"路径长度 {wanted} 超出环境窗口 {env.horizon}")
    d = env.d
    mode = choose_mode(d, n_max, exact_bits)
    if mode == CountMode.LOG:
        logger.warning(f"(2d)^n 超过 2^{exact_bits}，n={n_max} 改用对数空间近似计数")
    start = tuple(getattr(env, "x0", (0,) * d))
    tables: Dict[int, WeightCountTable] = {}
    current = _initial(d, mode)
    h_lo = 0
    for k in range(0, n_max + 1):
        if k > 0:
            current, shift = _advance(current, _integer_weights(env, k), d, mode)
            h_lo += shift
        if k in wanted:
            tables[k] = WeightCountTable(k, d, h_lo, current, mode, start=start)
    return tables


def count_table(env: EnvironmentLike, n: int, exact_bits: int = EXACT_BITS) -> WeightCountTable:
    """整数权重环境的精确计数表 C_n(x, h)"""
    table = count_tables(env, [n], exact_bits)[n]
    logger.debug(f"计数表完成: n={n}, d={env.d}, 模式={table.mode}, h窗口={table.counts.shape[-1]}")
    return table


def empirical_measure(table: WeightCountTable) -> EmpiricalMeasure:
    """ν_n({h/n}) = Σ_x C_n(x,h) / (2d)^n"""
    table.require_exact()
    counts = {int(h): c for h, c in zip(table.h_values.tolist(), table.weight_counts()) if c > 0}
    return EmpiricalMeasure(table.n, table.d, counts, (2 * table.d) ** table.n, table.unit)


def _threshold_mask(table: WeightCountTable, rho: float, m: float) -> np.ndarray:
    """
    两侧定义的计数区域：ρ >= m 时 h·unit >= nρ，否则 h·unit <= nρ
    阈值按ρ的十进制表示精确比较（nρ为整数时取等号）
    """
    level = Fraction(repr(float(rho))) * table.n
    unit = Fraction(repr(float(table.unit)))
    weights = [Fraction(int(h)) * unit for h in table.h_values.tolist()]
    if rho >= m:
        return np.array([w >= level for w in weights], dtype=bool)
    return np.array([w <= level for w in weights], dtype=bool)


def count_threshold(table: WeightCountTable, rho: float, m: float) -> int:
    """精确的 N_n(ρ)"""
    table.require_exact()
    mask = _threshold_mask(table, rho, m)
    return int(sum(c for c, keep in zip(table.weight_counts(), mask.tolist()) if keep))


def log_count_threshold(table: WeightCountTable, rho: float, m: float) -> float:
    """log N_n(ρ)，N_n(ρ) = 0 时为 -inf；对近似表同样适用"""
    if table.exact:
        value = count_threshold(table, rho, m)
        return math.log(value) if value > 0 else -math.inf
    mask = _threshold_mask(table, rho, m)
    logs = table.log_weight_counts()[mask]
    if logs.size == 0:
        return -math.inf
    with np.errstate(divide="ignore"):
        return float(logsumexp(logs))


def histogram_rows(table: WeightCountTable) -> List[Tuple[int, str, float]]:
    """直方图导出行 (h, 计数十进制字符串, 对数质量)"""
    log_masses = table.log_masses()
    if table.exact:
        counts = [str(c) for c in table.weight_counts()]
    else:
        counts = [repr(float(math.exp(v))) if v > -math.inf else "0" for v in table.log_weight_counts()]
    return [(int(h), c, float(lm)) for h, c, lm in zip(table.h_values.tolist(), counts, log_masses.tolist())
            if c != "0"]


# ==================== 有限n验证 ====================

def _log_tilted_sum(table: WeightCountTable, exponents: np.ndarray) -> float:
    """log Σ_h ν_n({h}) e^{exponents[h]}"""
    terms = table.log_masses() + exponents
    with np.errstate(divide="ignore"):
        return float(logsumexp(terms))


def verify_partition_identity(table: WeightCountTable, env: EnvironmentLike, beta: float,
                              tolerance: float = 1e-9) -> CheckReport:
    """
    log ∫ e^{βnx} dν_n(x) 与转移矩阵递推的 log Z_n(β) 比较
    两个独立的动态规划互为对照
    """
    lhs = _log_tilted_sum(table, beta * table.scaled_weights())
    rhs = partition_log(env, table.n, beta).log_z
    return check_identity("partition_identity", lhs, rhs, tolerance,
                          details={"n": table.n, "beta": float(beta)})


def verify_tightness_bound(table: WeightCountTable, env: EnvironmentLike, beta: float,
                           relative_slack: float = 1e-10) -> CheckReport:
    """
    ∫ e^{βn|x|} dν_n ≤ Z_n(β) + Z_n(-β)（由 e^u + e^{-u} ≥ e^{|u|}）
    """
    if beta <= 0:
        raise ModelError(f"指数紧性界要求β>0，实际为 {beta}")
    lhs = _log_tilted_sum(table, beta * np.abs(table.scaled_weights()))
    rhs = float(np.logaddexp(partition_log(env, table.n, beta).log_z,
                             partition_log(env, table.n, -beta).log_z))
    return check_at_most("tightness_bound", lhs, rhs, math.log1p(relative_slack),
                         details={"n": table.n, "beta": float(beta)})


# ==================== 量化 ====================

@dataclass(frozen=True)
class QuantizedEnvironment:
    """
    量化环境：整数权重round(η/Δ)
    与原环境的耦合误差 |Δ·H_n(量化) - H_n| ≤ nΔ/2
    """
    integer_env: EnvironmentLike
    scaled_env: EnvironmentLike
    step: float

    def path_error(self, n: int) -> float:
        return n * self.step / 2.0

    def with_error(self, table: WeightCountTable) -> WeightCountTable:
        """给计数表附上单位Δ与路径误差界"""
        return replace(table, unit=self.step, path_error=self.path_error(table.n))


def quantize_environment(env: EnvironmentLike, step: float) -> QuantizedEnvironment:
    """
    把实值环境量化到步长Δ的格点

    参数:
        env: 任意实值环境
        step: 量化步长Δ > 0
    """
    if not step > 0:
        raise ModelError(f"量化步长必须为正，实际为 {step}")
    integer_env = env.map_weights(lambda w: np.rint(w / step), f"quantized[{step}]")
    scaled_env = env.map_weights(lambda w: np.rint(w / step) * step, f"rounded[{step}]")
    return QuantizedEnvironment(integer_env, scaled_env, float(step))
