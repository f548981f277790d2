"""
随机环境 - PolymerLab核心模块
负责单点权重分布、对数矩母函数及其共轭，以及可复现的格点环境生成

环境权重η(k,x)是(seed, k, x)的纯函数：对种子、时间和各坐标依次做SplitMix64混合，
得到每个站点独立的均匀数，再按分布的逆CDF映射。任何子窗口、任何平移视图都能逐位复现。
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, ndtri, xlogy

from core.errors import EnvironmentBoundsError, ModelError
from core.lattice import (Site, SiteLike, as_site, ball_mask, box_coordinates,
                          box_shape, l1_norm, origin)

logger = logging.getLogger(__name__)

U64_MASK = (1 << 64) - 1


class ExtendedReal(Enum):
    """扩展实数哨兵（速率函数取值可以为+∞）"""
    PLUS_INFINITY = "+inf"

    def __float__(self) -> float:
        return math.inf

    def __repr__(self) -> str:
        return "+inf"


PLUS_INFINITY = ExtendedReal.PLUS_INFINITY
ExtendedFloat = Union[float, ExtendedReal]


def is_infinite(value: ExtendedFloat) -> bool:
    return value is PLUS_INFINITY


def to_float(value: ExtendedFloat) -> float:
    """哨兵转为浮点（仅用于数值比较/导出）"""
    return math.inf if value is PLUS_INFINITY else float(value)


# ==================== 单点分布 ====================

class DistributionModel(ABC):
    """单点权重分布基类，所有子类构造后不可变"""

    kind: str = ""

    @abstractmethod
    def log_mgf(self, beta: float) -> float:
        """λ(β) = log Q[e^{βη}]"""

    @abstractmethod
    def conjugate(self, rho: float) -> ExtendedFloat:
        """λ*(ρ) = sup_β (ρβ - λ(β))"""

    @abstractmethod
    def mean(self) -> float:
        """m = Q[η]"""

    @abstractmethod
    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """把(0,1)上的均匀数映射为该分布的样本"""

    @abstractmethod
    def support(self) -> Tuple[float, float]:
        """支撑的下确界与上确界（可为±inf）"""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """序列化为描述字典"""

    @property
    def is_integer_valued(self) -> bool:
        return False

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({params})"


class Bernoulli(DistributionModel):
    """Bernoulli(p)：η=1的概率为p"""

    kind = "bernoulli"

    def __init__(self, p: float):
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ModelError(f"Bernoulli参数必须在(0,1)内，实际为 {p}")
        self.p = p

    def log_mgf(self, beta: float) -> float:
        # log(1-p+p e^β) = logaddexp(log(1-p), log p + β)
        return float(np.logaddexp(math.log1p(-self.p), math.log(self.p) + beta))

    def conjugate(self, rho: float) -> ExtendedFloat:
        if rho < 0.0 or rho > 1.0:
            return PLUS_INFINITY
        p = self.p
        return float(xlogy(rho, rho / p) + xlogy(1.0 - rho, (1.0 - rho) / (1.0 - p)))

    def mean(self) -> float:
        return self.p

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return (u < self.p).astype(np.float64)

    def support(self) -> Tuple[float, float]:
        return 0.0, 1.0

    @property
    def is_integer_valued(self) -> bool:
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "p": self.p}


class Gaussian(DistributionModel):
    """Gaussian(mean, variance)"""

    kind = "gaussian"

    def __init__(self, mean: float, variance: float):
        variance = float(variance)
        if not variance > 0.0 or not math.isfinite(variance):
            raise ModelError(f"Gaussian方差必须为正，实际为 {variance}")
        self.mu = float(mean)
        self.variance = variance

    def log_mgf(self, beta: float) -> float:
        return self.mu * beta + 0.5 * self.variance * beta * beta

    def conjugate(self, rho: float) -> ExtendedFloat:
        return (rho - self.mu) ** 2 / (2.0 * self.variance)

    def mean(self) -> float:
        return self.mu

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return self.mu + math.sqrt(self.variance) * ndtri(u)

    def support(self) -> Tuple[float, float]:
        return -math.inf, math.inf

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "mean": self.mu, "variance": self.variance}


class FiniteDiscrete(DistributionModel):
    """有限离散分布：取值values[i]的概率为probs[i]"""

    kind = "finite_discrete"

    # 共轭的一维极大化区间与容差
    BETA_BOUND = 50.0
    TOLERANCE = 1e-10

    def __init__(self, values: Sequence[float], probs: Sequence[float]):
        values = [float(v) for v in values]
        probs = [float(q) for q in probs]
        if not values or len(values) != len(probs):
            raise ModelError("FiniteDiscrete的values与probs必须非空且等长")
        if len(set(values)) != len(values):
            raise ModelError(f"FiniteDiscrete取值必须互不相同: {values}")
        if any(q < 0.0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ModelError(f"FiniteDiscrete概率必须非负且和为1: {probs}")
        if not all(math.isfinite(v) for v in values):
            raise ModelError("FiniteDiscrete取值必须有限")
        order = np.argsort(values)
        self.values = np.asarray(values, dtype=np.float64)[order]
        self.probs = np.asarray(probs, dtype=np.float64)[order]
        self._cumulative = np.cumsum(self.probs)

    def log_mgf(self, beta: float) -> float:
        # logsumexp自带最大值平移
        return float(logsumexp(beta * self.values, b=self.probs))

    def conjugate(self, rho: float) -> ExtendedFloat:
        lo, hi = self.support()
        if rho < lo or rho > hi:
            return PLUS_INFINITY
        positive = self.probs > 0.0
        if rho == hi:
            return -math.log(self.probs[positive][-1])
        if rho == lo:
            return -math.log(self.probs[positive][0])
        result = minimize_scalar(
            lambda b: self.log_mgf(b) - rho * b,
            bounds=(-self.BETA_BOUND, self.BETA_BOUND),
            method="bounded",
            options={"xatol": self.TOLERANCE},
        )
        return max(0.0, float(-result.fun))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        index = np.searchsorted(self._cumulative, u, side="right")
        return self.values[np.minimum(index, len(self.values) - 1)]

    def support(self) -> Tuple[float, float]:
        positive = self.values[self.probs > 0.0]
        return float(positive.min()), float(positive.max())

    @property
    def is_integer_valued(self) -> bool:
        return bool(np.all(self.values == np.round(self.values)))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "values": self.values.tolist(), "probs": self.probs.tolist()}


def model_from_dict(config: Dict[str, Any]) -> DistributionModel:
    """
    从描述字典构造分布

    参数:
        config: {"kind": "bernoulli", "p": 0.5} 等

    返回:
        DistributionModel实例
    """
    kind = str(config.get("kind", "")).lower().replace("-", "_")
    try:
        if kind == "bernoulli":
            return Bernoulli(config["p"])
        if kind == "gaussian":
            return Gaussian(config.get("mean", 0.0), config.get("variance", 1.0))
        if kind in ("finite_discrete", "discrete"):
            return FiniteDiscrete(config["values"], config["probs"])
        if kind == "constant":
            return FiniteDiscrete([config["value"]], [1.0])
    except KeyError as e:
        raise ModelError(f"分布 {kind} 缺少参数 {e}") from e
    raise ModelError(f"未知分布类型: {config.get('kind')!r}")


def log_mgf(model: DistributionModel, beta: float) -> float:
    return model.log_mgf(beta)


def log_mgf_conjugate(model: DistributionModel, rho: float) -> ExtendedFloat:
    return model.conjugate(rho)


def mean(model: DistributionModel) -> float:
    return model.mean()


# ==================== 计数器式随机数 ====================

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64输出函数（逐元素，模2^64）"""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _as_u64(values: np.ndarray) -> np.ndarray:
    # 负坐标按补码解释
    return np.asarray(values, dtype=np.int64).astype(np.uint64)


def site_uniforms(seed: int, k: int, coords: Sequence[np.ndarray]) -> np.ndarray:
    """
    计算(seed, k, x)对应的(0,1)均匀数

    参数:
        seed: 64位无符号种子
        k: 时间坐标
        coords: 各空间轴的坐标数组（形状一致）

    返回:
        与坐标数组同形状的均匀数
    """
    shape = np.shape(coords[0]) if coords else ()
    key = splitmix64(np.full(shape, seed & U64_MASK, dtype=np.uint64))
    key = splitmix64(key ^ _as_u64(np.full(shape, k)))
    for axis_coords in coords:
        key = splitmix64(key ^ _as_u64(axis_coords))
    return ((key >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def derive_seed(master_seed: int, index: int) -> int:
    """由主种子派生第index个副本的种子（与环境同一混合器）"""
    key = splitmix64(np.array(master_seed & U64_MASK, dtype=np.uint64))
    key = splitmix64(key ^ np.uint64(index & U64_MASK))
    return int(key)


# ==================== 环境 ====================

SliceSource = Callable[[int], np.ndarray]


class LatticeEnvironment:
    """
    格点环境
    功能：
    1. 保存维数、时间窗口、种子与分布描述
    2. 按需生成第k步的权重切片（盒子半径k+margin），带缓存
    3. 提供单点查询、平移视图、取负和逐点变换
    """

    def __init__(self, d: int, n_max: int, source: SliceSource, seed: Optional[int] = None,
                 model: Optional[DistributionModel] = None, margin: int = 0,
                 label: str = "custom"):
        """
        初始化环境

        参数:
            d: 空间维数
            n_max: 时间窗口
            source: k -> 半径k+margin盒子上的权重数组
            seed: 生成种子（自定义环境为None）
            model: 单点分布（派生环境为None）
            margin: 空间窗口的额外半径，起点x != 0时需要
            label: 描述标签
        """
        if d < 1:
            raise ModelError(f"维数d必须>=1，实际为 {d}")
        if n_max < 1:
            raise ModelError(f"时间窗口n_max必须>=1，实际为 {n_max}")
        if margin < 0:
            raise ModelError(f"margin必须非负，实际为 {margin}")
        self.d = int(d)
        self.n_max = int(n_max)
        self.seed = seed
        self.model = model
        self.margin = int(margin)
        self.label = label
        self._source = source
        self._cache: Dict[int, np.ndarray] = {}

    # ---------- 构造 ----------

    @classmethod
    def from_slices(cls, d: int, slices: Sequence[np.ndarray], margin: int = 0) -> "LatticeEnvironment":
        """由显式切片构造；slices[k-1]的形状为(2(k+margin)+1,)*d"""
        arrays = [np.array(s, dtype=np.float64) for s in slices]
        for k, array in enumerate(arrays, start=1):
            if array.shape != box_shape(k + margin, d):
                raise ModelError(f"第{k}步切片形状应为 {box_shape(k + margin, d)}，实际为 {array.shape}")
        return cls(d, len(arrays), lambda k: arrays[k - 1], margin=margin, label="slices")

    @classmethod
    def from_function(cls, d: int, n_max: int, weight: Callable[[int, Site], float],
                      margin: int = 0) -> "LatticeEnvironment":
        """逐点函数构造（仅用于小窗口的手工环境）"""
        def source(k: int) -> np.ndarray:
            radius = k + margin
            coords = box_coordinates(radius, d)
            out = np.empty(box_shape(radius, d), dtype=np.float64)
            for index in np.ndindex(out.shape):
                out[index] = weight(k, tuple(int(c[index]) for c in coords))
            return out
        return cls(d, n_max, source, margin=margin, label="function")

    @classmethod
    def constant(cls, d: int, n_max: int, value: float, margin: int = 0) -> "LatticeEnvironment":
        return cls(d, n_max, lambda k: np.full(box_shape(k + margin, d), float(value)),
                   model=FiniteDiscrete([value], [1.0]), margin=margin, label=f"constant({value})")

    # ---------- 访问 ----------

    def full_slice(self, k: int) -> np.ndarray:
        """第k步在整个生成盒子（半径k+margin）上的权重"""
        if not 1 <= k <= self.n_max:
            raise EnvironmentBoundsError(f"时间 k={k} 超出窗口 [1, {self.n_max}]")
        array = self._cache.get(k)
        if array is None:
            array = np.asarray(self._source(k), dtype=np.float64)
            array.setflags(write=False)
            self._cache[k] = array
        return array

    def in_window(self, k: int, site: Site) -> bool:
        return 1 <= k <= self.n_max and l1_norm(site) <= k + self.margin

    def weight(self, k: int, x: SiteLike) -> float:
        """η(k, x)"""
        site = as_site(x, self.d)
        if not self.in_window(k, site):
            raise EnvironmentBoundsError(f"η({k}, {site}) 超出生成窗口")
        radius = k + self.margin
        return float(self.full_slice(k)[tuple(c + radius for c in site)])

    @property
    def horizon(self) -> int:
        return self.n_max

    def slice(self, k: int) -> np.ndarray:
        """以原点为中心、半径k的盒子上的权重"""
        return self.translate(0, origin(self.d)).slice(k)

    def translate(self, k: int, x: SiteLike) -> "EnvironmentView":
        """τ_{k,x}视图"""
        return EnvironmentView(self, k, as_site(x, self.d))

    def integer_check_window(self, n: int) -> Optional[Tuple[int, Site, float]]:
        return self.translate(0, origin(self.d)).integer_check_window(n)

    def is_integer_valued(self, n: Optional[int] = None) -> bool:
        return self.integer_check_window(self.n_max if n is None else n) is None

    # ---------- 派生环境 ----------

    def map_weights(self, transform: Callable[[np.ndarray], np.ndarray], label: str) -> "LatticeEnvironment":
        """逐点变换得到新环境（不保留分布描述）"""
        return LatticeEnvironment(self.d, self.n_max, lambda k: transform(self.full_slice(k)),
                                  seed=self.seed, model=None, margin=self.margin,
                                  label=f"{label}({self.label})")

    def negated(self) -> "LatticeEnvironment":
        return self.map_weights(np.negative, "negated")

    def descriptor(self) -> Dict[str, Any]:
        """环境描述（永不序列化原始权重）"""
        if self.seed is None or self.model is None:
            raise ModelError(f"环境 {self.label} 不是由种子生成的，无法写出描述")
        return {"model": self.model.to_dict(), "d": self.d, "n_max": self.n_max,
                "seed": self.seed, "margin": self.margin}

    def __repr__(self) -> str:
        return f"LatticeEnvironment(d={self.d}, n_max={self.n_max}, seed={self.seed}, {self.label})"


@dataclass(frozen=True)
class EnvironmentView:
    """
    平移视图 (τ_{k,x}∘η)(i, y) = η(k+i, x+y)，只读
    """
    base: LatticeEnvironment
    k0: int
    x0: Site

    def __post_init__(self):
        if not 0 <= self.k0 <= self.base.n_max:
            raise EnvironmentBoundsError(f"平移时间 {self.k0} 超出窗口 [0, {self.base.n_max}]")
        if l1_norm(self.x0) > self.k0 + self.base.margin:
            raise EnvironmentBoundsError(f"平移起点 ({self.k0}, {self.x0}) 不在生成窗口内")

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def horizon(self) -> int:
        """从视图原点出发可用的步数"""
        return self.base.n_max - self.k0

    def weight(self, i: int, y: SiteLike) -> float:
        site = as_site(y, self.d)
        if i < 1:
            raise EnvironmentBoundsError(f"视图时间 i={i} 必须>=1")
        return self.base.weight(self.k0 + i, tuple(a + b for a, b in zip(self.x0, site)))

    def slice(self, i: int) -> np.ndarray:
        """视图第i步在半径i盒子上的权重"""
        if not 1 <= i <= self.horizon:
            raise EnvironmentBoundsError(f"视图时间 i={i} 超出 [1, {self.horizon}]")
        k = self.k0 + i
        full = self.base.full_slice(k)
        radius = k + self.base.margin
        index = tuple(slice(c + radius - i, c + radius + i + 1) for c in self.x0)
        return full[index]

    def translate(self, k: int, x: SiteLike) -> "EnvironmentView":
        site = as_site(x, self.d)
        return EnvironmentView(self.base, self.k0 + k, tuple(a + b for a, b in zip(self.x0, site)))

    def integer_check_window(self, n: int) -> Optional[Tuple[int, Site, float]]:
        """
        检查前n步菱形窗口内的权重是否全为整数

        返回:
            第一个非整数权重 (i, 站点, 值)，全为整数返回None
        """
        for i in range(1, min(n, self.horizon) + 1):
            weights = self.slice(i)
            mask = ball_mask(i, self.d)
            bad = mask & ~(np.isfinite(weights) & (weights == np.round(weights)))
            if bad.any():
                index = tuple(int(j[0]) for j in np.nonzero(bad))
                site = tuple(j - i for j in index)
                return i, site, float(weights[index])
        return None

    def is_integer_valued(self, n: Optional[int] = None) -> bool:
        return self.integer_check_window(self.horizon if n is None else n) is None

    def negated(self) -> "EnvironmentView":
        return self.base.negated().translate(self.k0, self.x0)

    def map_weights(self, transform: Callable[[np.ndarray], np.ndarray], label: str) -> "EnvironmentView":
        return self.base.map_weights(transform, label).translate(self.k0, self.x0)


EnvironmentLike = Union[LatticeEnvironment, EnvironmentView]


def sample_environment(model: DistributionModel, d: int, n_max: int, seed: int,
                       margin: int = 0) -> LatticeEnvironment:
    """
    生成可复现的IID环境

    参数:
        model: 单点分布
        d: 维数（>=1）
        n_max: 时间窗口（>=1）
        seed: 64位无符号种子
        margin: 额外空间半径

    返回:
        LatticeEnvironment
    """
    if not 0 <= int(seed) <= U64_MASK:
        raise ModelError(f"种子必须是64位无符号整数，实际为 {seed}")
    seed = int(seed)

    def source(k: int) -> np.ndarray:
        coords = box_coordinates(k + margin, d)
        return model.from_uniform(site_uniforms(seed, k, coords))

    logger.debug(f"生成环境: {model!r}, d={d}, n_max={n_max}, seed={seed}")
    return LatticeEnvironment(d, n_max, source, seed=seed, model=model, margin=margin, label="sampled")


def environment_from_descriptor(descriptor: Dict[str, Any]) -> LatticeEnvironment:
    """由 {model, d, n_max, seed} 描述重建环境"""
    return sample_environment(model_from_dict(descriptor["model"]), int(descriptor["d"]),
                              int(descriptor["n_max"]), int(descriptor["seed"]),
                              margin=int(descriptor.get("margin", 0)))


def translate(env: EnvironmentLike, k: int, x: SiteLike) -> EnvironmentView:
    return env.translate(k, x)
