"""
异常定义 - PolymerLab核心模块
所有领域异常的公共基类与具体类型
"""

from typing import List, Optional, Tuple


class PolymerLabError(Exception):
    """PolymerLab所有异常的基类"""


class ModelError(PolymerLabError, ValueError):
    """单点权重分布参数不合法"""


class EnvironmentBoundsError(PolymerLabError, IndexError):
    """访问超出环境已生成窗口"""


class PathError(PolymerLabError, ValueError):
    """路径不合法（起点、步长或长度）"""


class NonIntegerWeightError(PolymerLabError, ValueError):
    """精确计数遇到非整数权重"""

    def __init__(self, k: int, site: Tuple[int, ...], value: float):
        self.k = k
        self.site = site
        self.value = value
        super().__init__(f"非整数权重 η({k}, {site}) = {value!r}，请先量化环境")


class EnumerationLimitError(PolymerLabError, ValueError):
    """暴力枚举路径数超过上限"""


class CountPrecisionError(PolymerLabError, ValueError):
    """需要精确计数表但得到的是对数近似表"""


class ConfigValidationError(PolymerLabError, ValueError):
    """实验配置校验失败，携带全部违规字段"""

    def __init__(self, errors: List[str], source: Optional[str] = None):
        self.errors = list(errors)
        self.source = source
        where = f" ({source})" if source else ""
        super().__init__(f"配置校验失败{where}: " + "; ".join(self.errors))
