"""
格点几何 - PolymerLab核心模块
负责Z^d上的盒子/菱形窗口、最近邻模板和路径枚举

约定：第k步的数组覆盖盒子[-k, k]^d，站点x对应下标x + k；
只有|x|_1 <= k 且坐标和与k同奇偶的站点可达。
"""

import logging
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from core.errors import EnumerationLimitError, PathError

logger = logging.getLogger(__name__)

Site = Tuple[int, ...]
SiteLike = Union[int, Sequence[int]]


def as_site(x: SiteLike, d: int) -> Site:
    """
    把整数或序列规范化为d维站点元组

    参数:
        x: 站点（d=1时可直接给整数）
        d: 维数

    返回:
        长度为d的整数元组
    """
    if isinstance(x, (int, np.integer)):
        if d != 1:
            raise PathError(f"{d}维站点不能用单个整数 {x} 表示")
        return (int(x),)
    site = tuple(int(c) for c in x)
    if len(site) != d:
        raise PathError(f"站点 {site} 的维数与 d={d} 不符")
    return site


def origin(d: int) -> Site:
    return (0,) * d


def l1_norm(site: Sequence[int]) -> int:
    return int(sum(abs(c) for c in site))


def box_shape(radius: int, d: int) -> Tuple[int, ...]:
    return (2 * radius + 1,) * d


def box_coordinates(radius: int, d: int) -> List[np.ndarray]:
    """盒子内每个轴的坐标网格（ij索引）"""
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    return list(np.meshgrid(*([axis] * d), indexing="ij"))


def ball_mask(radius: int, d: int) -> np.ndarray:
    """盒子中满足|x|_1 <= radius的站点"""
    coords = box_coordinates(radius, d)
    return sum(np.abs(c) for c in coords) <= radius


def reachable_mask(k: int, d: int) -> np.ndarray:
    """第k步可达站点：|x|_1 <= k 且坐标和与k同奇偶"""
    coords = box_coordinates(k, d)
    total = sum(coords)
    return (sum(np.abs(c) for c in coords) <= k) & ((total - k) % 2 == 0)


def box_sites(radius: int, d: int) -> Iterable[Site]:
    """按数组顺序遍历盒子内所有站点"""
    for index in np.ndindex(*box_shape(radius, d)):
        yield tuple(i - radius for i in index)


def step_vectors(d: int) -> np.ndarray:
    """2d个最近邻步长 (+e_1, -e_1, +e_2, -e_2, ...)"""
    moves = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        moves[2 * axis, axis] = 1
        moves[2 * axis + 1, axis] = -1
    return moves


def neighbor_views(prev: np.ndarray, d: int, fill) -> List[np.ndarray]:
    """
    把第k-1步的盒子数组扩展到第k步的盒子，并给出每个站点2d个邻居的取值

    参数:
        prev: 形状(2k-1,)*d + 额外轴 的数组
        d: 空间维数（前d个轴为空间轴）
        fill: 盒子外的填充值（0、-inf等）

    返回:
        2d个形状(2k+1,)*d + 额外轴 的数组，第j个为邻居 x - move_j 处的取值
    """
    extra = prev.ndim - d
    pad = [(2, 2)] * d + [(0, 0)] * extra
    padded = np.pad(prev, pad, mode="constant", constant_values=fill)
    inner = slice(1, -1)
    views = []
    for axis in range(d):
        for part in (slice(0, -2), slice(2, None)):
            index = [inner] * d + [slice(None)] * extra
            index[axis] = part
            views.append(padded[tuple(index)])
    return views


def validate_path(path: Sequence[SiteLike], d: int) -> List[Site]:
    """
    校验路径：从原点出发，每步L1距离恰为1

    返回:
        规范化后的站点列表
    """
    sites = [as_site(p, d) for p in path]
    if not sites:
        raise PathError("路径至少包含起点")
    if sites[0] != origin(d):
        raise PathError(f"路径必须从原点出发，实际起点 {sites[0]}")
    for i in range(1, len(sites)):
        step = l1_norm(np.subtract(sites[i], sites[i - 1]))
        if step != 1:
            raise PathError(f"第{i}步不是最近邻步: {sites[i - 1]} -> {sites[i]}")
    return sites


def enumerate_paths(d: int, n: int, limit: int) -> np.ndarray:
    """
    枚举全部(2d)^n条从原点出发的路径

    参数:
        d: 维数
        n: 路径长度
        limit: 允许枚举的最大路径数

    返回:
        形状(P, n, d)的位置数组（不含起点）
    """
    count = (2 * d) ** n
    if count > limit:
        raise EnumerationLimitError(f"(2d)^n = {count} 超过枚举上限 {limit}")
    if n == 0:
        return np.zeros((1, 0, d), dtype=np.int64)
    choices = np.stack(np.unravel_index(np.arange(count), (2 * d,) * n), axis=1)
    moves = step_vectors(d)[choices]
    return np.cumsum(moves, axis=1)
