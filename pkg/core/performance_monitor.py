"""
性能监控系统 - PolymerLab核心模块
记录实验的墙钟时间、CPU时间与内存占用，写入manifest
"""

import logging
import time
from typing import Dict, List, Optional

import psutil

logger = logging.getLogger(__name__)


class PerformanceMonitor:
    """
    性能监控器类
    功能：
    1. 记录实验耗时与进程CPU时间
    2. 采样进程常驻内存与系统内存占用
    3. 内存占用超过阈值时告警
    """

    def __init__(self, config: Dict):
        """
        初始化性能监控器

        参数:
            config: 性能配置
        """
        self.config = config
        self.enabled = config.get('enabled', True)

        # 性能阈值
        self.memory_warning = config.get('memory_warning_threshold', 0.8)

        self.process = psutil.Process()
        self.rss_history: List[float] = []
        self.memory_history: List[float] = []

        self.start_wall = time.perf_counter()
        self.start_cpu = self._cpu_time()

        logger.debug("性能监控系统初始化完成")

    def _cpu_time(self) -> float:
        times = self.process.cpu_times()
        return times.user + times.system

    def start(self) -> None:
        """开始一次计时"""
        self.rss_history.clear()
        self.memory_history.clear()
        self.start_wall = time.perf_counter()
        self.start_cpu = self._cpu_time()
        self.sample()

    def sample(self) -> None:
        """采样一次内存"""
        if not self.enabled:
            return
        rss_mb = self.process.memory_info().rss / (1024.0 * 1024.0)
        memory_percent = psutil.virtual_memory().percent / 100.0
        self.rss_history.append(rss_mb)
        self.memory_history.append(memory_percent)
        self.check_performance_warnings(memory_percent)

    def check_performance_warnings(self, memory: float) -> None:
        """检查性能警告"""
        if memory > self.memory_warning:
            logger.warning(f"系统内存占用过高: {memory*100:.1f}%")

    def get_stats(self) -> Dict:
        """获取性能统计"""
        self.sample()
        return {
            'wall_time_s': time.perf_counter() - self.start_wall,
            'cpu_time_s': self._cpu_time() - self.start_cpu,
            'peak_rss_mb': max(self.rss_history) if self.rss_history else 0.0,
            'memory_percent': self.memory_history[-1] if self.memory_history else 0.0,
            'samples': len(self.rss_history),
        }


# 全局实例
_performance_monitor_instance: Optional[PerformanceMonitor] = None


def get_performance_monitor(config: Optional[Dict] = None) -> PerformanceMonitor:
    """获取性能监控器实例"""
    global _performance_monitor_instance
    if _performance_monitor_instance is None:
        _performance_monitor_instance = PerformanceMonitor(config or {})
    return _performance_monitor_instance
