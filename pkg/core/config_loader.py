"""
配置加载器 - PolymerLab核心模块
负责加载和验证全局设置与实验配置（YAML，兼容JSON），扫描预设实验目录
"""

import copy
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml

from core.environment import DistributionModel, model_from_dict
from core.errors import ModelError

logger = logging.getLogger(__name__)


class ConfigLoader:
    """
    配置加载器类
    功能：
    1. 加载settings.yaml，缺省字段用默认值补齐
    2. 扫描experiments目录下的预设实验
    3. 从文件或标准输入加载单个实验配置
    4. 配置校验：必须字段、路径合法性
    """

    def __init__(self, root_dir: str = "."):
        """
        初始化配置加载器

        参数:
            root_dir: 项目根目录路径
        """
        self.root_dir = Path(root_dir).resolve()

        self.experiments_dir = self.root_dir / "experiments"
        self.settings_file = self.root_dir / "settings.yaml"

        self.experiments: Dict[str, Dict] = {}  # 预设实验
        self.settings: Dict = {}  # 全局设置

        logger.debug(f"配置加载器初始化完成，根目录: {self.root_dir}")

    def load_yaml(self, file_path: Path) -> Optional[Dict]:
        """
        加载YAML文件（JSON是YAML的子集，同样适用）

        参数:
            file_path: YAML文件路径

        返回:
            解析后的配置字典，失败返回None
        """
        try:
            if not file_path.exists():
                logger.warning(f"配置文件不存在: {file_path}")
                return None

            with open(file_path, 'r', encoding='utf-8') as f:
                config = yaml.safe_load(f)

            if not isinstance(config, dict):
                logger.error(f"配置文件顶层必须是映射: {file_path}")
                return None

            logger.debug(f"成功加载配置文件: {file_path}")
            return config

        except yaml.YAMLError as e:
            logger.error(f"YAML格式错误 {file_path}: {e}")
            return None
        except OSError as e:
            logger.error(f"加载配置文件失败 {file_path}: {e}")
            return None

    def load_text(self, text: str, source: str = "<stdin>") -> Optional[Dict]:
        """解析一段YAML/JSON文本"""
        try:
            config = yaml.safe_load(text)
        except yaml.YAMLError as e:
            logger.error(f"YAML格式错误 {source}: {e}")
            return None
        if not isinstance(config, dict):
            logger.error(f"配置顶层必须是映射: {source}")
            return None
        return config

    def validate_required_fields(self, config: Dict, required_fields: List[str],
                                 config_name: str) -> List[str]:
        """
        验证必须字段

        参数:
            config: 配置字典
            required_fields: 必须字段列表
            config_name: 配置名称（用于日志）

        返回:
            缺失字段列表（为空表示通过）
        """
        missing_fields = [field for field in required_fields if field not in config]
        if missing_fields:
            logger.error(f"{config_name} 缺少必须字段: {', '.join(missing_fields)}")
        return missing_fields

    def validate_path(self, path_str: str, base_dir: Optional[Path] = None) -> Optional[Path]:
        """
        验证并转换路径

        参数:
            path_str: 路径字符串（相对或绝对路径）
            base_dir: 基准目录，默认项目根目录

        返回:
            绝对路径，验证失败返回None
        """
        base = self.root_dir if base_dir is None else base_dir
        try:
            if not os.path.isabs(path_str):
                return (base / path_str).resolve()
            return Path(path_str).resolve()
        except (OSError, ValueError) as e:
            logger.error(f"路径验证失败 {path_str}: {e}")
            return None

    def load_settings(self) -> bool:
        """
        加载全局设置，文件中的值覆盖默认值

        返回:
            是否从文件加载成功
        """
        config = self.load_yaml(self.settings_file)
        self.settings = merge_settings(self.get_default_settings(), config or {})
        if config:
            logger.debug("加载全局设置成功")
            return True
        logger.warning("全局设置文件不存在或格式错误，使用默认设置")
        return False

    def get_default_settings(self) -> Dict:
        """
        获取默认全局设置

        返回:
            默认设置字典
        """
        return {
            "logging": {
                "level": "INFO",
                "file": None,
            },
            "defaults": {
                "master_seed": 20240917,
                "output_root": "results",
                "workers": 1,
                "quantization_step": 0.01,
                "exact_bits": 127,
                "brute_force_limit": 10_000_000,
            },
            "verify_suite": {
                "seed": 7,
                "cases": 20,
            },
            "performance_system": {
                "enabled": True,
                "memory_warning_threshold": 0.8,
            },
        }

    def scan_experiments(self) -> Dict[str, Dict]:
        """
        扫描experiments目录下的*.yaml预设

        返回:
            {预设名: 配置字典}
        """
        self.experiments = {}
        if not self.experiments_dir.exists():
            logger.debug(f"预设目录不存在: {self.experiments_dir}")
            return self.experiments
        for config_file in sorted(self.experiments_dir.glob("*.yaml")):
            config = self.load_yaml(config_file)
            if config is None:
                continue
            if self.validate_required_fields(config, ["kind"], config_file.name):
                continue
            self.experiments[config_file.stem] = config
        logger.info(f"扫描到 {len(self.experiments)} 个预设实验")
        return self.experiments

    def get_experiment(self, name: str) -> Optional[Dict]:
        """按名称获取预设（需先scan_experiments）"""
        return copy.deepcopy(self.experiments.get(name))

    def load_experiment(self, source: str) -> Optional[Dict]:
        """
        加载实验配置

        参数:
            source: 配置文件路径、预设名，或"-"表示标准输入

        返回:
            配置字典，失败返回None
        """
        if source == "-":
            return self.load_text(sys.stdin.read())
        path = Path(source)
        if path.exists():
            return self.load_yaml(path)
        if not self.experiments:
            self.scan_experiments()
        preset = self.get_experiment(source)
        if preset is None:
            logger.error(f"找不到实验配置: {source}")
        return preset


def merge_settings(defaults: Dict, overrides: Dict) -> Dict:
    """递归合并，overrides优先"""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_settings(merged[key], value)
        else:
            merged[key] = value
    return merged


# ==================== 网格与分布简写 ====================

def parse_grid(value: Union[List, Dict, float, int, None]) -> List[float]:
    """
    网格可以是列表、单个数，或 {start, stop, step}（含stop端点）

    返回:
        浮点列表；格式错误抛出ModelError
    """
    if value is None:
        return []
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, dict):
        try:
            start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelError(f"区间网格需要数值型 start/stop/step: {value}") from e
        if step <= 0.0 or stop < start:
            raise ModelError(f"区间网格不合法: {value}")
        count = int(round((stop - start) / step))
        # 逐点由下标生成，避免累加误差
        return [round(start + i * step, 12) for i in range(count + 1)]
    if isinstance(value, (list, tuple)):
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError) as e:
            raise ModelError(f"网格必须是数值列表: {value}") from e
    raise ModelError(f"无法解析网格: {value!r}")


def parse_int_list(value: Union[List, int, None]) -> List[int]:
    if value is None:
        return []
    if isinstance(value, int) and not isinstance(value, bool):
        return [value]
    if isinstance(value, (list, tuple)) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return list(value)
    raise ModelError(f"需要整数或整数列表: {value!r}")


def parse_model(description: Union[str, Dict]) -> DistributionModel:
    """
    解析分布

    参数:
        description: 描述字典，或简写 "bernoulli:0.5"、"gaussian:0,1"、
                     "discrete:-1,1:0.5,0.5"、"constant:1"
    """
    if isinstance(description, dict):
        return model_from_dict(description)
    if not isinstance(description, str) or ":" not in description:
        raise ModelError(f"无法解析分布简写: {description!r}")
    kind, _, rest = description.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "bernoulli":
            return model_from_dict({"kind": kind, "p": float(rest)})
        if kind == "gaussian":
            mu, variance = (float(v) for v in rest.split(","))
            return model_from_dict({"kind": kind, "mean": mu, "variance": variance})
        if kind in ("discrete", "finite_discrete"):
            values, probs = rest.split(":")
            return model_from_dict({"kind": "finite_discrete",
                                    "values": [float(v) for v in values.split(",")],
                                    "probs": [float(q) for q in probs.split(",")]})
        if kind == "constant":
            return model_from_dict({"kind": kind, "value": float(rest)})
    except ValueError as e:
        raise ModelError(f"分布简写参数错误 {description!r}: {e}") from e
    raise ModelError(f"未知分布类型: {kind!r}")


# 全局配置加载器实例（单例模式）
_config_loader_instance: Optional[ConfigLoader] = None


def get_config_loader(root_dir: str = ".") -> ConfigLoader:
    """
    获取配置加载器实例（单例）

    参数:
        root_dir: 项目根目录

    返回:
        ConfigLoader实例
    """
    global _config_loader_instance

    if _config_loader_instance is None:
        _config_loader_instance = ConfigLoader(root_dir)

    return _config_loader_instance


def reset_config_loader() -> None:
    """丢弃单例（测试用）"""
    global _config_loader_instance
    _config_loader_instance = None
