"""
结果存档 - PolymerLab核心模块
管理实验输出：manifest.json、数据CSV与summary.json

所有文件先在内存中收集，实验完整结束后一次性写入；
单个文件先写临时文件再替换，失败时不留下半成品。
"""

import csv
import io
import json
import logging
import math
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "1.0.0"


def format_cell(value: Any) -> str:
    """CSV单元格：浮点用repr保证逐位可复现，±inf写为字符串"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "+inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def json_safe(value: Any) -> Any:
    """递归把不可JSON化的浮点转为字符串"""
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "+inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        return json_safe(value.item())
    return value


class ResultBundle:
    """
    一次实验的全部输出文件（内存中）
    """

    def __init__(self):
        self.files: Dict[str, str] = {}

    @staticmethod
    def _check_name(name: str) -> None:
        if not name or os.sep in name or (os.altsep and os.altsep in name) or name.startswith("."):
            raise ValueError(f"输出文件名不合法: {name!r}")

    def add_json(self, name: str, data: Dict) -> None:
        self._check_name(name)
        self.files[name] = json.dumps(json_safe(data), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    def add_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        self._check_name(name)
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
        self.files[name] = buffer.getvalue()

    def names(self) -> List[str]:
        return sorted(self.files)


class SaveSystem:
    """
    结果存档类
    功能：
    1. 把ResultBundle写入实验输出目录
    2. 为manifest附加版本与时间戳元数据
    3. 读取已有的结果文件
    """

    def __init__(self, output_dir: str = "results"):
        """
        初始化结果存档

        参数:
            output_dir: 实验输出目录（写入时才创建）
        """
        self.output_dir = Path(output_dir)
        logger.debug(f"结果存档初始化完成，目录: {self.output_dir}")

    @staticmethod
    def manifest(config: Dict, extra: Optional[Dict] = None) -> Dict:
        """
        生成manifest内容（时间戳只出现在这里）

        参数:
            config: 实验配置
            extra: 附加字段（耗时、资源统计等）
        """
        data = {
            'version': ARTIFACT_VERSION,
            'timestamp': datetime.now().isoformat(),
            'config': config,
        }
        data.update(extra or {})
        return data

    def commit(self, bundle: ResultBundle) -> bool:
        """
        写出全部文件

        返回:
            是否成功
        """
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            for name in bundle.names():
                target = self.output_dir / name
                temp = self.output_dir / f".{name}.tmp"
                with open(temp, 'w', encoding='utf-8', newline='') as f:
                    f.write(bundle.files[name])
                os.replace(temp, target)
            logger.info(f"结果已写入 {self.output_dir}: {', '.join(bundle.names())}")
            return True

        except OSError as e:
            logger.error(f"写入结果失败 {self.output_dir}: {e}")
            return False
