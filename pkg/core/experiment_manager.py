"""
实验管理器 - PolymerLab核心模块
负责实验配置校验、按类型分发到各计算模块、收集检查结果并写出输出文件

输出目录内容：
    manifest.json  配置 + 版本 + 耗时与资源统计（时间戳只在这里）
    *.csv          数据表（浮点按repr写出，相同配置逐字节复现）
    summary.json   全部检查的 {name, lhs, rhs, slack, pass}
    environments.json  蒙特卡洛副本的环境描述（不含原始权重）
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from core.check_report import CheckReport, anchored
from core.config_loader import parse_grid, parse_int_list, parse_model
from core.conjugate_system import (annealed_order_check, corollary_check, rate_from_curve,
                                   rho_pm, rho_pm_bound_check, rho_pm_consistency, v_set_scan)
from core.count_system import count_table, histogram_rows
from core.environment import DistributionModel
from core.errors import ConfigValidationError, ModelError
from core.free_energy_manager import (FreeEnergyCurve, convexity_check, critical_region_scan,
                                      estimate_free_energy, jensen_check, jensen_gap,
                                      replica_environments, slope_at_zero_check,
                                      superadditive_trend_check, symmetry_check)
from core.performance_monitor import get_performance_monitor
from core.save_system import ResultBundle, SaveSystem
from core.smoothed_system import (concentration_experiment, lambda_monotonicity_check, point_tables,
                                  rate_lambda_estimate, sandwich_bounds, superadditivity_check_mean)
from core.transfer_system import BRUTE_FORCE_LIMIT
from core.verify_suite import verify_suite

logger = logging.getLogger(__name__)

KINDS = ("free-energy", "rate-function", "corollary", "smoothed", "verify")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _integer(minimum: int):
    def parse(value: Any) -> int:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            raise ValueError(f"必须是>={minimum}的整数，实际为 {value!r}")
        return value
    return parse


def _real(positive: bool = False):
    def parse(value: Any) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValueError(f"必须是有限实数，实际为 {value!r}")
        if positive and value <= 0:
            raise ValueError(f"必须>0，实际为 {value!r}")
        return float(value)
    return parse


def _grid(value: Any) -> List[float]:
    grid = parse_grid(value)
    if not grid or min(grid) <= 0.0:
        raise ValueError(f"必须是非空的正数网格，实际为 {value!r}")
    return grid


# 字段名 -> (解析函数, 是否必须)
CONCENTRATION_FIELDS = {"n": (_integer(1), True), "a": (_real(), True), "lambda": (_real(True), True),
                        "M": (_integer(100), True), "u": (_grid, False)}
SUPERADDITIVITY_FIELDS = {"n": (_integer(0), True), "m": (_integer(0), True), "a": (_real(), True),
                          "b": (_real(), True), "lambda": (_real(True), True)}


def _section(errors: List[str], name: str, section: Any, fields: Dict[str, Tuple[Callable, bool]]
             ) -> Optional[Dict[str, Any]]:
    """
    校验嵌套配置段，问题追加到errors

    返回:
        解析后的字典；段本身不是字典时返回None
    """
    if not isinstance(section, dict):
        errors.append(f"{name}: 必须是字典，实际为 {section!r}")
        return None
    missing = [key for key, (_, required) in fields.items() if required and key not in section]
    if missing:
        errors.append(f"{name}: 缺少字段 {', '.join(missing)}")
    parsed = dict(section)
    for key, (parser, _) in fields.items():
        if key not in section:
            continue
        try:
            parsed[key] = parser(section[key])
        except (TypeError, ValueError) as e:
            errors.append(f"{name}.{key}: {e}")
    return parsed


@dataclass
class ExperimentConfig:
    """实验配置（完全可序列化）"""
    kind: str
    output: str
    seed: int
    model: Optional[Dict[str, Any]] = None
    d: int = 1
    n_list: List[int] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)
    rhos: List[float] = field(default_factory=list)
    xis: List[float] = field(default_factory=list)
    lambdas: List[float] = field(default_factory=list)
    deltas: List[float] = field(default_factory=list)
    replicas: int = 0
    workers: int = 1
    step: float = 0.01
    exact_bits: int = 127
    cases: int = 20
    concentration: Optional[Dict[str, Any]] = None
    superadditivity: Optional[Dict[str, Any]] = None
    symmetry: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def distribution(self) -> DistributionModel:
        return parse_model(self.model)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], defaults: Optional[Dict[str, Any]] = None,
                  source: Optional[str] = None) -> "ExperimentConfig":
        """
        一次性校验并构造

        参数:
            data: 原始配置
            defaults: settings.yaml 的 defaults 部分
            source: 配置来源（用于错误信息）

        返回:
            ExperimentConfig；任何字段不合法时抛出列出全部问题的ConfigValidationError
        """
        defaults = defaults or {}
        errors: List[str] = []
        kind = data.get("kind")
        if kind not in KINDS:
            errors.append(f"kind: 必须是 {', '.join(KINDS)} 之一，实际为 {kind!r}")

        def grab(name: str, parser, default=None):
            if name not in data:
                return default
            try:
                return parser(data[name])
            except (ModelError, TypeError, ValueError) as e:
                errors.append(f"{name}: {e}")
                return default

        seed = data.get("seed", defaults.get("master_seed"))
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            errors.append(f"seed: 必须是64位无符号整数，实际为 {seed!r}")
            seed = 0
        output = data.get("output") or str(Path(defaults.get("output_root", "results")) / str(kind))

        config = cls(
            kind=str(kind),
            output=str(output),
            seed=int(seed),
            model=data.get("model"),
            d=data.get("d", 1),
            n_list=grab("n_list", parse_int_list, []) or grab("n", parse_int_list, []),
            betas=grab("beta", parse_grid, []),
            rhos=grab("rho", parse_grid, []),
            xis=grab("xi", parse_grid, []),
            lambdas=grab("lambda", parse_grid, []),
            deltas=grab("delta", parse_grid, []),
            replicas=data.get("M", 0),
            workers=data.get("workers", defaults.get("workers", 1)),
            step=data.get("step", defaults.get("quantization_step", 0.01)),
            exact_bits=data.get("exact_bits", defaults.get("exact_bits", 127)),
            cases=data.get("cases", 20),
            concentration=data.get("concentration"),
            superadditivity=data.get("superadditivity"),
            symmetry=data.get("symmetry", False),
        )
        if kind in KINDS:
            errors.extend(config._kind_errors())
        if errors:
            raise ConfigValidationError(errors, source)
        return config

    def _kind_errors(self) -> List[str]:
        errors: List[str] = []
        if self.kind == "verify":
            if not isinstance(self.cases, int) or self.cases < 1:
                errors.append(f"cases: 必须是正整数，实际为 {self.cases!r}")
            return errors

        model = None
        if self.model is None:
            errors.append("model: 缺少分布描述")
        else:
            try:
                model = parse_model(self.model)
                self.model = model.to_dict()
            except ModelError as e:
                errors.append(f"model: {e}")
        if not isinstance(self.d, int) or isinstance(self.d, bool) or self.d < 1:
            errors.append(f"d: 必须是>=1的整数，实际为 {self.d!r}")
        if not self.n_list or min(self.n_list) < 1:
            errors.append(f"n_list: 必须非空且每个n>=1，实际为 {self.n_list!r}")
        if not isinstance(self.replicas, int) or self.replicas < 2:
            errors.append(f"M: 必须是>=2的整数，实际为 {self.replicas!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            errors.append(f"workers: 必须是正整数，实际为 {self.workers!r}")
        if not isinstance(self.symmetry, bool):
            errors.append(f"symmetry: 必须是布尔值，实际为 {self.symmetry!r}")
        if isinstance(self.exact_bits, bool) or not isinstance(self.exact_bits, int) or self.exact_bits < 1:
            errors.append(f"exact_bits: 必须是正整数，实际为 {self.exact_bits!r}")

        if self.kind in ("free-energy", "rate-function", "corollary") and not self.betas:
            errors.append("beta: 网格不能为空")
        if self.kind in ("rate-function", "corollary") and self.betas:
            if len(self.betas) < 2 or min(self.betas) >= 0.0 or max(self.betas) <= 0.0:
                errors.append("beta: 速率函数需要至少2个点且同时包含正负β")
        if self.kind == "corollary":
            if not self.rhos:
                errors.append("rho: 网格不能为空")
            if model is not None and not model.is_integer_valued:
                errors.append("model: 路径计数需要整数取值分布")
        if self.kind == "smoothed":
            if not self.xis:
                errors.append("xi: 网格不能为空")
            if not self.lambdas or min(self.lambdas) <= 0.0:
                errors.append("lambda: 网格必须非空且λ>0")
            if self.deltas and min(self.deltas) <= 0.0:
                errors.append("delta: 窗口半宽必须>0")
            if not isinstance(self.step, (int, float)) or not self.step > 0:
                errors.append(f"step: 量化步长必须为正，实际为 {self.step!r}")
            if self.concentration is not None:
                self.concentration = _section(errors, "concentration", self.concentration, CONCENTRATION_FIELDS)
            if self.superadditivity is not None:
                self.superadditivity = _section(errors, "superadditivity", self.superadditivity,
                                                SUPERADDITIVITY_FIELDS)
        return errors


@dataclass
class RunOutcome:
    """一次实验的结果"""
    config: ExperimentConfig
    checks: List[CheckReport]
    summary: Dict[str, Any]
    bundle: ResultBundle
    written: bool = False

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        if not self.written:
            return EXIT_FAILED
        return EXIT_OK if self.passed else EXIT_FAILED


class ExperimentManager:
    """
    实验管理器类
    功能：
    1. 把ExperimentConfig分发到对应计算模块
    2. 汇总检查记录与数据表
    3. 计算全部完成后一次性写出输出目录
    """

    def __init__(self, settings: Optional[Dict] = None):
        """
        初始化实验管理器

        参数:
            settings: 全局设置
        """
        self.settings = settings or {}
        self.handlers = {
            "free-energy": self._run_free_energy,
            "rate-function": self._run_rate_function,
            "corollary": self._run_corollary,
            "smoothed": self._run_smoothed,
            "verify": self._run_verify,
        }

    def run(self, config: ExperimentConfig, write: bool = True) -> RunOutcome:
        """
        执行实验

        参数:
            config: 已校验的配置
            write: 是否写出文件

        返回:
            RunOutcome
        """
        monitor = get_performance_monitor(self.settings.get("performance_system", {}))
        monitor.start()
        logger.info(f"实验开始: {config.kind} -> {config.output}")

        bundle = ResultBundle()
        checks, summary = self.handlers[config.kind](config, bundle)
        checks = [anchored(c) for c in checks]

        summary = {"kind": config.kind, "passed": all(c.passed for c in checks),
                   "total": len(checks), "failed": sum(1 for c in checks if not c.passed),
                   **summary, "checks": [c.to_dict() for c in checks]}
        bundle.add_json("summary.json", summary)
        if config.kind != "verify":
            bundle.add_json("environments.json", self._environment_descriptors(config))
        bundle.add_json("manifest.json", SaveSystem.manifest(config.to_dict(),
                                                             {"performance": monitor.get_stats()}))
        outcome = RunOutcome(config, checks, summary, bundle)
        outcome.written = SaveSystem(config.output).commit(bundle) if write else True
        logger.info(f"实验结束: {summary['total'] - summary['failed']}/{summary['total']} 项检查通过")
        return outcome

    # ---------- 各实验类型 ----------

    def _curve(self, config: ExperimentConfig, n_list: Optional[List[int]] = None) -> FreeEnergyCurve:
        return estimate_free_energy(config.distribution(), config.d, config.betas,
                                    n_list or config.n_list, config.replicas, config.seed,
                                    workers=config.workers)

    @staticmethod
    def _curve_outputs(curve: FreeEnergyCurve, bundle: ResultBundle) -> List[CheckReport]:
        bundle.add_csv("free_energy.csv", ["beta", "n", "M", "mean", "se", "lambda"], curve.rows())
        flagged = set(critical_region_scan(curve))
        bundle.add_csv("jensen_gap.csv", ["beta", "n", "gap", "se", "annealed_consistent"],
                       [(g.beta, g.n, g.gap, g.se, g.beta in flagged) for g in jensen_gap(curve)])
        checks = jensen_check(curve) + convexity_check(curve) + superadditive_trend_check(curve)
        # 网格含对称的±h时才有中心差分
        slope = slope_at_zero_check(curve)
        if slope is not None:
            checks.append(slope)
        return checks

    def _run_free_energy(self, config: ExperimentConfig, bundle: ResultBundle):
        curve = self._curve(config)
        checks = self._curve_outputs(curve, bundle)
        # 只对对称分布有意义，由配置显式开启
        if config.symmetry:
            checks += symmetry_check(curve)
        return checks, {"critical_region": critical_region_scan(curve), "curve": curve.manifest()}

    def _run_rate_function(self, config: ExperimentConfig, bundle: ResultBundle):
        curve = self._curve(config)
        checks = self._curve_outputs(curve, bundle)
        rate = rate_from_curve(curve, rho_grid=config.rhos or None)
        bundle.add_csv("rate_function.csv", ["rho", "I", "flagged_extrapolated", "se"], rate.rows())
        estimate = rho_pm(curve)
        checks += annealed_order_check(rate, curve.model)
        checks += rho_pm_bound_check(curve, estimate) + rho_pm_consistency(rate, estimate)
        return checks, {"validity": list(rate.validity), "v_set": v_set_scan(rate, curve.model),
                        "rho_pm": estimate.to_dict(), "curve": curve.manifest()}

    def _run_corollary(self, config: ExperimentConfig, bundle: ResultBundle):
        model = config.distribution()
        n_max = max(config.n_list)
        curve = self._curve(config, [n_max])
        rate = rate_from_curve(curve)
        reports = [corollary_check(model, config.d, rho, config.n_list, rate, config.replicas,
                                   config.seed, config.exact_bits, config.workers)
                   for rho in config.rhos]
        rows = [(r.rho, row.n, row.mean, row.se, row.zero_count, row.target, row.difference)
                for r in reports for row in r.rows]
        bundle.add_csv("growth_rate.csv", ["rho", "n", "mean", "se", "zero_count", "target", "difference"], rows)
        bundle.add_json("corollary.json", {"reports": [r.to_dict() for r in reports]})
        bundle.add_csv("histogram.csv", ["replica", "n", "h", "count", "log_mass"],
                       self._histogram(config, model, n_max))
        checks = [r.trend_check() for r in reports]
        return checks, {"validity": list(rate.validity), "curve": curve.manifest()}

    def _run_smoothed(self, config: ExperimentConfig, bundle: ResultBundle):
        model = config.distribution()
        checks: List[CheckReport] = []
        rows = []
        estimates = []
        for xi in config.xis:
            reports = [rate_lambda_estimate(model, config.d, xi, lam, config.n_list, config.replicas,
                                            config.seed, config.step, config.workers)
                       for lam in config.lambdas]
            for report in reports:
                checks.append(report.trend_check())
                checks.extend(report.jensen_check())
                rows.extend((xi, report.lam, r.n, r.estimate, r.se, r.jensen_bound) for r in report.rows)
                estimates.append(report.to_dict())
            checks.extend(lambda_monotonicity_check(reports))
        bundle.add_csv("lambda_rate.csv", ["xi", "lambda", "n", "estimate", "se", "jensen_bound"], rows)
        summary: Dict[str, Any] = {"lambda_rate": estimates}

        if config.deltas:
            checks.extend(self._sandwich(config, model, bundle))

        if config.concentration is not None:
            c = config.concentration
            tail = concentration_experiment(model, config.d, c["n"], c["a"], c["lambda"],
                                            c["M"], config.seed, c.get("u", [1.0, 2.0, 4.0, 8.0]),
                                            config.step, config.workers)
            bundle.add_csv("tails.csv", ["u", "empirical", "bound", "displayed_bound"], tail.csv_rows())
            checks.extend(tail.checks())
            summary["concentration_mean"] = tail.mean
        if config.superadditivity is not None:
            s = config.superadditivity
            checks.append(superadditivity_check_mean(model, config.d, s["n"], s["m"],
                                                     s["a"], s["b"], s["lambda"],
                                                     config.replicas, config.seed, config.step,
                                                     config.workers))
        return checks, summary

    @staticmethod
    def _sandwich(config: ExperimentConfig, model: DistributionModel, bundle: ResultBundle) -> List[CheckReport]:
        """每个副本在最大n上逐环境验证夹逼界"""
        n = max(config.n_list)
        checks: List[CheckReport] = []
        rows = []
        for r, env in enumerate(replica_environments(model, config.d, n, config.replicas, config.seed)):
            table = point_tables(env, [n], step=config.step)[n]
            for xi in config.xis:
                for delta in config.deltas:
                    for lam in config.lambdas:
                        report = sandwich_bounds(table, xi, delta, lam)
                        checks.extend(report.checks())
                        rows.append((r, n, xi, delta, lam, report.log_closed, report.log_open,
                                     report.log_expectation))
        bundle.add_csv("sandwich.csv", ["replica", "n", "xi", "delta", "lambda", "log_closed", "log_open",
                                        "log_expectation"], rows)
        return checks

    @staticmethod
    def _histogram(config: ExperimentConfig, model: DistributionModel, n: int) -> List[tuple]:
        """每个副本在最大n上的 (h, 计数, 对数质量) 导出行"""
        rows = []
        for r, env in enumerate(replica_environments(model, config.d, n, config.replicas, config.seed)):
            rows.extend((r, n, h, count, log_mass)
                        for h, count, log_mass in histogram_rows(count_table(env, n, config.exact_bits)))
        return rows

    @staticmethod
    def _environment_descriptors(config: ExperimentConfig) -> Dict[str, Any]:
        """
        副本环境描述：第r个副本的种子为 derive_seed(master_seed, r)

        计数器式随机数下同一种子的权重与窗口大小无关，各实验复用同一组副本
        """
        envs = replica_environments(config.distribution(), config.d, max(config.n_list), config.replicas,
                                    config.seed)
        return {"master_seed": config.seed, "seed_derivation": "derive_seed(master_seed, r)",
                "replicas": [env.descriptor() for env in envs]}

    def _run_verify(self, config: ExperimentConfig, bundle: ResultBundle):
        limit = self.settings.get("defaults", {}).get("brute_force_limit", BRUTE_FORCE_LIMIT)
        ledger = verify_suite(config.seed, config.cases, limit)
        return ledger.reports, {"seed": ledger.seed}
