"""
PolymerLab - 有向聚合物数值实验室
主程序入口

配分函数、淬火自由能、路径计数、Legendre速率函数与平滑泛函的
可复现数值实验，以及有限n恒等式/不等式的验证套件
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.config_loader import get_config_loader
from core.errors import ConfigValidationError, PolymerLabError
from core.experiment_manager import (EXIT_FAILED, EXIT_OK, EXIT_USAGE, ExperimentConfig,
                                     ExperimentManager)

logger = logging.getLogger(__name__)


def setup_logging(settings: Dict, level_override: Optional[str] = None) -> None:
    """按settings配置日志（标准错误输出 + 可选日志文件）"""
    log_settings = settings.get('logging', {})
    level = getattr(logging, str(level_override or log_settings.get('level', 'INFO')).upper(), logging.INFO)
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_settings.get('file'):
        handlers.append(logging.FileHandler(log_settings['file'], encoding='utf-8'))
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def cli_grid(text: str):
    """命令行网格："a,b,c" 或 "start:stop:step" """
    if ":" in text:
        start, stop, step = text.split(":")
        return {"start": float(start), "stop": float(stop), "step": float(step)}
    return [float(v) for v in text.split(",") if v]


def cli_ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polymerlab", description="有向聚合物数值实验室")
    parser.add_argument("--root", default=os.path.dirname(os.path.abspath(__file__)),
                        help="项目根目录（settings.yaml与experiments/所在处）")
    parser.add_argument("--log-level", default=None, help="覆盖settings中的日志级别")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="按配置文件/预设名运行实验（'-'读取标准输入）")
    run.add_argument("config")

    verify = sub.add_parser("verify", help="运行验证套件")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--cases", type=int, default=None)
    verify.add_argument("--output", default=None)

    sub.add_parser("list", help="列出预设实验")

    def shortcut(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", default="bernoulli:0.5")
        p.add_argument("--d", type=int, default=1)
        p.add_argument("--n", type=cli_ints, required=True)
        p.add_argument("--M", type=int, default=50)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--output", default=None)
        return p

    shortcut("free-energy", "自由能曲线").add_argument("--beta", type=cli_grid, required=True)
    rate = shortcut("rate", "速率函数")
    rate.add_argument("--beta", type=cli_grid, required=True)
    rate.add_argument("--rho", type=cli_grid, default=None)
    corollary = shortcut("corollary", "路径计数增长率")
    corollary.add_argument("--beta", type=cli_grid, default={"start": -4.0, "stop": 4.0, "step": 0.25})
    corollary.add_argument("--rho", type=cli_grid, required=True)
    smoothed = shortcut("smoothed", "平滑泛函与I^(λ)")
    smoothed.add_argument("--xi", type=cli_grid, required=True)
    smoothed.add_argument("--lambda", dest="lam", type=cli_grid, required=True)
    smoothed.add_argument("--delta", type=cli_grid, default=None)
    return parser


def synthesize_config(args: argparse.Namespace) -> Dict:
    """把快捷子命令的参数合成为实验配置"""
    kind = {"free-energy": "free-energy", "rate": "rate-function",
            "corollary": "corollary", "smoothed": "smoothed"}[args.command]
    config = {"kind": kind, "model": args.model, "d": args.d, "n_list": args.n, "M": args.M}
    for key, attr in (("beta", "beta"), ("rho", "rho"), ("xi", "xi"), ("lambda", "lam"),
                      ("delta", "delta"), ("seed", "seed"), ("workers", "workers"), ("output", "output")):
        value = getattr(args, attr, None)
        if value is not None:
            config[key] = value
    return config


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    loader = get_config_loader(args.root)
    loader.load_settings()
    settings = loader.settings
    setup_logging(settings, args.log_level)

    if args.command == "list":
        for name, preset in sorted(loader.scan_experiments().items()):
            print(f"{name}\t{preset.get('kind')}\t{preset.get('description', '')}")
        return EXIT_OK

    if args.command == "run":
        raw = loader.load_experiment(args.config)
        source = args.config
        if raw is None:
            print(f"无法加载实验配置: {args.config}", file=sys.stderr)
            return EXIT_USAGE
    elif args.command == "verify":
        suite = settings.get('verify_suite', {})
        raw = {"kind": "verify",
               "seed": args.seed if args.seed is not None else suite.get('seed', 7),
               "cases": args.cases if args.cases is not None else suite.get('cases', 20)}
        if args.output:
            raw["output"] = args.output
        source = "verify"
    else:
        raw = synthesize_config(args)
        source = args.command

    try:
        config = ExperimentConfig.from_dict(raw, settings.get('defaults', {}), source)
    except ConfigValidationError as e:
        for error in e.errors:
            print(f"配置错误: {error}", file=sys.stderr)
        return EXIT_USAGE

    # 相对输出目录以项目根目录为基准
    output = loader.validate_path(config.output)
    if output is None:
        return EXIT_USAGE
    config.output = str(output)

    try:
        outcome = ExperimentManager(settings).run(config)
    except PolymerLabError as e:
        logger.error(f"实验 {config.kind} 失败: {e}")
        return EXIT_FAILED

    status = "全部通过" if outcome.passed else f"{outcome.summary['failed']} 项失败"
    print(f"{config.kind}: {outcome.summary['total']} 项检查，{status}；输出目录 {config.output}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
