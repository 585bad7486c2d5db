#!/usr/bin/env python3
"""
delta-arc 命令列工具
子命令: derive、check、order、metrics、print
"""

import argparse
import json
import logging
import sys
from typing import Iterable, List, Optional

from .config import ORDER_STRATEGIES, Settings, configure_logging, load_settings
from .errors import ConfigError, DeltaArcError, Diagnostic
from .frontend import (SourceUnit, load_components, load_config, load_deltas, load_types,
                       parse_component_text, pretty_print)
from .generation import DerivationRequest, derive_product
from .metrics import compute_metrics
from .model import ModelRepository
from .ordering import compute_order, enumerate_orders, foreign_references
from .wellformedness import check_full

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_COLORS = {"error": "\033[31m", "warning": "\033[33m"}
_RESET = "\033[0m"


def _use_color(settings: Settings) -> bool:
    if settings.color == "always":
        return True
    if settings.color == "never":
        return False
    return sys.stderr.isatty()


def print_diagnostics(diagnostics: Iterable[Diagnostic], settings: Settings) -> None:
    color = _use_color(settings)
    for d in diagnostics:
        line = d.format()
        if color:
            line = f"{_COLORS[d.severity.value]}{line}{_RESET}"
        print(line, file=sys.stderr)


def _dump(data) -> None:
    print(json.dumps(data, indent=2, ensure_ascii=False))


def cmd_derive(args, settings: Settings) -> int:
    req = DerivationRequest(
        core_dirs=tuple(args.core),
        delta_dir=args.deltas,
        config_file=args.config,
        output_dir=args.out,
        types_file=args.types,
        order_strategy=settings.order_strategy,
        search_limit=settings.search_limit,
    )
    result = derive_product(req)
    print_diagnostics(result.warnings, settings)
    print(f"套用順序: {result.order or '(空)'}")
    print(f"已產生 {len(result.emitted)} 個檔案於 {args.out}")
    if args.stats:
        for key, value in result.stats.items():
            print(f"{key}={value}")
    return EXIT_OK


def cmd_check(args, settings: Settings) -> int:
    repo = ModelRepository.build(load_components(args.core), load_types(args.types))
    report = check_full(repo)
    if args.json:
        _dump({"passed": report.passed, "diagnostics": [d.to_dict() for d in report.diagnostics]})
    else:
        print_diagnostics(report.diagnostics, settings)
        print(f"{len(repo.names())} 個元件: {len(report.errors)} 個錯誤, {len(report.warnings)} 個警告")
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_order(args, settings: Settings) -> int:
    config = load_config(args.config)
    deltas = load_deltas(args.deltas)
    if args.all:
        orders = enumerate_orders(config, deltas, settings.order_bound)
    else:
        orders = [compute_order(config, deltas, settings.order_strategy, settings.search_limit)]
    warnings = foreign_references(config, deltas)
    if args.json:
        _dump({
            "config": config.name,
            "orders": [list(order) for order in orders],
            "diagnostics": [d.to_dict() for d in warnings],
        })
    else:
        print_diagnostics(warnings, settings)
        for order in orders:
            print(str(order) or "(空)")
    return EXIT_OK


def cmd_metrics(args, settings: Settings) -> int:
    report = compute_metrics(args.core, args.deltas)
    if args.json:
        _dump(report.to_dict())
    else:
        print(report.format_table())
        print()
        print(report.format_pairs())
    return EXIT_OK


def cmd_print(args, settings: Settings) -> int:
    component = parse_component_text(SourceUnit.read(args.file))
    sys.stdout.write(pretty_print(component))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delta-arc", description="delta 導向的架構描述語言工具鏈")
    parser.add_argument("--log-level", help="日誌等級 (覆寫 DELTA_ARC_LOG_LEVEL)")
    parser.add_argument("--env-file", help=".env 檔案路徑")
    sub = parser.add_subparsers(dest="command", required=True)

    derive = sub.add_parser("derive", help="依產品組態產生產品架構")
    derive.add_argument("--core", nargs="+", required=True, help="核心模型目錄")
    derive.add_argument("--deltas", required=True, help="delta 模型目錄")
    derive.add_argument("--config", required=True, help="產品組態 (.deltacfg)")
    derive.add_argument("--types", help="型別宣告檔 (.types)")
    derive.add_argument("--out", required=True, help="輸出目錄")
    derive.add_argument("--order-strategy", choices=ORDER_STRATEGIES, help="套用順序的選擇策略")
    derive.add_argument("--stats", action="store_true", help="顯示耗時與記憶體使用")
    derive.set_defaults(handler=cmd_derive)

    check = sub.add_parser("check", help="對核心模型做完整的情境條件檢查")
    check.add_argument("--core", nargs="+", required=True)
    check.add_argument("--types")
    check.add_argument("--json", action="store_true")
    check.set_defaults(handler=cmd_check)

    order = sub.add_parser("order", help="計算 delta 套用順序")
    order.add_argument("--deltas", required=True)
    order.add_argument("--config", required=True)
    order.add_argument("--all", action="store_true", help="列出所有合法順序")
    order.add_argument("--order-strategy", choices=ORDER_STRATEGIES)
    order.add_argument("--json", action="store_true")
    order.set_defaults(handler=cmd_order)

    metrics = sub.add_parser("metrics", help="統計模型行數與變異比例")
    metrics.add_argument("--core", nargs="+", required=True)
    metrics.add_argument("--deltas", required=True)
    metrics.add_argument("--json", action="store_true")
    metrics.set_defaults(handler=cmd_metrics)

    printer = sub.add_parser("print", help="以正規格式列印元件模型")
    printer.add_argument("file")
    printer.set_defaults(handler=cmd_print)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.env_file).with_overrides(
            log_level=args.log_level.upper() if args.log_level else None,
            order_strategy=getattr(args, "order_strategy", None),
        )
    except ConfigError as e:
        print(f"{e.code}: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(settings)

    try:
        return args.handler(args, settings)
    except DeltaArcError as e:
        print_diagnostics(e.all_diagnostics(), settings)
        return EXIT_FAILURE
    except Exception:
        logger.exception("未預期的錯誤")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
