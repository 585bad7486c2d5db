"""
delta-arc 設定
從環境變數 (以及 .env 檔案) 讀取工具鏈設定
"""

import logging
import os
from dataclasses import dataclass, replace
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigError

COLOR_MODES = ("auto", "always", "never")
ORDER_STRATEGIES = ("config", "lex")
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


@dataclass(frozen=True)
class Settings:
    color: str = "auto"
    log_level: str = "WARNING"
    log_file: Optional[str] = None
    order_bound: int = 10
    order_strategy: str = "config"
    search_limit: int = 1_000_000

    def with_overrides(self, **overrides) -> "Settings":
        """套用命令列參數 (None 表示沿用環境變數)"""
        values = {key: value for key, value in overrides.items() if value is not None}
        return validate(replace(self, **values))


def validate(settings: Settings) -> Settings:
    if settings.color not in COLOR_MODES:
        raise ConfigError(f"DELTA_ARC_COLOR 必須是 {', '.join(COLOR_MODES)} 之一: {settings.color}")
    if settings.order_strategy not in ORDER_STRATEGIES:
        raise ConfigError(f"排序策略必須是 {', '.join(ORDER_STRATEGIES)} 之一: {settings.order_strategy}")
    if settings.order_bound < 1:
        raise ConfigError(f"DELTA_ARC_ORDER_BOUND 必須為正整數: {settings.order_bound}")
    if settings.search_limit < 1:
        raise ConfigError(f"DELTA_ARC_SEARCH_LIMIT 必須為正整數: {settings.search_limit}")
    if not isinstance(logging.getLevelName(settings.log_level.upper()), int):
        raise ConfigError(f"未知的日誌等級: {settings.log_level}")
    return settings


def _int_env(name: str, default: str) -> int:
    value = os.environ.get(name, default)
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{name} 不是整數: {value}")


def load_settings(env_file: Optional[str] = None) -> Settings:
    """載入 .env 後讀取 DELTA_ARC_* 環境變數"""
    load_dotenv(env_file or os.environ.get("DELTA_ARC_ENV_FILE", ".env"))

    order_bound = _int_env("DELTA_ARC_ORDER_BOUND", "10")
    search_limit = _int_env("DELTA_ARC_SEARCH_LIMIT", "1000000")

    return validate(Settings(
        color=os.environ.get("DELTA_ARC_COLOR", "auto").lower(),
        log_level=os.environ.get("DELTA_ARC_LOG_LEVEL", "WARNING").upper(),
        log_file=os.environ.get("DELTA_ARC_LOG_FILE") or None,
        order_bound=order_bound,
        order_strategy=os.environ.get("DELTA_ARC_ORDER_STRATEGY", "config").lower(),
        search_limit=search_limit,
    ))


def configure_logging(settings: Settings) -> None:
    handlers = [logging.StreamHandler()]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    logging.basicConfig(
        level=settings.log_level.upper(),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
