"""Runtime settings: environment (.env) defaults and logging setup."""
import logging
import os

from dotenv import load_dotenv

# 載入環境變數
load_dotenv()

DEFAULT_SEED = 20240101
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _env_int(key: str, default: int) -> int:
    raw = os.getenv(key, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        logging.getLogger(__name__).warning("ignoring non-integer %s=%r", key, raw)
        return default


def default_seed() -> int:
    return _env_int("CELLWISE_SEED", DEFAULT_SEED)


def default_workers() -> int:
    # 預設使用全部 CPU 核心
    return max(1, _env_int("CELLWISE_WORKERS", os.cpu_count() or 1))


def output_dir() -> str:
    return os.getenv("CELLWISE_OUTPUT_DIR", "results")


def log_level() -> str:
    return os.getenv("CELLWISE_LOG_LEVEL", "INFO").upper()


def configure_logging(level: str | None = None) -> None:
    """設定日誌格式與等級（命令列參數優先於環境變數）。"""
    logging.basicConfig(format=LOG_FORMAT, level=(level or log_level()).upper(), force=True)
