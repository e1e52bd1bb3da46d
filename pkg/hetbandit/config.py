from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    workers: int = 1
    out_dir: str = "./runs"
    failure_threshold: float = 0.1


def load_settings() -> Settings:
    log_level = os.getenv("HETBANDIT_LOG_LEVEL", "INFO").strip().upper() or "INFO"

    workers_raw = os.getenv("HETBANDIT_WORKERS", "1")
    try:
        workers = int(workers_raw)
    except ValueError as exc:
        raise RuntimeError("HETBANDIT_WORKERS must be an integer") from exc
    if workers < 1:
        raise RuntimeError("HETBANDIT_WORKERS must be at least 1")

    out_dir = os.getenv("HETBANDIT_OUT_DIR", "./runs").strip() or "./runs"

    threshold_raw = os.getenv("HETBANDIT_FAILURE_THRESHOLD", "0.1")
    try:
        failure_threshold = float(threshold_raw)
    except ValueError as exc:
        raise RuntimeError("HETBANDIT_FAILURE_THRESHOLD must be a number") from exc
    if not 0.0 <= failure_threshold < 1.0:
        raise RuntimeError("HETBANDIT_FAILURE_THRESHOLD must lie in [0, 1)")

    return Settings(
        log_level=log_level,
        workers=workers,
        out_dir=out_dir,
        failure_threshold=failure_threshold,
    )
