import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, TypeVar

from loguru import logger

T = TypeVar("T")
R = TypeVar("R")

EVENTS_LEVEL = "EVENTS"


def thread_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """Apply `fn` to every item, in order, on up to `workers` threads.

    numpy and scipy release the GIL inside LAPACK, so per-q and per-frequency
    work scales with threads without pickling the operands.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(fn, items))


def format_float(value: float) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{float(value):.17g}"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def events_enabled() -> bool:
    try:
        logger.level(EVENTS_LEVEL)
        return True
    except ValueError:
        return False


def log_event(message: str, **fields):
    """Emit a machine-readable record on the EVENTS sink when one is configured."""
    if events_enabled():
        logger.bind(**fields).log(EVENTS_LEVEL, message)
    else:
        logger.bind(**fields).debug(message)
