"""Argument checks shared by configuration objects."""

import math
from typing import Iterable, Optional

from .errors import ConfigError


def _finite(value: float) -> bool:
    try:
        return math.isfinite(value)
    except OverflowError:
        return False


def check_unit_interval(name: str, value: float, *, include_zero: bool = True, include_one: bool = True) -> None:
    lower_ok = value >= 0.0 if include_zero else value > 0.0
    upper_ok = value <= 1.0 if include_one else value < 1.0
    if not (_finite(value) and lower_ok and upper_ok):
        lower = "[" if include_zero else "("
        upper = "]" if include_one else ")"
        raise ConfigError(f"`{name}` must be in {lower}0, 1{upper}, got {value!r}")


def check_positive(name: str, value: float) -> None:
    if not (_finite(value) and value > 0):
        raise ConfigError(f"`{name}` must be a positive number, got {value!r}")


def check_non_negative(name: str, value: float) -> None:
    if not (_finite(value) and value >= 0):
        raise ConfigError(f"`{name}` must be a non-negative number, got {value!r}")


def check_known_keys(section: str, keys: Iterable[str], known: Iterable[str]) -> None:
    unknown = sorted(set(keys) - set(known))
    if unknown:
        raise ConfigError(f"Unknown {section} options: {', '.join(unknown)}")


def check_contiguous_ids(ids: Iterable[int], expected_count: Optional[int] = None) -> None:
    """Model ids must be unique and cover ``0..n-1``."""
    ids = list(ids)
    if not ids:
        raise ConfigError("An ensemble needs at least one model")
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Model ids must be unique, got {ids}")
    if sorted(ids) != list(range(len(ids))):
        raise ConfigError(f"Model ids must be contiguous from 0, got {sorted(ids)}")
    if expected_count is not None and len(ids) != expected_count:
        raise ConfigError(f"Expected {expected_count} models, got {len(ids)}")
