# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse
import enum
import logging
import math
import re
from typing import Optional, Sequence, Tuple

from .constants import Provenance, Status
from .errors import ConfigError

log = logging.getLogger("robustgrid")

DECIMAL_RE = re.compile(r"^\s*[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?\s*$")
CELL_RE = re.compile(r"^(?P<status>SAT|UNSAT|UNKNOWN)(?::(?P<provenance>[A-Za-z]+))?$")
ANCHOR_FILE_RE = re.compile(r"^anchor-(?P<index>\d{4,})\.json$")


def parse_decimal(value, *, what: str = "value") -> float:
    """Convert a decimal string or JSON number to a finite float.

    Strings go through `float`, which rounds correctly, so any string written with
    `repr(float)` comes back as the same double.
    """
    if isinstance(value, bool):
        raise ValueError(f"{what}: booleans are not numbers")
    if isinstance(value, str):
        if not DECIMAL_RE.match(value):
            raise ValueError(f"{what}: {value!r} is not a decimal number")
        number = float(value)
    elif isinstance(value, (int, float)):
        number = float(value)
    else:
        raise ValueError(f"{what}: expected a number, got {type(value).__name__}")
    if not math.isfinite(number):
        raise ValueError(f"{what}: {value!r} is not finite")
    return number


def format_decimal(value: float) -> str:
    return repr(float(value))


def format_cell(status: Status, provenance: Optional[Provenance]) -> str:
    if provenance is None:
        return str(status)
    return f"{status}:{provenance}"


def parse_cell(text: str) -> Tuple[Status, Optional[Provenance]]:
    match = CELL_RE.match(text.strip())
    if match is None:
        raise ValueError(f"{text!r} is not a grid cell")
    provenance = match.group("provenance")
    return (
        Status.get_from_name(match.group("status")),
        Provenance.get_from_name(provenance) if provenance else None,
    )


class NoExitParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


class EnumAction(argparse.Action):
    """
    Handle Enum conversion in argparse
    https://stackoverflow.com/a/60750535
    """

    def __init__(self, **kwargs):
        # Pop off the type value
        enum_type = kwargs.pop("type", None)

        # Ensure an Enum subclass is provided
        if enum_type is None:
            raise ValueError("type must be assigned an Enum when using EnumAction")
        if not issubclass(enum_type, enum.Enum):
            raise TypeError("type must be an Enum when using EnumAction")

        kwargs.setdefault("choices", tuple(i.value for i in enum_type))

        super().__init__(**kwargs)

        self._enum = enum_type

    def __call__(self, parser, namespace, values, option_string=None):
        # Convert value back into an Enum
        if isinstance(values, Sequence) and not isinstance(values, str):
            value = [self._enum.get_from_name(v) for v in values]
        else:
            value = self._enum.get_from_name(values)
        log.debug(value)
        setattr(namespace, self.dest, value)
