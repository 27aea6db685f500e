# Copyright 2022 The plcgan Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import enum
import logging
import re
import time
from typing import Any, Iterable, Optional, Tuple

import numpy as np

from . import exceptions

logger = logging.getLogger(__name__)


class StrEnum(str, enum.Enum):
    def __str__(self):
        return self.value


def rng(*keys: int) -> np.random.Generator:
    """
    Return a Philox (64-bit counter-based) generator keyed by the given non-negative integers.

    The same keys give the same stream on every platform, so all randomness in
    the package is drawn through here.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


class rstr(str):
    """
    Identical to a normal Python string, except that it's ``__repr__``
    is its ``__str__``, to make it work nicer in notebooks.
    """

    def __repr__(self):
        return self.__str__()


TABLE_SEP = "  "


def table(headers: Iterable[str], rows: Iterable[Iterable[Any]], align: str = "rjust") -> str:
    """
    Return a plain-text table with one line per row.

    Every column is as wide as its widest entry; entries are aligned with the
    given ``str`` method name (``"rjust"``, ``"ljust"`` or ``"center"``).
    """
    headers = tuple(str(h) for h in headers)
    body = [tuple(str(entry) for entry in row) for row in rows]
    widths = [max([len(h)] + [len(row[k]) for row in body]) for k, h in enumerate(headers)]

    def line(entries) -> str:
        return TABLE_SEP.join(getattr(e, align)(w) for e, w in zip(entries, widths)).rstrip()

    return rstr("\n".join([line(headers)] + [line(row) for row in body]))


class Timer:
    def __init__(self):
        self.start = None
        self.end = None

    @property
    def elapsed(self):
        """The elapsed time in seconds from the start of the timer to the end."""
        if self.start is None:
            raise ValueError("Timer hasn't started yet!")

        if self.end is None:
            raise ValueError("Timer hasn't stopped yet!")

        return self.end - self.start

    def __enter__(self):
        self.start = time.monotonic()

        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.end = time.monotonic()


def fmt_float(value: float) -> str:
    """Format a float for CSV output; fixed precision keeps reports byte-stable."""
    return f"{value:.6f}"


VERSION_RE = re.compile(r"^(\d+) \. (\d+) (\. (\d+))? ([ab](\d+))?$", re.VERBOSE | re.ASCII)


def parse_version(v: str) -> Tuple[int, int, int, Optional[str], Optional[int]]:
    match = VERSION_RE.match(v)
    if match is None:
        raise exceptions.InvalidParameter(f"Could not determine version info from {v}")

    (major, minor, micro, prerelease, prerelease_num) = match.group(1, 2, 4, 5, 6)

    return (
        int(major),
        int(minor),
        int(micro or 0),
        prerelease[0] if prerelease is not None else None,
        int(prerelease_num) if prerelease_num is not None else None,
    )
