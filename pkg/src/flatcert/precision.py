"""High-precision base-2 log arithmetic for constants that underflow floats.

The certified flatness threshold is around 2**(-2000) for realistic input
parameters, far below the smallest subnormal double.  Every derived constant
is therefore carried as its base-2 logarithm in an mpmath float, and all
inequality checks between constants happen in log space.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction

from mpmath import mp, mpf

DEFAULT_DIGITS = 100
MIN_DIGITS = 60
PRECISION_ENV_VAR = "FLATCERT_PRECISION"

# float64 range for 2**x; outside it approx() degrades to "underflow"/"overflow"
_FLOAT_MIN_LOG2 = -1074
_FLOAT_MAX_LOG2 = 1024


def working_digits(override: int | None = None) -> int:
    """Decimal digits used for log-space arithmetic.

    Resolution order: explicit ``override``, the FLATCERT_PRECISION
    environment variable, then the default of 100 digits.  Fewer than 60
    digits is rejected: the derived exponents amplify relative error by
    roughly two orders of magnitude.
    """
    if override is None:
        raw = os.environ.get(PRECISION_ENV_VAR)
        if raw is None:
            return DEFAULT_DIGITS
        override = int(raw)
    if override < MIN_DIGITS:
        raise ValueError(
            f"precision must be at least {MIN_DIGITS} digits, got {override}"
        )
    return override


def to_mpf(x) -> mpf:
    """Convert int/float/Fraction/mpf to mpf at the current working precision."""
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    return mpf(x)


def log2_mpf(x) -> mpf:
    """Base-2 logarithm of a positive number as mpf."""
    v = to_mpf(x)
    if v <= 0:
        raise ValueError(f"log2 of non-positive value {x}")
    return mp.log(v, 2)


@dataclass(frozen=True)
class LogValue:
    """A positive real represented by its base-2 logarithm.

    Arithmetic maps products/quotients/powers to exact log-space operations;
    comparisons compare the stored logarithms directly.
    """

    log2: mpf

    @classmethod
    def from_value(cls, x) -> "LogValue":
        return cls(log2_mpf(x))

    @classmethod
    def from_log2(cls, l) -> "LogValue":
        return cls(to_mpf(l))

    def __mul__(self, other: "LogValue") -> "LogValue":
        return LogValue(self.log2 + other.log2)

    def __truediv__(self, other: "LogValue") -> "LogValue":
        return LogValue(self.log2 - other.log2)

    def pow(self, exponent) -> "LogValue":
        return LogValue(self.log2 * to_mpf(exponent))

    def __le__(self, other: "LogValue") -> bool:
        return self.log2 <= other.log2

    def __lt__(self, other: "LogValue") -> bool:
        return self.log2 < other.log2

    def to_float(self) -> float:
        """The represented value 2**log2 as a double (0.0 / inf on under/overflow)."""
        if self.log2 < _FLOAT_MIN_LOG2:
            return 0.0
        if self.log2 > _FLOAT_MAX_LOG2:
            return float("inf")
        return float(mp.power(2, self.log2))

    def approx(self) -> float | str:
        """Double approximation, or ``"underflow"``/``"overflow"`` when out of range."""
        if self.log2 < _FLOAT_MIN_LOG2:
            return "underflow"
        if self.log2 > _FLOAT_MAX_LOG2:
            return "overflow"
        return float(mp.power(2, self.log2))

    def log2_float(self) -> float:
        return float(self.log2)

    def log2_str(self, digits: int = 40) -> str:
        """Decimal string of the exponent, deterministic at fixed digits."""
        return mp.nstr(self.log2, digits, strip_zeros=False)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"LogValue(2^{mp.nstr(self.log2, 12)})"
