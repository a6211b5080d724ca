"""How faithful a reduced window is to the window it came from.

Two measures: a per-variable two-group one-way ANOVA (original vs. reduced)
and the maximum relative error between column means, in percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .components import SensorWindow
from .errors import DegenerateScaleError, NumericError, PreconditionError

__all__ = [
    "VariableAnova",
    "AnovaResult",
    "ErrorResult",
    "anova_compare",
    "relative_error",
    "f_distribution_sf",
    "regularized_incomplete_beta",
]

_MAX_TERMS = 500
_EPS = 1e-12
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_TERMS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _EPS:
            return h
    raise NumericError(f"incomplete beta continued fraction did not converge in {_MAX_TERMS} terms")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """``I_x(a, b)`` for ``0 <= x <= 1`` and ``a, b > 0``."""
    if a <= 0 or b <= 0:
        raise PreconditionError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_distribution_sf(x: float, d1: int, d2: int) -> float:
    """Survival function ``P(F > x)`` of the F(d1, d2) distribution."""
    if d1 < 1 or d2 < 1:
        raise PreconditionError(f"degrees of freedom must be >= 1, got ({d1}, {d2})")
    if math.isnan(x):
        raise PreconditionError("x is NaN")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    value = regularized_incomplete_beta(d2 / (d2 + d1 * x), d2 / 2.0, d1 / 2.0)
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class VariableAnova:
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int
    degenerate: bool = False


@dataclass(frozen=True)
class AnovaResult:
    per_variable: tuple[VariableAnova, ...]

    @property
    def min_p_value(self) -> float:
        return min(v.p_value for v in self.per_variable)

    @property
    def p_values(self) -> np.ndarray:
        return np.array([v.p_value for v in self.per_variable])


@dataclass(frozen=True)
class ErrorResult:
    per_variable_error_pct: np.ndarray

    @property
    def max_error_pct(self) -> float:
        return float(np.max(self.per_variable_error_pct))


def _values(window) -> np.ndarray:
    if hasattr(window, "values") and not isinstance(window, np.ndarray):
        return np.asarray(window.values, dtype=float)
    arr = np.asarray(window, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def anova_compare(original, reduced) -> AnovaResult:
    """One-way ANOVA of each column, original vs. reduced, as two groups.

    ``F = MS_between / MS_within`` on ``(1, n + n' - 2)`` degrees of freedom.
    A column with zero within-group variance gets ``p = 0`` and a degeneracy
    flag when the group means differ, and ``F = 0, p = 1`` when they do not.
    """
    a, b = _values(original), _values(reduced)
    if a.shape[1] != b.shape[1]:
        raise PreconditionError(f"windows disagree on p: {a.shape[1]} vs {b.shape[1]}")
    n1, n2 = a.shape[0], b.shape[0]
    if n1 < 2 or n2 < 2:
        raise PreconditionError("both groups need at least two observations")
    df_w = n1 + n2 - 2
    m1, m2 = a.mean(axis=0), b.mean(axis=0)
    grand = (n1 * m1 + n2 * m2) / (n1 + n2)
    ss_between = n1 * (m1 - grand) ** 2 + n2 * (m2 - grand) ** 2
    ss_within = ((a - m1) ** 2).sum(axis=0) + ((b - m2) ** 2).sum(axis=0)
    out = []
    for ssb, ssw in zip(ss_between, ss_within):
        ms_b, ms_w = float(ssb), float(ssw) / df_w
        if ms_w == 0.0:
            if ms_b == 0.0:
                out.append(VariableAnova(0.0, 1.0, 1, df_w, degenerate=True))
            else:
                out.append(VariableAnova(math.inf, 0.0, 1, df_w, degenerate=True))
            continue
        f = ms_b / ms_w
        out.append(VariableAnova(f, f_distribution_sf(f, 1, df_w), 1, df_w))
    return AnovaResult(tuple(out))


def relative_error(original, reduced) -> ErrorResult:
    """Percent relative error of each reduced column mean against the original."""
    a, b = _values(original), _values(reduced)
    if a.shape[1] != b.shape[1]:
        raise PreconditionError(f"windows disagree on p: {a.shape[1]} vs {b.shape[1]}")
    m1, m2 = a.mean(axis=0), b.mean(axis=0)
    zero = np.flatnonzero(m1 == 0)
    if zero.size:
        j = int(zero[0])
        label = original.column_label(j) if isinstance(original, SensorWindow) else f"column {j}"
        raise DegenerateScaleError(f"original mean of {label} is zero", column=j)
    return ErrorResult(100.0 * np.abs(m1 - m2) / np.abs(m1))
