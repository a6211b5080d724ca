"""Rank-and-trim sampling of a sensor window (MuSA).

A window is reduced in three steps: compute components, sort the rows by
their first component score, and keep the ``n'`` rows in the middle of that
ranking.  Rows are never modified, only selected.

Cost per window is dominated by the component step (``O(p^2 n)`` for PCA,
``O(p n)`` for the first robust or independent component); ranking is
``O(n log n)``, trimming ``O(1)`` and the optional final sort
``O(n' log n')``.  Memory is ``O(p n)``, and a source sends ``O(p n')``
values per hop.

Indices are 0-based throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .components import ComponentModel, SensorWindow, Technique, as_window, transform
from .errors import PreconditionError

__all__ = [
    "Level",
    "RankedIndices",
    "ReductionResult",
    "rank_first_component",
    "middle_trim",
    "musa_reduce",
    "reduce_with_model",
    "reduction_level",
]


class Level(str, enum.Enum):
    HALF = "half"
    LOG2 = "log2"

    @classmethod
    def parse(cls, value: "Level | str") -> "Level":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("n/2", "half").replace("log2n", "log2")
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise PreconditionError(f"unknown reduction level {value!r}")


@dataclass(frozen=True)
class RankedIndices:
    """Row indices ordered by ascending first-component score."""

    order: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class ReductionResult:
    retained_indices: np.ndarray
    reduced: SensorWindow
    technique: Technique
    n_prime: int


def rank_first_component(model: ComponentModel | np.ndarray) -> RankedIndices:
    """Stable ascending sort of rows by first component score.

    Accepts a :class:`ComponentModel` or a raw score matrix / first column.
    """
    scores = model.scores if isinstance(model, ComponentModel) else np.asarray(model, dtype=float)
    first = scores[:, 0] if scores.ndim == 2 else scores
    if first.size == 0:
        raise PreconditionError("cannot rank an empty score column")
    order = np.argsort(first, kind="stable")
    return RankedIndices(order=order, scores=first)


def middle_trim(ranked: RankedIndices, n_prime: int) -> np.ndarray:
    """Indices whose ranks are neither among the smallest nor the biggest.

    ``floor((n - n')/2)`` rows are dropped from the low end and
    ``ceil((n - n')/2)`` from the high end, leaving exactly ``n'``.
    The result is in rank order.
    """
    n = len(ranked)
    if not 1 <= n_prime <= n:
        raise PreconditionError(f"n_prime must be in [1, {n}], got {n_prime}")
    drop = n - n_prime
    low = drop // 2
    return ranked.order[low : low + n_prime]


def reduce_with_model(
    window, model: ComponentModel, n_prime: int, final_sort: bool = True
) -> ReductionResult:
    """Rank and trim using an already computed component model."""
    w = as_window(window)
    if model.scores.shape[0] != w.n:
        raise PreconditionError("component model and window disagree on n")
    kept = middle_trim(rank_first_component(model), n_prime)
    if final_sort:
        kept = np.sort(kept)
    return ReductionResult(
        retained_indices=kept,
        reduced=w.take(kept),
        technique=model.technique,
        n_prime=n_prime,
    )


def musa_reduce(
    window,
    n_prime: int,
    technique: Technique | str = Technique.PCA,
    final_sort: bool = True,
    **transform_kwargs,
) -> ReductionResult:
    """Reduce ``window`` to ``n_prime`` rows.

    When ``final_sort`` is set (the default) the kept rows come back in their
    original arrival order; otherwise in ascending first-component order.
    Extra keyword arguments go to the component transform (``standardize``
    for PCA, ``seed``/``strict`` for ICA).
    """
    w = as_window(window)
    if not 1 <= n_prime <= w.n:
        raise PreconditionError(f"n_prime must be in [1, {w.n}], got {n_prime}")
    model = transform(w, technique, **transform_kwargs)
    return reduce_with_model(w, model, n_prime, final_sort=final_sort)


def reduction_level(n: int, level: Level | str) -> int:
    """Target size ``n'`` for the ``n/2`` and ``log2 n`` reduction levels."""
    level = Level.parse(level)
    if n < 2:
        raise PreconditionError(f"reduction levels need n >= 2, got {n}")
    if level is Level.HALF:
        return n // 2
    return max(1, n.bit_length() - 1)

