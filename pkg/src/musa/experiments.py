"""Replicated fidelity experiments over distributions, sizes and techniques."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .components import Technique, transform
from .datagen import Family, Reference, generate_window, synthetic_reference
from .errors import MusaError
from .fidelity import anova_compare, relative_error
from .sampler import Level, reduce_with_model, reduction_level

__all__ = [
    "FidelityPlan",
    "Replicate",
    "FidelityRow",
    "run_replication",
    "run_fidelity",
    "summarize",
    "mean_ci",
    "FIDELITY_HEADER",
]

log = logging.getLogger(__name__)

FIDELITY_HEADER = (
    "distribution",
    "n",
    "technique",
    "level",
    "mean_error_pct",
    "ci_error_pct",
    "mean_min_p",
    "replications",
    "failures",
)


def mean_ci(values: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """Mean and normal-approximation half-width; half-width is 0 for one value."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(z * arr.std(ddof=1) / math.sqrt(arr.size))


@dataclass
class FidelityPlan:
    families: Sequence[Family] = (Family.GAUSSIAN, Family.SKEW_GAUSSIAN, Family.STUDENT_T)
    sizes: Sequence[int] = (720,)
    techniques: Sequence[Technique] = (Technique.PCA, Technique.ROBUST_PCA, Technique.ICA)
    levels: Sequence[Level] = (Level.HALF, Level.LOG2)
    replications: int = 100
    base_seed: int = 0
    reference: Reference = field(default_factory=synthetic_reference)
    # ICA keeps its last iterate instead of failing the replication
    strict_ica: bool = False
    jobs: int = 1

    def __post_init__(self) -> None:
        self.families = tuple(Family.parse(f) for f in self.families)
        self.techniques = tuple(Technique.parse(t) for t in self.techniques)
        self.levels = tuple(Level.parse(lv) for lv in self.levels)
        self.sizes = tuple(int(n) for n in self.sizes)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.techniques or not self.levels:
            raise ValueError("need at least one technique and one level")


@dataclass(frozen=True)
class Replicate:
    """Outcome of one (family, n, technique, level, replication) cell."""

    family: Family
    n: int
    technique: Technique
    level: Level
    replication: int
    error_pct: float = math.nan
    min_p: float = math.nan
    failed: bool = False


def run_replication(
    reference: Reference,
    family: Family,
    n: int,
    replication: int,
    techniques: Iterable[Technique],
    levels: Iterable[Level],
    base_seed: int = 0,
    strict_ica: bool = False,
) -> list[Replicate]:
    """Generate one window and evaluate every technique and level on it.

    The window seed is ``base_seed + replication``; ICA reuses it for its
    starting unmixing matrix.
    """
    seed = base_seed + replication
    window = generate_window(reference.spec(family, seed=seed), n)
    out = []
    levels = list(levels)
    for technique in techniques:
        kwargs = {"seed": seed, "strict": strict_ica} if technique is Technique.ICA else {}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                model = transform(window, technique, **kwargs)
        except MusaError as exc:
            log.warning("%s n=%d %s rep=%d failed: %s", family.value, n, technique.value, replication, exc)
            out += [Replicate(family, n, technique, lv, replication, failed=True) for lv in levels]
            continue
        for level in levels:
            result = reduce_with_model(window, model, reduction_level(n, level))
            try:
                err = relative_error(window, result.reduced).max_error_pct
                min_p = anova_compare(window, result.reduced).min_p_value
            except MusaError as exc:
                log.warning("fidelity failed for %s/%s: %s", technique.value, level.value, exc)
                out.append(Replicate(family, n, technique, level, replication, failed=True))
                continue
            out.append(Replicate(family, n, technique, level, replication, err, min_p))
    return out


def _job(args):
    return run_replication(*args)


def run_fidelity(plan: FidelityPlan) -> list[Replicate]:
    """All replicates of ``plan`` in a fixed order, independent of ``jobs``."""
    tasks = [
        (plan.reference, family, n, r, plan.techniques, plan.levels, plan.base_seed, plan.strict_ica)
        for family in plan.families
        for n in plan.sizes
        for r in range(plan.replications)
    ]
    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            chunks = list(pool.map(_job, tasks, chunksize=max(1, len(tasks) // (4 * plan.jobs))))
    else:
        chunks = [_job(t) for t in tasks]
    return [rep for chunk in chunks for rep in chunk]


@dataclass(frozen=True)
class FidelityRow:
    distribution: Family
    n: int
    technique: Technique
    level: Level
    mean_error_pct: float
    ci_error_pct: float
    mean_min_p: float
    replications: int
    failures: int

    def as_csv(self) -> list[str]:
        return [
            self.distribution.value,
            str(self.n),
            self.technique.value,
            self.level.value,
            repr(self.mean_error_pct),
            repr(self.ci_error_pct),
            repr(self.mean_min_p),
            str(self.replications),
            str(self.failures),
        ]


def summarize(replicates: Iterable[Replicate]) -> list[FidelityRow]:
    """Aggregate replicates per (distribution, n, technique, level), first-seen order."""
    groups: dict[tuple, list[Replicate]] = {}
    for rep in replicates:
        groups.setdefault((rep.family, rep.n, rep.technique, rep.level), []).append(rep)
    rows = []
    for (family, n, technique, level), reps in groups.items():
        ok = [r for r in reps if not r.failed]
        mean_err, ci_err = mean_ci([r.error_pct for r in ok])
        mean_p = float(np.mean([r.min_p for r in ok])) if ok else math.nan
        rows.append(
            FidelityRow(family, n, technique, level, mean_err, ci_err, mean_p, len(ok), len(reps) - len(ok))
        )
    return rows
