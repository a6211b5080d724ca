"""Pseudo-real sensor data and the node sensing model.

Windows are drawn from Gaussian, skew-normal or Student t laws that share a
reference location vector and scale matrix.  The reference can be read from
a small text file or synthesized.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .components import SensorWindow, symmetric_eigendecomposition
from .errors import FactorizationError, ParseError, PreconditionError

__all__ = [
    "Family",
    "Characteristic",
    "DistributionSpec",
    "SensorNodeModel",
    "Reference",
    "generate_window",
    "psd_factor",
    "angstrom_index",
    "sense",
    "jain_rounds",
    "synthetic_reference",
    "load_reference",
    "save_reference",
    "standard_sizes",
    "DEFAULT_REPLICATIONS",
    "DEFAULT_SKEW_ALPHA",
    "DEFAULT_DOF",
    "DEFAULT_READINGS_PER_INTERVAL",
    "INTERVALS",
    "QUADRATURE_POINTS",
]

DEFAULT_REPLICATIONS = 1000
DEFAULT_SKEW_ALPHA = 0.5
DEFAULT_DOF = 2.0
INTERVALS = 72
DEFAULT_READINGS_PER_INTERVAL = 10
READINGS_PER_INTERVAL = (10, 20, 30, 40, 50)
QUADRATURE_POINTS = 33


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SKEW_GAUSSIAN = "skew_gaussian"
    STUDENT_T = "student_t"

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"normal": "gaussian", "skew": "skew_gaussian", "skew_normal": "skew_gaussian",
                   "t": "student_t", "student": "student_t"}
        key = aliases.get(key, key)
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise PreconditionError(f"unknown distribution family {value!r}")


class Characteristic(str, enum.Enum):
    POINTWISE = "pointwise"
    INTEGRATED = "integrated"


@dataclass(frozen=True)
class DistributionSpec:
    family: Family
    location: np.ndarray
    scale: np.ndarray
    skew_alpha: float = DEFAULT_SKEW_ALPHA
    dof: float = DEFAULT_DOF
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        p = loc.shape[0]
        if scale.shape != (p, p):
            raise PreconditionError(f"scale must be {p}x{p}, got {scale.shape}")
        if not (np.isfinite(loc).all() and np.isfinite(scale).all()):
            raise PreconditionError("location and scale must be finite")
        if np.max(np.abs(scale - scale.T)) > 1e-10 * max(1.0, np.max(np.abs(scale))):
            raise PreconditionError("scale matrix is not symmetric")
        if not self.dof > 0:
            raise PreconditionError(f"dof must be positive, got {self.dof}")
        if not math.isfinite(self.skew_alpha):
            raise PreconditionError("skew_alpha must be finite")
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", scale)

    @property
    def p(self) -> int:
        return self.location.shape[0]

    def with_seed(self, seed: int) -> "DistributionSpec":
        return DistributionSpec(self.family, self.location, self.scale, self.skew_alpha, self.dof, seed)


def psd_factor(scale: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square root ``L`` with ``L @ L.T == scale``.

    Works for singular PSD matrices; raises ``FactorizationError`` when an
    eigenvalue is below ``-tol * max(1, ||scale||)``.
    """
    eigenvalues, vectors = symmetric_eigendecomposition(scale)
    bound = tol * max(1.0, float(np.max(np.abs(eigenvalues))))
    if eigenvalues[-1] < -bound:
        raise FactorizationError(
            f"scale matrix is not positive semidefinite (smallest eigenvalue {eigenvalues[-1]:.3e})"
        )
    root = np.sqrt(np.maximum(eigenvalues, 0.0))
    return (vectors * root) @ vectors.T


def generate_window(spec: DistributionSpec, n: int) -> SensorWindow:
    """Draw ``n`` observations from ``spec``; deterministic given ``spec.seed``.

    The skew-normal case draws per-coordinate innovations
    ``delta |u0| + sqrt(1 - delta^2) u1`` (``delta = alpha / sqrt(1 + alpha^2)``)
    and then colors and shifts them, so its mean and covariance are those of
    the innovations pushed through the scale factor, not the reference itself.
    The Student t case uses ``scale`` as the scale matrix of a multivariate t;
    with ``dof <= 2`` its covariance does not exist.
    """
    if n < 2:
        raise PreconditionError(f"need n >= 2 observations, got {n}")
    factor = psd_factor(spec.scale)
    rng = np.random.default_rng(spec.seed)
    p = spec.p
    if spec.family is Family.GAUSSIAN:
        z = rng.standard_normal((n, p))
        x = z @ factor.T
    elif spec.family is Family.SKEW_GAUSSIAN:
        delta = spec.skew_alpha / math.sqrt(1.0 + spec.skew_alpha**2)
        u0 = rng.standard_normal((n, p))
        u1 = rng.standard_normal((n, p))
        z = delta * np.abs(u0) + math.sqrt(1.0 - delta**2) * u1
        x = z @ factor.T
    else:
        z = rng.standard_normal((n, p))
        g = rng.chisquare(spec.dof, size=n)
        x = (z @ factor.T) / np.sqrt(g / spec.dof)[:, None]
    return SensorWindow(spec.location + x)


# ---------------------------------------------------------------------------
# Reference moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reference:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    def spec(self, family: Family | str, seed: int = 0, **kwargs) -> DistributionSpec:
        return DistributionSpec(Family.parse(family), self.mean, self.covariance, seed=seed, **kwargs)


def synthetic_reference(p: int = 19, seed: int = 0, cv: float = 0.3) -> Reference:
    """Random stand-in for a measured mean/covariance reference.

    The correlation structure comes from ``A^T A + p I`` with Gaussian ``A``;
    means are drawn in ``[5, 50]`` and each standard deviation is ``cv``
    times its mean, giving positive-valued, pollutant-like variables.
    """
    if p < 1:
        raise PreconditionError("p must be positive")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((p, p))
    base = a.T @ a + p * np.eye(p)
    d = np.sqrt(np.diag(base))
    corr = base / np.outer(d, d)
    mean = rng.uniform(5.0, 50.0, size=p)
    sd = cv * mean
    cov = corr * np.outer(sd, sd)
    return Reference(mean, 0.5 * (cov + cov.T))


def load_reference(path: str | Path) -> Reference:
    """Read ``p``, then the ``p`` means, then ``p`` covariance rows."""
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln and not ln.startswith("#")]
    if not numbered:
        raise ParseError("empty reference file")

    def floats(lineno: int, text: str, expected: int) -> list[float]:
        parts = text.split()
        if len(parts) != expected:
            raise ParseError(f"expected {expected} values, found {len(parts)}", line=lineno)
        try:
            return [float(v) for v in parts]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None

    lineno, first = numbered[0]
    try:
        p = int(first)
    except ValueError:
        raise ParseError(f"first line must be the dimension, got {first!r}", line=lineno) from None
    if p < 1:
        raise ParseError("dimension must be positive", line=lineno)
    if len(numbered) != p + 2:
        raise ParseError(f"expected {p + 2} non-empty lines, found {len(numbered)}")
    mean = np.array(floats(*numbered[1], p))
    cov = np.array([floats(ln, text, p) for ln, text in numbered[2:]])
    if np.max(np.abs(cov - cov.T)) > 1e-10 * max(1.0, np.max(np.abs(cov))):
        raise ParseError("covariance is not symmetric")
    return Reference(mean, 0.5 * (cov + cov.T))


def save_reference(ref: Reference, path: str | Path) -> None:
    rows = [str(ref.p), " ".join(repr(float(v)) for v in ref.mean)]
    rows += [" ".join(repr(float(v)) for v in row) for row in ref.covariance]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def standard_sizes(readings_per_interval: Sequence[int] = READINGS_PER_INTERVAL) -> list[int]:
    """Window sizes for the given pseudo-readings per four-hour interval."""
    return [r * INTERVALS for r in readings_per_interval]


# ---------------------------------------------------------------------------
# Sensor system model
# ---------------------------------------------------------------------------


def angstrom_index(humidity: float, temperature: float) -> float:
    """Angstrom fire-danger index from relative humidity (%) and temperature (C)."""
    return humidity / 20.0 + (27.0 - temperature) / 10.0


@dataclass(frozen=True)
class SensorNodeModel:
    """Node position and how it turns the field into readings.

    An ``INTEGRATED`` node averages each field variable over a square of
    half-width ``half_widths[j]`` centred on the node.
    """

    position: tuple[float, float]
    characteristic: Characteristic = Characteristic.POINTWISE
    half_widths: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "characteristic", Characteristic(self.characteristic))
        if self.characteristic is Characteristic.INTEGRATED and min(self.half_widths) <= 0:
            raise PreconditionError("integration half-widths must be positive")


Field = Callable[[float, tuple[float, float]], tuple[float, float]]


def _area_mean(field_fn: Field, t: float, centre: tuple[float, float], half_width: float, var: int) -> float:
    k = QUADRATURE_POINTS
    offsets = (np.arange(k) + 0.5) / k * 2.0 * half_width - half_width
    total = 0.0
    for dx in offsets:
        for dy in offsets:
            total += field_fn(t, (centre[0] + dx, centre[1] + dy))[var]
    return total / (k * k)


def sense(node: SensorNodeModel, field_fn: Field, t: float) -> tuple[float, float, float]:
    """Humidity, temperature and Angstrom index as recorded by ``node`` at ``t``.

    Integrated readings use the midpoint rule with ``QUADRATURE_POINTS``
    nodes per axis, exact for fields linear in position.
    """
    if node.characteristic is Characteristic.POINTWISE:
        f1, f2 = field_fn(t, node.position)
    else:
        f1 = _area_mean(field_fn, t, node.position, node.half_widths[0], 0)
        f2 = _area_mean(field_fn, t, node.position, node.half_widths[1], 1)
    return float(f1), float(f2), angstrom_index(f1, f2)


def jain_rounds(sigma_hat: float, mean_error: float, precision_pct: float = 5.0, c: float = 1.96) -> int:
    """Replications needed for a ``precision_pct`` % confidence half-width.

    ``ceil((100 c sigma / (x mean))^2)`` from a pilot run's standard
    deviation and mean.
    """
    if mean_error == 0:
        raise PreconditionError("mean error is zero; relative precision undefined")
    if sigma_hat < 0 or precision_pct <= 0:
        raise PreconditionError("sigma_hat must be >= 0 and precision_pct > 0")
    ratio = 100.0 * c * sigma_hat / (precision_pct * abs(mean_error))
    # guard against 15.999999999 style rounding before the ceiling
    return int(math.ceil(round(ratio * ratio, 9)))
