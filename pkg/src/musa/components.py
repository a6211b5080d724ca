"""Component transforms used to rank sensor observations.

Three transforms share one contract: take an ``n x p`` window and return a
:class:`ComponentModel` whose first score column is what the sampler ranks
on.

- PCA on the classical (or correlation) matrix,
- robust PCA on a pairwise Gnanadesikan-Kettenring covariance built from
  medians and MADs,
- FastICA (symmetric, ``tanh`` contrast) on PCA-whitened data.

The symmetric eigensolver is a cyclic Jacobi method so that every transform
here is self-contained and bit-reproducible.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DegenerateScaleError, PreconditionError

__all__ = [
    "Technique",
    "Estimator",
    "SensorWindow",
    "ComponentModel",
    "CovarianceEstimate",
    "as_window",
    "symmetric_eigendecomposition",
    "classical_covariance",
    "robust_covariance",
    "pca_transform",
    "robust_pca_transform",
    "ica_transform",
    "whiten",
    "transform",
    "MAD_CONSISTENCY",
]

MAD_CONSISTENCY = 1.4826


class Technique(str, enum.Enum):
    PCA = "pca"
    ROBUST_PCA = "robust_pca"
    ICA = "ica"

    @classmethod
    def parse(cls, value: "Technique | str") -> "Technique":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise PreconditionError(f"unknown technique {value!r}")


class Estimator(str, enum.Enum):
    CLASSICAL = "classical"
    ROBUST_PAIRWISE = "robust_pairwise"


@dataclass(frozen=True)
class SensorWindow:
    """``n x p`` observations from one node over one stationary epoch."""

    values: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise PreconditionError(f"window must be 2-D, got shape {values.shape}")
        n, p = values.shape
        if n < 2 or p < 1:
            raise PreconditionError(f"window needs n >= 2 and p >= 1, got {n}x{p}")
        if not np.isfinite(values).all():
            raise PreconditionError("window contains NaN or infinite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != p:
                raise PreconditionError(f"{len(names)} column names for {p} columns")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column_label(self, j: int) -> str:
        if self.column_names is not None:
            return self.column_names[j]
        return f"column {j}"

    def take(self, indices: Sequence[int]) -> "SensorWindow":
        """Row subset; may hold a single row (a reduced window, not a new epoch)."""
        rows = self.values[np.asarray(indices, dtype=int)]
        if rows.shape[0] < 1:
            raise PreconditionError("cannot take an empty row subset")
        rows.setflags(write=False)
        out = object.__new__(SensorWindow)
        object.__setattr__(out, "values", rows)
        object.__setattr__(out, "column_names", self.column_names)
        return out


def as_window(data: "SensorWindow | np.ndarray | Sequence[Sequence[float]]") -> SensorWindow:
    if isinstance(data, SensorWindow):
        return data
    return SensorWindow(np.asarray(data, dtype=float))


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    location: np.ndarray
    estimator: Estimator


@dataclass(frozen=True)
class ComponentModel:
    """Output of a component transform.

    ``scores = ((values - center) / scale) @ loadings``; ``scale`` is all ones
    unless correlation PCA was requested.
    """

    scores: np.ndarray
    loadings: np.ndarray
    center: np.ndarray
    explained_variance: np.ndarray
    technique: Technique
    scale: np.ndarray = field(default=None)  # type: ignore[assignment]
    converged: bool = True
    iterations: int = 0

    def __post_init__(self) -> None:
        if self.scale is None:
            object.__setattr__(self, "scale", np.ones(self.loadings.shape[0]))

    def first_component(self) -> np.ndarray:
        return self.scores[:, 0]

    def reconstruct(self) -> np.ndarray:
        """Invert the transform (exact for PCA, robust PCA and ICA alike)."""
        if self.technique is Technique.ICA:
            back = np.linalg.solve(self.loadings.T, self.scores.T).T
        else:
            back = self.scores @ self.loadings.T
        return back * self.scale + self.center


# ---------------------------------------------------------------------------
# Symmetric eigendecomposition (cyclic Jacobi, round-robin ordering)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _round_robin(p: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Pairings covering every (i, j), i < j, once per sweep.

    Each round holds disjoint pairs so their rotations commute and can be
    applied as one orthogonal matrix.
    """
    m = p + (p % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < p and b < p:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _sign_flips(vectors: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Per-column signs that make the largest-magnitude entry positive.

    Entries within ``rtol`` of the column maximum count as tied; the lowest
    index among them decides.
    """
    mags = np.abs(vectors)
    top = mags.max(axis=0)
    flips = np.ones(vectors.shape[1])
    for j in range(vectors.shape[1]):
        if top[j] == 0:
            continue
        lead = int(np.flatnonzero(mags[:, j] >= top[j] * (1 - rtol))[0])
        if vectors[lead, j] < 0:
            flips[j] = -1.0
    return flips


def symmetric_eigendecomposition(
    m: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.

    Sweeps of Jacobi rotations run until the off-diagonal Frobenius norm drops
    below ``tol * ||m||_F``.

    Raises
    ------
    PreconditionError
        If ``m`` is not square or not symmetric within 1e-10.
    ConvergenceError
        If ``max_sweeps`` sweeps do not reach the threshold.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise PreconditionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise PreconditionError("matrix has non-finite entries")
    p = a.shape[0]
    asym = np.max(np.abs(a - a.T))
    if asym > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise PreconditionError(f"matrix is not symmetric (max |m - m^T| = {asym:.3e})")
    a = 0.5 * (a + a.T)
    v = np.eye(p)
    norm = np.linalg.norm(a)
    threshold = tol * norm

    mask = ~np.eye(p, dtype=bool)

    def off(x: np.ndarray) -> float:
        return float(np.linalg.norm(x[mask]))

    residual = off(a)
    sweeps = 0
    rounds = _round_robin(p)
    while residual > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {residual:.3e})",
                residual,
            )
        for ps, qs in rounds:
            apq = a[ps, qs]
            active = np.abs(apq) > 0
            if not active.any():
                continue
            ps, qs, apq = ps[active], qs[active], apq[active]
            app, aqq = a[ps, ps], a[qs, qs]
            # tiny apq may push tau to inf; t then becomes 0 (no rotation)
            with np.errstate(over="ignore", divide="ignore"):
                tau = (aqq - app) / (2.0 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            j = np.eye(p)
            j[ps, ps] = c
            j[qs, qs] = c
            j[ps, qs] = s
            j[qs, ps] = -s
            a = j.T @ a @ j
            a = 0.5 * (a + a.T)
            v = v @ j
        sweeps += 1
        residual = off(a)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    v = v[:, order]
    return eigenvalues[order], v * _sign_flips(v)


# ---------------------------------------------------------------------------
# Covariance estimators
# ---------------------------------------------------------------------------


def classical_covariance(window) -> CovarianceEstimate:
    """Unbiased sample covariance (divisor ``n - 1``) and column means."""
    w = as_window(window)
    x = w.values
    location = x.mean(axis=0)
    centered = x - location
    matrix = centered.T @ centered / (w.n - 1)
    matrix = 0.5 * (matrix + matrix.T)
    return CovarianceEstimate(matrix, location, Estimator.CLASSICAL)


def _mad_scale(x: np.ndarray) -> np.ndarray:
    med = np.median(x, axis=0)
    return MAD_CONSISTENCY * np.median(np.abs(x - med), axis=0)


def robust_covariance(window) -> CovarianceEstimate:
    """Pairwise robust covariance with eigenvalue clipping.

    Location is the column median and scale the corrected MAD.  Each
    off-diagonal entry uses the identity
    ``cov(x, y) = (s(x + y)^2 - s(x - y)^2) / 4`` with ``s`` the corrected MAD,
    evaluated on the robustly standardized columns and rescaled, so the
    estimate is equivariant to per-column rescaling.  Negative eigenvalues
    of the assembled matrix are set to zero.
    """
    w = as_window(window)
    if w.n < 4:
        raise PreconditionError(f"robust covariance needs n >= 4, got {w.n}")
    x = w.values
    location = np.median(x, axis=0)
    scales = _mad_scale(x)
    for j, s in enumerate(scales):
        # subnormal scales cannot be inverted without overflow
        if s < np.finfo(float).tiny:
            raise DegenerateScaleError(f"zero MAD in {w.column_label(j)}", column=j)

    p = w.p
    with np.errstate(over="ignore"):
        u = (x - location) / scales
    bad = np.flatnonzero(~np.isfinite(u).all(axis=0))
    if bad.size:
        j = int(bad[0])
        raise DegenerateScaleError(f"MAD of {w.column_label(j)} is negligible next to its spread", column=j)
    raw = np.diag(scales**2)
    if p > 1:
        ii, jj = np.triu_indices(p, k=1)
        # rescale before squaring: sqrt(s_i s_j) * MAD(u_i +- u_j) stays within the data range
        g = np.sqrt(scales[ii]) * np.sqrt(scales[jj])
        a = g * _mad_scale(u[:, ii] + u[:, jj])
        b = g * _mad_scale(u[:, ii] - u[:, jj])
        r = (a - b) * (a + b) / 4.0
        raw[ii, jj] = r
        raw[jj, ii] = r
    eigenvalues, vectors = symmetric_eigendecomposition(raw)
    clipped = (vectors * np.maximum(eigenvalues, 0.0)) @ vectors.T
    clipped = 0.5 * (clipped + clipped.T)
    return CovarianceEstimate(clipped, location, Estimator.ROBUST_PAIRWISE)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def pca_transform(window, standardize: bool = False) -> ComponentModel:
    """Principal components of the window.

    With ``standardize`` the columns are divided by their sample standard
    deviation first, i.e. PCA of the correlation matrix.
    """
    w = as_window(window)
    cov = classical_covariance(w)
    scale = np.ones(w.p)
    matrix = cov.matrix
    if standardize:
        scale = np.sqrt(np.diag(cov.matrix))
        for j, s in enumerate(scale):
            if s == 0:
                raise DegenerateScaleError(f"zero variance in {w.column_label(j)}", column=j)
        matrix = cov.matrix / np.outer(scale, scale)
    eigenvalues, vectors = symmetric_eigendecomposition(matrix)
    scores = ((w.values - cov.location) / scale) @ vectors
    return ComponentModel(
        scores=scores,
        loadings=vectors,
        center=cov.location,
        explained_variance=np.maximum(eigenvalues, 0.0),
        technique=Technique.PCA,
        scale=scale,
    )


def robust_pca_transform(window) -> ComponentModel:
    w = as_window(window)
    cov = robust_covariance(w)
    eigenvalues, vectors = symmetric_eigendecomposition(cov.matrix)
    scores = (w.values - cov.location) @ vectors
    return ComponentModel(
        scores=scores,
        loadings=vectors,
        center=cov.location,
        explained_variance=np.maximum(eigenvalues, 0.0),
        technique=Technique.ROBUST_PCA,
    )


def whiten(window) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """PCA whitening: returns ``(z, k, center)`` with ``z = (x - center) @ k``.

    ``z`` has identity sample covariance.  A (numerically) singular
    covariance cannot be whitened and raises ``DegenerateScaleError``.
    """
    w = as_window(window)
    cov = classical_covariance(w)
    eigenvalues, vectors = symmetric_eigendecomposition(cov.matrix)
    floor = 1e-12 * max(float(eigenvalues[0]), 0.0)
    if eigenvalues[-1] <= floor:
        raise DegenerateScaleError("covariance is singular; cannot whiten", column=None)
    k = vectors / np.sqrt(eigenvalues)
    z = (w.values - cov.location) @ k
    return z, k, cov.location


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # (W W^T)^{-1/2} W via the polar factor of W
    u, _, vt = np.linalg.svd(w)
    return u @ vt


def ica_transform(
    window,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
    strict: bool = True,
) -> ComponentModel:
    """Symmetric FastICA with the ``tanh`` contrast.

    Stable estimates need roughly ``n >= 10 p`` observations.  Components are
    returned ordered by the variance of their back-projection onto the data
    space (descending), which is also what ``explained_variance`` holds.

    With ``strict=False`` hitting ``max_iter`` only warns and the last
    iterate is used; ``converged`` on the result records which happened.
    A single-column window is returned centered and otherwise untouched.
    """
    w = as_window(window)
    x = w.values
    if w.p == 1:
        center = x.mean(axis=0)
        scores = x - center
        return ComponentModel(
            scores=scores,
            loadings=np.eye(1),
            center=center,
            explained_variance=np.array([scores[:, 0].var(ddof=1)]),
            technique=Technique.ICA,
        )

    z, k, center = whiten(w)
    n, p = z.shape
    rng = np.random.default_rng(seed)
    unmix = _sym_decorrelate(rng.standard_normal((p, p)))
    delta = np.inf
    iterations = 0
    converged = False
    while iterations < max_iter:
        y = z @ unmix.T
        g = np.tanh(y)
        g_prime = 1.0 - g * g
        updated = (g.T @ z) / n - g_prime.mean(axis=0)[:, None] * unmix
        updated = _sym_decorrelate(updated)
        delta = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", updated, unmix)) - 1.0)))
        unmix = updated
        iterations += 1
        if delta < tol:
            converged = True
            break
    if not converged:
        message = f"FastICA did not converge in {max_iter} iterations (delta {delta:.3e})"
        if strict:
            raise ConvergenceError(message, delta)
        warnings.warn(message, RuntimeWarning, stacklevel=2)

    loadings = k @ unmix.T
    scores = (x - center) @ loadings
    mixing = np.linalg.inv(loadings)
    backproj = scores.var(axis=0, ddof=1) * np.sum(mixing * mixing, axis=1)
    order = np.argsort(-backproj, kind="stable")
    loadings = loadings[:, order]
    flips = _sign_flips(loadings)
    return ComponentModel(
        scores=scores[:, order] * flips,
        loadings=loadings * flips,
        center=center,
        explained_variance=backproj[order],
        technique=Technique.ICA,
        converged=converged,
        iterations=iterations,
    )


def transform(window, technique: Technique | str, **kwargs) -> ComponentModel:
    """Dispatch to the transform named by ``technique``."""
    technique = Technique.parse(technique)
    if technique is Technique.PCA:
        return pca_transform(window, **kwargs)
    if technique is Technique.ROBUST_PCA:
        return robust_pca_transform(window, **kwargs)
    return ica_transform(window, **kwargs)
