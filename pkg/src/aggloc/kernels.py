"""Interaction kernels built from a matrix-weighted mollifier decomposition.

A model couples N species through kernels

    K[i][j](x) = sum_k A[k,i] * A[k,j] * (flip(rho_i) * rho_j)(x),

where each ``rho_i`` is a normalized nonnegative radial mollifier and ``A`` is
a p x N coefficient matrix.  The coupling strengths that survive the
localisation limit are the entries of G = A^T A.  Everything here is pure and
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import signal

from .grid import KernelSamples

__all__ = [
    "GaussianMollifier",
    "TabulatedMollifier",
    "MollifierSpec",
    "InteractionModel",
    "MollifierCheck",
    "ValidationReport",
    "gamma_matrix",
    "validate_model",
    "mollifier_eval",
    "mollifier_radius",
    "mollifier_samples",
    "kernel_closed_form",
    "kernel_discrete",
    "pair_kernel_radius",
    "max_kernel_radius",
]

# Relative singular-value cutoff for numerical rank.
RANK_RTOL = 1e-10
# Allowed deviation of a mollifier's total integral from 1.
NORMALIZATION_TOL = 1e-8
# Gaussians sampled on grids are cut at this many standard deviations;
# the discarded tail mass is about exp(-18) ~ 1.5e-8.
TRUNCATION_SIGMAS = 6.0


@dataclass(frozen=True)
class GaussianMollifier:
    """Radial Gaussian profile exp(-|x|^2 / (2 variance)) / (2 pi variance)."""

    variance: float

    def __post_init__(self) -> None:
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be a positive number, got {self.variance}")


@dataclass(eq=False)
class TabulatedMollifier:
    """Radial profile given by samples at increasing radii, linear in between.

    The profile is taken constant on [0, radii[0]] and zero beyond radii[-1].
    """

    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.ndim != 1 or self.radii.shape != self.values.shape:
            raise ValueError("radii and values must be 1D arrays of equal length")
        if self.radii.size < 2:
            raise ValueError("a tabulated profile needs at least two samples")
        if np.any(np.diff(self.radii) <= 0) or self.radii[0] < 0:
            raise ValueError("radii must be nonnegative and strictly increasing")
        if not (np.all(np.isfinite(self.radii)) and np.all(np.isfinite(self.values))):
            raise ValueError("tabulated samples must be finite")


MollifierSpec = Union[GaussianMollifier, TabulatedMollifier]


def _profile(spec: MollifierSpec, r: np.ndarray) -> np.ndarray:
    """Unscaled radial profile value at radius r (arrays ok)."""
    r = np.asarray(r, dtype=float)
    if isinstance(spec, GaussianMollifier):
        return np.exp(-(r**2) / (2.0 * spec.variance)) / (2.0 * math.pi * spec.variance)
    return np.interp(r, spec.radii, spec.values, left=spec.values[0], right=0.0)


def mollifier_eval(spec: MollifierSpec, epsilon: float, x, y) -> np.ndarray:
    """Scaled mollifier eps^-2 * rho(|x| / eps) at the point(s) (x, y)."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    r = np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return _profile(spec, r / epsilon) / epsilon**2


def mollifier_radius(spec: MollifierSpec, epsilon: float) -> float:
    """Truncation radius of the scaled mollifier when sampled on a grid."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if isinstance(spec, GaussianMollifier):
        return TRUNCATION_SIGMAS * epsilon * math.sqrt(spec.variance)
    return epsilon * float(spec.radii[-1])


def _sample_radial(fn, radius_cells: int, dx: float) -> np.ndarray:
    offs = np.arange(-radius_cells, radius_cells + 1) * dx
    xx, yy = np.meshgrid(offs, offs, indexing="xy")
    return fn(np.hypot(xx, yy))


def mollifier_samples(spec: MollifierSpec, epsilon: float, dx: float) -> KernelSamples:
    """Grid samples of the scaled mollifier, truncated at its support radius."""
    radius = mollifier_radius(spec, epsilon)
    cells = max(1, math.ceil(radius / dx))
    values = _sample_radial(lambda r: _profile(spec, r / epsilon) / epsilon**2, cells, dx)
    return KernelSamples(values, dx)


def gamma_matrix(a: np.ndarray) -> np.ndarray:
    """Total kernel masses G = A^T A, returned exactly symmetric.

    The upper triangle is computed once and mirrored so G[i, j] == G[j, i]
    holds bitwise.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("interaction matrix must be 2D")
    if not np.all(np.isfinite(a)):
        raise ValueError("interaction matrix entries must be finite")
    m = a.T @ a
    return np.triu(m) + np.triu(m, 1).T


@dataclass(frozen=True)
class InteractionModel:
    """Coefficient matrix, one mollifier per species, and the kernel range."""

    matrix: np.ndarray
    mollifiers: tuple[MollifierSpec, ...]
    epsilon: float

    def __post_init__(self) -> None:
        a = np.asarray(self.matrix, dtype=float)
        if a.ndim != 2:
            raise ValueError("interaction matrix must be 2D")
        if not np.all(np.isfinite(a)):
            raise ValueError("interaction matrix entries must be finite")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "mollifiers", tuple(self.mollifiers))
        if len(self.mollifiers) != a.shape[1]:
            raise ValueError(
                f"{len(self.mollifiers)} mollifiers for a matrix with "
                f"{a.shape[1]} columns"
            )
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def species(self) -> int:
        return self.matrix.shape[1]

    @property
    def gamma(self) -> np.ndarray:
        return gamma_matrix(self.matrix)


@dataclass(frozen=True)
class MollifierCheck:
    nonnegative: bool
    normalization_error: float
    finite_moment: bool

    @property
    def passed(self) -> bool:
        return (
            self.nonnegative
            and self.finite_moment
            and self.normalization_error <= NORMALIZATION_TOL
        )


@dataclass(frozen=True)
class ValidationReport:
    rank: int
    full_rank: bool
    left_inverse: np.ndarray | None
    left_inverse_error: float | None
    mollifier_checks: tuple[MollifierCheck, ...]
    passed: bool


def _radial_integral(spec: TabulatedMollifier) -> float:
    """Exact integral of the piecewise-linear profile over the plane."""
    radii = spec.radii
    values = spec.values
    if radii[0] > 0:
        radii = np.concatenate(([0.0], radii))
        values = np.concatenate(([values[0]], values))
    total = 0.0
    for r0, r1, v0, v1 in zip(radii[:-1], radii[1:], values[:-1], values[1:]):
        h = r1 - r0
        b = (v1 - v0) / h
        # integral of r * (v0 + b (r - r0)) over [r0, r1]
        total += v0 * (r1**2 - r0**2) / 2 + b * (
            (r1**3 - r0**3) / 3 - r0 * (r1**2 - r0**2) / 2
        )
    return 2.0 * math.pi * total


def _check_mollifier(spec: MollifierSpec) -> MollifierCheck:
    if isinstance(spec, GaussianMollifier):
        # Analytically normalized, positive, with all moments finite.
        return MollifierCheck(True, 0.0, True)
    nonnegative = bool(np.all(spec.values >= 0))
    normalization_error = abs(_radial_integral(spec) - 1.0)
    scale = max(float(np.max(np.abs(spec.values))), 1e-300)
    finite_moment = bool(abs(spec.values[-1]) <= 1e-12 * scale)
    return MollifierCheck(nonnegative, normalization_error, finite_moment)


def validate_model(model: InteractionModel) -> ValidationReport:
    """Check the full-rank and mollifier hypotheses; report, never raise.

    Violations are reported rather than thrown so that deliberately
    rank-deficient experiments can still run.
    """
    a = model.matrix
    svals = np.linalg.svd(a, compute_uv=False)
    cutoff = RANK_RTOL * (svals[0] if svals.size else 0.0)
    rank = int(np.sum(svals > cutoff))
    full_rank = rank == model.species and a.shape[0] >= model.species
    left_inverse = None
    left_inverse_error = None
    if full_rank:
        left_inverse = np.linalg.pinv(a)
        residual = left_inverse @ a - np.eye(model.species)
        left_inverse_error = float(np.max(np.abs(residual)))
    checks = tuple(_check_mollifier(m) for m in model.mollifiers)
    passed = full_rank and all(c.passed for c in checks)
    return ValidationReport(
        rank=rank,
        full_rank=full_rank,
        left_inverse=left_inverse,
        left_inverse_error=left_inverse_error,
        mollifier_checks=checks,
        passed=passed,
    )


def pair_kernel_radius(model: InteractionModel, i: int, j: int) -> float:
    """Truncation radius of the sampled kernel K[i][j]."""
    mi = model.mollifiers[i]
    mj = model.mollifiers[j]
    if isinstance(mi, GaussianMollifier) and isinstance(mj, GaussianMollifier):
        return TRUNCATION_SIGMAS * model.epsilon * math.sqrt(mi.variance + mj.variance)
    # Support of a convolution is the sum of the supports.
    return mollifier_radius(mi, model.epsilon) + mollifier_radius(mj, model.epsilon)


def max_kernel_radius(model: InteractionModel) -> float:
    n = model.species
    return max(pair_kernel_radius(model, i, j) for i in range(n) for j in range(n))


def kernel_closed_form(model: InteractionModel, i: int, j: int, dx: float) -> KernelSamples:
    """Grid samples of the Gaussian pair kernel K[i][j] at kernel range eps.

    The pair of Gaussian mollifiers with variances v_i, v_j convolves to a
    Gaussian of variance v_i + v_j, so the scaled kernel is
    G[i,j] / (2 pi eps^2 (v_i + v_j)) * exp(-|x|^2 / (2 eps^2 (v_i + v_j))).
    """
    mi = model.mollifiers[i]
    mj = model.mollifiers[j]
    if not (isinstance(mi, GaussianMollifier) and isinstance(mj, GaussianMollifier)):
        raise TypeError(
            "closed-form kernels need Gaussian mollifiers; sample tabulated "
            "profiles through kernel_discrete instead"
        )
    if dx <= 0:
        raise ValueError("dx must be positive")
    gamma = float(model.gamma[i, j])
    variance = model.epsilon**2 * (mi.variance + mj.variance)
    radius = TRUNCATION_SIGMAS * math.sqrt(variance)
    cells = max(1, math.ceil(radius / dx))
    values = _sample_radial(
        lambda r: gamma * np.exp(-(r**2) / (2 * variance)) / (2 * math.pi * variance),
        cells,
        dx,
    )
    return KernelSamples(values, dx)


def kernel_discrete(model: InteractionModel, i: int, j: int, dx: float) -> KernelSamples:
    """Pair kernel sampled by discrete convolution of the mollifier samples.

    Works for any mollifier kind and agrees with :func:`kernel_closed_form`
    up to sampling and truncation error in the Gaussian case.
    """
    if dx <= 0:
        raise ValueError("dx must be positive")
    gamma = float(model.gamma[i, j])
    ri = mollifier_samples(model.mollifiers[i], model.epsilon, dx).flipped()
    rj = mollifier_samples(model.mollifiers[j], model.epsilon, dx)
    values = signal.fftconvolve(ri.values, rj.values, mode="full") * dx**2 * gamma
    return KernelSamples(values, dx)
