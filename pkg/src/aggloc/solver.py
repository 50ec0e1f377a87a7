"""Time integration of the N-species drift system with an upwind flux scheme.

Both model variants reduce to coupled transport equations

    d/dt u_i = div(u_i grad(xi_i)),

where the potential xi_i is either a kernel convolution (nonlocal variant) or
a pointwise matrix combination of the densities (local variant).  The scheme
is conservative and keeps cell values nonnegative for CFL numbers up to 0.5;
fluxes across the outer boundary are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .grid import Field, Grid2D, KernelSamples, convolve_matrix, gradient_at_edges
from .kernels import (
    GaussianMollifier,
    InteractionModel,
    kernel_closed_form,
    kernel_discrete,
    mollifier_samples,
)

__all__ = [
    "SpeciesState",
    "NonlocalPotential",
    "LocalPotential",
    "PotentialStrategy",
    "SchemeParams",
    "SolverError",
    "BlowUpError",
    "TimeStepUnderflowError",
    "compute_potentials",
    "advance_step",
    "run_to_time",
]

# Loud-failure thresholds: attractive kernels can concentrate mass, so stop
# as soon as velocities or densities leave any physically plausible range.
BLOWUP_LIMIT = 1e12
DT_MIN = 1e-12


class SolverError(RuntimeError):
    """Raised when a step cannot be completed; carries the failure time."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time:.6g})")
        self.time = time


class BlowUpError(SolverError):
    pass


class TimeStepUnderflowError(SolverError):
    pass


@dataclass
class SpeciesState:
    """Densities of all species on one shared grid at one time."""

    time: float
    fields: list[Field]

    def __post_init__(self) -> None:
        if not self.fields:
            raise ValueError("state needs at least one species")
        grid = self.fields[0].grid
        if any(f.grid != grid for f in self.fields):
            raise ValueError("all species must share one grid")

    @property
    def grid(self) -> Grid2D:
        return self.fields[0].grid

    @property
    def n_species(self) -> int:
        return len(self.fields)

    def copy(self) -> "SpeciesState":
        return SpeciesState(self.time, [f.copy() for f in self.fields])

    def min_value(self) -> float:
        return min(float(f.values.min()) for f in self.fields)

    def masses(self) -> np.ndarray:
        dx2 = self.grid.dx**2
        return np.array([dx2 * f.values.sum() for f in self.fields])


@dataclass
class NonlocalPotential:
    """Drift potentials xi_i = sum_j K[i][j] * u_j from an interaction model."""

    model: InteractionModel
    _kernels: dict = field(default_factory=dict, repr=False)
    _mollifiers: dict = field(default_factory=dict, repr=False)
    _stiffness: dict = field(default_factory=dict, repr=False)

    @property
    def n_species(self) -> int:
        return self.model.species

    def stiffness_rows(self, dx: float) -> np.ndarray:
        """Per-species bound on the diffusive response sum_j |g_ij| s_ij(k).

        The self-generated drift acts like nonlinear diffusion whose grid-mode
        growth rate is capped by min(8/dx^2, 2/(e s^2)) per pair: the discrete
        Laplacian symbol, damped by the Gaussian kernel's Fourier decay with
        squared width s^2.  Pairs without a Gaussian closed form fall back to
        the undamped grid bound.
        """
        rows = self._stiffness.get(dx)
        if rows is None:
            n = self.model.species
            gamma = self.model.gamma
            grid_bound = 8.0 / dx**2
            rows = np.zeros(n)
            for i in range(n):
                total = 0.0
                for j in range(n):
                    mi, mj = self.model.mollifiers[i], self.model.mollifiers[j]
                    bound = grid_bound
                    if isinstance(mi, GaussianMollifier) and isinstance(mj, GaussianMollifier):
                        s2 = self.model.epsilon**2 * (mi.variance + mj.variance)
                        bound = min(grid_bound, 2.0 / (math.e * s2))
                    total += abs(gamma[i, j]) * bound
                rows[i] = total
            self._stiffness[dx] = rows
        return rows

    def kernel_table(self, grid: Grid2D) -> list[list[KernelSamples | None]]:
        """Pair-kernel samples for a grid, built once and cached per grid."""
        table = self._kernels.get(grid)
        if table is None:
            n = self.model.species
            gamma = self.model.gamma
            all_gaussian = all(
                isinstance(m, GaussianMollifier) for m in self.model.mollifiers
            )
            table = []
            for i in range(n):
                row: list[KernelSamples | None] = []
                for j in range(n):
                    if gamma[i, j] == 0.0:
                        row.append(None)
                    elif all_gaussian:
                        row.append(kernel_closed_form(self.model, i, j, grid.dx))
                    else:
                        row.append(kernel_discrete(self.model, i, j, grid.dx))
                table.append(row)
            self._kernels[grid] = table
        return table

    def mollifier_table(self, grid: Grid2D) -> list[KernelSamples]:
        table = self._mollifiers.get(grid)
        if table is None:
            table = [
                mollifier_samples(m, self.model.epsilon, grid.dx)
                for m in self.model.mollifiers
            ]
            self._mollifiers[grid] = table
        return table


@dataclass
class LocalPotential:
    """Localisation-limit potentials xi_i = sum_j gamma[i, j] * u_j."""

    gamma: np.ndarray

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 2 or self.gamma.shape[0] != self.gamma.shape[1]:
            raise ValueError("gamma must be a square matrix")
        if not np.all(np.isfinite(self.gamma)):
            raise ValueError("gamma entries must be finite")

    @property
    def n_species(self) -> int:
        return self.gamma.shape[0]


PotentialStrategy = Union[NonlocalPotential, LocalPotential]


def _diffusive_rate(state: SpeciesState, strategy: PotentialStrategy) -> float:
    """Largest linearized diffusion rate of the current state.

    The drift of species i through the density of species j transports at
    most like diffusion with coefficient u_i |gamma_ij|, so an explicit step
    must also respect dt <= 2 / rate with rate = max_i u_i * rows_i where
    ``rows`` caps the mode response of row i (kernel-damped in the nonlocal
    variant, the raw 5-point Laplacian bound 8/dx^2 in the local one).
    """
    dx = state.grid.dx
    if isinstance(strategy, LocalPotential):
        rows = np.abs(strategy.gamma).sum(axis=1) * (8.0 / dx**2)
    else:
        rows = strategy.stiffness_rows(dx)
    peaks = np.array([float(f.values.max()) for f in state.fields])
    return float(np.max(np.maximum(peaks, 0.0) * rows))


@dataclass(frozen=True)
class SchemeParams:
    """Time-step and reconstruction controls for the flux scheme.

    Cell positivity is guaranteed for cfl <= 0.5 (with or without the minmod
    reconstruction); larger values are accepted but may trip the positivity
    check at runtime.
    """

    cfl: float = 0.45
    max_dt: float = 0.1
    limiter: str = "minmod"

    def __post_init__(self) -> None:
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.max_dt > 0:
            raise ValueError(f"max_dt must be positive, got {self.max_dt}")
        if self.limiter not in ("none", "minmod"):
            raise ValueError(f"limiter must be 'none' or 'minmod', got {self.limiter!r}")


def compute_potentials(state: SpeciesState, strategy: PotentialStrategy) -> list[Field]:
    """Drift potentials xi_i for every species under the given model variant."""
    if strategy.n_species != state.n_species:
        raise ValueError(
            f"strategy couples {strategy.n_species} species, state has {state.n_species}"
        )
    if isinstance(strategy, LocalPotential):
        stack = np.stack([f.values for f in state.fields])
        mixed = np.einsum("ij,jyx->iyx", strategy.gamma, stack)
        return [Field(state.grid, mixed[i]) for i in range(state.n_species)]
    kernels = strategy.kernel_table(state.grid)
    return convolve_matrix(state.fields, kernels)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def _limited_slopes(u: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Minmod slopes per cell in x and y; boundary cells get zero slope."""
    sx = np.zeros_like(u)
    sy = np.zeros_like(u)
    sx[:, 1:-1] = _minmod((u[:, 1:-1] - u[:, :-2]) / dx, (u[:, 2:] - u[:, 1:-1]) / dx)
    sy[1:-1, :] = _minmod((u[1:-1, :] - u[:-2, :]) / dx, (u[2:, :] - u[1:-1, :]) / dx)
    return sx, sy


def _flux_divergence(
    u: np.ndarray, vx: np.ndarray, vy: np.ndarray, dx: float, limiter: str
) -> np.ndarray:
    """Upwind flux divergence, (F_E - F_W + F_N - F_S) / dx per cell.

    Edge densities are donor-cell values, optionally corrected by a
    minmod-limited linear reconstruction.  Boundary faces carry zero flux.
    """
    n = u.shape[0]
    if limiter == "minmod":
        sx, sy = _limited_slopes(u, dx)
        ul_x = u[:, :-1] + 0.5 * dx * sx[:, :-1]
        ur_x = u[:, 1:] - 0.5 * dx * sx[:, 1:]
        ul_y = u[:-1, :] + 0.5 * dx * sy[:-1, :]
        ur_y = u[1:, :] - 0.5 * dx * sy[1:, :]
    else:
        ul_x = u[:, :-1]
        ur_x = u[:, 1:]
        ul_y = u[:-1, :]
        ur_y = u[1:, :]
    fx = np.zeros((n, n + 1))
    fy = np.zeros((n + 1, n))
    vxi = vx[:, 1:n]
    vyi = vy[1:n, :]
    fx[:, 1:n] = np.maximum(vxi, 0.0) * ul_x + np.minimum(vxi, 0.0) * ur_x
    fy[1:n, :] = np.maximum(vyi, 0.0) * ul_y + np.minimum(vyi, 0.0) * ur_y
    return (fx[:, 1:] - fx[:, :-1] + fy[1:, :] - fy[:-1, :]) / dx


def advance_step(
    state: SpeciesState,
    strategy: PotentialStrategy,
    params: SchemeParams,
    t_cap: float | None = None,
) -> tuple[SpeciesState, float]:
    """Advance all species by one shared CFL-limited time step.

    Returns the new state and the dt actually used.  The step never exceeds
    ``t_cap``; when it is clipped the new time is set to ``t_cap`` exactly.
    """
    grid = state.grid
    dx = grid.dx
    for f in state.fields:
        if float(f.values.max()) > BLOWUP_LIMIT:
            raise BlowUpError("density exceeded the blow-up limit", state.time)

    potentials = compute_potentials(state, strategy)
    velocities = []
    vmax = 0.0
    for xi in potentials:
        g = gradient_at_edges(xi)
        vx, vy = -g.x, -g.y
        velocities.append((vx, vy))
        vmax = max(vmax, float(np.abs(vx).max()), float(np.abs(vy).max()))
    if not np.isfinite(vmax) or vmax > BLOWUP_LIMIT:
        raise BlowUpError("non-finite or exploding drift velocity", state.time)

    dt = params.max_dt if vmax == 0.0 else min(params.max_dt, params.cfl * dx / (2.0 * vmax))
    rate = _diffusive_rate(state, strategy)
    if rate > 0.0:
        dt = min(dt, 2.0 * params.cfl / rate)
    if dt < DT_MIN:
        raise TimeStepUnderflowError(f"time step collapsed to {dt:.3g}", state.time)
    clipped = False
    if t_cap is not None:
        remaining = t_cap - state.time
        if remaining <= 0:
            raise ValueError(f"t_cap={t_cap} is not ahead of state.time={state.time}")
        if dt >= remaining:
            dt = remaining
            clipped = True

    new_fields = []
    for f, (vx, vy) in zip(state.fields, velocities):
        updated = f.values - dt * _flux_divergence(f.values, vx, vy, dx, params.limiter)
        if float(updated.min()) < 0.0:
            raise SolverError(
                "positivity lost; reduce cfl (guaranteed only for cfl <= 0.5)",
                state.time,
            )
        new_fields.append(Field(grid, updated))
    new_time = t_cap if clipped else state.time + dt
    return SpeciesState(new_time, new_fields), dt


def run_to_time(
    state: SpeciesState,
    strategy: PotentialStrategy,
    params: SchemeParams,
    t_end: float,
    output_times: Sequence[float] = (),
    observers: Sequence[Callable[[SpeciesState], None]] = (),
) -> SpeciesState:
    """Step the state to ``t_end`` exactly, pausing at each output time.

    Observers receive a private snapshot of the state at every output time
    (and never in between).  Output times outside (state.time, t_end] are
    ignored; the final step to each target is clipped so targets are hit
    exactly.
    """
    if t_end < state.time:
        raise ValueError(f"t_end={t_end} lies before state.time={state.time}")
    if state.min_value() < 0:
        raise ValueError("initial state has negative densities")

    requested = set(output_times)
    targets: list[float] = []
    for t in sorted(requested) + [t_end]:
        if state.time < t <= t_end and (not targets or t - targets[-1] > 1e-12):
            targets.append(t)

    is_output = {t: t in requested for t in targets}
    for target in targets:
        while state.time != target:
            state, _ = advance_step(state, strategy, params, t_cap=target)
        if is_output[target]:
            for observer in observers:
                observer(state.copy())
    return state
