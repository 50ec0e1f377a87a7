"""Monitored quantities: mass, moments, entropy, interaction energy, profiles.

All computations are read-only over solver states and may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Field, convolve, integrate, second_moment
from .solver import LocalPotential, PotentialStrategy, SpeciesState

__all__ = [
    "DiagnosticsRecord",
    "RadialProfile",
    "record",
    "quadratic_energy",
    "entropy",
    "radial_profile",
    "l2_distance",
    "mass_radius",
    "write_diagnostics_csv",
    "write_radial_csv",
]

# Cells below this density are treated as empty in the entropy sum,
# matching the continuous extension 0 * ln 0 = 0.
ENTROPY_FLOOR = 1e-300


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-species invariants plus the global quadratic interaction energy."""

    time: float
    mass: np.ndarray
    second_moment: np.ndarray
    entropy: np.ndarray
    min_value: np.ndarray
    energy: float


def entropy(f: Field) -> float:
    """Signed entropy integral of u * ln(u) with the 0 ln 0 = 0 convention."""
    u = f.values
    positive = u > ENTROPY_FLOOR
    if not positive.any():
        return 0.0
    up = u[positive]
    return float(f.grid.dx**2 * np.sum(up * np.log(up)))


def quadratic_energy(state: SpeciesState, strategy: PotentialStrategy) -> float:
    """Total interaction energy sum_ij int u_i (K[i][j] * u_j).

    Under the nonlocal variant this is evaluated through the decomposition as
    sum_k int (sum_i A[k,i] (rho_i * u_i))^2, a sum of squares that cannot go
    negative.  Under the local variant it reduces to the pointwise quadratic
    form sum_ij gamma[i,j] int u_i u_j.
    """
    dx2 = state.grid.dx**2
    stack = np.stack([f.values for f in state.fields])
    if isinstance(strategy, LocalPotential):
        return float(dx2 * np.einsum("iyx,ij,jyx->", stack, strategy.gamma, stack))
    mollifiers = strategy.mollifier_table(state.grid)
    smoothed = np.stack(
        [convolve(f, k).values for f, k in zip(state.fields, mollifiers)]
    )
    combos = np.einsum("ki,iyx->kyx", strategy.model.matrix, smoothed)
    return float(dx2 * np.sum(combos**2))


def record(state: SpeciesState, strategy: PotentialStrategy) -> DiagnosticsRecord:
    """Snapshot of all monitored quantities at the state's current time."""
    return DiagnosticsRecord(
        time=state.time,
        mass=np.array([integrate(f) for f in state.fields]),
        second_moment=np.array([second_moment(f) for f in state.fields]),
        entropy=np.array([entropy(f) for f in state.fields]),
        min_value=np.array([float(f.values.min()) for f in state.fields]),
        energy=quadratic_energy(state, strategy),
    )


@dataclass(frozen=True)
class RadialProfile:
    """Mass per unit radius in annuli around the origin.

    ``edges`` has M+1 entries; ``values[i, m]`` is the mass of species i whose
    cell centers fall in [edges[m], edges[m+1]), divided by the bin width.
    """

    edges: np.ndarray
    values: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def d_lambda(self) -> float:
        return float(self.edges[1] - self.edges[0])


def radial_profile(
    state: SpeciesState, d_lambda: float, lambda_max: float
) -> RadialProfile:
    """Bin every cell's mass by the radius of its center."""
    if d_lambda <= 0:
        raise ValueError(f"d_lambda must be positive, got {d_lambda}")
    if lambda_max <= 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    n_bins = int(math.ceil(lambda_max / d_lambda - 1e-12))
    edges = np.arange(n_bins + 1) * d_lambda
    radii = state.grid.radius_mesh().ravel()
    inside = radii < edges[-1]
    idx = np.floor(radii[inside] / d_lambda).astype(int)
    dx2 = state.grid.dx**2
    values = np.empty((state.n_species, n_bins))
    for i, f in enumerate(state.fields):
        masses = np.bincount(idx, weights=f.values.ravel()[inside] * dx2, minlength=n_bins)
        values[i] = masses / d_lambda
    return RadialProfile(edges, values)


def l2_distance(a: SpeciesState, b: SpeciesState) -> np.ndarray:
    """Per-species discrete L2 distance sqrt(dx^2 sum (a - b)^2)."""
    if a.grid != b.grid:
        raise ValueError("states live on different grids")
    if a.n_species != b.n_species:
        raise ValueError("states have different species counts")
    if abs(a.time - b.time) > 1e-12:
        raise ValueError(f"states are at different times: {a.time} vs {b.time}")
    dx2 = a.grid.dx**2
    return np.array(
        [
            math.sqrt(dx2 * float(np.sum((fa.values - fb.values) ** 2)))
            for fa, fb in zip(a.fields, b.fields)
        ]
    )


def mass_radius(f: Field, fraction: float) -> float:
    """Radius of the origin-centered disk holding the given mass fraction.

    Cells are ordered by center radius and the cumulative mass is inverted by
    linear interpolation, so the result varies smoothly under refinement.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    radii = f.grid.radius_mesh().ravel()
    order = np.argsort(radii)
    radii = radii[order]
    masses = f.values.ravel()[order] * f.grid.dx**2
    cum = np.cumsum(masses)
    total = cum[-1]
    if total <= 0:
        raise ValueError("field carries no mass")
    target = fraction * total
    k = int(np.searchsorted(cum, target))
    if k == 0:
        return float(radii[0])
    c0, c1 = cum[k - 1], cum[k]
    r0, r1 = radii[k - 1], radii[k]
    if c1 == c0:
        return float(r1)
    return float(r0 + (target - c0) / (c1 - c0) * (r1 - r0))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_diagnostics_csv(records: Sequence[DiagnosticsRecord], path) -> None:
    """One row per (time, species); the global energy is repeated per row."""
    with open(str(path), "w") as fh:
        fh.write("time,species,mass,second_moment,entropy,min_value,energy\n")
        for rec in records:
            for i in range(len(rec.mass)):
                fh.write(
                    ",".join(
                        [
                            _fmt(rec.time),
                            str(i + 1),
                            _fmt(rec.mass[i]),
                            _fmt(rec.second_moment[i]),
                            _fmt(rec.entropy[i]),
                            _fmt(rec.min_value[i]),
                            _fmt(rec.energy),
                        ]
                    )
                    + "\n"
                )


def write_radial_csv(profile: RadialProfile, path) -> None:
    """Columns: bin-center radius, then one mass-density column per species."""
    n_species = profile.values.shape[0]
    header = "lambda," + ",".join(f"species_{i + 1}" for i in range(n_species))
    with open(str(path), "w") as fh:
        fh.write(header + "\n")
        for m, center in enumerate(profile.centers):
            row = [_fmt(center)] + [_fmt(profile.values[i, m]) for i in range(n_species)]
            fh.write(",".join(row) + "\n")
