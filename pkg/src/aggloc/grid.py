"""Uniform cell-centered 2D grids, fields, quadrature, stencils and FFT convolution.

Conventions: fields are ``(n, n)`` arrays indexed ``values[j, i]`` with ``j``
the y (row) index and ``i`` the x (column) index.  Cell centers sit at
``x_min + (i + 0.5) * dx``.  Kernels are sampled on odd-sized arrays centered
at the origin so that discrete convolution approximates the continuous one
after scaling by the cell area ``dx**2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

__all__ = [
    "Grid2D",
    "Field",
    "KernelSamples",
    "EdgeVectorField",
    "integrate",
    "second_moment",
    "convolve",
    "convolve_matrix",
    "gradient_at_edges",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid2D:
    """Square, uniformly spaced, cell-centered grid over [x_min, x_max]^2."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 4:
            raise ValueError(f"grid needs n >= 4 cells per axis, got n={self.n}")
        wx = self.x_max - self.x_min
        wy = self.y_max - self.y_min
        if wx <= 0 or wy <= 0:
            raise ValueError("grid bounds must satisfy x_min < x_max and y_min < y_max")
        if abs(wx - wy) > 1e-12 * max(wx, wy):
            raise ValueError(f"domain must be square, got extents {wx} x {wy}")

    @classmethod
    def centered(cls, half_width: float, n: int) -> "Grid2D":
        return cls(-half_width, half_width, -half_width, half_width, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def half_width(self) -> float:
        return 0.5 * (self.x_max - self.x_min)

    def x_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.n) + 0.5) * self.dx

    def center_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (X, Y) arrays of cell-center coordinates, shape (n, n)."""
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="xy")

    def radius_mesh(self) -> np.ndarray:
        """Distance of every cell center from the origin."""
        x, y = self.center_mesh()
        return np.hypot(x, y)


@dataclass
class Field:
    """Cell-averaged scalar values on a :class:`Grid2D`."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"field shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field":
        return cls(grid, np.zeros((grid.n, grid.n)))

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "Field":
        """Sample ``fn(x, y)`` (vectorized) at cell centers."""
        x, y = grid.center_mesh()
        return cls(grid, np.asarray(fn(x, y), dtype=float))


@dataclass(eq=False)
class KernelSamples:
    """Kernel values sampled at grid offsets, centered at the origin.

    ``values[r + b, r + a]`` holds K(a*dx, b*dx) for offsets a, b in [-r, r].
    Both axes must be odd so the center is a sample point.
    """

    values: np.ndarray
    dx: float
    _spectra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("kernel samples must be a 2D array")
        if self.values.shape[0] % 2 == 0 or self.values.shape[1] % 2 == 0:
            raise ValueError(
                f"kernel dimensions must be odd, got {self.values.shape}"
            )
        if self.dx <= 0:
            raise ValueError("kernel dx must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("kernel samples must be finite")

    @property
    def radius(self) -> int:
        """Half-width of the sample array in cells."""
        return self.values.shape[0] // 2

    @property
    def mass(self) -> float:
        """Discrete integral dx^2 * sum of samples."""
        return float(self.dx**2 * self.values.sum())

    def flipped(self) -> "KernelSamples":
        """Samples of x -> K(-x)."""
        return KernelSamples(self.values[::-1, ::-1].copy(), self.dx)

    def spectrum(self, padded_shape: tuple[int, int]) -> np.ndarray:
        """rfft2 of the kernel embedded (wrapped around index 0) in a padded array."""
        key = padded_shape
        spec = self._spectra.get(key)
        if spec is None:
            ry = self.values.shape[0] // 2
            rx = self.values.shape[1] // 2
            z = np.zeros(padded_shape)
            iy = np.arange(-ry, ry + 1) % padded_shape[0]
            ix = np.arange(-rx, rx + 1) % padded_shape[1]
            z[np.ix_(iy, ix)] = self.values
            spec = sp_fft.rfft2(z)
            self._spectra[key] = spec
        return spec


@dataclass
class EdgeVectorField:
    """Edge-normal components on the faces of a cell grid.

    ``x`` has shape (n, n+1): component across vertical faces, x[j, e] sits
    between cells (j, e-1) and (j, e).  ``y`` has shape (n+1, n) likewise for
    horizontal faces.  Boundary faces carry index e=0 and e=n.
    """

    x: np.ndarray
    y: np.ndarray

    def max_abs(self) -> float:
        return max(float(np.abs(self.x).max()), float(np.abs(self.y).max()))


def integrate(f: Field) -> float:
    """Midpoint quadrature: dx^2 times the sum over cells."""
    return float(f.grid.dx**2 * f.values.sum())


def second_moment(f: Field) -> float:
    """dx^2 * sum of |x_cell|^2 * f_cell, measured from the origin."""
    r = f.grid.radius_mesh()
    return float(f.grid.dx**2 * np.sum(r**2 * f.values))


def _check_kernel_fits(grid: Grid2D, k: KernelSamples) -> None:
    if abs(k.dx - grid.dx) > 1e-12 * grid.dx:
        raise ValueError(f"kernel dx={k.dx} does not match grid dx={grid.dx}")
    if k.radius > grid.n:
        raise ValueError(
            f"kernel radius {k.radius} cells exceeds the padded domain (n={grid.n})"
        )


def _padded_shape(n: int, radius: int) -> tuple[int, int]:
    p = sp_fft.next_fast_len(n + radius, real=True)
    return (p, p)


def convolve(f: Field, k: KernelSamples) -> Field:
    """Linear (zero-padded, non-circular) convolution of a field with a kernel.

    Returns dx^2 * sum_m K(x_c - x_m) f(x_m), evaluated at every cell center,
    i.e. the midpoint-quadrature approximation of (K * f)(x_c).
    """
    grid = f.grid
    _check_kernel_fits(grid, k)
    shape = _padded_shape(grid.n, k.radius)
    padded = np.zeros(shape)
    padded[: grid.n, : grid.n] = f.values
    out = sp_fft.irfft2(sp_fft.rfft2(padded) * k.spectrum(shape), s=shape)
    return Field(grid, out[: grid.n, : grid.n] * grid.dx**2)


def convolve_matrix(
    fields: list[Field], kernels: list[list[KernelSamples | None]]
) -> list[Field]:
    """Compute out[i] = sum_j convolve(fields[j], kernels[i][j]).

    Shares one forward FFT per field and one inverse FFT per output row, which
    is what makes many-species stepping affordable.  ``None`` entries are
    treated as zero kernels.
    """
    if not fields:
        return []
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("all fields must share one grid")
    radius = 0
    for row in kernels:
        for k in row:
            if k is not None:
                _check_kernel_fits(grid, k)
                radius = max(radius, k.radius)
    shape = _padded_shape(grid.n, radius)
    spectra = []
    for f in fields:
        padded = np.zeros(shape)
        padded[: grid.n, : grid.n] = f.values
        spectra.append(sp_fft.rfft2(padded))
    outputs = []
    for row in kernels:
        acc = None
        for fj, k in zip(spectra, row):
            if k is None:
                continue
            term = fj * k.spectrum(shape)
            acc = term if acc is None else acc + term
        if acc is None:
            outputs.append(Field.zeros(grid))
            continue
        out = sp_fft.irfft2(acc, s=shape)
        outputs.append(Field(grid, out[: grid.n, : grid.n] * grid.dx**2))
    return outputs


def gradient_at_edges(phi: Field) -> EdgeVectorField:
    """Difference of adjacent cell values across each interior face, over dx.

    Boundary faces carry zero, which is the no-flux closure used by the
    transport scheme.
    """
    n = phi.grid.n
    dx = phi.grid.dx
    v = phi.values
    gx = np.zeros((n, n + 1))
    gy = np.zeros((n + 1, n))
    gx[:, 1:n] = (v[:, 1:] - v[:, :-1]) / dx
    gy[1:n, :] = (v[1:, :] - v[:-1, :]) / dx
    return EdgeVectorField(gx, gy)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_field(f: Field, csv_path, *, time: float, species: int) -> None:
    """Write a snapshot as CSV (one line per grid row) plus a JSON sidecar.

    Values are printed with 17 significant digits so the round trip through
    :func:`load_field` is bit exact.
    """
    csv_path = str(csv_path)
    with open(csv_path, "w") as fh:
        for row in f.values:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")
    meta = {
        "x_min": f.grid.x_min,
        "x_max": f.grid.x_max,
        "y_min": f.grid.y_min,
        "y_max": f.grid.y_max,
        "n": f.grid.n,
        "time": float(time),
        "species": int(species),
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def _sidecar_path(csv_path: str) -> str:
    return csv_path[:-4] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"


def load_field(csv_path) -> tuple[Field, dict]:
    """Read a snapshot written by :func:`save_field`; returns (field, metadata)."""
    csv_path = str(csv_path)
    with open(_sidecar_path(csv_path)) as fh:
        meta = json.load(fh)
    grid = Grid2D(meta["x_min"], meta["x_max"], meta["y_min"], meta["y_max"], meta["n"])
    values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    return Field(grid, values), meta
