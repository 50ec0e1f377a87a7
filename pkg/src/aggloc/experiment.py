"""Experiment configuration, the three benchmark cases, runs and sweeps.

A configuration describes one family of runs: the grid, the interaction model
(preset case or explicit matrix), the kernel ranges to scan, the initial ball
and the scheme parameters.  ``run_case`` executes a single kernel range (or
the localisation limit) and writes CSV artifacts; ``epsilon_sweep`` quantifies
the distance to the limit model across a descending list of ranges.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import diagnostics as diag
from .grid import Field, Grid2D, KernelSamples, convolve, save_field
from .kernels import (
    GaussianMollifier,
    InteractionModel,
    ValidationReport,
    gamma_matrix,
    max_kernel_radius,
    validate_model,
)
from .solver import (
    LocalPotential,
    NonlocalPotential,
    PotentialStrategy,
    SchemeParams,
    SpeciesState,
    run_to_time,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CASE_IDS",
    "case_matrix",
    "case_variances",
    "build_model",
    "build_strategy",
    "make_grid",
    "initial_condition",
    "RunResult",
    "run_case",
    "SweepResult",
    "epsilon_sweep",
    "config_to_toml",
    "config_from_toml",
    "load_config",
]

CASE_IDS = (1, 2, 3)

# Inflating factor from smoothing width to the smoothing kernel's support.
_SMOOTHING_SIGMAS = 6.0


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


def case_matrix(case: int) -> list[list[float]]:
    """Coefficient matrix of the benchmark cases.

    Cases 1 and 2 share the 4x4 upper-triangular all-ones matrix, whose
    Gram matrix is G[i, j] = min(i+1, j+1).  Case 3 uses the single row
    (1, 1, 1, 1), a rank-one choice with an all-ones Gram matrix that
    deliberately violates the full-rank hypothesis.
    """
    if case in (1, 2):
        return [[1.0 if j >= i else 0.0 for j in range(4)] for i in range(4)]
    if case == 3:
        return [[1.0, 1.0, 1.0, 1.0]]
    raise ConfigError("case", f"must be one of {CASE_IDS}, got {case}")

def case_variances(case: int) -> list[float]:
    """Mollifier variances of the benchmark cases."""
    if case == 1:
        return [0.1, 0.1, 0.1, 0.1]
    if case in (2, 3):
        return [0.1, 0.2, 0.3, 0.4]
    raise ConfigError("case", f"must be one of {CASE_IDS}, got {case}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a family of runs.

    The default domain is wide enough that every preset case can run the
    default kernel-range list with the 6-sigma kernel truncation and the
    initial ball still inside the required boundary margin.
    """

    half_width: float = 24.0
    n: int = 128
    species: int = 4
    case: int | None = 1
    matrix: tuple[tuple[float, ...], ...] | None = None
    variances: tuple[float, ...] | None = None
    mollifier: str = "gaussian"
    epsilons: tuple[float, ...] = (4.0, 2.0, 1.0, 0.5)
    t_end: float = 10.0
    output_times: tuple[float, ...] | None = None
    cfl: float = 0.45
    max_dt: float = 0.1
    limiter: str = "minmod"
    ball_radius: float = 2.0
    ball_center: tuple[float, float] = (0.0, 0.0)
    smoothing_width: float = 0.0
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        # Normalize sequence fields to tuples so configs hash and compare.
        for name in ("variances", "epsilons", "output_times"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        if self.matrix is not None:
            object.__setattr__(
                self, "matrix", tuple(tuple(float(v) for v in row) for row in self.matrix)
            )
        object.__setattr__(
            self, "ball_center", tuple(float(v) for v in self.ball_center)
        )

    def validate(self) -> None:
        if not self.half_width > 0:
            raise ConfigError("half_width", f"must be positive, got {self.half_width}")
        if self.n < 4:
            raise ConfigError("n", f"needs at least 4 cells per axis, got {self.n}")
        if self.species < 1:
            raise ConfigError("species", f"must be at least 1, got {self.species}")
        if self.case is None and self.matrix is None:
            raise ConfigError("case", "either a case preset or an explicit matrix is required")
        if self.case is not None and self.case not in CASE_IDS:
            raise ConfigError("case", f"must be one of {CASE_IDS}, got {self.case}")
        if self.matrix is not None:
            widths = {len(row) for row in self.matrix}
            if len(widths) != 1:
                raise ConfigError("matrix", "rows must all have the same length")
            if widths.pop() != self.species:
                raise ConfigError("matrix", f"needs {self.species} columns (one per species)")
        if self.variances is not None:
            if len(self.variances) != self.species:
                raise ConfigError("variances", f"needs {self.species} entries")
            if any(v <= 0 for v in self.variances):
                raise ConfigError("variances", "entries must be positive")
        if self.case is None and self.variances is None:
            raise ConfigError("variances", "required when no case preset is selected")
        if self.mollifier != "gaussian":
            raise ConfigError(
                "mollifier",
                f"config files support only 'gaussian', got {self.mollifier!r} "
                "(tabulated profiles are available through the library API)",
            )
        if not self.epsilons:
            raise ConfigError("epsilons", "must not be empty")
        if any(not e > 0 for e in self.epsilons):
            raise ConfigError("epsilons", "entries must be positive")
        if self.t_end < 0:
            raise ConfigError("t_end", f"must be nonnegative, got {self.t_end}")
        if self.output_times is not None and any(t < 0 for t in self.output_times):
            raise ConfigError("output_times", "entries must be nonnegative")
        if not (0 < self.cfl <= 1):
            raise ConfigError("cfl", f"must lie in (0, 1], got {self.cfl}")
        if not self.max_dt > 0:
            raise ConfigError("max_dt", f"must be positive, got {self.max_dt}")
        if self.limiter not in ("none", "minmod"):
            raise ConfigError("limiter", f"must be 'none' or 'minmod', got {self.limiter!r}")
        if not self.ball_radius > 0:
            raise ConfigError("ball_radius", f"must be positive, got {self.ball_radius}")
        if self.smoothing_width < 0:
            raise ConfigError("smoothing_width", "must be nonnegative")

    def resolved_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return np.array(self.matrix, dtype=float)
        return np.array(case_matrix(self.case), dtype=float)

    def resolved_variances(self) -> list[float]:
        if self.variances is not None:
            return list(self.variances)
        return case_variances(self.case)

    def resolved_output_times(self) -> list[float]:
        if self.output_times is not None:
            return sorted(t for t in self.output_times if 0 < t <= self.t_end)
        if self.t_end == 0:
            return []
        return [self.t_end * k / 10 for k in range(1, 11)]


def make_grid(config: ExperimentConfig) -> Grid2D:
    return Grid2D.centered(config.half_width, config.n)


def build_model(config: ExperimentConfig, epsilon: float) -> InteractionModel:
    mollifiers = tuple(GaussianMollifier(v) for v in config.resolved_variances())
    return InteractionModel(config.resolved_matrix(), mollifiers, epsilon)


def build_strategy(config: ExperimentConfig, epsilon: float | str) -> PotentialStrategy:
    """Nonlocal strategy at a numeric kernel range, local at ``"local"``."""
    if epsilon == "local":
        return LocalPotential(gamma_matrix(config.resolved_matrix()))
    return NonlocalPotential(build_model(config, float(epsilon)))


def required_margin(config: ExperimentConfig, epsilon: float | str) -> float:
    """Boundary clearance the initial ball needs for this run."""
    margin = 0.0
    if epsilon != "local":
        margin = max_kernel_radius(build_model(config, float(epsilon)))
    if config.smoothing_width > 0:
        margin += _SMOOTHING_SIGMAS * config.smoothing_width
    return margin


def check_domain_fits(config: ExperimentConfig, epsilon: float | str) -> None:
    """Reject runs whose truncated kernels would poke past the boundary."""
    margin = required_margin(config, epsilon)
    cx, cy = config.ball_center
    clearance = config.half_width - (max(abs(cx), abs(cy)) + config.ball_radius)
    if clearance < margin:
        raise ConfigError(
            "half_width",
            f"initial ball needs clearance >= {margin:.6g} to the boundary at "
            f"epsilon={epsilon}, but only {clearance:.6g} is available; "
            "enlarge the domain",
        )


def initial_condition(config: ExperimentConfig, epsilon: float | str = "local") -> SpeciesState:
    """Uniform ball of unit mass per species, optionally smoothed.

    Every species starts as the cell-center rasterization of
    1/(pi S^2) on the ball of radius S.  A positive smoothing width replaces
    the sharp indicator by its convolution with a Gaussian of that standard
    deviation (useful for entropy monotonicity checks on positive data).
    """
    config.validate()
    check_domain_fits(config, epsilon)
    grid = make_grid(config)
    x, y = grid.center_mesh()
    cx, cy = config.ball_center
    s = config.ball_radius
    inside = (x - cx) ** 2 + (y - cy) ** 2 < s**2
    values = np.where(inside, 1.0 / (math.pi * s**2), 0.0)
    base = Field(grid, values)
    if config.smoothing_width > 0:
        w = config.smoothing_width
        cells = max(1, math.ceil(_SMOOTHING_SIGMAS * w / grid.dx))
        offs = np.arange(-cells, cells + 1) * grid.dx
        xx, yy = np.meshgrid(offs, offs)
        smoother = KernelSamples(
            np.exp(-(xx**2 + yy**2) / (2 * w**2)) / (2 * math.pi * w**2), grid.dx
        )
        base = convolve(base, smoother)
        # smoothing nonnegative data is nonnegative; drop FFT roundoff noise
        base = Field(grid, np.maximum(base.values, 0.0))
    return SpeciesState(0.0, [base.copy() for _ in range(config.species)])


def _eps_label(epsilon: float | str) -> str:
    return "local" if epsilon == "local" else format(float(epsilon), "g")


@dataclass
class RunResult:
    """Artifacts of one run: states, diagnostics and hypothesis report."""

    epsilon: float | str
    config: ExperimentConfig
    validation: ValidationReport
    records: list[diag.DiagnosticsRecord]
    final_state: SpeciesState
    radial: diag.RadialProfile
    run_dir: Path | None


def _write_validation(report: ValidationReport, path: Path) -> None:
    import json

    payload = {
        "rank": report.rank,
        "full_rank": report.full_rank,
        "left_inverse_error": report.left_inverse_error,
        "passed": report.passed,
        "mollifiers": [
            {
                "nonnegative": c.nonnegative,
                "normalization_error": c.normalization_error,
                "finite_moment": c.finite_moment,
                "passed": c.passed,
            }
            for c in report.mollifier_checks
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def run_case(
    config: ExperimentConfig,
    epsilon: float | str,
    out_dir: Path | str | None = None,
    write_outputs: bool = True,
) -> RunResult:
    """Execute one run at the given kernel range (or the local limit).

    The model hypotheses are validated and recorded but never block the run;
    rank-deficient models are exactly the point of the third benchmark case.
    Writes diagnostics CSV, a radial-profile CSV, final snapshots per species
    and the validation report into ``<out_dir>/case<k>_eps_<label>/``.
    """
    config.validate()
    check_domain_fits(config, epsilon)
    validation = validate_model(build_model(config, 1.0))
    strategy = build_strategy(config, epsilon)

    state = initial_condition(config, epsilon)
    records = [diag.record(state, strategy)]
    output_times = config.resolved_output_times()

    def observe(snapshot: SpeciesState) -> None:
        records.append(diag.record(snapshot, strategy))

    params = SchemeParams(cfl=config.cfl, max_dt=config.max_dt, limiter=config.limiter)
    state = run_to_time(
        state, strategy, params, config.t_end, output_times=output_times, observers=[observe]
    )

    grid = state.grid
    radial = diag.radial_profile(state, d_lambda=2 * grid.dx, lambda_max=config.half_width)

    run_dir: Path | None = None
    if write_outputs:
        case_tag = f"case{config.case}" if config.case is not None else "model"
        run_dir = Path(out_dir if out_dir is not None else config.out_dir)
        run_dir = run_dir / f"{case_tag}_eps_{_eps_label(epsilon)}"
        run_dir.mkdir(parents=True, exist_ok=True)
        diag.write_diagnostics_csv(records, run_dir / "diagnostics.csv")
        diag.write_radial_csv(radial, run_dir / "radial.csv")
        _write_validation(validation, run_dir / "validation.json")
        for i, f in enumerate(state.fields):
            save_field(
                f,
                run_dir / f"snapshot_s{i + 1}_t{config.t_end:g}.csv",
                time=state.time,
                species=i + 1,
            )
    return RunResult(epsilon, config, validation, records, state, radial, run_dir)


@dataclass
class SweepResult:
    """Distance-to-limit table over a descending list of kernel ranges."""

    epsilons: tuple[float, ...]
    distances: np.ndarray  # shape (len(epsilons), species)
    strictly_decreasing: list[bool] | None  # per species; None for single-entry sweeps
    local: RunResult
    runs: list[RunResult]
    table_path: Path | None


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def epsilon_sweep(
    config: ExperimentConfig,
    out_dir: Path | str | None = None,
    write_outputs: bool = True,
) -> SweepResult:
    """Run the local limit plus every configured kernel range and compare.

    Produces ``convergence.csv`` (one row per range, one distance column per
    species) and, for sweeps with at least two entries,
    ``convergence_verdicts.csv`` flagging whether each species' distance
    decreases strictly as the range shrinks.  Runs execute independently and
    share only the read-only local baseline, so entries may be dispatched
    concurrently by callers that want to.
    """
    config.validate()
    eps = config.epsilons
    if any(e1 <= e2 for e1, e2 in zip(eps, eps[1:])):
        raise ConfigError("epsilons", f"must be strictly descending, got {eps}")

    base = Path(out_dir if out_dir is not None else config.out_dir)
    try:
        local = run_case(config, "local", base, write_outputs)
    except Exception as err:
        raise RuntimeError(f"local baseline run failed: {err}") from err

    runs: list[RunResult] = []
    distances = np.empty((len(eps), config.species))
    for row, e in enumerate(eps):
        try:
            result = run_case(config, e, base, write_outputs)
        except Exception as err:
            raise RuntimeError(f"sweep entry epsilon={e:g} failed: {err}") from err
        runs.append(result)
        distances[row] = diag.l2_distance(result.final_state, local.final_state)

    verdicts: list[bool] | None = None
    if len(eps) >= 2:
        verdicts = [
            bool(np.all(np.diff(distances[:, i]) < 0)) for i in range(config.species)
        ]

    table_path: Path | None = None
    if write_outputs:
        base.mkdir(parents=True, exist_ok=True)
        table_path = base / "convergence.csv"
        with open(table_path, "w") as fh:
            fh.write(
                "epsilon," + ",".join(f"species_{i + 1}" for i in range(config.species)) + "\n"
            )
            for row, e in enumerate(eps):
                fh.write(
                    ",".join([_fmt(e)] + [_fmt(d) for d in distances[row]]) + "\n"
                )
        if verdicts is not None:
            with open(base / "convergence_verdicts.csv", "w") as fh:
                fh.write("species,strictly_decreasing\n")
                for i, v in enumerate(verdicts):
                    fh.write(f"{i + 1},{'true' if v else 'false'}\n")
    return SweepResult(eps, distances, verdicts, local, runs, table_path)


# --- configuration file round trip ------------------------------------------

_TOML_SECTIONS = {
    "grid": ("half_width", "n"),
    "model": ("species", "case", "matrix", "variances", "mollifier"),
    "run": ("epsilons", "t_end", "output_times", "out_dir"),
    "scheme": ("cfl", "max_dt", "limiter"),
    "init": ("ball_radius", "ball_center", "smoothing_width"),
}


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        out = repr(v)  # shortest exact representation keeps files editable
        # TOML floats need a decimal point or exponent.
        if not any(c in out for c in ".eE"):
            out += ".0"
        return out
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def config_to_toml(config: ExperimentConfig) -> str:
    """Serialize a configuration; parsing the result recovers it exactly."""
    lines: list[str] = []
    for section, names in _TOML_SECTIONS.items():
        body = [
            f"{name} = {_toml_scalar(getattr(config, name))}"
            for name in names
            if getattr(config, name) is not None
        ]
        if body:
            lines.append(f"[{section}]")
            lines.extend(body)
            lines.append("")
    return "\n".join(lines)


def config_from_toml(text: str) -> ExperimentConfig:
    """Parse a TOML configuration, rejecting unknown sections or keys."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("<toml>", f"not valid TOML: {err}") from err
    known = {name for names in _TOML_SECTIONS.values() for name in names}
    flat: dict[str, object] = {}
    for section, content in data.items():
        if section not in _TOML_SECTIONS:
            raise ConfigError(section, "unknown config section")
        if not isinstance(content, dict):
            raise ConfigError(section, "expected a table of settings")
        for key, value in content.items():
            if key not in known or key not in _TOML_SECTIONS[section]:
                raise ConfigError(f"{section}.{key}", "unknown config field")
            flat[key] = value
    if "case" not in flat and "matrix" in flat:
        # an explicit matrix with no preset means "no case", not the default
        flat["case"] = None
    try:
        config = ExperimentConfig(**flat)
    except TypeError as err:
        raise ConfigError("<config>", str(err)) from err
    config.validate()
    return config


def load_config(path: Path | str) -> ExperimentConfig:
    with open(str(path), "rb") as fh:
        text = fh.read().decode("utf-8")
    return config_from_toml(text)


def apply_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Return a copy with the given non-None fields replaced."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    bad = set(updates) - {f.name for f in fields(ExperimentConfig)}
    if bad:
        raise ConfigError(sorted(bad)[0], "unknown config field")
    return replace(config, **updates)
