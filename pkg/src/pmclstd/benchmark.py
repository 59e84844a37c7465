"""Experiment harness for the chain-walk benchmark.

Runs sweeps over the number of irrelevant features or the number of
samples, with per-sweep-value hyperparameter grid search per method, and
writes one CSV row per (sweep value, method, trial) at the selected grid
point plus a companion file of grid-search summaries. All randomness
derives from per-trial seeds (trial seed = base seed + trial index), so
results are byte-reproducible and trials can run on parallel workers
without changing the output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from ._validation import as_float_vector
from .features import FeatureMapSpec, build_lstd_data, feature_table
from .lstd import (
    LstdData,
    LstdRegressor,
    PmcLstd,
    PmcSolverConfig,
    assemble_operator,
    check_convexity_condition,
    lstd_closed_form,
    solve_assembled,
)
from .mdp import ChainMdpModel, exact_optimal, sample_batch
from .policy_iteration import approximate_policy_iteration
from .splitting import DivergenceError

METHODS = ("pmc", "l1", "lstd", "ridge")
SWEEP_AXES = ("noise_count", "sample_count")
MODES = ("evaluate", "policy_iteration")
CSV_HEADER = "sweep_value,method,trial,nmse,iterations,wall_time_ms,hyperparams"
GRID_HEADER = "sweep_value,method,hyperparams,mean_nmse,selected"


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A sweep specification; see ``load_config`` for the file format."""

    sweep: str
    values: tuple[int, ...]
    n_samples: int | None = None
    noise_count: int | None = None
    trials: int = 30
    methods: tuple[str, ...] = ("pmc", "l1", "lstd")
    mu_grid: tuple[float, ...] = (0.1, 1.0, 10.0)
    tau_grid: tuple[float, ...] = (1.0, 10.0)
    q_grid: tuple = ("auto",)
    ridge_grid: tuple[float, ...] = (0.1, 1.0, 10.0)
    gamma: float = 0.9
    seed: int = 0
    out: str = "results.csv"
    mode: str = "evaluate"
    pi_iterations: int = 10
    n_rbf: int = 10
    tol: float = 1e-8
    max_iters: int = 100_000
    workers: int = 1
    timing: bool = False
    dump_weights: str | None = None

    def validate(self):
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(
                f"sweep must be one of {SWEEP_AXES}, got {self.sweep!r}"
            )
        if not self.values:
            raise ConfigError("values must be a non-empty list")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("values must be strictly increasing")
        if self.sweep == "noise_count":
            if min(self.values) < 0:
                raise ConfigError("noise counts must be nonnegative")
            if self.n_samples is None or self.n_samples < 1:
                raise ConfigError("a noise_count sweep needs m >= 1")
        else:
            if min(self.values) < 1:
                raise ConfigError("sample counts must be at least 1")
            if self.noise_count is None or self.noise_count < 0:
                raise ConfigError("a sample_count sweep needs noise_count >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown method {method!r}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods contains duplicates")
        needs_mu = {"pmc", "l1"} & set(self.methods)
        if needs_mu and not self.mu_grid:
            raise ConfigError("mu_grid must be non-empty for pmc/l1")
        if needs_mu and any(mu < 0 for mu in self.mu_grid):
            raise ConfigError("mu_grid entries must be nonnegative")
        if "pmc" in self.methods:
            if not self.tau_grid:
                raise ConfigError("tau_grid must be non-empty for pmc")
            if any(tau <= 0 for tau in self.tau_grid):
                raise ConfigError("tau_grid entries must be positive")
            if not self.q_grid:
                raise ConfigError("q must be non-empty for pmc")
            for q in self.q_grid:
                if q != "auto" and (not isinstance(q, int) or q < 0):
                    raise ConfigError(f"invalid q entry {q!r}")
        if "ridge" in self.methods:
            if not self.ridge_grid:
                raise ConfigError("ridge_grid must be non-empty for ridge")
            if any(r < 0 for r in self.ridge_grid):
                raise ConfigError("ridge_grid entries must be nonnegative")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pi_iterations < 1:
            raise ConfigError("pi_iterations must be at least 1")
        if self.n_rbf < 0:
            raise ConfigError("n_rbf must be nonnegative")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self


@dataclass(frozen=True)
class ResultRow:
    sweep_value: int
    method: str
    trial: int
    nmse: float
    iterations: int
    wall_time_ms: float
    hyperparams: str


def _parse_int(value: str) -> int:
    return int(value)


def _parse_float(value: str) -> float:
    return float(value)


def _parse_int_list(value: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in value.split(",") if v.strip())


def _parse_float_list(value: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in value.split(",") if v.strip())


def _parse_str_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _parse_q(value: str) -> tuple:
    out = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        out.append("auto" if item == "auto" else int(item))
    return tuple(out)


def _parse_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on/off, got {value!r}")


_CONFIG_KEYS = {
    "sweep": ("sweep", str),
    "values": ("values", _parse_int_list),
    "m": ("n_samples", _parse_int),
    "noise_count": ("noise_count", _parse_int),
    "trials": ("trials", _parse_int),
    "methods": ("methods", _parse_str_list),
    "mu_grid": ("mu_grid", _parse_float_list),
    "tau_grid": ("tau_grid", _parse_float_list),
    "q": ("q_grid", _parse_q),
    "ridge_grid": ("ridge_grid", _parse_float_list),
    "gamma": ("gamma", _parse_float),
    "seed": ("seed", _parse_int),
    "out": ("out", str),
    "mode": ("mode", str),
    "pi_iterations": ("pi_iterations", _parse_int),
    "n_rbf": ("n_rbf", _parse_int),
    "tol": ("tol", _parse_float),
    "max_iters": ("max_iters", _parse_int),
    "workers": ("workers", _parse_int),
    "timing": ("timing", _parse_bool),
    "dump_weights": ("dump_weights", str),
}


def load_config(path) -> ExperimentConfig:
    """Parse a flat ``key=value`` configuration file.

    Blank lines and lines starting with ``#`` are ignored; list values are
    comma-separated. Unknown keys, duplicate keys, and malformed values
    raise ConfigError with the offending line.
    """
    fields = {}
    path = Path(path)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(
                    f"{path}:{lineno}: expected key=value, got {stripped!r}"
                )
            key, _, value = stripped.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            attr, convert = _CONFIG_KEYS[key]
            if attr in fields:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                fields[attr] = convert(value)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}:{lineno}: invalid value for {key!r}: {exc}"
                ) from exc
    if "sweep" not in fields:
        raise ConfigError(f"{path}: missing required key 'sweep'")
    if "values" not in fields:
        raise ConfigError(f"{path}: missing required key 'values'")
    try:
        return ExperimentConfig(**fields).validate()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def nmse(v_star, q_hat) -> float:
    """Normalized mean squared error of a Q table against the true values.

    ``sum_s (V*(s) - min_a Q_hat(s, a))**2 / sum_s V*(s)**2``, with the
    action optimization in the cost sense used package-wide.
    """
    v = as_float_vector(v_star, "v_star")
    q = np.asarray(q_hat, dtype=float)
    if q.ndim != 2 or q.shape[0] != v.shape[0]:
        raise ValueError(
            f"q_hat must have shape ({v.shape[0]}, n_actions), got {q.shape}"
        )
    denom = float(np.sum(v * v))
    if denom == 0.0:
        raise ValueError("v_star is identically zero")
    estimate = q.min(axis=1)
    return float(np.sum((v - estimate) ** 2) / denom)


def _method_grid(config: ExperimentConfig, method: str) -> list[dict]:
    if method == "pmc":
        # mu descends within each (q, tau) cell so warm starts sweep a
        # continuation path from sparser to denser solutions.
        return [
            {"mu": mu, "tau": tau, "q": q}
            for q in config.q_grid
            for tau in config.tau_grid
            for mu in sorted(config.mu_grid, reverse=True)
        ]
    if method == "l1":
        return [{"mu": mu} for mu in sorted(config.mu_grid, reverse=True)]
    if method == "lstd":
        return [{"ridge": 0.0}]
    if method == "ridge":
        return [{"ridge": ridge} for ridge in config.ridge_grid]
    raise ValueError(f"unknown method {method!r}")


def _hyperparams_string(method: str, params: dict) -> str:
    if method == "pmc":
        keys = ("mu", "tau", "q")
    elif method == "l1":
        keys = ("mu",)
    else:
        keys = ("ridge",)
    return ";".join(f"{k}={params[k]}" for k in keys)


def _make_estimator(config: ExperimentConfig, method: str, params: dict):
    if method == "pmc":
        return PmcLstd(
            mu=params["mu"],
            tau=params["tau"],
            q=params["q"],
            gamma=config.gamma,
            tol=config.tol,
            max_iter=config.max_iters,
        )
    if method == "l1":
        return PmcLstd(
            mu=params["mu"],
            tau=1.0,
            q=0,
            gamma=config.gamma,
            tol=config.tol,
            max_iter=config.max_iters,
        )
    return LstdRegressor(gamma=config.gamma, ridge=params["ridge"])


def _axis_values(config: ExperimentConfig, sweep_value: int) -> tuple[int, int]:
    """Resolve (m, n_noise) for one sweep value."""
    if config.sweep == "noise_count":
        return config.n_samples, sweep_value
    return sweep_value, config.noise_count


def _sweep_solver_config(op_data, mu, tau, q, tol, max_iters) -> PmcSolverConfig:
    """Solver configuration used by sweeps: maximal recast scaling as in
    ``default_config`` but with a small schedule margin (epsilon = 1e-3),
    which admits steps near 1/(2 beta) instead of 1/6 while staying inside
    the convergence conditions."""
    bound = op_data.spectral_norm + mu / tau
    if bound <= 0:
        raise ValueError("degenerate problem: the Lipschitz bound is zero")
    alpha = 1.0 / bound
    beta = alpha * bound + 1.0
    epsilon = 1e-3
    eta = (1.0 - 2.0 * epsilon) / (2.0 * beta)
    config = PmcSolverConfig(
        mu=mu, tau=tau, q=q, alpha=alpha, epsilon=epsilon, eta=eta,
        tolerance=tol, max_iterations=max_iters,
    )
    violation = check_convexity_condition(config, op_data)
    if violation is not None:
        raise ValueError(violation)
    return config


def _solve_grid_point(op_data, config, params, warm):
    q = params.get("q", 0)
    q = op_data.rank if q == "auto" else int(q)
    tau = params.get("tau", 1.0)
    solver_config = _sweep_solver_config(
        op_data, params["mu"], tau, q, config.tol, config.max_iters
    )
    report = solve_assembled(op_data, solver_config, warm, warm)
    return report.x, report.iterations


def _evaluate_trial(config, model, star_policy, v_star, grids, m, n_noise, trial):
    """One trial in evaluate mode: a single policy-evaluation pass under the
    optimal policy, shared across methods and grid points."""
    trial_seed = config.seed + trial
    streams = np.random.SeedSequence(trial_seed).generate_state(2)
    batch = sample_batch(model, m, int(streams[0]))
    spec = FeatureMapSpec(
        n_rbf=config.n_rbf,
        n_noise=n_noise,
        n_states=model.n_states,
        seed=int(streams[1]),
    )
    data = build_lstd_data(spec, batch, star_policy, model.gamma)
    op_data = assemble_operator(data)
    table = feature_table(spec).reshape(-1, spec.dim)

    results = {}
    for method in config.methods:
        warm = None
        for gi, params in enumerate(grids[method]):
            start = time.perf_counter() if config.timing else 0.0
            try:
                if method in ("lstd", "ridge"):
                    w = lstd_closed_form(op_data, params["ridge"])
                    iterations = 0
                else:
                    w, iterations = _solve_grid_point(op_data, config, params, warm)
                    warm = w
            except (ValueError, DivergenceError):
                # inadmissible grid point or diverged solve: deselected by inf
                w, iterations, error = None, 0, float("inf")
            else:
                q_hat = (table @ w).reshape(model.n_states, 2)
                error = nmse(v_star, q_hat)
            elapsed_ms = (
                (time.perf_counter() - start) * 1e3 if config.timing else 0.0
            )
            results[(method, gi)] = (error, iterations, elapsed_ms, w)
    return results


def _pi_trial(config, model, star_policy, v_star, grids, m, n_noise, trial):
    """One trial in policy-iteration mode: a full approximate policy
    iteration run per method and grid point."""
    trial_seed = config.seed + trial
    spec = FeatureMapSpec(
        n_rbf=config.n_rbf, n_noise=n_noise, n_states=model.n_states
    )
    table = feature_table(spec).reshape(-1, spec.dim)
    results = {}
    for method in config.methods:
        for gi, params in enumerate(grids[method]):
            start = time.perf_counter() if config.timing else 0.0
            try:
                estimator = _make_estimator(config, method, params)
                run = approximate_policy_iteration(
                    model, spec, estimator, m, config.pi_iterations, trial_seed
                )
                w = run.weights[-1]
                iterations = config.pi_iterations
            except (ValueError, DivergenceError):
                w, iterations, error = None, 0, float("inf")
            else:
                q_hat = (table @ w).reshape(model.n_states, 2)
                error = nmse(v_star, q_hat)
            elapsed_ms = (
                (time.perf_counter() - start) * 1e3 if config.timing else 0.0
            )
            results[(method, gi)] = (error, iterations, elapsed_ms, w)
    return results


def run_sweep(config: ExperimentConfig) -> list[ResultRow]:
    """Run a full sweep and write the results CSV.

    For each (sweep value, method) the grid point with the smallest mean
    NMSE over trials is selected and one row per trial is emitted at that
    point. A companion ``<out stem>_grid.csv`` records every grid point's
    mean NMSE. Returns the emitted rows.
    """
    config.validate()
    model = ChainMdpModel(gamma=config.gamma)
    optimal = exact_optimal(model)
    star_policy = optimal.policy
    v_star = optimal.v_values
    grids = {method: _method_grid(config, method) for method in config.methods}
    trial_runner = _evaluate_trial if config.mode == "evaluate" else _pi_trial

    rows: list[ResultRow] = []
    grid_lines: list[str] = []
    dumped: dict[str, np.ndarray] = {}
    for sweep_value in config.values:
        m, n_noise = _axis_values(config, sweep_value)
        tasks = (
            delayed(trial_runner)(
                config, model, star_policy, v_star, grids, m, n_noise, trial
            )
            for trial in range(config.trials)
        )
        per_trial = Parallel(n_jobs=config.workers)(tasks)
        for method in config.methods:
            grid = grids[method]
            means = np.array([
                np.mean([per_trial[t][(method, gi)][0] for t in range(config.trials)])
                for gi in range(len(grid))
            ])
            best = int(np.argmin(means))
            params_string = _hyperparams_string(method, grid[best])
            for gi in range(len(grid)):
                grid_lines.append(
                    f"{sweep_value},{method},"
                    f"{_hyperparams_string(method, grid[gi])},{means[gi]},"
                    f"{int(gi == best)}"
                )
            for trial in range(config.trials):
                error, iterations, elapsed_ms, w = per_trial[trial][(method, best)]
                rows.append(
                    ResultRow(
                        sweep_value=sweep_value,
                        method=method,
                        trial=trial,
                        nmse=error,
                        iterations=iterations,
                        wall_time_ms=elapsed_ms,
                        hyperparams=params_string,
                    )
                )
                if config.dump_weights and w is not None:
                    dumped[f"{sweep_value}:{method}:{trial}"] = w

    write_results(rows, config.out)
    grid_path = _grid_summary_path(config.out)
    with open(grid_path, "w") as fh:
        fh.write(GRID_HEADER + "\n")
        for line in grid_lines:
            fh.write(line + "\n")
    if config.dump_weights:
        np.savez(config.dump_weights, **dumped)
    return rows


def _grid_summary_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_grid" + out.suffix)


def write_results(rows: Sequence[ResultRow], path):
    """Write rows as CSV with the fixed header, '.' decimals, and line
    feeds. Field values never contain commas, so no quoting is needed."""
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{row.sweep_value},{row.method},{row.trial},{row.nmse},"
                f"{row.iterations},{row.wall_time_ms},{row.hyperparams}\n"
            )


def save_dataset(data: LstdData, path):
    """Write LSTD data as text: a ``m n gamma`` header, then one line per
    sample holding the feature row, the successor feature row, and the
    payoff. Floats are written with full round-trip precision."""
    m, n = data.phi.shape
    with open(path, "w") as fh:
        fh.write(f"{m} {n} {data.gamma!r}\n")
        for i in range(m):
            values = np.concatenate(
                [data.phi[i], data.phi_next[i], [data.payoffs[i]]]
            )
            fh.write(" ".join(repr(float(v)) for v in values) + "\n")


def load_dataset(path) -> LstdData:
    """Read a dataset written by ``save_dataset``."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().split()
    if len(header) != 3:
        raise ValueError(
            f"{path}: header must be 'm n gamma', got {' '.join(header)!r}"
        )
    try:
        m, n, gamma = int(header[0]), int(header[1]), float(header[2])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed header: {exc}") from exc
    body = np.loadtxt(path, skiprows=1, ndmin=2)
    if body.shape != (m, 2 * n + 1):
        raise ValueError(
            f"{path}: expected {m} lines of {2 * n + 1} values, "
            f"got array of shape {body.shape}"
        )
    return LstdData(
        phi=body[:, :n],
        phi_next=body[:, n:2 * n],
        payoffs=body[:, 2 * n],
        gamma=gamma,
    )
