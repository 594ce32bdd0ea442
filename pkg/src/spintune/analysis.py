"""Post-hoc analysis of tuning runs.

Curve fits for decay and Rabi data, fidelity conversions, first-order
HDMR sensitivity indices, and covariance-matrix aggregation across runs.
All fits use damped least squares with a fixed set of deterministic
starts, so results are reproducible bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import least_squares

__all__ = [
    "FitResult",
    "SensitivityReport",
    "CovarianceSeries",
    "fit_decay",
    "fit_rabi",
    "shuttle_fidelity",
    "hdmr_first_order",
    "covariance_average",
    "covariance_trajectory",
]

_N_STARTS = 8
_RIDGE = 1e-8
_SPLINE_DEGREE = 3
_SPLINE_INTERVALS = 8


@dataclass(frozen=True)
class FitResult:
    """Named parameter estimates with standard errors."""

    params: dict
    std_errors: dict
    residual_norm: float
    converged: bool


@dataclass(frozen=True)
class SensitivityReport:
    """First-order variance contributions per parameter."""

    first_order: dict
    residual: float

    def normalized_contributions(self) -> dict:
        """Indices rescaled to sum to one, for pie-chart output."""
        total = sum(self.first_order.values())
        if total <= 0:
            return {k: 0.0 for k in self.first_order}
        return {k: v / total for k, v in self.first_order.items()}


@dataclass(frozen=True)
class CovarianceSeries:
    """Per-generation covariance matrices of one optimization run."""

    generations: tuple
    matrices: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "generations", tuple(int(g) for g in self.generations))
        object.__setattr__(self, "matrices", np.asarray(self.matrices, dtype=float))
        if self.matrices.ndim != 3 or self.matrices.shape[0] != len(self.generations):
            raise ValueError("matrices must be (G, n, n) matching generations")
        if self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("covariance matrices must be square")
        if not np.allclose(self.matrices, np.swapaxes(self.matrices, 1, 2), atol=1e-9):
            raise ValueError("covariance matrices must be symmetric")

    def matrix_at(self, generation: int) -> np.ndarray:
        try:
            idx = self.generations.index(int(generation))
        except ValueError:
            raise KeyError(f"generation {generation} not in series") from None
        return self.matrices[idx]


def _std_errors_from_jacobian(jac: np.ndarray, residuals: np.ndarray,
                              n_params: int) -> np.ndarray:
    dof = max(residuals.size - n_params, 1)
    s2 = float(residuals @ residuals) / dof
    cov = np.linalg.pinv(jac.T @ jac) * s2
    return np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))


def _multistart_least_squares(residual_fn, starts, lower, upper):
    best = None
    for x0 in starts:
        x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
        try:
            res = least_squares(residual_fn, x0, bounds=(lower, upper), method="trf")
        except (ValueError, np.linalg.LinAlgError):
            continue
        if best is None or res.cost < best.cost:
            best = res
    return best


def fit_decay(xs: np.ndarray, ys: np.ndarray) -> FitResult:
    """Fit y = A * p**x + C with p in (0, 1].

    Flat data is a documented degenerate case: the amplitude collapses
    to ~0 with near-zero residual and the fit reports converged.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 4:
        raise ValueError("need at least 4 points")
    if np.any(xs < 0):
        raise ValueError("xs must be non-negative")

    def residual(theta):
        a, p, c = theta
        return a * p**xs + c - ys

    span = float(np.max(ys) - np.min(ys))
    scale = span if span > 0 else 1.0
    c0 = float(np.clip(ys[-1], -1.0, 1.0))
    starts = [(a_frac * scale, p0, c0)
              for p0 in (0.5, 0.9, 0.99, 0.999)
              for a_frac in (0.3, 1.0)]
    assert len(starts) == _N_STARTS
    lower = np.array([1e-12, 1e-9, -1.0])
    upper = np.array([max(2.0, 2.0 * scale), 1.0, 1.0])
    res = _multistart_least_squares(residual, starts, lower, upper)
    if res is None:
        return FitResult({}, {}, np.inf, False)
    errs = _std_errors_from_jacobian(res.jac, res.fun, 3)
    names = ("A", "p", "C")
    return FitResult(
        params=dict(zip(names, (float(v) for v in res.x))),
        std_errors=dict(zip(names, (float(e) for e in errs))),
        residual_norm=float(np.linalg.norm(res.fun)),
        converged=bool(res.success),
    )


def fit_rabi(ts: np.ndarray, ps: np.ndarray) -> FitResult:
    """Fit P = V_R * cos(w t + phi) * exp(-t / tau).

    The frequency start comes from the discrete spectrum of the
    mean-removed data; without a clear spectral peak the fit reports
    converged=False rather than guessing.
    """
    ts = np.asarray(ts, dtype=float)
    ps = np.asarray(ps, dtype=float)
    if ts.size < 8:
        raise ValueError("need at least 8 points")

    n = ts.size
    dt = (ts[-1] - ts[0]) / (n - 1)
    if dt <= 0:
        raise ValueError("ts must be increasing")
    spectrum = np.abs(np.fft.rfft(ps - np.mean(ps)))
    if spectrum.size < 2:
        return FitResult({}, {}, np.inf, False)
    mags = spectrum[1:]
    k_peak = int(np.argmax(mags)) + 1
    floor = float(np.median(mags))
    if mags[k_peak - 1] <= max(3.0 * floor, 1e-9 * n):
        return FitResult({}, {}, np.inf, False)
    w0 = 2.0 * np.pi * np.fft.rfftfreq(n, dt)[k_peak]

    def residual(theta):
        v, w, phi, tau = theta
        return v * np.cos(w * ts + phi) * np.exp(-ts / tau) - ps

    span = ts[-1] - ts[0]
    v0 = 0.5 * float(np.max(ps) - np.min(ps))
    starts = [(v0, w0, phi0, tau0)
              for phi0 in (0.0, 0.5 * np.pi, np.pi, -0.5 * np.pi)
              for tau0 in (span, 0.25 * span)]
    assert len(starts) == _N_STARTS
    lower = np.array([1e-12, 0.3 * w0, -np.pi, 1e-9])
    upper = np.array([np.inf, 3.0 * w0, np.pi, np.inf])
    res = _multistart_least_squares(residual, starts, lower, upper)
    if res is None:
        return FitResult({}, {}, np.inf, False)
    errs = _std_errors_from_jacobian(res.jac, res.fun, 4)
    names = ("V_R", "omega", "phi", "tau")
    return FitResult(
        params=dict(zip(names, (float(v) for v in res.x))),
        std_errors=dict(zip(names, (float(e) for e in errs))),
        residual_norm=float(np.linalg.norm(res.fun)),
        converged=bool(res.success),
    )


def shuttle_fidelity(p: float) -> float:
    """Per-segment shuttling fidelity 1 - p/3."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p {p} outside [0, 1]")
    return 1.0 - p / 3.0


def _spline_design(x: np.ndarray) -> np.ndarray:
    knots = np.concatenate([
        np.zeros(_SPLINE_DEGREE),
        np.linspace(0.0, 1.0, _SPLINE_INTERVALS + 1),
        np.ones(_SPLINE_DEGREE),
    ])
    x = np.clip(x, 0.0, 1.0 - 1e-12)
    return BSpline.design_matrix(x, knots, _SPLINE_DEGREE).toarray()


def hdmr_first_order(samples: np.ndarray, costs: np.ndarray,
                     names: list | None = None) -> SensitivityReport:
    """First-order variance decomposition of costs over unit-cube samples.

    Each parameter gets a cubic-spline component function; all
    components are fitted jointly by ridge-regularized least squares,
    and the index of a parameter is the variance of its component over
    the sample divided by the total cost variance. Interactions land in
    the residual fraction.
    """
    samples = np.asarray(samples, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be a 2-D matrix")
    n_samples, n_params = samples.shape
    if n_samples < 50:
        raise ValueError("need at least 50 samples")
    if costs.shape != (n_samples,):
        raise ValueError("costs length must match samples")
    if np.any(samples < -1e-9) or np.any(samples > 1 + 1e-9):
        raise ValueError("samples must lie in the unit cube")
    if names is None:
        names = [f"x{i}" for i in range(n_params)]
    if len(names) != n_params:
        raise ValueError("names length must match parameter count")

    blocks = []
    for i in range(n_params):
        col = samples[:, i]
        if np.var(col) < 1e-14:
            warnings.warn(f"parameter {names[i]!r} is constant in the sample; "
                          "its sensitivity index is 0", RuntimeWarning)
        design = _spline_design(col)
        centered = design - design.mean(axis=0)
        # splines sum to one pointwise, so one centered column per block
        # is redundant and gets dropped
        blocks.append(centered[:, :-1])

    x_mat = np.concatenate([np.ones((n_samples, 1))] + blocks, axis=1)
    penalty = np.full(x_mat.shape[1], _RIDGE)
    penalty[0] = 0.0
    beta = np.linalg.solve(x_mat.T @ x_mat + np.diag(penalty), x_mat.T @ costs)

    total_var = float(np.var(costs))
    width = blocks[0].shape[1]
    indices = {}
    for i in range(n_params):
        coef = beta[1 + i * width:1 + (i + 1) * width]
        component = blocks[i] @ coef
        indices[names[i]] = (min(1.0, float(np.var(component)) / total_var)
                             if total_var > 0 else 0.0)
    if total_var > 0:
        fitted = x_mat @ beta
        residual = min(1.0, float(np.var(costs - fitted)) / total_var)
    else:
        residual = 0.0
    return SensitivityReport(first_order=indices, residual=residual)


def covariance_average(runs: list, generation: int) -> np.ndarray:
    """Element-wise mean covariance at one generation across runs."""
    if not runs:
        raise ValueError("need at least one run")
    mats = [run.matrix_at(generation) for run in runs]
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError("runs have mismatched dimensions")
    return np.mean(mats, axis=0)


def covariance_trajectory(series: CovarianceSeries, entry: tuple) -> list:
    """Per-generation values of one covariance entry, in order."""
    i, j = (int(v) for v in entry)
    n = series.matrices.shape[1]
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"entry ({i}, {j}) outside a {n}x{n} matrix")
    return [(g, float(m[i, j])) for g, m in zip(series.generations, series.matrices)]
