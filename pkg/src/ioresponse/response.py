"""Response curves, implied shocks, and the susceptibility-based forecaster.

Analytic curves evaluate the propagator ``exp((A - I) t')`` directly per grid
point, so a step response at grid time T coincides bit-for-bit with
``truncated_susceptibility(A, T) @ X``.  A Monte Carlo route estimates the
same propagator from equilibrium correlations of simulated trajectories and
carries standard errors; the two must agree within the Monte Carlo error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, TextIO

import numpy as np
from scipy.linalg import expm

from .dynamics import ShockProfile, drift_matrix
from .errors import GridMismatch, IllConditioned, MissingPanelCell, NumericalError
from .iodata import IOTable, Panel
from .susceptibility import SimulationBudget, monte_carlo_propagator, truncated_susceptibility

#: Default relative threshold below which a sector counts as recovered.
RECOVERY_EPS = 0.05
#: Default condition-estimate cap for the implied-shock solve.
CONDITION_CAP = 1e12
#: Relative tolerance of the implied-shock round trip rho(1) X = dY.
ROUND_TRIP_RTOL = 1e-8

_GRID_SNAP = 1e-9


@dataclass(frozen=True)
class ResponseCurve:
    """Expected output change per sector on a time grid after a shock."""

    grid: np.ndarray           # t' (years since the shock), increasing
    values: np.ndarray         # (len(grid), N)
    shock: ShockProfile
    provenance: str            # "analytic" | "monte_carlo"
    standard_errors: np.ndarray | None = None


@dataclass(frozen=True)
class ImpliedShock:
    """Step demand shock that reproduces an observed one-year output change."""

    year: int
    values: np.ndarray
    truncation: float
    condition: float
    ridge: float | None = None


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if grid[0] != 0.0:
        raise ValueError("grid must start at 0")
    if len(grid) > 1 and np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing")
    return grid


def response_grid(horizon: float, dt: float = 0.01) -> np.ndarray:
    """Uniform grid [0, horizon] with the given spacing."""
    steps = int(round(horizon / dt))
    return dt * np.arange(steps + 1)


def impulse_response(table: IOTable, shock_vector, grid) -> ResponseCurve:
    """<dY(t')> = exp((A - I) t') X for an impulse of weight X at t' = 0."""
    grid = _check_grid(grid)
    x = np.asarray(shock_vector, dtype=float)
    m = drift_matrix(table.coefficients)
    values = np.empty((len(grid), len(x)))
    values[0] = x
    for k, t in enumerate(grid[1:], start=1):
        values[k] = expm(m * t) @ x
    return ResponseCurve(
        grid=grid,
        values=values,
        shock=ShockProfile.impulse(x),
        provenance="analytic",
    )


def step_response(table: IOTable, shock_vector, grid) -> ResponseCurve:
    """<dY(t')> = rho(t') X for a step shock switched on at t' = 0."""
    grid = _check_grid(grid)
    x = np.asarray(shock_vector, dtype=float)
    values = np.empty((len(grid), len(x)))
    values[0] = 0.0
    for k, t in enumerate(grid[1:], start=1):
        values[k] = truncated_susceptibility(table.coefficients, t) @ x
    return ResponseCurve(
        grid=grid,
        values=values,
        shock=ShockProfile.step(x),
        provenance="analytic",
    )


def general_response(table: IOTable, shock: ShockProfile, grid) -> ResponseCurve:
    """Convolution response for a tabulated shock, by the trapezoid rule.

    The shock grid must be at least as fine as the response grid: every
    response time inside the shock's support has to lie on the shock grid
    (:class:`GridMismatch` otherwise).  The shock is zero outside its grid.
    """
    if shock.kind != "tabulated":
        raise ValueError("general_response expects a tabulated shock profile")
    grid = _check_grid(grid)
    shock.check_dimension(table.n_sectors)
    m = drift_matrix(table.coefficients)
    times = shock.times
    xvals = shock.values
    n = table.n_sectors

    exp_cache: dict[float, np.ndarray] = {}

    def propagate(dt: float) -> np.ndarray:
        key = round(dt, 15)
        if key not in exp_cache:
            exp_cache[key] = expm(m * dt)
        return exp_cache[key]

    values = np.zeros((len(grid), n))
    for g, t in enumerate(grid):
        if t <= times[0]:
            continue
        # nodes of the shock grid up to t
        upto = np.searchsorted(times, t + _GRID_SNAP)
        if upto < len(times) and abs(times[upto - 1] - t) > _GRID_SNAP and t < times[-1]:
            raise GridMismatch(
                f"response time {t!r} does not lie on the shock grid"
            )
        nodes = times[:upto]
        if len(nodes) < 2:
            continue
        acc = np.zeros(n)
        for seg in range(len(nodes) - 1, 0, -1):
            h = nodes[seg] - nodes[seg - 1]
            left = propagate(t - nodes[seg - 1]) @ xvals[seg - 1]
            right = propagate(t - nodes[seg]) @ xvals[seg]
            acc += 0.5 * h * (left + right)
        values[g] = acc
    return ResponseCurve(grid=grid, values=values, shock=shock, provenance="analytic")


def impulse_response_monte_carlo(
    table: IOTable,
    shock_vector,
    nu: np.ndarray,
    horizon: float,
    budget: SimulationBudget = SimulationBudget(),
) -> ResponseCurve:
    """Impulse response estimated from equilibrium correlations.

    The curve lives on the simulation lag grid (spacing ``budget.dt``);
    standard errors come from the replica spread.
    """
    x = np.asarray(shock_vector, dtype=float)
    lags, propagators, _ = monte_carlo_propagator(table, nu, horizon, budget)
    curves = np.stack([prop @ x for prop in propagators])  # (R, K+1, N)
    values = curves.mean(axis=0)
    stderr = curves.std(axis=0, ddof=1) / math.sqrt(len(curves))
    return ResponseCurve(
        grid=lags,
        values=values,
        shock=ShockProfile.impulse(x),
        provenance="monte_carlo",
        standard_errors=stderr,
    )


def recovery_time(curve: ResponseCurve, eps: float = RECOVERY_EPS) -> np.ndarray:
    """Per-sector time after which |dY_k| stays within the threshold.

    The threshold is ``eps * |X_k|`` for shocked sectors and
    ``eps * ||X||_inf`` for sectors with zero shock weight.  Returns the
    smallest grid time from which no later grid point exceeds the threshold;
    ``inf`` when the last grid point still exceeds it, 0.0 when no point does.
    """
    x = curve.shock.vector
    if x is None:
        raise ValueError("recovery_time needs a curve with an impulse/step shock")
    scale = float(np.max(np.abs(x)))
    thresholds = np.where(x != 0.0, eps * np.abs(x), eps * scale)
    out = np.empty(len(x))
    exceed = np.abs(curve.values) > thresholds[None, :]
    for k in range(len(x)):
        hits = np.nonzero(exceed[:, k])[0]
        if len(hits) == 0:
            out[k] = 0.0
        elif hits[-1] == len(curve.grid) - 1:
            out[k] = math.inf
        else:
            out[k] = curve.grid[hits[-1] + 1]
    return out


# ---------------------------------------------------------------------------
# implied shocks and the forecaster
# ---------------------------------------------------------------------------

def implied_shock(
    table: IOTable,
    output_t,
    output_t1,
    truncation: float = 1.0,
    condition_cap: float = CONDITION_CAP,
    ridge: float | None = None,
) -> ImpliedShock:
    """Solve rho(T=1) X = Y(t+1) - Y(t) for the step shock X implied by data.

    A direct LU solve is used; the 2-norm condition estimate of the truncated
    susceptibility must stay below ``condition_cap`` unless a ridge parameter
    (Tikhonov factor relative to the largest singular value) is supplied.
    """
    y_t = np.asarray(output_t, dtype=float)
    y_t1 = np.asarray(output_t1, dtype=float)
    delta = y_t1 - y_t
    rho = truncated_susceptibility(table.coefficients, truncation)
    condition = float(np.linalg.cond(rho))
    if condition > condition_cap and ridge is None:
        raise IllConditioned(condition, condition_cap)
    if ridge is not None:
        smax = float(np.linalg.norm(rho, 2))
        lam = ridge * smax
        x = np.linalg.solve(rho.T @ rho + lam**2 * np.eye(len(delta)), rho.T @ delta)
    else:
        x = np.linalg.solve(rho, delta)
    scale = float(np.max(np.abs(delta)))
    if scale > 0.0 and ridge is None:
        residual = float(np.max(np.abs(rho @ x - delta)))
        if residual > ROUND_TRIP_RTOL * scale:
            raise NumericalError(
                f"implied-shock round trip residual {residual:.3e} exceeds "
                f"{ROUND_TRIP_RTOL:.0e} relative"
            )
    return ImpliedShock(
        year=table.year,
        values=x,
        truncation=float(truncation),
        condition=condition,
        ridge=ridge,
    )


def lrt_forecast(
    table: IOTable,
    output_t,
    output_t1,
    horizon: float = 2.0,
    condition_cap: float = CONDITION_CAP,
    ridge: float | None = None,
) -> np.ndarray:
    """Two-year-ahead output level implied by the extracted step shock.

    ``Y_hat(t+2) = Y(t) + rho(t, 2) X_tilde``.  By construction the
    intermediate one-year prediction ``Y(t) + rho(t, 1) X_tilde`` equals the
    observed ``Y(t+1)`` up to solver roundoff.
    """
    shock = implied_shock(
        table, output_t, output_t1, condition_cap=condition_cap, ridge=ridge
    )
    rho_h = truncated_susceptibility(table.coefficients, horizon)
    return np.asarray(output_t, dtype=float) + rho_h @ shock.values


def fluctuation_prediction(
    table: IOTable, horizon: float = math.inf
) -> np.ndarray:
    """Structural term sum_i rho_ki Y_i of the fluctuation-size predictor.

    The proportionality constant (the common noise amplitude) is fitted
    downstream as the regression slope against observed time-averaged output
    changes.
    """
    rho = truncated_susceptibility(table.coefficients, horizon)
    return rho @ table.output


@dataclass(frozen=True)
class FluctuationRegression:
    """Panel regression of observed average output changes on the predictor."""

    countries: tuple[str, ...]
    base_year: int
    predictor: np.ndarray       # flattened over (country, sector)
    observed: np.ndarray
    output_size: np.ndarray     # Y_k(t0), the trivial-size control
    eta: float                  # through-origin slope observed ~ predictor
    r: float
    r_size_only: float
    r_with_size_control: float
    size_control_coefficient: float


def fluctuation_panel_regression(
    panel: Panel,
    base_year: int | None = None,
    horizon: float = math.inf,
    absolute: bool = False,
) -> FluctuationRegression:
    """Evaluate the fluctuation predictor against a whole panel.

    For every country the observed statistic is the time-averaged annual
    output change ``mean_t (Y(t+1) - Y(t))`` with the 1/(n_years - 2)
    prefactor used in the yearly-average definition; the predictor is
    ``rho(t0) Y(t0)`` from the base year.  ``absolute=True`` averages
    ``|Y(t+1) - Y(t)|`` instead of the signed differences.  Returns pooled
    Pearson correlations and the control regression that adds the base-year
    output as an extra regressor.
    """
    from .baselines import pearson_r  # local import avoids a module cycle

    countries = panel.countries()
    years = panel.years()
    if base_year is None:
        base_year = years[0]
    missing = [
        (c, y) for c in countries for y in years if (c, y) not in panel
    ]
    if missing:
        raise MissingPanelCell(missing)
    if len(years) < 3:
        raise ValueError("panel needs at least 3 years")

    preds = []
    obs = []
    sizes = []
    for c in countries:
        base = panel.get(c, base_year)
        preds.append(fluctuation_prediction(base, horizon=horizon))
        sizes.append(base.output)
        diffs = [
            panel.get(c, years[k + 1]).output - panel.get(c, years[k]).output
            for k in range(len(years) - 1)
        ]
        if absolute:
            total = np.sum(np.abs(diffs), axis=0)
        else:
            total = np.sum(diffs, axis=0)
        obs.append(total / (len(years) - 2))
    x = np.concatenate(preds)
    y = np.concatenate(obs)
    size = np.concatenate(sizes)

    eta = float(x @ y / (x @ x))
    r = pearson_r(x, y)
    r_size = pearson_r(size, y)
    design = np.column_stack([np.ones_like(x), x, size])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    r_multi = pearson_r(fitted, y)
    return FluctuationRegression(
        countries=tuple(countries),
        base_year=int(base_year),
        predictor=x,
        observed=y,
        output_size=size,
        eta=eta,
        r=r,
        r_size_only=r_size,
        r_with_size_control=r_multi,
        size_control_coefficient=float(coef[2]),
    )


def write_curve(curve: ResponseCurve, sectors: Sequence[str], stream: TextIO) -> None:
    """Curve export: t_prime,sector,value[,stderr]."""
    has_se = curve.standard_errors is not None
    stream.write("t_prime,sector,value,stderr\n" if has_se else "t_prime,sector,value\n")
    for g, t in enumerate(curve.grid):
        for k, code in enumerate(sectors):
            line = f"{float(t)!r},{code},{float(curve.values[g, k])!r}"
            if has_se:
                line += f",{float(curve.standard_errors[g, k])!r}"
            stream.write(line + "\n")
