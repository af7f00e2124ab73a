"""Econometric baselines and the forecast evaluation harness.

ARIMA models are restricted to orders p, d, q in {0, 1} and estimated by
conditional sum of squares: the series is differenced d times, innovations
are computed recursively with zero pre-sample residuals, and the squared sum
is minimized by L-BFGS-B from a fixed multi-start grid {0, -0.5, 0.5} per
AR/MA coefficient.  A constant is estimated except for differenced pure-MA
models: (0,1,0) and (0,1,1) are the level-tracking family, so the random
walk forecasts the last observation and exponential smoothing flattens to
the last level, while AR-containing differenced models keep a drift term.
Everything is deterministic given the inputs.

The VAR(1) baseline is calibrated the simulation way: the unshocked economy
is integrated, states are recorded at one-year intervals, and the transition
matrix is fitted by ordinary least squares.

``evaluate_forecasts`` scores aligned panels of predictions with per-cell
Pearson correlations, predictability gains, and one-sample two-sided t-tests
per year and pooled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence, TextIO

import numpy as np
from scipy import optimize, stats

from .dynamics import ShockProfile, simulate_batch
from .errors import (
    DegenerateInput,
    MisalignedPanel,
    NonConvergent,
    RankDeficientRegressors,
    SingularSystem,
    TooShortSeries,
)
from .iodata import IOTable, Panel
from .response import implied_shock, lrt_forecast
from .susceptibility import truncated_susceptibility

#: AR/MA coefficients are clamped to this magnitude when a fit ends on the
#: stationarity/invertibility boundary.
_COEF_CLAMP = 0.99
_COEF_BOUND = 0.9999
_MULTI_START = (0.0, -0.5, 0.5)


@dataclass(frozen=True)
class ArimaModel:
    """Fitted ARIMA(p,d,q) with p, d, q in {0, 1}."""

    order: tuple[int, int, int]
    const: float
    phi: float
    theta: float
    sigma2: float
    converged: bool
    objective: float
    clamped: bool
    n_obs: int


def _difference(series: np.ndarray, d: int) -> np.ndarray:
    w = np.asarray(series, dtype=float)
    for _ in range(d):
        w = np.diff(w)
    return w


def _css(w: Sequence[float], p: int, q: int, const: float, phi: float, theta: float) -> float:
    """Conditional sum of squared innovations with zero pre-sample residuals."""
    total = 0.0
    e_prev = 0.0
    for t in range(p, len(w)):
        pred = const
        if p:
            pred += phi * w[t - 1]
        if q:
            pred += theta * e_prev
        e = w[t] - pred
        total += e * e
        if q:
            e_prev = e
    return total


def fit_arima(series, p: int, d: int, q: int) -> ArimaModel:
    """Estimate an ARIMA(p,d,q) model by conditional sum of squares.

    Raises :class:`TooShortSeries` when ``len(series) < p + d + q + 3`` and
    :class:`NonConvergent` when every optimizer start fails.
    """
    if not all(v in (0, 1) for v in (p, d, q)):
        raise ValueError("orders p, d, q must each be 0 or 1")
    series = np.asarray(series, dtype=float)
    if len(series) < p + d + q + 3:
        raise TooShortSeries(
            f"need at least {p + d + q + 3} observations, got {len(series)}"
        )
    w = _difference(series, d)
    wl = w.tolist()

    # differenced pure-MA models track the level without drift
    has_const = (p + q) >= 1 and (p == 1 or d == 0)
    wbar = float(np.mean(w)) if len(w) else 0.0

    if p + q == 0:
        css = _css(wl, 0, 0, 0.0, 0.0, 0.0)
        return ArimaModel(
            order=(p, d, q),
            const=0.0,
            phi=0.0,
            theta=0.0,
            sigma2=css / max(len(w), 1),
            converged=True,
            objective=css,
            clamped=False,
            n_obs=len(series),
        )

    # parameter vector layout: [const?, phi?, theta?]
    def unpack(vec):
        k = 0
        const = phi = theta = 0.0
        if has_const:
            const = vec[0]
            k = 1
        if p:
            phi = vec[k]
            k += 1
        if q:
            theta = vec[k]
        return const, phi, theta

    def objective(vec):
        c, phi, theta = unpack(vec)
        return _css(wl, p, q, c, phi, theta)

    bounds = [(None, None)] if has_const else []
    starts: list[list[float]] = []
    grids = [_MULTI_START] * (p + q)
    if p:
        bounds.append((-_COEF_BOUND, _COEF_BOUND))
    if q:
        bounds.append((-_COEF_BOUND, _COEF_BOUND))

    def build(prefix, remaining):
        if not remaining:
            if has_const:
                phi0 = prefix[0] if p else 0.0
                starts.append([wbar * (1.0 - phi0)] + list(prefix))
            else:
                starts.append(list(prefix))
            return
        for g in remaining[0]:
            build(prefix + [g], remaining[1:])

    build([], grids)

    best = None
    failures = []
    for x0 in starts:
        res = optimize.minimize(
            objective, np.array(x0), method="L-BFGS-B", bounds=bounds
        )
        if not res.success:
            failures.append(res.message)
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise NonConvergent(
            "every optimizer start failed", diagnostics=failures
        )

    const, phi, theta = unpack(best.x)
    clamped = False
    if p and abs(phi) > _COEF_CLAMP:
        phi = math.copysign(_COEF_CLAMP, phi)
        clamped = True
    if q and abs(theta) > _COEF_CLAMP:
        theta = math.copysign(_COEF_CLAMP, theta)
        clamped = True
    css = _css(wl, p, q, const, phi, theta)
    n_used = max(len(w) - p, 1)
    return ArimaModel(
        order=(p, d, q),
        const=float(const),
        phi=float(phi),
        theta=float(theta),
        sigma2=css / n_used,
        converged=bool(best.success),
        objective=float(css),
        clamped=clamped,
        n_obs=len(series),
    )


def arima_forecast(model: ArimaModel, series, steps: int) -> np.ndarray:
    """Minimum-mean-square-error forecasts for ``steps`` periods ahead.

    For d = 1 the differenced-scale forecasts are cumulated and anchored at
    the last observation.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    p, d, q = model.order
    series = np.asarray(series, dtype=float)
    w = _difference(series, d).tolist()

    e_prev = 0.0
    if q:
        for t in range(p, len(w)):
            pred = model.const + (model.phi * w[t - 1] if p else 0.0) + model.theta * e_prev
            e_prev = w[t] - pred

    fc = np.empty(steps)
    last_w = w[-1] if w else 0.0
    for h in range(steps):
        pred = model.const
        if p:
            pred += model.phi * (last_w if h == 0 else fc[h - 1])
        if q and h == 0:
            pred += model.theta * e_prev
        fc[h] = pred
    if d == 0:
        return fc
    return series[-1] + np.cumsum(fc)


# ---------------------------------------------------------------------------
# VAR(1) baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarModel:
    """First-order vector autoregression Y(t+1) = AR Y(t) + intercept + e."""

    ar: np.ndarray
    intercept: np.ndarray
    ar_stderr: np.ndarray
    intercept_stderr: np.ndarray
    calibration_year: int
    samples: int


def fit_var1(
    table: IOTable,
    nu: np.ndarray,
    samples: int = 10_000,
    seed: int = 0,
    dt: float = 0.01,
    burn_in: float = 50.0,
) -> VarModel:
    """Calibrate a sectoral VAR(1) on simulated yearly observations.

    The unshocked economy is integrated by Euler-Maruyama, states are
    recorded at one-year intervals until ``samples`` transition pairs exist,
    and the map is fitted by ordinary least squares with intercepts.
    """
    n = table.n_sectors
    if samples < n + 2:
        raise ValueError(f"samples must be >= N + 2 = {n + 2}")
    stride = int(round(1.0 / dt))
    states = simulate_batch(
        table.coefficients,
        table.demand,
        nu,
        ShockProfile.none(),
        dt=dt,
        horizon=float(samples),
        burn_in=burn_in,
        seed=seed,
        replicas=1,
        record_stride=stride,
    )[0]
    lagged = states[:-1]
    leading = states[1:]
    design = np.column_stack([lagged, np.ones(len(lagged))])
    if np.linalg.matrix_rank(design) < n + 1:
        raise RankDeficientRegressors(
            "yearly states do not span the regressor space (zero noise?)"
        )
    coef, _, _, _ = np.linalg.lstsq(design, leading, rcond=None)
    residuals = leading - design @ coef
    dof = max(len(lagged) - (n + 1), 1)
    sigma2 = (residuals**2).sum(axis=0) / dof
    gram_inv = np.linalg.inv(design.T @ design)
    se = np.sqrt(np.outer(np.diag(gram_inv), sigma2))  # (n+1, n)
    return VarModel(
        ar=coef[:n].T,
        intercept=coef[n],
        ar_stderr=se[:n].T,
        intercept_stderr=se[n],
        calibration_year=table.year,
        samples=samples,
    )


def var_forecast(model: VarModel, state, steps: int = 1) -> np.ndarray:
    """Iterate the fitted map ``steps`` times from the given state."""
    y = np.asarray(state, dtype=float)
    for _ in range(steps):
        y = model.ar @ y + model.intercept
    return y


def perturbed_io_forecast(table: IOTable, shock) -> np.ndarray:
    """Perturbed-equilibrium output change (I - A)^{-1} X for a step shock."""
    x = np.asarray(getattr(shock, "values", shock), dtype=float)
    system = np.eye(table.n_sectors) - table.coefficients
    try:
        return np.linalg.solve(system, x)
    except np.linalg.LinAlgError:
        raise SingularSystem(
            "I - A is singular", condition=float(np.linalg.cond(system))
        ) from None


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def pearson_r(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if len(x) < 3:
        raise ValueError("need at least 3 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("constant sequence has no correlation")
    return float(dx @ dy / math.sqrt(sxx * syy))


@dataclass(frozen=True)
class TTestSummary:
    """One-sample two-sided t-test of mean zero, with a 95% CI."""

    n: int
    mean: float
    ci_low: float
    ci_high: float
    t_stat: float
    p_value: float
    degenerate: bool = False

    @property
    def status(self) -> str:
        return "DegenerateInput" if self.degenerate else "ok"


def t_test_mean_zero(values) -> TTestSummary:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        raise ValueError("need at least 2 values")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    if sd == 0.0:
        return TTestSummary(
            n=n, mean=mean, ci_low=mean, ci_high=mean,
            t_stat=math.nan, p_value=math.nan, degenerate=True,
        )
    se = sd / math.sqrt(n)
    t_stat = mean / se
    p = 2.0 * float(stats.t.sf(abs(t_stat), n - 1))
    half = float(stats.t.ppf(0.975, n - 1)) * se
    return TTestSummary(
        n=n, mean=mean, ci_low=mean - half, ci_high=mean + half,
        t_stat=t_stat, p_value=p,
    )


@dataclass(frozen=True)
class CellScore:
    country: str
    year: int
    r_lrt: float
    r_baseline: float

    @property
    def pg(self) -> float:
        return self.r_lrt - self.r_baseline


@dataclass(frozen=True)
class ForecastEvaluation:
    """Per-cell correlations, predictability gains, and test statistics."""

    target: str
    cells: tuple[CellScore, ...]
    by_year: Mapping[int, TTestSummary]
    pooled: TTestSummary

    @property
    def pooled_pg(self) -> np.ndarray:
        return np.array([c.pg for c in self.cells])


def evaluate_forecasts(
    observed: Mapping[tuple[str, int], np.ndarray],
    anchor: Mapping[tuple[str, int], np.ndarray],
    lrt: Mapping[tuple[str, int], np.ndarray],
    baseline: Mapping[tuple[str, int], np.ndarray],
    target: str = "changes",
) -> ForecastEvaluation:
    """Score two aligned prediction panels against observations.

    Every mapping must cover identical (country, year) cells with vectors of
    identical length (:class:`MisalignedPanel` otherwise).  ``observed`` and
    the predictions hold target-year output levels; ``anchor`` holds the
    observed levels one year earlier, which the default ``"changes"`` target
    subtracts before correlating.  ``"levels"`` correlates the raw levels.
    """
    if target not in ("changes", "levels"):
        raise ValueError(f"unknown target {target!r}")
    keys = sorted(observed)
    for name, panel in (("anchor", anchor), ("lrt", lrt), ("baseline", baseline)):
        if sorted(panel) != keys:
            raise MisalignedPanel(f"{name} predictions cover different cells")
    cells = []
    for c, y in keys:
        obs = np.asarray(observed[(c, y)], dtype=float)
        anc = np.asarray(anchor[(c, y)], dtype=float)
        p_l = np.asarray(lrt[(c, y)], dtype=float)
        p_b = np.asarray(baseline[(c, y)], dtype=float)
        if not (obs.shape == anc.shape == p_l.shape == p_b.shape):
            raise MisalignedPanel(f"vector lengths differ in cell {(c, y)}")
        if target == "changes":
            r_l = pearson_r(obs - anc, p_l - anc)
            r_b = pearson_r(obs - anc, p_b - anc)
        else:
            r_l = pearson_r(obs, p_l)
            r_b = pearson_r(obs, p_b)
        cells.append(CellScore(country=c, year=y, r_lrt=r_l, r_baseline=r_b))

    by_year = {}
    for year in sorted({c.year for c in cells}):
        pg = [c.pg for c in cells if c.year == year]
        if len(pg) >= 2:
            by_year[year] = t_test_mean_zero(pg)
    pooled = t_test_mean_zero([c.pg for c in cells])
    return ForecastEvaluation(
        target=target, cells=tuple(cells), by_year=by_year, pooled=pooled
    )


# ---------------------------------------------------------------------------
# panel benchmark pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkResult:
    evaluation: ForecastEvaluation
    baseline: str
    observed: Mapping[tuple[str, int], np.ndarray]
    anchor: Mapping[tuple[str, int], np.ndarray]
    lrt_predictions: Mapping[tuple[str, int], np.ndarray]
    baseline_predictions: Mapping[tuple[str, int], np.ndarray]


def _arima_cell_forecast(
    series_by_sector: np.ndarray, upto: int, orders, calibration: str
) -> np.ndarray:
    """One-step forecasts of every sector series, history ending at ``upto``."""
    p, d, q = orders
    n_years, n = series_by_sector.shape
    out = np.empty(n)
    for k in range(n):
        full = series_by_sector[:, k]
        history = full[: upto + 1]
        model = fit_arima(full if calibration == "full" else history, p, d, q)
        out[k] = arima_forecast(model, history, 1)[0]
    return out


def benchmark_lrt_vs_baseline(
    panel: Panel,
    baseline: str = "arima",
    orders: tuple[int, int, int] = (1, 1, 1),
    calibration: str = "expanding",
    target: str = "changes",
    var_samples: int = 10_000,
    var_calibration_year: int | None = None,
    nu_builder=None,
    seed: int = 0,
    workers: int = 1,
    lrt_oracle: bool = False,
) -> BenchmarkResult:
    """Two-year-ahead forecast comparison over a complete panel.

    For every country and shock year t with data at t, t+1, and t+2, the
    susceptibility model extracts the implied shock from (t, t+1) and
    predicts the level at t+2; the baseline predicts the same level from its
    own information set (ARIMA: series up to t+1, one step ahead; VAR:
    one application of the fitted yearly map to Y(t+1); perturbed-io: the
    perturbed equilibrium under the same implied shock).  Cells where the
    baseline cannot be fitted yet (short ARIMA history) are skipped.
    Work is distributed over (country, year) cells; results are merged in
    sorted order, so the worker count never changes the output.
    """
    if baseline not in ("arima", "var", "perturbed_io"):
        raise ValueError(f"unknown baseline {baseline!r}")
    countries = panel.countries()
    years = panel.years()
    year_index = {y: k for k, y in enumerate(years)}

    var_models: dict[str, VarModel] = {}
    if baseline == "var":
        from .iodata import DEFAULT_NOISE, noise_covariance

        calib_year = var_calibration_year if var_calibration_year is not None else years[0]
        for c in countries:
            table = panel.get(c, calib_year)
            nu = (
                nu_builder(table)
                if nu_builder is not None
                else noise_covariance(DEFAULT_NOISE, table)
            )
            var_models[c] = fit_var1(table, nu, samples=var_samples, seed=seed)

    p, d, q = orders
    min_obs = p + d + q + 3

    tasks = []
    for c in countries:
        c_years = panel.years(c)
        series = np.stack([panel.get(c, y).output for y in c_years])
        for t in c_years:
            if t + 1 not in c_years or t + 2 not in c_years:
                continue
            if baseline == "arima" and c_years.index(t + 1) + 1 < min_obs:
                continue
            tasks.append((c, t, series, c_years))

    def run_cell(task):
        c, t, series, c_years = task
        table = panel.get(c, t)
        y_t = panel.get(c, t).output
        y_t1 = panel.get(c, t + 1).output
        y_t2 = panel.get(c, t + 2).output
        # the oracle hook replaces predictions by the observations themselves
        # (r_lrt becomes exactly 1), used to validate the evaluation harness
        pred_lrt = y_t2.copy() if lrt_oracle else lrt_forecast(table, y_t, y_t1)
        if baseline == "arima":
            pred_base = _arima_cell_forecast(
                series, c_years.index(t + 1), orders, calibration
            )
        elif baseline == "var":
            # t+1 and t+2 levels come from iterating the fitted yearly map
            pred_base = var_forecast(var_models[c], y_t, steps=2)
        else:
            shock = implied_shock(table, y_t, y_t1)
            pred_base = y_t + perturbed_io_forecast(table, shock)
        return (c, t), y_t2, y_t1, pred_lrt, pred_base

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, tasks))
    else:
        results = [run_cell(t) for t in tasks]

    observed = {}
    anchor = {}
    lrt_pred = {}
    base_pred = {}
    for key, y_t2, y_t1, pred_lrt, pred_base in sorted(results, key=lambda r: r[0]):
        observed[key] = y_t2
        anchor[key] = y_t1
        lrt_pred[key] = pred_lrt
        base_pred[key] = pred_base

    evaluation = evaluate_forecasts(observed, anchor, lrt_pred, base_pred, target=target)
    return BenchmarkResult(
        evaluation=evaluation,
        baseline=baseline,
        observed=observed,
        anchor=anchor,
        lrt_predictions=lrt_pred,
        baseline_predictions=base_pred,
    )


def write_evaluation(result: ForecastEvaluation, stream: TextIO) -> None:
    """Tabular report: per-cell scores, per-year summaries, one pooled line."""
    stream.write("country,year,r_lrt,r_baseline,pg\n")
    for c in result.cells:
        stream.write(f"{c.country},{c.year},{c.r_lrt!r},{c.r_baseline!r},{c.pg!r}\n")
    stream.write("\nyear,mean_pg,ci_low,ci_high,p_value\n")
    for year, summary in sorted(result.by_year.items()):
        stream.write(
            f"{year},{summary.mean!r},{summary.ci_low!r},{summary.ci_high!r},{summary.p_value!r}\n"
        )
    s = result.pooled
    stream.write(f"pooled,{s.mean!r},{s.ci_low!r},{s.ci_high!r},{s.p_value!r}\n")
