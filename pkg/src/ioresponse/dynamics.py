"""Time evolution of the linear production network.

The economy relaxes toward its fixed point ``Y0 = (I - A)^{-1} D`` under the
drift matrix ``M = A - I`` while being driven by white noise with covariance
``nu`` and, optionally, an external demand shock ``X(t)``:

    dY = [(A - I) Y + D + X(t)] dt + dW,   cov(dW) = nu dt.

This module provides the fixed point, the stationary and lagged covariances
of the unshocked process, and Euler-Maruyama sampling of trajectories.  All
randomness flows through :mod:`ioresponse.rng`, so a seed pins a trajectory
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

from .errors import (
    NumericalBlowup,
    NumericalError,
    SingularSystem,
    UnstableDrift,
)
from .iodata import IOTable
from .rng import GaussianStream

#: Relative residual allowed for the equilibrium solve.
EQUILIBRIUM_RTOL = 1e-10
#: Relative Frobenius residual allowed for the Lyapunov solve.
LYAPUNOV_RTOL = 1e-9
#: A state is declared blown up beyond this multiple of ||Y0||_inf.
BLOWUP_FACTOR = 1e12

DEFAULT_DT = 0.01
DEFAULT_BURN_IN = 50.0

_NOISE_CHUNK = 16384


def drift_matrix(coefficients: np.ndarray) -> np.ndarray:
    """M = A - I."""
    a = np.asarray(coefficients, dtype=float)
    return a - np.eye(a.shape[0])


def equilibrium_output(coefficients: np.ndarray, demand: np.ndarray) -> np.ndarray:
    """Solve (I - A) Y0 = D directly, with one step of iterative refinement.

    Raises :class:`SingularSystem` when the system is numerically singular or
    the refined residual still exceeds ``EQUILIBRIUM_RTOL * ||D||_inf``.
    """
    a = np.asarray(coefficients, dtype=float)
    d = np.asarray(demand, dtype=float)
    system = np.eye(a.shape[0]) - a
    try:
        y = np.linalg.solve(system, d)
        y = y + np.linalg.solve(system, d - system @ y)
    except np.linalg.LinAlgError:
        raise SingularSystem(
            "I - A is singular", condition=float(np.linalg.cond(system))
        ) from None
    scale = max(float(np.max(np.abs(d))), np.finfo(float).tiny)
    residual = float(np.max(np.abs(system @ y - d)))
    if not np.all(np.isfinite(y)) or residual > EQUILIBRIUM_RTOL * scale:
        raise SingularSystem(
            f"equilibrium residual {residual:.3e} exceeds tolerance",
            condition=float(np.linalg.cond(system)),
        )
    return y


def is_hurwitz(m: np.ndarray) -> bool:
    """True when every eigenvalue of m has strictly negative real part."""
    return bool(np.max(np.linalg.eigvals(np.asarray(m, dtype=float)).real) < 0.0)


def stationary_covariance(coefficients: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Stationary covariance sigma of the unshocked process.

    sigma solves the continuous Lyapunov equation
    ``M sigma + sigma M^T + nu = 0`` with ``M = A - I``.
    """
    m = drift_matrix(coefficients)
    nu = np.asarray(nu, dtype=float)
    if not is_hurwitz(m):
        raise UnstableDrift("A - I has an eigenvalue with nonnegative real part")
    sigma = solve_continuous_lyapunov(m, -nu)
    sigma = 0.5 * (sigma + sigma.T)
    scale = max(float(np.linalg.norm(nu)), np.finfo(float).tiny)
    residual = float(np.linalg.norm(m @ sigma + sigma @ m.T + nu))
    if residual > LYAPUNOV_RTOL * scale:
        raise NumericalError(
            f"Lyapunov residual {residual:.3e} exceeds {LYAPUNOV_RTOL:.0e} "
            "relative tolerance"
        )
    return sigma


def lagged_covariance(
    coefficients: np.ndarray,
    nu: np.ndarray,
    tau: float,
    sigma: np.ndarray | None = None,
) -> np.ndarray:
    """Equilibrium lagged covariance C(tau) = exp(M tau) sigma, tau >= 0.

    Entry (k, j) is the centered correlation <y_k(t + tau) y_j(t)>.  Pass a
    precomputed ``sigma`` to avoid re-solving the Lyapunov equation on grids.
    """
    if tau < 0.0:
        raise ValueError("tau must be >= 0")
    if sigma is None:
        sigma = stationary_covariance(coefficients, nu)
    if tau == 0.0:
        return sigma
    return expm(drift_matrix(coefficients) * tau) @ sigma


# ---------------------------------------------------------------------------
# shocks and trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShockProfile:
    """External demand shock X(t).

    Kinds: ``none``; ``impulse`` (delta of weight ``vector`` at ``t0``);
    ``step`` (``vector`` switched on from ``t0``); ``tabulated`` (linear
    interpolation of ``values`` on the strictly increasing ``times`` grid,
    zero outside it).
    """

    kind: str
    vector: np.ndarray | None = None
    t0: float = 0.0
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    @classmethod
    def none(cls) -> "ShockProfile":
        return cls(kind="none")

    @classmethod
    def impulse(cls, vector, t0: float = 0.0) -> "ShockProfile":
        return cls(kind="impulse", vector=np.asarray(vector, dtype=float), t0=float(t0))

    @classmethod
    def step(cls, vector, t0: float = 0.0) -> "ShockProfile":
        return cls(kind="step", vector=np.asarray(vector, dtype=float), t0=float(t0))

    @classmethod
    def tabulated(cls, times, values) -> "ShockProfile":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("tabulated shock needs at least two grid points")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("tabulated shock grid must be strictly increasing")
        if values.shape[0] != times.shape[0]:
            raise ValueError("times and values must have matching first dimension")
        return cls(kind="tabulated", times=times, values=values)

    def check_dimension(self, n: int) -> None:
        if self.kind in ("impulse", "step") and self.vector.shape != (n,):
            raise ValueError(f"shock vector must have length {n}")
        if self.kind == "tabulated" and self.values.shape[1] != n:
            raise ValueError(f"tabulated shock vectors must have length {n}")

    def drift_at(self, t: float, n: int) -> np.ndarray | None:
        """Additive drift contribution at time t (impulse handled separately)."""
        if self.kind == "step" and t >= self.t0:
            return self.vector
        if self.kind == "tabulated":
            if t < self.times[0] or t > self.times[-1]:
                return None
            out = np.empty(n)
            for k in range(n):
                out[k] = np.interp(t, self.times, self.values[:, k])
            return out
        return None


@dataclass(frozen=True)
class Trajectory:
    """A sampled path of sectoral outputs."""

    dt: float
    t_start: float
    states: np.ndarray  # (steps + 1, N)
    seed: int
    shock: ShockProfile

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.states.shape[0])


def _noise_transform(nu: np.ndarray):
    """Factor nu = F F^T; returns None for zero noise, or ('diag', s)/('full', F)."""
    nu = np.asarray(nu, dtype=float)
    if not nu.any():
        return None
    off = nu - np.diag(np.diag(nu))
    if not off.any():
        diag = np.diag(nu)
        if np.any(diag < 0.0):
            raise ValueError("noise covariance has negative diagonal entries")
        return ("diag", np.sqrt(diag))
    w, v = np.linalg.eigh(0.5 * (nu + nu.T))
    if np.min(w) < -1e-12 * max(np.max(np.abs(w)), 1.0):
        raise ValueError("noise covariance is not positive semidefinite")
    return ("full", v * np.sqrt(np.clip(w, 0.0, None)))


def simulate_batch(
    coefficients: np.ndarray,
    demand: np.ndarray,
    nu: np.ndarray,
    shock: ShockProfile,
    dt: float,
    horizon: float,
    burn_in: float,
    seed: int,
    replicas: int,
    record_stride: int = 1,
) -> np.ndarray:
    """Euler-Maruyama integration of ``replicas`` independent paths.

    Returns states of shape (replicas, n_records, N) sampled every
    ``record_stride`` steps starting at t = 0 (the end of the burn-in, where
    every path sits at the deterministic fixed point Y0 when the run begins).
    Shock times refer to the recorded clock; the burn-in occupies t < 0.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if horizon <= 0.0:
        raise ValueError("horizon must be > 0")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    a = np.asarray(coefficients, dtype=float)
    d = np.asarray(demand, dtype=float)
    n = a.shape[0]
    shock.check_dimension(n)
    m = drift_matrix(a)
    y0 = equilibrium_output(a, d)

    burn_steps = int(round(burn_in / dt))
    rec_steps = int(round(horizon / dt))
    if rec_steps % record_stride != 0:
        raise ValueError("horizon must be a whole number of record strides")
    total_steps = burn_steps + rec_steps
    n_records = rec_steps // record_stride + 1
    out = np.empty((replicas, n_records, n))

    transform = _noise_transform(nu)
    stream = GaussianStream(seed) if transform is not None else None
    sqrt_dt = np.sqrt(dt)
    blow_cap = BLOWUP_FACTOR * max(float(np.max(np.abs(y0))), 1.0)

    impulse_step = None
    if shock.kind == "impulse":
        impulse_step = burn_steps + int(np.floor(shock.t0 / dt + 1e-9))

    y = np.tile(y0, (replicas, 1))
    record_at = 0
    step = 0
    # overflow inside a diverging run is caught by the blowup check below
    with np.errstate(over="ignore", invalid="ignore"):
        while step < total_steps:
            chunk = min(_NOISE_CHUNK, total_steps - step)
            if transform is not None:
                draws = stream.normals((chunk, replicas, n))
                if transform[0] == "diag":
                    noise = draws * transform[1][None, None, :]
                else:
                    noise = draws @ transform[1].T
            for k in range(chunk):
                if step >= burn_steps and (step - burn_steps) % record_stride == 0:
                    out[:, record_at] = y
                    record_at += 1
                t = (step - burn_steps) * dt
                drift = y @ m.T + d
                extra = shock.drift_at(t, n)
                if extra is not None:
                    drift = drift + extra
                y = y + drift * dt
                if transform is not None:
                    y = y + noise[k] * sqrt_dt
                if impulse_step is not None and step == impulse_step:
                    y = y + shock.vector
                step += 1
            peak = float(np.max(np.abs(y)))
            if not np.isfinite(peak) or peak > blow_cap:
                raise NumericalBlowup(
                    f"state magnitude exceeded {BLOWUP_FACTOR:.0e} x ||Y0||_inf "
                    f"at t = {(step - burn_steps) * dt:.4g}"
                )
        out[:, record_at] = y
    return out


def simulate_trajectory(
    table: IOTable,
    nu: np.ndarray,
    shock: ShockProfile,
    dt: float = DEFAULT_DT,
    horizon: float = 10.0,
    burn_in: float = DEFAULT_BURN_IN,
    seed: int = 0,
) -> Trajectory:
    """Simulate one path of the driven economy; see :func:`simulate_batch`."""
    states = simulate_batch(
        table.coefficients,
        table.demand,
        nu,
        shock,
        dt=dt,
        horizon=horizon,
        burn_in=burn_in,
        seed=seed,
        replicas=1,
    )[0]
    return Trajectory(dt=dt, t_start=0.0, states=states, seed=seed, shock=shock)


def write_trajectory(traj: Trajectory, stream: TextIO) -> None:
    """Tabular export, one row per step: t,Y_1,...,Y_N at full precision."""
    n = traj.states.shape[1]
    stream.write("t," + ",".join(f"Y_{k + 1}" for k in range(n)) + "\n")
    for t, row in zip(traj.times, traj.states):
        stream.write(
            format(t, ".17g") + "," + ",".join(format(v, ".17g") for v in row) + "\n"
        )
