"""Coupling by change of measure with a drift that blows up at the horizon.

The pair ``(X, Y)`` is driven by one Brownian increment stream. Under ``P``
``X`` is the plain diffusion and ``Y`` carries the extra drift
``xi_t^{-1} sigma(Y) sigma(X)^{-1} (X - Y)``; under ``Q`` the same system is
written with ``Y`` plain and ``X`` pulled towards it by ``-(X - Y) / xi_t``.
For the Euler scheme both forms are the same recursion with relabelled
increments, so the discrete log-weight is an exact discrete martingale.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.special import exprel

from .bounds import check_theta, theta_for_power  # noqa: F401  (re-exported)
from .errors import GuardExceeded, NonFinite, XiUnderflow
from .sde_core import (
    DEFAULT_BATCH,
    ModelSpec,
    NormalBlocks,
    RngStreamSpec,
    as_state,
    escaped,
    map_batches,
    sigma_solve,
    sigma_times,
)

Measure = Literal["P", "Q"]

COUPLED, NOT_COUPLED, GUARD, XI_UNDERFLOW = 0, 1, 2, 3
STATUS_NAMES = {
    COUPLED: "CoupledBeforeT",
    NOT_COUPLED: "NotCoupled",
    GUARD: "GuardExceeded",
    XI_UNDERFLOW: "XiUnderflow",
}

_CHUNK_STEPS = 256


def xi_schedule(t, T: float, K: float, theta: float):
    """``(2 - theta) / K * (1 - exp(K (t - T)))``, continuous through ``K = 0``."""
    t = np.asarray(t, dtype=float)
    out = (2.0 - theta) * (T - t) * exprel(K * (t - T))
    return float(out) if out.ndim == 0 else out


def xi_derivative(t, T: float, K: float, theta: float):
    out = -(2.0 - theta) * np.exp(K * (np.asarray(t, dtype=float) - T))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RefinementPolicy:
    """Step size ``dt(t) = dt_base * min(1, xi_t / xi_ref)``, floored at ``floor_factor * dt_base``.

    ``xi_ref = xi_ref_frac * T``; ``xi_ref_frac=None`` uses ``xi_ref = xi_0``,
    which refines from the first step on. Either way each step moves ``X - Y``
    by at most a fraction ``dt_base / xi_ref`` of itself through the coupling drift.
    """

    xi_ref_frac: float | None = 0.05
    floor_factor: float = 1e-4

    def xi_ref(self, xi0: float, T: float) -> float:
        return xi0 if self.xi_ref_frac is None else self.xi_ref_frac * T


@dataclass(frozen=True)
class CouplingConfig:
    x: tuple
    y: tuple
    T: float
    theta: float = 1.0
    dt_base: float = 1e-3
    refinement: RefinementPolicy = field(default_factory=RefinementPolicy)
    measure: Measure = "Q"
    couple_eps: float | None = None
    xi_floor_factor: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        object.__setattr__(self, "y", tuple(float(v) for v in np.atleast_1d(self.y)))
        if len(self.x) != len(self.y):
            raise ValueError("x and y must have the same dimension")
        check_theta(self.theta)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 < self.dt_base < self.T:
            raise ValueError("need 0 < dt_base < T")
        if self.measure not in ("P", "Q"):
            raise ValueError("measure must be 'P' or 'Q'")
        if self.couple_eps is None:
            object.__setattr__(self, "couple_eps", 1e-6 * self.dist + 1e-12)
        if not self.couple_eps > 0:
            raise ValueError("couple_eps must be positive")

    @property
    def dist(self) -> float:
        return float(np.linalg.norm(np.subtract(self.x, self.y)))

    @property
    def xi_floor(self) -> float:
        return self.xi_floor_factor * self.T


def coupling_grid(config: CouplingConfig, K: float) -> np.ndarray:
    """Deterministic time grid refined geometrically towards ``T``; ends exactly at ``T``."""
    T, theta = config.T, config.theta
    xi0 = xi_schedule(0.0, T, K, theta)
    xi_ref = config.refinement.xi_ref(xi0, T)
    dt_floor = config.dt_base * config.refinement.floor_factor
    times = [0.0]
    t = 0.0
    while True:
        dt = max(config.dt_base * min(1.0, xi_schedule(t, T, K, theta) / xi_ref), dt_floor)
        t_next = t + dt
        if t_next >= T - 0.5 * dt_floor:
            times.append(T)
            break
        times.append(t_next)
        t = t_next
    return np.asarray(times)


@dataclass
class CoupledTrajectory:
    """One coupled pair on the refined grid.

    ``dB`` holds the driving increments (``B`` under ``P``, the shifted
    Brownian motion under ``Q``); ``quad`` is the running
    ``int |X - Y|^2 / xi^2 dt``. Entries after ``tau`` have ``X == Y``.
    """

    grid: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    xi: np.ndarray
    log_R: np.ndarray
    quad: np.ndarray
    dB: np.ndarray
    merged: np.ndarray
    tau: float | None
    status: str
    measure: Measure


@dataclass
class CoupledBatch:
    """Terminal quantities for a range of coupled pairs."""

    X_T: np.ndarray
    Y_T: np.ndarray
    log_R: np.ndarray
    quad: np.ndarray
    tau: np.ndarray
    status: np.ndarray
    grid: np.ndarray
    xi: np.ndarray
    snapshot_index: np.ndarray
    snapshots: np.ndarray | None = None
    record: dict | None = None

    @property
    def coupled_fraction(self) -> float:
        return float(np.mean(self.status == COUPLED))

    @property
    def guard_fraction(self) -> float:
        return float(np.mean(self.status == GUARD))

    def status_counts(self) -> dict:
        return {name: int(np.sum(self.status == code)) for code, name in STATUS_NAMES.items()}


def _coupled_block(model: ModelSpec, cfg: CouplingConfig, grid, xi, base, first, count,
                   record, snap_idx):
    d = model.dim
    to_q = cfg.measure == "Q"
    X = np.tile(np.asarray(cfg.x), (count, 1))
    Y = np.tile(np.asarray(cfg.y), (count, 1))
    log_r = np.zeros(count)
    quad = np.zeros(count)
    status = np.full(count, NOT_COUPLED, dtype=np.int8)
    tau = np.full(count, np.nan)
    merged = np.linalg.norm(X - Y, axis=1) <= cfg.couple_eps
    if merged.any():
        if to_q:
            X[merged] = Y[merged]
        else:
            Y[merged] = X[merged]
        tau[merged] = 0.0
    live = np.ones(count, dtype=bool)
    n = len(grid) - 1
    snaps = np.empty((count, len(snap_idx))) if len(snap_idx) else None
    snap_pos = {int(k): j for j, k in enumerate(snap_idx)}
    rec = None
    if record:
        rec = {
            "X": np.empty((count, n + 1, d)), "Y": np.empty((count, n + 1, d)),
            "log_R": np.empty((count, n + 1)), "quad": np.empty((count, n + 1)),
            "merged": np.empty((count, n + 1), dtype=bool), "dB": np.empty((count, n, d)),
        }
        rec["X"][:, 0], rec["Y"][:, 0] = X, Y
        rec["log_R"][:, 0], rec["quad"][:, 0], rec["merged"][:, 0] = 0.0, 0.0, merged

    def snapshot(k):
        if snaps is not None and k in snap_pos:
            Zs = X - Y
            snaps[:, snap_pos[k]] = (Zs * Zs).sum(axis=1)

    snapshot(0)
    noise = NormalBlocks(base, first, count, d)
    dts = np.diff(grid)
    for c0 in range(0, n, _CHUNK_STEPS):
        G = noise.draw(min(_CHUNK_STEPS, n - c0))
        for j in range(G.shape[1]):
            k = c0 + j
            t, dt, xk = grid[k], dts[k], xi[k]
            dB = G[:, j] * math.sqrt(dt)
            Zd = X - Y
            pending = live & ~merged
            if xk < cfg.xi_floor and pending.any():
                status[pending] = XI_UNDERFLOW
                live &= ~pending
                pending[:] = False
            sx = model.sigma(t, X)
            bx = model.drift(t, X)
            u = sigma_solve(sx, Zd) / xk
            u[~pending] = 0.0
            stoch = (u * dB).sum(axis=1)
            uu = (u * u).sum(axis=1) * dt
            zz = np.where(pending, (Zd * Zd).sum(axis=1), 0.0)
            Xn = X + sigma_times(sx, dB) + bx * dt
            if to_q:
                Yn = Y + sigma_times(model.sigma(t, Y), dB) + model.drift(t, Y) * dt
                Xn = Xn - Zd * (dt / xk)
                log_r_n = log_r - stoch + 0.5 * uu
            else:
                sy = model.sigma(t, Y)
                Yn = Y + sigma_times(sy, dB) + model.drift(t, Y) * dt + sigma_times(sy, u) * dt
                log_r_n = log_r - stoch - 0.5 * uu
            quad_n = quad + zz * (dt / xk**2)
            # merged pairs follow the plain path of the chosen measure
            if to_q:
                Xn = np.where(merged[:, None], Yn, Xn)
            else:
                Yn = np.where(merged[:, None], Xn, Yn)
            hit = pending & (np.linalg.norm(Xn - Yn, axis=1) <= cfg.couple_eps)
            if hit.any():
                if to_q:
                    Xn[hit] = Yn[hit]
                else:
                    Yn[hit] = Xn[hit]
                tau[hit] = grid[k + 1]
                merged |= hit
            bad = live & (escaped(model, Xn) | escaped(model, Yn))
            if bad.any():
                status[bad] = GUARD
                live &= ~bad
            if not np.all(np.isfinite(log_r_n[live])):
                raise NonFinite(f"log-weight overflowed at t={grid[k + 1]}")
            keep = live[:, None]
            X = np.where(keep, Xn, X)
            Y = np.where(keep, Yn, Y)
            log_r = np.where(live, log_r_n, log_r)
            quad = np.where(live, quad_n, quad)
            if rec is not None:
                rec["X"][:, k + 1], rec["Y"][:, k + 1] = X, Y
                rec["log_R"][:, k + 1], rec["quad"][:, k + 1] = log_r, quad
                rec["merged"][:, k + 1] = merged
                rec["dB"][:, k] = dB
            snapshot(k + 1)
    status[(status == NOT_COUPLED) & merged] = COUPLED
    return X, Y, log_r, quad, tau, status, snaps, rec


def simulate_coupled_batch(
    model: ModelSpec,
    config: CouplingConfig,
    stream: RngStreamSpec,
    n_paths: int,
    record: bool = False,
    snapshot_times: Sequence[float] = (),
    batch_size: int = DEFAULT_BATCH,
) -> CoupledBatch:
    """Coupled pairs for paths ``stream.path_index .. + n_paths - 1``.

    ``snapshot_times`` selects grid points (nearest from below) at which
    ``|X_t - Y_t|^2`` is kept for every path.
    """
    as_state(config.x, model.dim)
    K = model.constants.K
    grid = coupling_grid(config, K)
    xi = xi_schedule(grid, config.T, K, config.theta)
    snap_idx = np.unique(
        np.clip(np.searchsorted(grid, np.asarray(snapshot_times, dtype=float), side="right") - 1,
                0, len(grid) - 1)
    ) if len(snapshot_times) else np.zeros(0, dtype=int)

    def run(first, count):
        return _coupled_block(model, config, grid, xi, stream, stream.path_index + first, count,
                              record, snap_idx)

    parts = map_batches(run, n_paths, batch_size)
    cat = lambda i: np.concatenate([p[i] for p in parts])  # noqa: E731
    snaps = cat(6) if len(snap_idx) else None
    rec = None
    if record:
        rec = {key: np.concatenate([p[7][key] for p in parts]) for key in parts[0][7]}
    return CoupledBatch(cat(0), cat(1), cat(2), cat(3), cat(4), cat(5), grid, xi, snap_idx, snaps, rec)


def trajectory(batch: CoupledBatch, i: int, measure: Measure) -> CoupledTrajectory:
    if batch.record is None:
        raise ValueError("batch was simulated without record=True")
    r = batch.record
    tau = batch.tau[i]
    return CoupledTrajectory(
        grid=batch.grid, X=r["X"][i], Y=r["Y"][i], xi=batch.xi, log_R=r["log_R"][i],
        quad=r["quad"][i], dB=r["dB"][i], merged=r["merged"][i],
        tau=None if np.isnan(tau) else float(tau), status=STATUS_NAMES[int(batch.status[i])],
        measure=measure,
    )


def simulate_coupled_pair(model: ModelSpec, config: CouplingConfig, stream: RngStreamSpec) -> CoupledTrajectory:
    """One recorded coupled pair.

    Raises :class:`GuardExceeded` or :class:`XiUnderflow` with the truncated
    trajectory attached as ``.trajectory``.
    """
    batch = simulate_coupled_batch(model, config, stream, 1, record=True)
    traj = trajectory(batch, 0, config.measure)
    if traj.status in ("GuardExceeded", "XiUnderflow"):
        frozen = np.flatnonzero(np.any(np.diff(traj.X, axis=0) != 0, axis=1) |
                                np.any(np.diff(traj.Y, axis=0) != 0, axis=1))
        last = int(frozen[-1]) + 1 if frozen.size else 0
        err_cls = GuardExceeded if traj.status == "GuardExceeded" else XiUnderflow
        err = err_cls(f"coupled pair stopped with status {traj.status} near t={traj.grid[last]}")
        err.time = float(traj.grid[min(last + 1, len(traj.grid) - 1)])
        err.trajectory = traj
        raise err
    return traj


def girsanov_log_weight(traj: CoupledTrajectory, model: ModelSpec, config: CouplingConfig) -> float:
    """Recompute ``log R`` at ``T`` from a recorded trajectory, left-point (Ito) sums.

    ``UnderP``: ``-sum <u, dB> - 1/2 sum |u|^2 dt``; ``UnderQ``: ``+ 1/2`` on the
    quadratic term, with ``u = sigma(X)^{-1} (X - Y) / xi``. Nothing is added
    once the pair has merged.
    """
    sign = 0.5 if config.measure == "Q" else -0.5
    dts = np.diff(traj.grid)
    total = 0.0
    for k in range(len(dts)):
        if traj.merged[k]:
            break
        x, z = traj.X[k][None, :], (traj.X[k] - traj.Y[k])[None, :]
        u = sigma_solve(model.sigma(traj.grid[k], x), z)[0] / traj.xi[k]
        total += -float(u @ traj.dB[k]) + sign * float(u @ u) * dts[k]
    if not math.isfinite(total):
        raise NonFinite("log-weight is not finite")
    return total


def write_trajectory_csv(path, trajectories: Iterable[tuple[int, CoupledTrajectory]]) -> None:
    """Columns: ``path_id, t, X_1..X_d, Y_1..Y_d, xi, log_R, merged``."""
    rows = list(trajectories)
    d = rows[0][1].X.shape[1] if rows else 1
    header = (["path_id", "t"] + [f"X_{i + 1}" for i in range(d)] + [f"Y_{i + 1}" for i in range(d)]
              + ["xi", "log_R", "merged"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for pid, tr in rows:
            for k, t in enumerate(tr.grid):
                w.writerow([pid, repr(float(t)), *map(repr, tr.X[k].tolist()),
                            *map(repr, tr.Y[k].tolist()), repr(float(tr.xi[k])),
                            repr(float(tr.log_R[k])), int(tr.merged[k])])
