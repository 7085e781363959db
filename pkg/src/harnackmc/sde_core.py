"""SDE models, Euler-Maruyama integration and per-path random streams.

Coefficient functions are vectorized over a leading batch axis: ``sigma(t, x)``
takes ``x`` of shape ``(n, d)`` and returns ``(n, d, d)``; ``drift(t, x)``
returns ``(n, d)``. Single-path helpers wrap the state in a batch of one.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import GuardExceeded, NonFinite, SingularSigma

SigmaFn = Callable[[float, np.ndarray], np.ndarray]
DriftFn = Callable[[float, np.ndarray], np.ndarray]

DEFAULT_BATCH = 16384
_CHUNK_STEPS = 256


@dataclass(frozen=True)
class AssumptionConstants:
    """Dissipativity ``K``, ellipticity ``lam`` and oscillation ``delta``.

    ``source="estimated"`` marks empirical extrema over sampled pairs; they are
    witnesses for the true constants, not proofs.
    """

    K: float
    lam: float
    delta: float
    source: Literal["declared", "estimated"] = "declared"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")

    def to_dict(self) -> dict:
        return {"K": self.K, "lambda": self.lam, "delta": self.delta, "source": self.source}


@dataclass(frozen=True)
class ModelSpec:
    dim: int
    sigma: SigmaFn
    drift: DriftFn
    declared_constants: AssumptionConstants | None = None
    guard_radius: float = 1e6
    name: str = "model"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.guard_radius > 0:
            raise ValueError("guard_radius must be positive")

    @property
    def constants(self) -> AssumptionConstants:
        if self.declared_constants is None:
            raise ValueError(
                f"model {self.name!r} has no declared constants; run estimate_constants first"
            )
        return self.declared_constants

    def with_constants(self, constants: AssumptionConstants) -> "ModelSpec":
        return ModelSpec(self.dim, self.sigma, self.drift, constants, self.guard_radius, self.name)


@dataclass(frozen=True)
class RngStreamSpec:
    """Key of one counter-based (Philox) normal stream.

    The stream for ``(master_seed, path_index, substream)`` depends only on the
    triple, so results do not depend on batching or thread scheduling.
    """

    master_seed: int
    path_index: int = 0
    substream: int = 0

    def __post_init__(self):
        if self.path_index < 0 or self.substream < 0:
            raise ValueError("path_index and substream must be nonnegative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(self.path_index, self.substream)
        )
        return np.random.Generator(np.random.Philox(seq))

    def at(self, path_index: int) -> "RngStreamSpec":
        return RngStreamSpec(self.master_seed, path_index, self.substream)


class NormalBlocks:
    """Standard normals for a contiguous range of paths, drawn step-chunk by step-chunk.

    Each path owns its generator and consumes ``dim`` normals per step in order,
    so chunking never changes the values a path sees.
    """

    def __init__(self, base: RngStreamSpec, first_path: int, n_paths: int, dim: int):
        self.dim = dim
        self._gens = [base.at(first_path + i).generator() for i in range(n_paths)]

    def draw(self, n_steps: int) -> np.ndarray:
        out = np.empty((len(self._gens), n_steps, self.dim))
        for i, g in enumerate(self._gens):
            out[i] = g.standard_normal((n_steps, self.dim))
        return out


def thread_count() -> int:
    env = os.environ.get("HARNACK_THREADS")
    n = os.cpu_count() or 1
    if env:
        n = min(n, max(1, int(env)))
    return n


def map_batches(fn: Callable[[int, int], object], n_paths: int, batch_size: int = DEFAULT_BATCH):
    """Apply ``fn(first_path, count)`` over path batches; results come back in path order."""
    starts = list(range(0, n_paths, batch_size))
    jobs = [(s, min(batch_size, n_paths - s)) for s in starts]
    workers = min(thread_count(), len(jobs))
    if workers <= 1:
        return [fn(s, c) for s, c in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def uniform_grid(T: float, dt: float) -> np.ndarray:
    """Grid ``0, dt, 2dt, ...`` whose last point is exactly ``T``."""
    if not (dt > 0 and T > 0):
        raise ValueError("T and dt must be positive")
    if dt > T:
        raise ValueError(f"dt={dt} exceeds T={T}")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    grid = np.arange(n + 1, dtype=float) * dt
    grid[-1] = T
    return grid


def sigma_times(sig: np.ndarray, v: np.ndarray) -> np.ndarray:
    # explicit reduction keeps every row's arithmetic independent of batch size
    return (sig * v[:, None, :]).sum(axis=-1)


def sigma_solve(sig: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rows of ``sigma^{-1} v``."""
    if sig.shape[-1] == 1:
        return v / sig[:, :, 0]
    return np.linalg.solve(sig, v[..., None])[..., 0]


def euler_increment(model: ModelSpec, t: float, X: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
    return X + sigma_times(model.sigma(t, X), dW) + model.drift(t, X) * dt


def step_euler(model: ModelSpec, t: float, x, dt: float, dW) -> np.ndarray:
    """One Euler-Maruyama step ``x + sigma(t,x) dW + b(t,x) dt`` for a single state."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float).reshape(1, model.dim)
    dW = np.asarray(dW, dtype=float).reshape(1, model.dim)
    out = euler_increment(model, t, x, dt, dW)[0]
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"non-finite state at t={t + dt}")
    if np.linalg.norm(out) > model.guard_radius:
        raise GuardExceeded(f"|x|={np.linalg.norm(out):.3g} > guard {model.guard_radius}", t + dt)
    return out


def escaped(model: ModelSpec, X: np.ndarray) -> np.ndarray:
    """Rows that are non-finite or outside the guard ball."""
    with np.errstate(invalid="ignore", over="ignore"):
        norms = np.sqrt((X * X).sum(axis=-1))
    return ~(norms <= model.guard_radius)


@dataclass
class PathBatch:
    """Terminal states of a batch of independent paths.

    ``guard_time`` is ``nan`` for paths that stayed inside the guard ball;
    escaped paths are frozen at their last good state.
    """

    terminal: np.ndarray
    guard_time: np.ndarray
    grid: np.ndarray
    states: np.ndarray | None = None

    @property
    def escaped(self) -> np.ndarray:
        return ~np.isnan(self.guard_time)


def _simulate_block(model, x0, grid, base, first, count, record):
    d = model.dim
    X = np.broadcast_to(np.asarray(x0, dtype=float).reshape(1, d), (count, d)).copy()
    gtime = np.full(count, np.nan)
    states = np.empty((count, len(grid), d)) if record else None
    if record:
        states[:, 0] = X
    noise = NormalBlocks(base, first, count, d)
    dts = np.diff(grid)
    n = len(dts)
    for c0 in range(0, n, _CHUNK_STEPS):
        Z = noise.draw(min(_CHUNK_STEPS, n - c0))
        for j in range(Z.shape[1]):
            k = c0 + j
            dt = dts[k]
            Xn = euler_increment(model, grid[k], X, dt, Z[:, j] * math.sqrt(dt))
            bad = escaped(model, Xn)
            alive = np.isnan(gtime)
            newly = bad & alive
            if newly.any():
                gtime[newly] = grid[k + 1]
            keep = alive & ~bad
            X = np.where(keep[:, None], Xn, X)
            if record:
                states[:, k + 1] = X
    return X, gtime, states


def simulate_batch(
    model: ModelSpec,
    x0,
    T: float,
    dt: float,
    stream: RngStreamSpec,
    n_paths: int,
    record: bool = False,
    batch_size: int = DEFAULT_BATCH,
) -> PathBatch:
    """Simulate paths ``stream.path_index, ..., stream.path_index + n_paths - 1``."""
    grid = uniform_grid(T, dt)

    def run(first, count):
        return _simulate_block(model, x0, grid, stream, stream.path_index + first, count, record)

    parts = map_batches(run, n_paths, batch_size)
    terminal = np.concatenate([p[0] for p in parts])
    gtime = np.concatenate([p[1] for p in parts])
    states = np.concatenate([p[2] for p in parts]) if record else None
    return PathBatch(terminal, gtime, grid, states)


def simulate_path(model: ModelSpec, x0, T: float, dt: float, stream: RngStreamSpec):
    """Single Euler path on a grid ending exactly at ``T``; returns ``(times, states)``."""
    batch = simulate_batch(model, x0, T, dt, stream, 1, record=True)
    if batch.escaped[0]:
        raise GuardExceeded(
            f"path left the guard ball of radius {model.guard_radius}", float(batch.guard_time[0])
        )
    return batch.grid, batch.states[0]


@dataclass
class ConstantsTrace:
    """Running extrema over the first ``k`` sampled pairs, for ``k = 1..n``."""

    K: np.ndarray
    lam: np.ndarray
    delta: np.ndarray
    skipped: int = 0
    extra: dict = field(default_factory=dict)


def _pair_quantities(model: ModelSpec, t: float, xs: np.ndarray, ys: np.ndarray):
    sx, sy = model.sigma(t, xs), model.sigma(t, ys)
    bx, by = model.drift(t, xs), model.drift(t, ys)
    z = xs - ys
    nz2 = (z * z).sum(axis=-1)
    ds = sx - sy
    hs2 = (ds * ds).sum(axis=(-2, -1))
    k_ratio = (hs2 + 2.0 * ((bx - by) * z).sum(axis=-1)) / nz2
    dz = sigma_times(ds, z)
    d_ratio = np.sqrt((dz * dz).sum(axis=-1) / nz2)
    if model.dim == 1:
        smin = np.minimum(np.abs(sx[:, 0, 0]), np.abs(sy[:, 0, 0]))
    else:
        smin = np.minimum(
            np.linalg.svd(sx, compute_uv=False)[:, -1], np.linalg.svd(sy, compute_uv=False)[:, -1]
        )
    return k_ratio, d_ratio, smin


def sample_pairs(box, n_pairs: int, stream: RngStreamSpec):
    """Pairs in ``box`` mixing far-apart and nearby points.

    Even-indexed pairs are two independent uniform points; odd-indexed pairs put
    ``y`` at a log-uniform distance from ``x`` (clipped into the box), which is
    where Lipschitz-type suprema are approached. Each pair consumes a fixed
    number of variates, so the first ``k`` pairs never depend on ``n_pairs``.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("probe box is degenerate")
    d = lo.size
    u = stream.generator().random((n_pairs, 2 * d + 1))
    width = hi - lo
    xs = lo + width * u[:, :d]
    far = lo + width * u[:, d : 2 * d]
    direction = 2.0 * u[:, d : 2 * d] - 1.0
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    radius = 10.0 ** (-4.0 + 4.0 * u[:, 2 * d]) * width.max()
    near = np.clip(xs + radius[:, None] * direction, lo, hi)
    odd = (np.arange(n_pairs) % 2 == 1)[:, None]
    return xs, np.where(odd, near, far)


def constants_trace(model: ModelSpec, probe_box, n_pairs: int, stream: RngStreamSpec, t: float = 0.0) -> ConstantsTrace:
    if n_pairs < 2:
        raise ValueError("n_pairs must be >= 2")
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (model.dim,)) for b in probe_box)
    xs, ys = sample_pairs((lo, hi), n_pairs, stream)
    scale = max(1.0, float(np.abs(np.concatenate([lo, hi])).max()))
    ok = np.linalg.norm(xs - ys, axis=1) > 1e-12 * scale
    k_ratio = np.full(n_pairs, -np.inf)
    d_ratio = np.zeros(n_pairs)
    smin = np.full(n_pairs, np.inf)
    if ok.any():
        k_ratio[ok], d_ratio[ok], smin[ok] = _pair_quantities(model, t, xs[ok], ys[ok])
    if np.any(smin[ok] <= 0):
        raise SingularSigma("sigma has a nonpositive singular value inside the probe box")
    return ConstantsTrace(
        K=np.maximum.accumulate(k_ratio),
        lam=np.minimum.accumulate(smin),
        delta=np.maximum.accumulate(d_ratio),
        skipped=int((~ok).sum()),
    )


def estimate_constants(
    model: ModelSpec, probe_box, n_pairs: int, stream: RngStreamSpec, t: float = 0.0
) -> AssumptionConstants:
    """Empirical ``(K, lam, delta)`` over sampled pairs in ``probe_box = (lo, hi)``.

    Pairs closer than machine tolerance are skipped.
    """
    tr = constants_trace(model, probe_box, n_pairs, stream, t)
    if not np.isfinite(tr.K[-1]):
        raise ValueError("every sampled pair was degenerate")
    return AssumptionConstants(float(tr.K[-1]), float(tr.lam[-1]), float(tr.delta[-1]), "estimated")


def as_state(v, dim: int) -> np.ndarray:
    """Coerce a scalar or sequence into a state vector of length ``dim``."""
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size == 1 and dim > 1:
        a = np.full(dim, float(a[0]))
    if a.shape != (dim,):
        raise ValueError(f"expected a state of dimension {dim}, got shape {a.shape}")
    return a


__all__: Sequence[str] = [
    "AssumptionConstants",
    "ModelSpec",
    "RngStreamSpec",
    "NormalBlocks",
    "PathBatch",
    "step_euler",
    "simulate_path",
    "simulate_batch",
    "estimate_constants",
    "constants_trace",
    "uniform_grid",
]
