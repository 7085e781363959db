"""Monte Carlo semigroup estimates and verifiers for the Harnack-type inequalities."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, NamedTuple

import numpy as np

from . import bounds
from .coupling import COUPLED, GUARD, CouplingConfig, RefinementPolicy, simulate_coupled_batch
from .errors import DeltaZero, MonteCarloAbort
from .functions import TestFunction, validate_at_least_one
from .sde_core import AssumptionConstants, ModelSpec, RngStreamSpec, as_state, simulate_batch

Verdict = Literal["Holds", "HoldsWithinNoise", "Violated"]

GUARD_ABORT_FRACTION = 1e-3

# substreams, so direct and coupled estimates never share noise
SUB_COUPLED, SUB_FROM_X, SUB_FROM_Y, SUB_PROBE = 0, 1, 2, 3


def mean_se(values: np.ndarray) -> tuple[float, float]:
    """Sample mean and its standard error; pairwise summation keeps it order-stable."""
    v = np.asarray(values, dtype=float)
    n = v.size
    m = float(np.mean(v))
    if n < 2:
        return m, 0.0
    return m, float(np.std(v, ddof=1) / math.sqrt(n))


def _slack(lhs, rhs, rtol) -> float:
    return rtol * max(abs(lhs), abs(rhs)) if rtol > 0 else 0.0


def inequality_verdict(lhs, lhs_se, rhs, rhs_se, k: float = 4.0, rtol: float = 0.0) -> Verdict:
    """Verdict for ``lhs <= rhs``; ``rtol`` absorbs rounding in exact comparisons."""
    slack = _slack(lhs, rhs, rtol)
    if lhs <= rhs + slack:
        return "Holds"
    if lhs - rhs <= k * (lhs_se + rhs_se) + slack:
        return "HoldsWithinNoise"
    return "Violated"


def equality_verdict(lhs, lhs_se, rhs, rhs_se, k: float = 4.0, rtol: float = 0.0) -> Verdict:
    diff = abs(lhs - rhs)
    slack = _slack(lhs, rhs, rtol)
    if diff <= slack:
        return "Holds"
    if diff <= k * (lhs_se + rhs_se) + slack:
        return "HoldsWithinNoise"
    return "Violated"


def _margin(lhs, lhs_se, rhs, rhs_se) -> float:
    se = lhs_se + rhs_se
    gap = rhs - lhs
    if se > 0:
        return gap / se
    return 0.0 if gap == 0 else math.copysign(math.inf, gap)


def _finite_or_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class VerificationReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    theoretical_bound: float
    margin_se_units: float
    verdict: Verdict
    meta: dict = field(default_factory=dict)

    @classmethod
    def inequality(cls, lhs, lhs_se, rhs, rhs_se, bound, meta, k=4.0, rtol=0.0):
        return cls(float(lhs), float(lhs_se), float(rhs), float(rhs_se), float(bound),
                   _margin(lhs, lhs_se, rhs, rhs_se),
                   inequality_verdict(lhs, lhs_se, rhs, rhs_se, k, rtol), dict(meta))

    @classmethod
    def equality(cls, lhs, lhs_se, rhs, rhs_se, bound, meta, k=4.0, rtol=0.0):
        margin = _margin(lhs, lhs_se, rhs, rhs_se)
        return cls(float(lhs), float(lhs_se), float(rhs), float(rhs_se), float(bound),
                   -abs(margin), equality_verdict(lhs, lhs_se, rhs, rhs_se, k, rtol), dict(meta))

    @property
    def ok(self) -> bool:
        return self.verdict != "Violated"

    def to_dict(self) -> dict:
        d = asdict(self)
        return {key: _finite_or_none(v) for key, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)

    CSV_FIELDS = ("name", "lhs", "lhs_se", "rhs", "rhs_se", "theoretical_bound", "margin_se_units", "verdict")

    def csv_row(self, name: str) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow(
            [name] + [repr(getattr(self, f)) if isinstance(getattr(self, f), float) else getattr(self, f)
                      for f in self.CSV_FIELDS[1:]]
        )
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


@dataclass(frozen=True)
class RunParams:
    """Monte Carlo settings shared by the verifiers.

    ``dt`` is the uniform step of direct simulations; coupled runs use
    ``dt_base`` with terminal refinement.
    """

    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    k_sigma: float = 4.0
    dt_base: float = 1e-3
    couple_eps: float | None = None
    refinement: RefinementPolicy = field(default_factory=RefinementPolicy)

    def meta(self, **extra) -> dict:
        out = {"paths": self.n_paths, "dt": self.dt, "seed": self.seed, "k_sigma": self.k_sigma}
        out.update(extra)
        return out


def terminal_states(model: ModelSpec, x, T: float, n_paths: int, dt: float, stream: RngStreamSpec):
    """Terminal states of paths that stayed inside the guard, and the escaped fraction.

    Raises :class:`MonteCarloAbort` when more than 0.1% of paths escaped.
    """
    x = as_state(x, model.dim)
    batch = simulate_batch(model, x, T, dt, stream, n_paths)
    frac = float(batch.escaped.mean())
    if frac > GUARD_ABORT_FRACTION:
        raise MonteCarloAbort(f"{frac:.2%} of paths hit the explosion guard", frac)
    return batch.terminal[~batch.escaped], frac


def mc_semigroup(model: ModelSpec, x, T: float, f, n_paths: int, dt: float, stream: RngStreamSpec):
    """``(mean, se)`` of ``f(X_T)`` started from ``x``."""
    XT, _ = terminal_states(model, x, T, n_paths, dt, stream)
    return mean_se(f(XT))


def _coupled(model, config, run: RunParams, n_paths=None):
    batch = simulate_coupled_batch(model, config, RngStreamSpec(run.seed, 0, SUB_COUPLED),
                                   n_paths or run.n_paths)
    if batch.guard_fraction > GUARD_ABORT_FRACTION:
        raise MonteCarloAbort(f"{batch.guard_fraction:.2%} of coupled pairs hit the guard",
                              batch.guard_fraction)
    return batch, batch.status != GUARD


def _coupling_meta(config: CouplingConfig, batch) -> dict:
    return {
        "couple_eps": config.couple_eps, "theta": config.theta, "dt_base": config.dt_base,
        "measure": config.measure, "grid_points": len(batch.grid),
        "coupled_fraction": batch.coupled_fraction, "guard_fraction": batch.guard_fraction,
    }


def coupling_config(x, y, T: float, run: RunParams, theta: float = 1.0, measure="Q") -> CouplingConfig:
    return CouplingConfig(x=x, y=y, T=T, theta=theta, dt_base=run.dt_base, refinement=run.refinement,
                          measure=measure, couple_eps=run.couple_eps)


def verify_identity(model: ModelSpec, config: CouplingConfig, f: TestFunction, run: RunParams) -> VerificationReport:
    """Two-sided check of ``E_P[R f(X_T)] = P_T f(y)``."""
    f.require_bounded()
    config = replace(config, measure="P")
    batch, ok = _coupled(model, config, run)
    lhs, lhs_se = mean_se(np.exp(batch.log_R[ok]) * f(batch.X_T[ok]))
    rhs, rhs_se = mc_semigroup(model, config.y, config.T, f, run.n_paths, config.dt_base,
                               RngStreamSpec(run.seed, 0, SUB_FROM_Y))
    meta = run.meta(function=f.name, **_coupling_meta(config, batch))
    return VerificationReport.equality(lhs, lhs_se, rhs, rhs_se, 0.0, meta, run.k_sigma)


def verify_log_harnack(model: ModelSpec, x, y, T: float, f: TestFunction, run: RunParams) -> VerificationReport:
    """``P_T log f(y) <= log P_T f(x) + bound``; the log is propagated by the delta method."""
    f.require_bounded()
    x, y = as_state(x, model.dim), as_state(y, model.dim)
    validate_at_least_one(f, model.dim, [x, y], RngStreamSpec(run.seed, 0, SUB_PROBE))
    bound = bounds.bound_log_harnack(bounds.BoundInputs(model.constants, T, float(np.linalg.norm(x - y))))
    XT, gx = terminal_states(model, x, T, run.n_paths, run.dt, RngStreamSpec(run.seed, 0, SUB_FROM_X))
    YT, gy = terminal_states(model, y, T, run.n_paths, run.dt, RngStreamSpec(run.seed, 0, SUB_FROM_Y))
    lhs, lhs_se = mean_se(np.log(f(YT)))
    m, m_se = mean_se(f(XT))
    meta = run.meta(function=f.name, guard_fraction=max(gx, gy))
    return VerificationReport.inequality(lhs, lhs_se, math.log(m) + bound, m_se / m, bound, meta, run.k_sigma)


def verify_harnack_power(model: ModelSpec, x, y, T: float, p: float, f: TestFunction, run: RunParams) -> VerificationReport:
    """``(P_T f(y))^p <= P_T f^p(x) * exp(C)`` with delta-method errors."""
    f.require_bounded()
    if f.lower < 0:
        raise ValueError("power Harnack needs a nonnegative test function")
    x, y = as_state(x, model.dim), as_state(y, model.dim)
    expo = bounds.bound_harnack_exponent(
        bounds.BoundInputs(model.constants, T, float(np.linalg.norm(x - y)), p=p))
    XT, gx = terminal_states(model, x, T, run.n_paths, run.dt, RngStreamSpec(run.seed, 0, SUB_FROM_X))
    YT, gy = terminal_states(model, y, T, run.n_paths, run.dt, RngStreamSpec(run.seed, 0, SUB_FROM_Y))
    m, m_se = mean_se(f(YT))
    mp, mp_se = mean_se(f(XT) ** p)
    scale = math.exp(expo)
    lhs, lhs_se = m**p, p * m ** (p - 1) * m_se
    meta = run.meta(function=f.name, p=p, guard_fraction=max(gx, gy),
                    effective_delta=bounds.effective_delta(p, model.constants))
    return VerificationReport.inequality(lhs, lhs_se, mp * scale, mp_se * scale, expo, meta, run.k_sigma)


class WeightReports(NamedTuple):
    entropy: VerificationReport
    moment: VerificationReport | None
    exp_moment: VerificationReport | None
    quadratic: VerificationReport


def verify_weight_bounds(model: ModelSpec, config: CouplingConfig, run: RunParams,
                         moments: bool = True) -> WeightReports:
    """Entropy, moment and exponential-moment bounds on the Girsanov weight, estimated under ``Q``.

    Measure duality turns ``E_P[R log R]`` into ``E_Q[log R]`` and
    ``E_P[R^{1+r}]`` into ``E_Q[R^r]``. ``quadratic`` checks the ``Q``-mean of
    ``int |X-Y|^2/xi^2 dt`` against ``|x-y|^2 / (theta xi_0)``.
    """
    if config.measure != "Q":
        raise ValueError("weight bounds are estimated under Q")
    c, theta = model.constants, config.theta
    if moments and c.delta == 0:
        raise DeltaZero("moment bounds need delta > 0; pass moments=False for additive noise")
    batch, ok = _coupled(model, config, run)
    inputs = bounds.BoundInputs(c, config.T, config.dist)
    meta = run.meta(**_coupling_meta(config, batch))
    log_r, quad = batch.log_R[ok], batch.quad[ok]
    k = run.k_sigma

    eb = bounds.entropy_bound(theta, inputs)
    lhs, se = mean_se(log_r)
    entropy = VerificationReport.inequality(lhs, se, eb, 0.0, eb, meta, k)

    qb = bounds.quad_integral_bound(theta, inputs)
    lhs, se = mean_se(quad)
    quadratic = VerificationReport.inequality(lhs, se, qb, 0.0, qb, meta, k)

    moment = exp_moment = None
    if moments:
        order, mb = bounds.moment_bound(theta, inputs)
        lhs, se = mean_se(np.exp((order - 1.0) * log_r))
        moment = VerificationReport.inequality(lhs, se, mb, 0.0, mb, {**meta, "order": order}, k)
        rate = bounds.exp_moment_rate(theta, c)
        xb = bounds.exp_moment_bound(theta, inputs)
        lhs, se = mean_se(np.exp(rate * quad))
        exp_moment = VerificationReport.inequality(lhs, se, xb, 0.0, xb, {**meta, "rate": rate}, k)
    return WeightReports(entropy, moment, exp_moment, quadratic)


def verify_kernel_kl(a: float, sigma: float, x, y, T: float, rtol: float = 1e-12) -> VerificationReport:
    """Analytic OU kernel KL against the log-Harnack bound with ``K = -2a``, ``lam = sigma``."""
    kl = bounds.ou_kernel_kl(a, sigma, x, y, T)
    dist = float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y)))
    bound = bounds.bound_log_harnack(bounds.BoundInputs(AssumptionConstants(-2 * a, sigma, 0.0), T, dist))
    rel = abs(kl - bound) / max(abs(bound), 1e-300)
    return VerificationReport.inequality(kl, 0.0, bound, 0.0, bound,
                                         {"a": a, "sigma": sigma, "T": T, "dist": dist, "rel_diff": rel},
                                         rtol=rtol)


def coupled_fraction(model: ModelSpec, config: CouplingConfig, run: RunParams, n_paths: int | None = None):
    batch, _ = _coupled(model, config, run, n_paths)
    return float(np.mean(batch.status == COUPLED)), batch
