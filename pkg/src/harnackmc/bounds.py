"""Closed-form bounds for the coupling weights and the Harnack inequalities.

Every expression of the form ``K / (1 - exp(-K T))`` is evaluated as
``1 / (T * exprel(-K T))``, which is smooth through ``K = 0`` and reduces to
``1 / T`` there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import exprel

from .errors import DeltaZero, PTooSmall
from .sde_core import AssumptionConstants


def k_factor(K: float, T: float) -> float:
    """``K / (1 - exp(-K T))`` with its ``1/T`` limit at ``K = 0``."""
    return 1.0 / (T * float(exprel(-K * T)))


@dataclass(frozen=True)
class BoundInputs:
    constants: AssumptionConstants
    T: float
    dist: float
    p: float | None = None
    theta: float | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.dist >= 0:
            raise ValueError("dist must be nonnegative")
        if self.p is not None:
            check_power(self.p, self.constants)
        if self.theta is not None:
            check_theta(self.theta)


def check_theta(theta: float) -> None:
    if not 0 < theta < 2:
        raise ValueError(f"theta must lie in (0, 2), got {theta}")


def power_threshold(constants: AssumptionConstants) -> float:
    return (1.0 + constants.delta / constants.lam) ** 2


def check_power(p: float, constants: AssumptionConstants) -> None:
    thr = power_threshold(constants)
    if not p > thr:
        raise PTooSmall(f"p={p} must exceed (1 + delta/lam)^2 = {thr}")


def effective_delta(p: float, constants: AssumptionConstants) -> float:
    """``max(delta, lam (sqrt p - 1) / 2)``."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return max(constants.delta, 0.5 * constants.lam * (math.sqrt(p) - 1.0))


def theta_for_power(p: float, constants: AssumptionConstants) -> float:
    """``2 delta / ((sqrt p - 1) lam)``; zero when ``delta == 0``.

    With ``delta = 0`` the caller substitutes :func:`effective_delta` first.
    """
    check_power(p, constants)
    return 2.0 * constants.delta / ((math.sqrt(p) - 1.0) * constants.lam)


def power_constants(p: float, constants: AssumptionConstants) -> AssumptionConstants:
    """Constants with ``delta`` replaced by the effective oscillation bound for ``p``."""
    return AssumptionConstants(constants.K, constants.lam, effective_delta(p, constants), constants.source)


def power_theta(p: float, constants: AssumptionConstants) -> float:
    """Coupling parameter for the power inequality, always built from the effective delta.

    Since the effective delta is at least ``lam (sqrt p - 1) / 2`` the result
    lies in ``[1, 2)``; it equals 1 exactly when that branch of the max is active.
    """
    check_power(p, constants)
    return theta_for_power(p, power_constants(p, constants))


def bound_log_harnack(inputs: BoundInputs) -> float:
    c = inputs.constants
    return inputs.dist**2 * k_factor(c.K, inputs.T) / (2.0 * c.lam**2)


def bound_harnack_exponent(inputs: BoundInputs) -> float:
    """Exponent ``C`` in ``(P_T f(y))^p <= P_T f^p(x) * exp(C)``."""
    if inputs.p is None:
        raise ValueError("bound_harnack_exponent needs p")
    c, p = inputs.constants, inputs.p
    check_power(p, c)
    dp = effective_delta(p, c)
    s = math.sqrt(p)
    gap = (s - 1.0) * c.lam - dp
    return s * (s - 1.0) * inputs.dist**2 * k_factor(c.K, inputs.T) / (4.0 * dp * gap)


def entropy_bound(theta: float, inputs: BoundInputs) -> float:
    check_theta(theta)
    c = inputs.constants
    return inputs.dist**2 * k_factor(c.K, inputs.T) / (2.0 * c.lam**2 * theta * (2.0 - theta))


def _need_delta(constants: AssumptionConstants) -> None:
    if constants.delta == 0:
        raise DeltaZero("additive noise: every moment of the weight is finite; use the power path")


def moment_order_r(theta: float, constants: AssumptionConstants) -> float:
    """``lam^2 theta^2 / (4 delta^2 + 4 theta lam delta)``."""
    _need_delta(constants)
    check_theta(theta)
    lam, dl = constants.lam, constants.delta
    return lam**2 * theta**2 / (4.0 * dl**2 + 4.0 * theta * lam * dl)


def holder_exponent(r: float) -> float:
    """The ``q > 1`` minimizing ``q (q r + 1) / (q - 1)``."""
    return 1.0 + math.sqrt(1.0 + 1.0 / r)


def moment_bound(theta: float, inputs: BoundInputs) -> tuple[float, float]:
    """``(1 + r, bound)`` with ``E R^{1+r} <= bound``."""
    c = inputs.constants
    r = moment_order_r(theta, c)
    lam, dl = c.lam, c.delta
    expo = (theta * (2 * dl + theta * lam) * inputs.dist**2 * k_factor(c.K, inputs.T)
            / (8.0 * dl**2 * (2.0 - theta) * (dl + theta * lam)))
    return 1.0 + r, math.exp(expo)


def exp_moment_rate(theta: float, constants: AssumptionConstants) -> float:
    _need_delta(constants)
    return theta**2 / (8.0 * constants.delta**2)


def exp_moment_bound(theta: float, inputs: BoundInputs) -> float:
    """Right side of the exponential-moment estimate for ``rate * int |X-Y|^2/xi^2``."""
    c = inputs.constants
    _need_delta(c)
    check_theta(theta)
    expo = theta * inputs.dist**2 * k_factor(c.K, inputs.T) / (4.0 * c.delta**2 * (2.0 - theta))
    return math.exp(expo)


def quad_integral_bound(theta: float, inputs: BoundInputs) -> float:
    """``|x-y|^2 / (theta xi_0)``: bound on the Q-mean of ``int |X-Y|^2/xi^2 dt``."""
    check_theta(theta)
    xi0 = (2.0 - theta) * inputs.T * float(exprel(-inputs.constants.K * inputs.T))
    return inputs.dist**2 / (theta * xi0)


def ou_kernel_kl(a: float, sigma: float, x, y, T: float) -> float:
    """KL divergence between the OU transition laws from ``x`` and ``y``.

    Both laws are Gaussian with covariance ``v I``, ``v = sigma^2 (1 - e^{-2aT}) / (2a)``,
    and means ``x e^{-aT}``, ``y e^{-aT}``.
    """
    if not (a > 0 and sigma > 0 and T > 0):
        raise ValueError("need a, sigma, T > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    shift = (x - y) * math.exp(-a * T)
    var = sigma**2 * -math.expm1(-2.0 * a * T) / (2.0 * a)
    return float(np.dot(shift, shift)) / (2.0 * var)
