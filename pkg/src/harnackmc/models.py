"""Concrete models whose assumption constants are known in closed form.

The multiplicative entries use the diagonal coefficient
``sigma_i(x) = lam0 + delta0 * (1 + sin x_i) / 2``, which ranges over
``[lam0, lam0 + delta0]`` with Lipschitz constant ``delta0 / 2``. Hence
``lam = lam0``, ``delta = delta0`` and the Hilbert-Schmidt term contributes at
most ``delta0**2 / 4`` to ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .sde_core import AssumptionConstants, ModelSpec


def _const_sigma(t, x, s):
    n, d = x.shape
    return np.broadcast_to(s * np.eye(d), (n, d, d))


def _linear_drift(t, x, a):
    return -a * x


def _diag_sigma(t, x, lam0, delta0):
    n, d = x.shape
    diag = lam0 + 0.5 * delta0 * (1.0 + np.sin(x))
    if d == 1:
        return diag[:, :, None]
    out = np.zeros((n, d, d))
    idx = np.arange(d)
    out[:, idx, idx] = diag
    return out


def _sine_drift(t, x, kappa, eps):
    return -kappa * x + eps * np.sin(x)


@dataclass(frozen=True)
class ZooEntry:
    name: str
    model: ModelSpec
    exact_constants: AssumptionConstants
    params: dict
    reference: dict = field(default_factory=dict)


def ou(a: float = 1.0, sigma: float = 1.0, d: int = 1) -> ZooEntry:
    """``dX = sigma dB - a X dt``; Gaussian transition kernel."""
    if not (a > 0 and sigma > 0):
        raise ValueError("OU needs a > 0 and sigma > 0")
    d = int(d)
    consts = AssumptionConstants(-2.0 * a, sigma, 0.0)
    model = ModelSpec(d, partial(_const_sigma, s=sigma), partial(_linear_drift, a=a), consts, name="ou")

    def mean(x0, T):
        return np.asarray(x0, dtype=float) * math.exp(-a * T)

    def var(T):
        return sigma**2 * -math.expm1(-2.0 * a * T) / (2.0 * a)

    return ZooEntry("ou", model, consts, {"a": a, "sigma": sigma, "d": d},
                    {"kernel": "gaussian", "mean": mean, "var": var})


def mult1d(lam0: float = 1.0, delta0: float = 0.5, kappa: float = 1.0) -> ZooEntry:
    return _multiplicative("mult1d", 1, lam0, delta0, kappa, 0.0)


def mult3d(lam0: float = 1.0, delta0: float = 0.5, kappa: float = 1.0, d: int = 3) -> ZooEntry:
    return _multiplicative("mult3d", int(d), lam0, delta0, kappa, 0.0)


def driftpert(lam0: float = 1.0, delta0: float = 0.5, kappa: float = 1.0, eps: float = 0.25,
              d: int = 2) -> ZooEntry:
    """Multiplicative noise with drift ``-kappa x + eps sin x``; ``K`` gains ``2 eps``."""
    return _multiplicative("driftpert", int(d), lam0, delta0, kappa, eps)


def _multiplicative(name, d, lam0, delta0, kappa, eps):
    if not (lam0 > 0 and delta0 >= 0):
        raise ValueError("need lam0 > 0 and delta0 >= 0")
    consts = AssumptionConstants(delta0**2 / 4.0 - 2.0 * kappa + 2.0 * abs(eps), lam0, delta0)
    model = ModelSpec(
        d,
        partial(_diag_sigma, lam0=lam0, delta0=delta0),
        partial(_sine_drift, kappa=kappa, eps=eps),
        consts,
        name=name,
    )
    params = {"lam0": lam0, "delta0": delta0, "kappa": kappa, "d": d}
    if name == "driftpert":
        params["eps"] = eps
    return ZooEntry(name, model, consts, params)


BUILDERS: dict[str, Callable[..., ZooEntry]] = {
    "ou": ou,
    "mult1d": mult1d,
    "mult3d": mult3d,
    "driftpert": driftpert,
}


def zoo() -> list[ZooEntry]:
    return [build() for build in BUILDERS.values()]


def get(name: str, **params) -> ZooEntry:
    try:
        build = BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown zoo model {name!r}; choose from {sorted(BUILDERS)}") from None
    return build(**params)


def probe_box(entry: ZooEntry, half_width: float = 5.0):
    d = entry.model.dim
    return (np.full(d, -half_width), np.full(d, half_width))
