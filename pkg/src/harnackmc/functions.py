"""Named catalog of bounded test functions with declared ranges.

Each function maps states ``(n, d)`` to values ``(n,)``. The declared
``lower``/``upper`` range is what the verifiers rely on: an infinite upper
bound is rejected, and ``lower >= 1`` is checked by sampling before a
log-Harnack run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import FNotAboveOne, UnboundedTestFunction
from .sde_core import RngStreamSpec


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    params: dict = field(default_factory=dict)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_2d(z))

    def require_bounded(self) -> None:
        if not math.isfinite(self.upper):
            raise UnboundedTestFunction(f"test function {self.name!r} has no finite upper bound")


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction("constant", lambda z: np.full(z.shape[0], float(c)), c, c, {"c": c})


def exp_clipped(c: float = 2.0, s: float = 1.0) -> TestFunction:
    """``exp(clip(s * z_1, 0, c))``: an exponential tilt of the first coordinate, capped."""
    return TestFunction(
        "exp-clipped", lambda z: np.exp(np.clip(s * z[:, 0], 0.0, c)), 1.0, math.exp(c), {"c": c, "s": s}
    )


def tanh_squared(a: float = 1.0) -> TestFunction:
    """``1 + a tanh(|z|)^2``."""
    return TestFunction(
        "tanh-squared",
        lambda z: 1.0 + a * np.tanh(np.linalg.norm(z, axis=1)) ** 2,
        1.0, 1.0 + a, {"a": a},
    )


def indicator_smoothed(c: float = 0.0, w: float = 0.25, h: float = 1.0) -> TestFunction:
    """``1 + h * sigmoid((z_1 - c) / w)``, a smoothed indicator of ``{z_1 > c}``."""
    return TestFunction(
        "indicator-smoothed",
        lambda z: 1.0 + h * 0.5 * (1.0 + np.tanh(0.5 * (z[:, 0] - c) / w)),
        1.0, 1.0 + h, {"c": c, "w": w, "h": h},
    )


CATALOG: dict[str, Callable[..., TestFunction]] = {
    "constant": constant,
    "exp-clipped": exp_clipped,
    "tanh-squared": tanh_squared,
    "indicator-smoothed": indicator_smoothed,
}


def get(name: str, **params) -> TestFunction:
    if name not in CATALOG:
        raise KeyError(f"unknown test function {name!r}; choose from {sorted(CATALOG)}")
    return CATALOG[name](**params)


def validate_at_least_one(f: TestFunction, dim: int, centers, stream: RngStreamSpec,
                          n_probe: int = 10_000, half_width: float = 5.0) -> None:
    """Sample ``n_probe`` points around ``centers`` and require ``f >= 1`` at all of them."""
    if f.lower < 1:
        raise FNotAboveOne(f"{f.name!r} declares a lower bound {f.lower} < 1")
    g = stream.generator()
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    pts = g.uniform(-half_width, half_width, size=(n_probe, dim))
    pts += centers[g.integers(0, len(centers), size=n_probe)]
    vals = f(pts)
    if np.any(~(vals >= 1.0)):
        raise FNotAboveOne(f"{f.name!r} takes values below 1 (min {np.nanmin(vals):.6g})")
