import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from harnackmc import models
from harnackmc.errors import GuardExceeded, NonFinite, SingularSigma
from harnackmc.sde_core import (
    AssumptionConstants,
    ModelSpec,
    RngStreamSpec,
    constants_trace,
    estimate_constants,
    simulate_batch,
    simulate_path,
    step_euler,
    uniform_grid,
)


def _identity_sigma(t, x):
    n, d = x.shape
    return np.broadcast_to(np.eye(d), (n, d, d))


def _zero_sigma(t, x):
    n, d = x.shape
    return np.zeros((n, d, d))


def _zero(t, x):
    return np.zeros_like(x)


def _neg(t, x):
    return -x


BM = ModelSpec(1, _identity_sigma, _zero)
LINEAR = ModelSpec(1, _identity_sigma, _neg)
FROZEN = ModelSpec(1, _zero_sigma, _zero)


def test_step_pure_noise():
    assert step_euler(BM, 0.0, [0.0], 0.1, [0.3]) == pytest.approx([0.3], abs=0)


def test_step_deterministic_decay():
    assert step_euler(LINEAR, 0.0, [1.0], 0.1, [0.0]) == pytest.approx([0.9], rel=1e-15)


def test_step_multiplicative():
    m = models.mult1d().model
    # sigma(0) = 1 + 0.25 * (1 + sin 0) = 1.25
    assert step_euler(m, 0.0, [0.0], 0.01, [0.1]) == pytest.approx([0.125], rel=1e-14)


def test_step_errors():
    small = ModelSpec(1, _identity_sigma, _zero, guard_radius=1.0)
    with pytest.raises(GuardExceeded) as exc:
        step_euler(small, 0.5, [0.9], 0.1, [0.5])
    assert exc.value.time == pytest.approx(0.6)
    with pytest.raises(NonFinite):
        step_euler(BM, 0.0, [np.inf], 0.1, [0.0])
    with pytest.raises(ValueError):
        step_euler(BM, 0.0, [0.0], 0.0, [0.0])


def test_grid_ends_at_T():
    g = uniform_grid(1.0, 0.3)
    assert g[-1] == 1.0 and np.all(np.diff(g) > 0)
    assert len(uniform_grid(1.0, 1e-3)) == 1001
    with pytest.raises(ValueError):
        uniform_grid(1.0, 2.0)


def test_constant_path():
    t, xs = simulate_path(FROZEN, [2.0], 1.0, 0.1, RngStreamSpec(1))
    assert t[-1] == 1.0
    assert np.all(xs == 2.0)


def test_path_is_reproducible():
    m = models.mult1d().model
    a = simulate_path(m, [0.3], 1.0, 0.01, RngStreamSpec(5, 17))
    b = simulate_path(m, [0.3], 1.0, 0.01, RngStreamSpec(5, 17))
    assert np.array_equal(a[1], b[1])
    c = simulate_path(m, [0.3], 1.0, 0.01, RngStreamSpec(5, 18))
    assert not np.array_equal(a[1], c[1])


def test_batch_independent_of_batching(zoo_entry):
    m = zoo_entry.model
    x0 = np.full(m.dim, 0.5)
    full = simulate_batch(m, x0, 0.5, 0.01, RngStreamSpec(11), 300, batch_size=300)
    split = simulate_batch(m, x0, 0.5, 0.01, RngStreamSpec(11), 300, batch_size=64)
    assert np.array_equal(full.terminal, split.terminal)
    # path 40 alone matches row 40 of the batch
    alone = simulate_batch(m, x0, 0.5, 0.01, RngStreamSpec(11, 40), 1)
    assert np.array_equal(alone.terminal[0], full.terminal[40])


def test_guard_propagates_time():
    tiny = ModelSpec(1, _identity_sigma, _zero, guard_radius=0.05)
    with pytest.raises(GuardExceeded) as exc:
        simulate_path(tiny, [0.0], 1.0, 0.01, RngStreamSpec(0))
    assert 0 < exc.value.time <= 1.0


def test_ou_mean_and_variance():
    # X_T ~ N(x0 e^{-T}, (1 - e^{-2T}) / 2) for dX = dB - X dt
    m = models.ou().model
    n = 100_000
    XT = simulate_batch(m, [1.0], 1.0, 1e-3, RngStreamSpec(2024), n).terminal[:, 0]
    mean, se = XT.mean(), XT.std(ddof=1) / math.sqrt(n)
    assert abs(mean - math.exp(-1.0)) <= 3 * se
    var_target = (1 - math.exp(-2.0)) / 2
    s2 = XT.var(ddof=1)
    c = XT - mean
    se_var = math.sqrt((np.mean(c**4) - s2**2) / n)
    assert abs(s2 - var_target) <= 4 * se_var


def test_constants_linear_model():
    c = estimate_constants(LINEAR, ([-5.0], [5.0]), 2000, RngStreamSpec(3))
    assert c.K == pytest.approx(-2.0, abs=1e-12)
    assert c.lam == 1.0 and c.delta == 0.0
    assert c.source == "estimated"


def test_constants_brownian():
    c = estimate_constants(BM, ([-5.0], [5.0]), 500, RngStreamSpec(3))
    assert c.K == pytest.approx(0.0, abs=1e-12) and c.delta == 0.0


def test_constants_multiplicative_against_brute_force():
    m = models.mult1d().model
    c = estimate_constants(m, ([-5.0], [5.0]), 20_000, RngStreamSpec(3))
    # brute-force sweep over a fine grid of pairs
    g = np.linspace(-5, 5, 1201)
    X, Y = np.meshgrid(g, g)
    off = X != Y
    s = lambda z: 1 + 0.25 * (1 + np.sin(z))
    k_grid = (((s(X) - s(Y)) ** 2 - 2 * (X - Y) ** 2)[off] / ((X - Y) ** 2)[off]).max()
    assert c.lam >= 1.0 - 1e-12
    assert c.delta <= 0.5
    assert c.K <= 0.25**2 - 2 + 1e-9
    assert c.K == pytest.approx(k_grid, abs=2e-3)
    assert c.delta > 0.45


def test_singular_sigma():
    with pytest.raises(SingularSigma):
        estimate_constants(FROZEN, ([-1.0], [1.0]), 10, RngStreamSpec(0))


def test_degenerate_box():
    with pytest.raises(ValueError):
        estimate_constants(BM, ([1.0], [1.0]), 10, RngStreamSpec(0))
    with pytest.raises(ValueError):
        estimate_constants(BM, ([0.0], [1.0]), 1, RngStreamSpec(0))


@given(st.integers(2, 400), st.integers(2, 400), st.integers(0, 2**32))
def test_constants_monotone_in_pairs(n1, n2, seed):
    n1, n2 = sorted((n1, n2))
    m = models.mult1d().model
    box = ([-5.0], [5.0])
    small = estimate_constants(m, box, n1, RngStreamSpec(seed))
    big = estimate_constants(m, box, n2, RngStreamSpec(seed))
    assert big.K >= small.K and big.delta >= small.delta and big.lam <= small.lam
    tr = constants_trace(m, box, n2, RngStreamSpec(seed))
    assert tr.K[n1 - 1] == small.K


def test_constants_validation():
    with pytest.raises(ValueError):
        AssumptionConstants(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        AssumptionConstants(0.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        ModelSpec(0, _identity_sigma, _zero)
