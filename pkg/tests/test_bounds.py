import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from harnackmc.bounds import (
    BoundInputs,
    bound_harnack_exponent,
    bound_log_harnack,
    effective_delta,
    entropy_bound,
    exp_moment_bound,
    exp_moment_rate,
    holder_exponent,
    k_factor,
    moment_bound,
    moment_order_r,
    ou_kernel_kl,
    power_theta,
    theta_for_power,
)
from harnackmc.errors import DeltaZero, PTooSmall
from harnackmc.sde_core import AssumptionConstants

C = AssumptionConstants


def inputs(K=0.0, lam=1.0, delta=0.5, T=1.0, dist=1.0, p=None):
    return BoundInputs(C(K, lam, delta), T, dist, p=p)


def test_theta_for_power_examples():
    assert theta_for_power(4, C(0, 1, 0.5)) == 1.0
    assert theta_for_power(9, C(0, 1, 1.0)) == 1.0
    with pytest.raises(PTooSmall):
        theta_for_power(2.25 - 1e-9, C(0, 1, 0.5))
    assert theta_for_power(4, C(0, 1, 0.0)) == 0.0


def test_effective_delta_examples():
    assert effective_delta(4, C(0, 1, 0.5)) == 0.5
    assert effective_delta(9, C(0, 1, 0.5)) == 1.0
    assert effective_delta(4, C(0, 1, 0.0)) == 0.5


def test_log_harnack_examples():
    assert bound_log_harnack(inputs(dist=0)) == 0.0
    assert bound_log_harnack(inputs(K=0)) == 0.5
    assert bound_log_harnack(inputs(K=-1)) == pytest.approx(1 / (2 * (math.e - 1)), rel=1e-14)


def test_harnack_exponent_examples():
    assert bound_harnack_exponent(inputs(dist=0, p=4)) == 0.0
    assert bound_harnack_exponent(inputs(p=4)) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(PTooSmall):
        inputs(p=2.0)


def test_harnack_exponent_blows_up_at_threshold():
    vals = [bound_harnack_exponent(inputs(delta=0.5, p=2.25 + eps)) for eps in (1e-1, 1e-2, 1e-3, 1e-5)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1e4


def test_entropy_examples():
    b = inputs(K=-0.7, T=2.0, dist=1.3)
    assert entropy_bound(1.0, b) == bound_log_harnack(b)
    assert entropy_bound(0.5, inputs(K=0)) == pytest.approx(2 / 3, rel=1e-14)
    assert entropy_bound(0.5, inputs(dist=0)) == 0.0


def test_moment_examples():
    assert moment_order_r(1.0, C(0, 1, 0.5)) == pytest.approx(1 / 3, rel=1e-15)
    order, bound = moment_bound(1.0, inputs(K=0))
    assert order == pytest.approx(4 / 3, rel=1e-15)
    assert bound == pytest.approx(math.exp(2 / 3), rel=1e-14)
    assert moment_bound(1.0, inputs(dist=0))[1] == 1.0
    assert exp_moment_bound(1.0, inputs(dist=0)) == 1.0
    with pytest.raises(DeltaZero):
        moment_order_r(1.0, C(0, 1, 0.0))
    assert moment_order_r(1e-9, C(0, 1, 0.5)) < 1e-17


def test_holder_example():
    r = moment_order_r(1.0, C(0, 1, 0.5))
    q = holder_exponent(r)
    assert q == pytest.approx(3.0, rel=1e-15)
    assert (r + math.sqrt(r * r + r)) ** 2 / 2 == pytest.approx(0.5, rel=1e-14)


def test_exp_moment_rate_examples():
    assert exp_moment_rate(1.0, C(0, 1, 0.5)) == 0.5
    assert exp_moment_rate(1.0, C(0, 1, 1.0)) == 0.125
    assert exp_moment_rate(1e-8, C(0, 1, 1.0)) < 1e-16
    with pytest.raises(DeltaZero):
        exp_moment_rate(1.0, C(0, 1, 0.0))


def test_k_factor_limit():
    for K in (1e-12, -1e-12, 1e-9):
        assert k_factor(K, 2.0) == pytest.approx(0.5, rel=1e-8)
    assert k_factor(1.0, 1.0) == pytest.approx(1 / (1 - math.exp(-1)), rel=1e-14)


def test_ou_kl_examples():
    assert ou_kernel_kl(0.5, 1.0, [0.3], [0.3], 1.0) == 0.0
    assert ou_kernel_kl(0.5, 1.0, [1.0], [0.0], 1.0) == pytest.approx(0.5 / (math.e - 1), rel=1e-14)
    # a -> 0: |x-y|^2 / (2 sigma^2 T)
    assert ou_kernel_kl(1e-9, 2.0, [1.0], [0.0], 3.0) == pytest.approx(1 / 24, rel=1e-8)


pos = st.floats(0.05, 5.0)


@given(st.floats(1.01, 50.0), pos, st.floats(0.0, 3.0))
def test_power_identity(p, lam, delta):
    # p/(p-1) = 1 + lam^2 th^2 / (4 d (d + th lam)) for th built from the effective delta
    c = C(0.0, lam, delta)
    assume(p > (1 + delta / lam) ** 2 * (1 + 1e-9))
    th = power_theta(p, c)
    d = effective_delta(p, c)
    assert 1.0 - 1e-12 <= th < 2.0
    rhs = 1 + lam**2 * th**2 / (4 * d * (d + th * lam))
    assert rhs == pytest.approx(p / (p - 1), rel=1e-10)


@given(st.floats(0.01, 1.99), pos, st.floats(0.01, 5.0))
def test_holder_identity(theta, lam, delta):
    c = C(0.0, lam, delta)
    r = moment_order_r(theta, c)
    q = holder_exponent(r)
    lhs = q * r * (q * r + 1) / (2 * lam**2 * (q - 1))
    assert lhs == pytest.approx(theta**2 / (8 * delta**2), rel=1e-10)


@given(st.floats(0.01, 5.0), pos, st.floats(0.01, 5.0), st.floats(0.0, 5.0))
def test_ou_sharpness(a, sigma, T, dist):
    kl = ou_kernel_kl(a, sigma, [dist], [0.0], T)
    b = bound_log_harnack(BoundInputs(C(-2 * a, sigma, 0.0), T, dist))
    assert kl == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(st.floats(-3, 3), st.floats(0.1, 4.0), st.floats(0.1, 4.0), st.floats(0.1, 3.0))
def test_harnack_exponent_monotone(K, T, dist, dT):
    c = C(K, 1.0, 0.5)
    base = bound_harnack_exponent(BoundInputs(c, T, dist, p=4))
    assert bound_harnack_exponent(BoundInputs(c, T + dT, dist, p=4)) <= base * (1 + 1e-12)
    assert bound_harnack_exponent(BoundInputs(c, T, dist * 1.5, p=4)) > base
