import json
import math

import numpy as np
import pytest

from harnackmc import functions, models
from harnackmc.errors import DeltaZero, FNotAboveOne, MonteCarloAbort, UnboundedTestFunction
from harnackmc.functions import TestFunction
from harnackmc.harnack import (
    RunParams,
    VerificationReport,
    coupling_config,
    equality_verdict,
    inequality_verdict,
    mc_semigroup,
    mean_se,
    verify_harnack_power,
    verify_identity,
    verify_kernel_kl,
    verify_log_harnack,
    verify_weight_bounds,
)
from harnackmc.sde_core import AssumptionConstants, ModelSpec, RngStreamSpec

RUN = RunParams(n_paths=20_000, dt=1e-2, dt_base=1e-2, seed=3)


def test_mean_se_examples():
    assert mean_se(np.ones(10)) == (1.0, 0.0)
    m, se = mean_se(np.array([0.0, 2.0]))
    assert m == 1.0 and se == pytest.approx(1.0)
    assert mean_se(np.array([3.0]))[1] == 0.0


def test_verdict_logic():
    assert inequality_verdict(1.0, 0.1, 1.0, 0.0) == "Holds"
    assert inequality_verdict(1.3, 0.1, 1.0, 0.0) == "HoldsWithinNoise"
    assert inequality_verdict(1.5, 0.1, 1.0, 0.0) == "Violated"
    assert inequality_verdict(1.5, 0.1, 1.0, 0.0, k=6) == "HoldsWithinNoise"
    assert equality_verdict(0.6, 0.1, 1.0, 0.0) == "HoldsWithinNoise"
    assert equality_verdict(0.5, 0.1, 1.0, 0.0) == "Violated"
    assert equality_verdict(1.0 + 1e-14, 0.0, 1.0, 0.0, rtol=1e-12) == "Holds"


def test_mc_semigroup_examples(ou_entry):
    m, se = mc_semigroup(ou_entry.model, 0.3, 1.0, lambda z: np.ones(len(z)), 1000, 1e-2, RngStreamSpec(0))
    assert (m, se) == (1.0, 0.0)
    m, se = mc_semigroup(ou_entry.model, 0.0, 1.0, lambda z: z[:, 0] ** 2, 40_000, 1e-2, RngStreamSpec(1))
    assert abs(m - ou_entry.reference["var"](1.0)) <= 4 * se


def test_guard_abort():
    def eye(t, x):
        return np.broadcast_to(np.eye(1), (len(x), 1, 1))

    m = ModelSpec(1, eye, lambda t, x: np.zeros_like(x), AssumptionConstants(0, 1, 0), guard_radius=0.5)
    with pytest.raises(MonteCarloAbort) as e:
        mc_semigroup(m, 0.0, 1.0, lambda z: z[:, 0], 200, 1e-2, RngStreamSpec(0))
    assert e.value.guard_fraction > 0.5


def test_identity_trivial_cases(mult1d):
    f = functions.tanh_squared()
    same = verify_identity(mult1d.model, coupling_config(0.5, 0.5, 1.0, RUN), f, RUN)
    assert same.ok and same.meta["coupled_fraction"] == 1.0
    const = verify_identity(mult1d.model, coupling_config(1.0, 0.0, 1.0, RUN), functions.constant(2.0), RUN)
    assert const.rhs == 2.0 and const.rhs_se == 0.0
    assert const.ok


def test_identity_ou(ou_entry):
    r = verify_identity(ou_entry.model, coupling_config(1.0, 0.0, 1.0, RUN), functions.exp_clipped(), RUN)
    assert r.ok, r
    assert r.meta["measure"] == "P"


def test_identity_rejects_unbounded(ou_entry):
    f = TestFunction("exp", lambda z: np.exp(z[:, 0]), 0.0, math.inf)
    with pytest.raises(UnboundedTestFunction):
        verify_identity(ou_entry.model, coupling_config(1.0, 0.0, 1.0, RUN), f, RUN)


def test_log_harnack_trivial_cases(zoo_entry):
    m = zoo_entry.model
    r = verify_log_harnack(m, 0.2, 0.2, 1.0, functions.constant(3.0), RUN)
    assert r.verdict == "Holds" and r.theoretical_bound == 0.0
    assert r.lhs == pytest.approx(math.log(3.0)) and r.rhs == pytest.approx(math.log(3.0))
    r = verify_log_harnack(m, 1.0, 0.0, 1.0, functions.constant(3.0), RUN)
    assert r.verdict == "Holds" and r.theoretical_bound > 0


def test_log_harnack_rejects_f_below_one(ou_entry):
    with pytest.raises(FNotAboveOne):
        verify_log_harnack(ou_entry.model, 1.0, 0.0, 1.0, functions.constant(0.5), RUN)
    sneaky = TestFunction("sneaky", lambda z: 1.0 + 0.5 * np.sin(z[:, 0]), 1.0, 1.5)
    with pytest.raises(FNotAboveOne):
        verify_log_harnack(ou_entry.model, 1.0, 0.0, 1.0, sneaky, RUN)


def test_log_harnack_holds(mult1d):
    r = verify_log_harnack(mult1d.model, 1.0, 0.0, 1.0, functions.indicator_smoothed(), RUN)
    assert r.ok and r.margin_se_units > 0


def test_power_trivial_and_holds(mult1d):
    r = verify_harnack_power(mult1d.model, 0.0, 0.0, 1.0, 4.0, functions.constant(2.0), RUN)
    assert r.verdict == "Holds" and r.theoretical_bound == 0.0
    r = verify_harnack_power(mult1d.model, 1.0, 0.0, 1.0, 4.0, functions.tanh_squared(), RUN)
    assert r.verdict == "Holds" and r.meta["effective_delta"] == 0.5


def test_weight_bounds_equal_starts(mult1d):
    w = verify_weight_bounds(mult1d.model, coupling_config(0.3, 0.3, 1.0, RUN), RUN)
    assert w.entropy.lhs == 0.0 and w.entropy.theoretical_bound == 0.0
    assert w.moment.lhs == 1.0 and w.exp_moment.lhs == 1.0
    assert all(r.verdict == "Holds" for r in w)


def test_weight_bounds_ou_needs_delta(ou_entry):
    cfg = coupling_config(1.0, 0.0, 1.0, RUN)
    with pytest.raises(DeltaZero):
        verify_weight_bounds(ou_entry.model, cfg, RUN)
    w = verify_weight_bounds(ou_entry.model, cfg, RunParams(n_paths=5000, dt_base=1e-2), moments=False)
    assert w.moment is None and w.entropy.ok and w.quadratic.ok
    with pytest.raises(ValueError):
        verify_weight_bounds(ou_entry.model, coupling_config(1.0, 0.0, 1.0, RUN, measure="P"), RUN)


def test_kernel_kl_report():
    r = verify_kernel_kl(1.0, 1.0, [1.0], [0.0], 1.0)
    assert r.verdict == "Holds" and r.meta["rel_diff"] < 1e-12


def test_report_serialization():
    r = VerificationReport.inequality(1.0, 0.1, math.inf, 0.0, 2.0, {"paths": np.int64(3)})
    d = json.loads(r.to_json())
    assert d["rhs"] is None and d["meta"]["paths"] == 3 and d["verdict"] == "Holds"
    row = r.csv_row("x").split(",")
    assert row[0] == "x" and row[-1] == "Holds" and len(row) == len(VerificationReport.CSV_FIELDS)
    assert VerificationReport.equality(1.0, 0.0, 1.0, 0.0, 0.0, {}).margin_se_units == 0.0
