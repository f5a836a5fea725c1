import math
from pathlib import Path

import numpy as np
import pytest

from relaydiff import experiments as ex
from relaydiff.kernels import Phi_tail, ThresholdDomain, erf_E
from relaydiff.scenario import load_series
from relaydiff.solver import InitialData, ModelParams, run, uniform_profile
from relaydiff.hysteresis import SimpleConfig

DOM = ThresholdDomain(0.05, 0.25)
GOLDEN = Path(__file__).parent / "data" / "golden_thm1"


# -- plans for the long time scale ----------------------------------------------

@pytest.fixture(scope="module")
def plan1():
    return ex.build_sequences_thm1(DOM, 1)


@pytest.fixture(scope="module")
def plan2():
    return ex.build_sequences_thm1(DOM, 2)


def test_plan1_first_cut_rule(plan1):
    assert plan1.x[0] == pytest.approx(DOM.lo + 0.1 * DOM.L)
    # Phi(x_1, .) never drops below (hi - x_1)/L = 0.9, so the level falls back to the midpoint with 1
    assert Phi_tail(plan1.x[0], plan1.tau[0], DOM) == pytest.approx(0.95, abs=1e-10)
    assert ex.build_sequences_thm1(DOM, 1, level=0.99).tau[0] < plan1.tau[0]


def test_plan1_n1_dense_scan(plan1):
    assert ex.check_plan1(plan1) == []
    tau = np.geomspace(plan1.tau[0] - plan1.chi[0], 20.0, 2000)
    assert Phi_tail(plan1.x[0], plan1.tau[0], DOM) > 0.5
    assert max(Phi_tail(plan1.x[1], t, DOM) for t in tau) < 0.5


def test_plan_n2_checked_and_monotone(plan2):
    assert ex.check_plan1(plan2) == []
    assert all(a > b for a, b in zip(plan2.tau, plan2.tau[1:]))
    assert all(a < b for a, b in zip(plan2.x, plan2.x[1:]))
    assert plan2.tau[1] < plan2.tau[0] - plan2.chi[0]


@pytest.mark.parametrize("N", [3, 4, 5])
def test_longer_plans_pass_independent_check(N):
    assert ex.check_plan1(ex.build_sequences_thm1(DOM, N)) == []


def test_plan_infeasible_reports_index():
    with pytest.raises(ex.PlanInfeasible) as info:
        ex.build_sequences_thm1(DOM, 8)
    assert 1 <= info.value.index <= 8
    with pytest.raises(ex.PlanInfeasible):
        ex.build_sequences_thm1(DOM, 0)


def test_checker_catches_broken_plan(plan2):
    bad = ex.SequencePlan1(**{**plan2.__dict__, "x": [plan2.x[0], plan2.x[0] + 1e-3, plan2.x[2]]})
    assert ex.check_plan1(bad)
    bad = ex.SequencePlan1(**{**plan2.__dict__, "chi": [0.01, 0.01]})
    assert ex.check_plan1(bad)


def test_plan_round_trip(plan2):
    assert ex.SequencePlan1.from_dict(plan2.to_dict()) == plan2
    assert plan2.to_dict()["kind"] == "thm1"


# -- plans for the short time scale ---------------------------------------------

@pytest.fixture(scope="module")
def plan_mu():
    return ex.build_sequences_thm2(3, 0.25)


def test_thm2_plan_exists(plan_mu):
    assert plan_mu.y[0] == 0.0 and math.isfinite(plan_mu.theta[0]) and plan_mu.theta[0] > 0
    assert all(a < b for a, b in zip(plan_mu.t, plan_mu.t[1:]))
    assert all(a < b for a, b in zip(plan_mu.y, plan_mu.y[1:]))
    chain = [v for pair in zip(plan_mu.theta, plan_mu.t) for v in pair]
    assert all(a < b for a, b in zip(chain, chain[1:]))


def test_thm2_plan_independent_check(plan_mu):
    assert ex.check_plan2(plan_mu) == []


def test_thm2_window_inequality_dense(plan_mu):
    mu = plan_mu.mu
    for i in range(1, plan_mu.N + 1):
        th, t = plan_mu.theta[i - 1], plan_mu.t[i - 1]
        y_prev, y = plan_mu.y[i - 1], plan_mu.y[i]
        for s in np.linspace(th, t, 1000):
            assert erf_E(y_prev / (2 * math.sqrt(s))) < 0.5
        lhs = 2 * erf_E(y / (2 * math.sqrt(t))) - 2 * erf_E(y_prev / (2 * math.sqrt(th))) - 1
        assert lhs > 1 / (mu * mu * (t - th))


def test_thm2_plan_round_trip(plan_mu):
    assert ex.SequencePlan2.from_dict(plan_mu.to_dict()) == plan_mu
    assert plan_mu.cuts(0.25, 1e-6) == pytest.approx([0.25 - 1e-3 * y for y in plan_mu.y[1:]])


def test_thm2_bad_arguments():
    with pytest.raises(ex.PlanInfeasible):
        ex.build_sequences_thm2(0, 0.25)


# -- verification ---------------------------------------------------------------

def test_verify_theorem1_golden():
    series = load_series(GOLDEN / "series")
    plan = ex.SequencePlan1.from_dict(__import__("json").loads((GOLDEN / "plan.json").read_text()))
    rep = ex.verify_theorem1(series, plan)
    assert rep.passed and rep.checks[0].min_count >= 1 and rep.checks[0].hypotheses_ok
    assert any("uniform" in n for n in rep.notes)
    assert rep.certified


def test_verify_monotone_in_evidence():
    import copy, json
    series = load_series(GOLDEN / "series")
    plan = ex.SequencePlan1.from_dict(json.loads((GOLDEN / "plan.json").read_text()))
    t_obs = plan.tau[0] / series.params.D
    n = len(series.records)
    ends = [k for k in range(n // 2, n + 1, n // 6) if series.records[k - 1].t >= t_obs] + [n]
    passed_before = False
    for k in ends:
        part = copy.copy(series)
        part.records = series.records[:k]
        ok = ex.verify_theorem1(part, plan).checks[0].counts_ok
        assert ok or not passed_before
        passed_before = passed_before or ok


def test_verify_refuses_wrong_family(plan1):
    p = ModelParams(DOM, 1e-3, grid_n=100)
    g = p.make_grid()
    s = run(p, InitialData(uniform_profile(g), 0.1, 0.0, SimpleConfig.uniform(0.05, 0.25), 1e-3), 1.0, grid=g)
    with pytest.raises(ex.ScenarioMismatch):
        ex.verify_theorem1(s, plan1)
    with pytest.raises(ex.ScenarioMismatch):
        ex.verify_theorem1(s, plan1, D=1e-5)


def test_verify_theorem2_first_cut():
    plan = ex.build_sequences_thm2(1, 0.25)
    series = ex.run_theorem2(plan, D=1e-5, v0=1e-3)
    rep = ex.verify_theorem2(series, plan)
    assert rep.passed and rep.checks[0].min_count >= 1
    assert plan.t[0] < 100


def test_non_applicable_status():
    rep = ex.VerificationReport("x", "thm2", [ex.ObservationCheck(1, 1.0, 0.2, 1, 0, 5, False, False)])
    assert ex._finish(rep).status == "not_applicable"
    rep = ex.VerificationReport("x", "thm2", [ex.ObservationCheck(1, 1.0, 0.2, 1, 0, 5, False, True)])
    assert ex._finish(rep).status == "fail"


# -- asymptotics bookkeeping -------------------------------------------------------

def test_remark_table_consistency():
    # q_hat = 2 y sqrt(s) up to the rounding of the printed values
    for n, (s, y, q) in ex.REMARK_TABLE.items():
        assert 2 * y * math.sqrt(s) == pytest.approx(q, rel=0.03)


def test_remark_table_first_rows():
    assert ex.REMARK_TABLE[1] == (2.2, 0.48, 1.4)
    assert ex.REMARK_TABLE[2] == (9.1, 0.83, 5.0)
    assert ex.REMARK_TABLE[3] == (24.0, 1.07, 10.5)


def _rows(D, ts, qs):
    s = math.sqrt(D)
    return [ex.AsymptoticsRow(D, n, t, q * s, q, q / (2 * math.sqrt(t))) for n, (t, q) in enumerate(zip(ts, qs), 1)]


def test_ordering_and_errors():
    rows = _rows(1e-5, [2.2, 9.1, 24.0], [1.4, 5.0, 10.5])
    assert ex.ordering_ok(rows)
    errs = ex.relative_errors(rows)
    assert all(a == pytest.approx(0, abs=1e-12) and b == pytest.approx(0, abs=1e-12) for a, b in errs.values())
    assert not ex.ordering_ok(_rows(1e-5, [2.2, 1.0], [1.4, 5.0]))
    gap = rows + [ex.AsymptoticsRow(1e-5, 4, None, None, None, None)]
    assert len(ex.relative_errors(gap)) == 3


def test_remark_run_small():
    base = ex.RemarkScenario(T=20.0, n_fronts=2, grid_n=1500)
    rows = ex.asymptotics_experiment([1e-4], base)
    assert [r.n for r in rows] == [1, 2]
    assert ex.ordering_ok(rows)
    r1 = rows[0]
    assert r1.t_n == pytest.approx(2.2, rel=0.15) and r1.q_over_sqrtD == pytest.approx(1.4, rel=0.15)
