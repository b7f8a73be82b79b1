import math

import numpy as np
import pytest

from hardsum import chainfun as cf
from hardsum.chainfun import ChainFunctionSpec
from hardsum.instance import embed_sum, epsilon_for_T, make_block_family, make_omega_n_instance, make_sc_instance
from hardsum.oracle import OracleSession
from hardsum.solvers import SOLVERS, RunAborted, make_spec, run, variance_check

SC = dict(n=8, L=1.0, sigma=0.01, Delta=1.0)


@pytest.fixture(scope="module")
def sc_t8():
    return make_sc_instance(epsilon=epsilon_for_T("SC", 8, **SC), **SC)


def test_gd_on_omega_with_small_budget():
    inst = make_omega_n_instance(8, 1.0, 1.0)
    s = OracleSession(inst)
    res = run(make_spec("gd", inst), s, 3, 0.25)
    assert res.exhausted and res.ifo_used == 3
    assert all(r >= 0.25 for _, r in res.residual_curve)


@pytest.mark.parametrize("solver", SOLVERS + ("katyushax",))
def test_no_success_before_lower_bound(sc_t8, solver):
    inst = sc_t8
    assert inst.metadata.progress_threshold == 8
    assert inst.metadata.lower_bound_ifo == 32
    eps = inst.metadata.target_epsilon
    s = OracleSession(inst)
    res = run(make_spec(solver, inst, seed=5), s, 400, eps)
    assert res.ifo_to_target is None or res.ifo_to_target >= 32
    early = [c for c in res.certificate_curve if c.step < 32]
    assert early and all(c.floor_value >= eps for c in early)
    for (t, r), c in zip(res.residual_curve, res.certificate_curve):
        assert r >= c.floor_value - 1e-10


def test_gd_single_component_classical_rate():
    p = cf.NesterovScParams(0.25, 8)
    inst = embed_sum(ChainFunctionSpec("nsc", p), make_block_family(8, 1))
    gap0 = inst.gap(np.zeros(8))
    # f(x_k) - f* <= (1 - mu / L)^k (f(x_0) - f*) with step 1/L
    k = math.ceil(math.log(gap0 / 1e-6) / -math.log(1 - 0.25))
    res = run(make_spec("gd", inst), OracleSession(inst), k, 1e-6)
    assert res.ifo_to_target is not None and res.ifo_to_target <= k


def test_svrg_estimator_unbiased(sc_t8):
    inst = sc_t8
    rng = np.random.default_rng(0)
    x = inst.scale.beta * rng.standard_normal(inst.d)
    xh = inst.scale.beta * rng.standard_normal(inst.d)
    g, gh = inst.component_grads(x), inst.component_grads(xh)
    est = g - gh + gh.mean(axis=0)
    np.testing.assert_allclose(est.mean(axis=0), inst.full(x)[1], atol=1e-12)


def test_variance_check_coincident_points(sc_t8):
    xh = np.zeros(sc_t8.d)
    rep = variance_check(sc_t8, xh, points=[xh.copy()])
    assert rep.violations == 0 and rep.max_ratio == 0.0


def test_variance_check_random_pairs(sc_t8):
    rep = variance_check(sc_t8, sc_t8.minimizer(), samples=100, seed=1)
    assert rep.samples == 100
    assert rep.violations == 0
    assert rep.avg_smooth_violations == 0
    assert rep.full_violations == 0


def test_runs_are_reproducible(sc_t8):
    a = run(make_spec("sgd", sc_t8, seed=9), OracleSession(sc_t8), 150, 1e-12)
    b = run(make_spec("sgd", sc_t8, seed=9), OracleSession(sc_t8), 150, 1e-12)
    np.testing.assert_array_equal(a.final_x, b.final_x)
    assert a.residual_curve == b.residual_curve


def test_best_so_far_is_monotone(sc_t8):
    res = run(make_spec("svrg", sc_t8, seed=2), OracleSession(sc_t8), 200, 1e-12)
    best = [r for _, r in res.best_so_far()]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_step_aborts(sc_t8):
    spec = make_spec("gd", sc_t8, step=1e200)
    with pytest.raises(RunAborted):
        run(spec, OracleSession(sc_t8), 10_000, 1e-12)


def test_unknown_hyperparameter_rejected(sc_t8):
    with pytest.raises(ValueError):
        make_spec("gd", sc_t8, momentum=0.9)


def test_run_needs_fresh_session(sc_t8):
    s = OracleSession(sc_t8)
    s.query(0, np.zeros(sc_t8.d))
    with pytest.raises(ValueError):
        run(make_spec("gd", sc_t8), s, 10, 1e-3)
