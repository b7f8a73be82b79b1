import json
import math

import numpy as np
import pytest

from hardsum import chainfun as cf
from hardsum.chainfun import C_GAMMA, ChainFunctionSpec
from hardsum.instance import (
    HypothesisError,
    ScaleParams,
    build,
    embed_sum,
    epsilon_for_T,
    instance_from_dict,
    make_avg_nc_instance,
    make_block_family,
    make_cvx_instance,
    make_ind_nc_instance,
    make_omega_n_instance,
    make_sc_instance,
    rescale,
)


def avg_smooth_violations(inst, pairs, seed=0, slack=1e-9):
    rng = np.random.default_rng(seed)
    L = inst.metadata.avg_smooth_L
    bad = 0
    for _ in range(pairs):
        x = inst.scale.beta * rng.standard_normal(inst.d)
        y = x + inst.scale.beta * rng.standard_normal(inst.d) * rng.uniform(0.01, 2)
        diff = inst.component_grads(x) - inst.component_grads(y)
        lhs = np.mean(np.sum(diff * diff, axis=1))
        bad += lhs > L * L * np.sum((x - y) ** 2) * (1 + slack)
    return bad


# ---- embeddings


def test_block_selector_coordinates():
    fam = make_block_family(2, 3)
    u = fam.matrix(1)
    expected = np.zeros((2, 6))
    expected[0, 2] = expected[1, 3] = 1.0
    np.testing.assert_array_equal(u, expected)


def test_single_block_is_identity():
    np.testing.assert_array_equal(make_block_family(4, 1).matrix(0), np.eye(4))


@pytest.mark.parametrize("dense", [False, True])
def test_block_orthogonality(dense):
    fam = make_block_family(3, 4, dense=dense, seed=7)
    tol = 0.0 if not dense else 1e-12
    for i in range(4):
        for j in range(4):
            prod = fam.matrix(i) @ fam.matrix(j).T
            target = np.eye(3) if i == j else np.zeros((3, 3))
            assert np.max(np.abs(prod - target)) <= tol


def test_blocks_round_trip():
    fam = make_block_family(3, 5, dense=True, seed=1)
    x = np.random.default_rng(0).standard_normal(15)
    np.testing.assert_allclose(fam.from_blocks(fam.to_blocks(x)), x, atol=1e-12)
    for i in range(5):
        np.testing.assert_allclose(fam.to_blocks(x)[i], fam.matrix(i) @ x, atol=1e-12)


# ---- generic builders


def test_embed_interval_example():
    base = ChainFunctionSpec("nsc", cf.NesterovScParams(0.25, 4))
    inst = embed_sum(base, make_block_family(4, 4))
    assert inst.metadata.F_interval == pytest.approx((0.125, 1.0))
    w = np.linalg.eigvalsh(inst.full_hessian(np.zeros(inst.d)))
    assert w[0] >= 0.125 - 1e-8 and w[-1] <= 1 + 1e-8


def test_embed_single_component_is_base():
    base = ChainFunctionSpec("carmon", cf.CarmonParams(0.25, 4))
    inst = embed_sum(base, make_block_family(5, 1))
    x = np.random.default_rng(0).standard_normal(5)
    v, g = inst.component(0, x)
    bv, bg = base.eval(x)
    assert v == pytest.approx(float(bv))
    np.testing.assert_allclose(g, bg)


@pytest.mark.parametrize("family", ["nsc", "carmon"])
def test_embed_average_smoothness_sampling(family):
    params = cf.NesterovScParams(0.04, 6) if family == "nsc" else cf.CarmonParams(0.04, 5)
    base = ChainFunctionSpec(family, params)
    inst = embed_sum(base, make_block_family(base.dim, 4))
    assert avg_smooth_violations(inst, 2000) == 0


def test_rescale_examples():
    base = ChainFunctionSpec("nsc", cf.NesterovScParams(0.25, 4))
    inst = embed_sum(base, make_block_family(4, 4))
    same = rescale(inst, ScaleParams(1.0, 1.0))
    assert same.metadata == inst.metadata
    assert rescale(inst, ScaleParams(2.0, 1.0)).metadata.avg_smooth_L == pytest.approx(2 * inst.metadata.avg_smooth_L)
    r = rescale(inst, ScaleParams(4.0, 2.0))
    assert r.metadata.avg_smooth_L == pytest.approx(inst.metadata.avg_smooth_L)
    assert r.metadata.delta_bound == pytest.approx(4 * inst.metadata.delta_bound)
    assert r.metadata.dist_bound == pytest.approx(2 * inst.metadata.dist_bound)


def test_rescale_composes():
    base = ChainFunctionSpec("nc", cf.NesterovCParams(3))
    inst = embed_sum(base, make_block_family(5, 2))
    a = rescale(rescale(inst, ScaleParams(2.0, 3.0)), ScaleParams(0.5, 0.25))
    b = rescale(inst, ScaleParams(1.0, 0.75))
    x = np.random.default_rng(0).standard_normal(inst.d)
    assert a.full(x)[0] == pytest.approx(b.full(x)[0])
    np.testing.assert_allclose(a.full(x)[1], b.full(x)[1])
    assert a.metadata.avg_smooth_L == pytest.approx(b.metadata.avg_smooth_L)


# ---- SC


def test_sc_example_chain_length():
    inst = make_sc_instance(16, 1.0, 0.01, 1.0, 1e-3)
    md = inst.metadata
    assert inst.base.params.alpha == pytest.approx(0.04)
    # the closed-form chain length is kept for reference
    assert md.notes["closed_form_T"] == 35 == math.ceil(5 * math.log(1024))
    assert md.notes["closed_form_lower_bound"] == 280
    T = md.progress_threshold
    assert md.lower_bound_ifo == math.ceil(16 * T / 2)
    # T is the largest chain length whose half-block certificate still reaches epsilon
    assert inst.certified_floor(16 // 2 + 1) >= 1e-3
    longer = make_sc_instance(16, 1.0, 0.01, 1.0, 1e-3 / 10)
    assert longer.metadata.progress_threshold > T


def test_sc_constants_numerically():
    inst = make_sc_instance(8, 1.0, 0.02, 1.0, 1e-3)
    md = inst.metadata
    assert md.F_interval == pytest.approx((0.02, 1.0))
    assert md.avg_smooth_L == pytest.approx(1.0)
    w = np.linalg.eigvalsh(inst.full_hessian(np.zeros(inst.d)))
    assert w[0] >= 0.02 - 1e-8 and w[-1] <= 1.0 + 1e-8
    assert inst.gap(np.zeros(inst.d)) == pytest.approx(1.0, rel=1e-10)
    assert avg_smooth_violations(inst, 1000) == 0


def test_sc_large_sigma_falls_back_to_omega():
    inst = make_sc_instance(16, 1.0, 1.0, 1.0, 1e-2)
    assert inst.family == "OMEGA-N"
    assert inst.metadata.lower_bound_ifo == 8


def test_sc_hypotheses():
    with pytest.raises(HypothesisError):
        make_sc_instance(16, 1.0, 2.0, 1.0, 1e-3)
    with pytest.raises(HypothesisError):
        make_sc_instance(16, 1.0, 1e-4, 1.0, 10.0)


# ---- CVX


def test_cvx_example():
    inst = make_cvx_instance(16, 1.0, 1.0, 1 / 1024)
    md = inst.metadata
    assert md.notes["closed_form_T"] == 4
    T = md.progress_threshold
    assert md.lower_bound_ifo == 8 * T
    assert inst.certified_floor(9) >= 1 / 1024
    xs = inst.minimizer()
    assert np.linalg.norm(xs) == pytest.approx(1.0, rel=1e-12)
    assert np.linalg.norm(inst.full(xs)[1]) <= 1e-12


def test_cvx_omega_branch():
    inst = make_cvx_instance(16, 1.0, 1.0, 1 / 8)
    assert inst.family == "OMEGA-N-CVX"


# ---- nonconvex families


def test_avg_nc_alpha_branch():
    inst = make_avg_nc_instance(16, 1.0, 0.09, 1.0, 9e-4)
    assert inst.base.params.alpha == pytest.approx(1 / 360)
    with pytest.raises(HypothesisError):
        make_avg_nc_instance(16, 1.0, 0.09, 1.0, 1e-3)


def test_avg_nc_classes():
    inst = make_avg_nc_instance(8, 1.0, 0.01, 1.0, 2e-4)
    md = inst.metadata
    assert md.F_interval[0] >= -0.01 * (1 + 1e-12)
    assert md.F_interval[1] <= 1.0 * (1 + 1e-12)
    assert md.avg_smooth_L <= 1.0 * (1 + 1e-12)
    rng = np.random.default_rng(0)
    for _ in range(3):
        w = np.linalg.eigvalsh(inst.full_hessian(inst.scale.beta * rng.standard_normal(inst.d)))
        assert w[0] >= -0.01 - 1e-8 and w[-1] <= 1.0 + 1e-8
    assert inst.gap(np.zeros(inst.d)) <= 1.0


def test_ind_nc_lambda():
    inst = make_ind_nc_instance(8, 1.0, 0.1, 1.0, 1e-3)
    alpha = inst.base.params.alpha
    assert alpha == pytest.approx(min(1.0, 8 / 360, 5 * 8 * 0.1 / 360))
    assert inst.scale.lam == pytest.approx(160 * 8 * 1e-6 / alpha**1.5)


def test_ind_nc_component_intervals():
    inst = make_ind_nc_instance(4, 1.0, 0.1, 1.0, 2e-3)
    alpha, n = inst.base.params.alpha, inst.n
    c = inst.scale.lam / inst.scale.beta**2
    rng = np.random.default_rng(0)
    for _ in range(3):
        x = inst.scale.beta * 2 * rng.standard_normal(inst.d)
        for i in range(n):
            w = np.linalg.eigvalsh(inst.component_hessian(i, x) / c)
            assert w[0] >= -alpha * C_GAMMA / n - 1e-8
            assert w[-1] <= 4 + alpha * C_GAMMA / n + 1e-8
    assert inst.metadata.component_interval[1] <= 1.0 + 1e-12
    assert -inst.metadata.component_interval[0] <= 0.1 + 1e-12


def test_ind_nc_average_equals_separable_sum():
    inst = make_ind_nc_instance(4, 1.0, 0.1, 1.0, 2e-3)
    p = inst.base.params
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = inst.scale.beta * rng.standard_normal(inst.d)
        avg = np.mean([inst.component(i, x)[0] for i in range(inst.n)])
        blocks = inst.embedding.to_blocks(x / inst.scale.beta)
        direct = inst.scale.lam * float(np.mean(cf.fc_eval(blocks, p)[0]))
        assert abs(avg - direct) <= 1e-10 * max(1.0, abs(direct))
        assert abs(inst.full(x)[0] - direct) <= 1e-10 * max(1.0, abs(direct))


def test_component_grads_match_components():
    for inst in (make_ind_nc_instance(4, 1.0, 0.1, 1.0, 2e-3), make_sc_instance(4, 1.0, 0.05, 1.0, 1e-3),
                 make_omega_n_instance(5, 2.0, 1.0)):
        x = np.random.default_rng(2).standard_normal(inst.d)
        g = inst.component_grads(x)
        for i in range(inst.n):
            np.testing.assert_allclose(g[i], inst.component(i, x)[1], atol=1e-12)
        np.testing.assert_allclose(g.mean(axis=0), inst.full(x)[1], atol=1e-12)


# ---- Omega(n)


def test_omega_unscaled_constants():
    inst = make_omega_n_instance(8, 1.0, 0.5, "SC")  # lam = 1, beta = 1
    assert inst.scale == ScaleParams(1.0, 1.0)
    assert inst.gap(np.zeros(8)) == pytest.approx(0.5)
    assert np.linalg.norm(inst.minimizer()) == pytest.approx(1.0)
    x = np.zeros(8)
    x[:4] = 1 / math.sqrt(8)
    assert inst.gap(x) >= 0.25 - 1e-12


def test_omega_scaled_floor():
    inst = make_omega_n_instance(16, 3.0, 2.0, "SC")
    assert inst.metadata.floor_coef == pytest.approx(1.0)  # lam / 4 = Delta / 2
    assert inst.certified_floor(8) == pytest.approx(1.0)
    assert inst.certified_floor(7) == 0.0


# ---- serialization and helpers


@pytest.mark.parametrize("family,params", [
    ("SC", dict(n=4, L=1.0, sigma=0.05, Delta=1.0, epsilon=1e-3)),
    ("CVX", dict(n=4, L=1.0, B=1.0, epsilon=1e-3)),
    ("AVG-NC", dict(n=4, L=1.0, sigma=0.5, Delta=1.0, epsilon=1e-3)),
    ("IND-NC", dict(n=4, L=1.0, sigma=0.1, Delta=1.0, epsilon=2e-3)),
    ("OMEGA-N", dict(n=4, L=1.0, Delta=1.0)),
])
def test_serialization_round_trip(family, params):
    inst = build(family, **params)
    doc = json.loads(json.dumps(inst.to_dict()))
    back = instance_from_dict(doc)
    assert back.to_dict() == inst.to_dict()
    x = np.random.default_rng(0).standard_normal(inst.d)
    assert back.full(x)[0] == inst.full(x)[0]


def test_dense_round_trip():
    inst = make_sc_instance(4, 1.0, 0.05, 1.0, 1e-3, dense=True, seed=11)
    back = instance_from_dict(json.loads(json.dumps(inst.to_dict())))
    x = np.random.default_rng(0).standard_normal(inst.d)
    np.testing.assert_array_equal(back.full(x)[1], inst.full(x)[1])


@pytest.mark.parametrize("family,params", [
    ("SC", dict(n=8, L=1.0, sigma=0.01, Delta=1.0)),
    ("CVX", dict(n=8, L=1.0, B=1.0)),
    ("IND-NC", dict(n=8, L=1.0, sigma=0.01, Delta=1.0)),
])
def test_epsilon_for_T(family, params):
    eps = epsilon_for_T(family, 6, **params)
    assert build(family, epsilon=eps, **params).metadata.progress_threshold == 6


def test_component_index_checked():
    inst = make_omega_n_instance(4, 1.0, 1.0)
    with pytest.raises(IndexError):
        inst.component(4, np.zeros(4))
