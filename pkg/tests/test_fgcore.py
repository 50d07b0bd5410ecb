import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynfg.fgcore import (DimensionMismatch, DynFactorGraph, F, LinearFactor, UnknownKey,
                          Vdot, VariableKey, assemble, build_dynamics_graph, condition,
                          graph_to_dot, qdd, tau)
from dynfg.robot import compute_twists, planar_chain, puma_like
from dynfg.spatial import ad, adjoint

angles = arrays(float, 3, elements=st.floats(-3, 3))
rates = arrays(float, 3, elements=st.floats(-2, 2))


def r3():
    return planar_chain(3, gravity=(0, -9.81, 0))


def inverse_graph(model, q, qd, qdd_):
    g = build_dynamics_graph(model, q, qd)
    return condition(g, {qdd(i + 1): qdd_[i] for i in range(model.n)})


def test_counts_n3_and_n1():
    g = build_dynamics_graph(r3(), np.zeros(3), np.zeros(3))
    assert len(g.variables) == 12 and len(g.factors) == 9
    kinds = [k.kind for k in g.variables]
    assert all(kinds.count(kd) == 3 for kd in set(kinds))
    g1 = build_dynamics_graph(planar_chain(1), [0.0], [0.0])
    assert len(g1.variables) == 4 and len(g1.factors) == 3


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        build_dynamics_graph(r3(), np.zeros(2), np.zeros(3))


def test_acceleration_factor_coefficients(rng):
    m = puma_like()
    for _ in range(5):
        q, qd_ = rng.uniform(-3, 3, 6), rng.uniform(-1, 1, 6)
        g = build_dynamics_graph(m, q, qd_)
        f = next(f for f in g.factors if f.label == "acceleration" and Vdot(1) in f.blocks
                 and Vdot(2) in f.blocks)
        a2 = m.joints[1].axis
        ad21 = adjoint(m.joints[1].pose(q[1]).inverse())
        np.testing.assert_allclose(f.blocks[Vdot(2)], np.eye(6))
        np.testing.assert_allclose(f.blocks[Vdot(1)], -ad21, atol=1e-14)
        np.testing.assert_allclose(f.blocks[qdd(2)], -a2.reshape(6, 1))
        v2 = compute_twists(m, q, qd_)[1]
        np.testing.assert_allclose(f.rhs, ad(v2) @ a2 * qd_[1], atol=1e-14)
        # the residual of the acceleration relation at random values
        vals = {k: rng.normal(size=d) for k, d in g.variables.items()}
        direct = vals[Vdot(2)] - ad21 @ vals[Vdot(1)] - a2 * vals[qdd(2)] - ad(v2) @ a2 * qd_[1]
        np.testing.assert_allclose(f.error(vals), direct, atol=1e-12)


def test_condition_empty_is_identity():
    g = build_dynamics_graph(r3(), np.zeros(3), np.zeros(3))
    assert condition(g, {}) is g


def test_condition_inverse_and_forward():
    m = r3()
    g = build_dynamics_graph(m, np.ones(3), np.ones(3))
    gi = condition(g, {qdd(i): 0.0 for i in (1, 2, 3)})
    assert len(gi.factors) == 9
    assert set(gi.variables) == {Vdot(i) for i in (1, 2, 3)} | {F(i) for i in (1, 2, 3)} | \
        {tau(i) for i in (1, 2, 3)}
    gf = condition(g, {tau(i): 0.0 for i in (1, 2, 3)})
    assert len(gf.factors) == 9
    assert {k.kind for k in gf.variables} == {"twist_accel", "wrench", "joint_accel"}
    for f in gi.factors:
        assert not set(f.blocks) & set(gi.known)


def test_condition_errors():
    g = build_dynamics_graph(r3(), np.zeros(3), np.zeros(3))
    with pytest.raises(UnknownKey):
        condition(g, {qdd(7): 0.0})
    with pytest.raises(DimensionMismatch):
        condition(g, {F(1): np.zeros(3)})


def test_factor_validation():
    g = DynFactorGraph()
    g.add_variable(F(1))
    with pytest.raises(UnknownKey):
        g.add(LinearFactor({F(2): np.eye(6)}, np.zeros(6)))
    with pytest.raises(DimensionMismatch):
        g.add(LinearFactor({F(1): np.eye(3)}, np.zeros(3)))
    with pytest.raises(DimensionMismatch):
        LinearFactor({F(1): np.eye(6)}, np.zeros(5))


def test_assemble_3r_pattern():
    m = r3()
    sys_ = assemble(inverse_graph(m, np.zeros(3), np.zeros(3), np.zeros(3)))
    p = sys_.pattern()
    assert p.shape == (9, 9)
    # acc: 1 + 2 + 2, wrench: 3 + 3 + 2, torque: 2 each
    assert p.sum() == 19
    widths = dict(zip(sys_.col_keys, sys_.col_sizes))
    assert widths[F(1)] == 6 and widths[tau(1)] == 1
    assert sys_.shape == (3 * 6 + 3 * 6 + 3, 3 * 6 + 3 * 6 + 3)


def test_assemble_empty():
    s = assemble(DynFactorGraph())
    assert s.shape == (0, 0)
    a, b = s.to_dense()
    assert a.size == 0 and b.size == 0


def test_dense_solve_matches_elimination(rng):
    from dynfg.elim import solve
    m = r3()
    for _ in range(10):
        q, qd_, qdd_ = rng.uniform(-3, 3, 3), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        g = inverse_graph(m, q, qd_, qdd_)
        a, b = assemble(g).to_dense()
        dense = assemble(g).split(np.linalg.solve(a, b))
        sol = solve(g, "rnea")
        for k in g.variables:
            np.testing.assert_allclose(sol[k], dense[k], atol=1e-10)


def test_dot_export_shapes():
    g = inverse_graph(r3(), np.zeros(3), np.zeros(3), np.zeros(3))
    dot = graph_to_dot(g)
    assert dot.startswith("graph {")
    assert dot.count("shape=ellipse") == 9
    full = graph_to_dot(build_dynamics_graph(r3(), np.zeros(3), np.zeros(3),
                                             include_twists=True), full=True)
    assert "shape=box" in full
    assert "twist1" in full


def test_key_names_round_trip():
    for k in (F(2), Vdot(1), qdd(3), tau(4), VariableKey("wrench", 2, 5)):
        assert VariableKey.parse(k.spec()) == k
    assert VariableKey.parse("tau:2") == tau(2)


@given(angles, rates, arrays(float, 3, elements=st.floats(-2, 2)))
def test_residual_exactness(q, qd_, qdd_):
    from dynfg.elim import solve
    m = r3()
    g = inverse_graph(m, q, qd_, qdd_)
    sol = solve(g, "rnea")
    full = build_dynamics_graph(m, q, qd_)
    vals = dict(sol.values)
    vals.update({qdd(i + 1): np.array([qdd_[i]]) for i in range(3)})
    assert full.residual_norm(vals) < 1e-9


@given(angles, rates, arrays(float, 3, elements=st.floats(-2, 2)))
def test_conditioning_commutes_with_assembly(q, qd_, known):
    m = r3()
    g = build_dynamics_graph(m, q, qd_)
    kmap = {qdd(i + 1): known[i] for i in range(3)}
    a_full, b_full = assemble(g).to_dense()
    full = assemble(g)
    co = np.concatenate([[0], np.cumsum(full.col_sizes)]).astype(int)
    keep, drop = [], []
    x_known = []
    for j, k in enumerate(full.col_keys):
        cols = list(range(co[j], co[j + 1]))
        if k in kmap:
            drop += cols
            x_known.append(np.atleast_1d(kmap[k]))
        else:
            keep += cols
    b_expect = b_full - a_full[:, drop] @ np.concatenate(x_known)
    a_cond, b_cond = assemble(condition(g, kmap)).to_dense()
    # conditioning keeps the variable order of the remaining unknowns
    np.testing.assert_allclose(a_cond, a_full[:, keep], atol=1e-12)
    np.testing.assert_allclose(b_cond, b_expect, atol=1e-12)


@given(st.integers(1, 8))
def test_variable_adjacency_is_banded(n):
    m = planar_chain(n)
    g = build_dynamics_graph(m, np.zeros(n), np.zeros(n))
    for k, nbrs in g.adjacency().items():
        for u in nbrs:
            assert abs(u.index - k.index) <= 1
        # each variable meets at most three variable groups per neighbouring joint
        assert len(nbrs) <= 3 * 3
