from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynfg.dyn import (DynamicsProblem, aba_oracle, crba_forward, crba_oracle,
                       featherstone_hybrid_oracle, forward_dynamics, hybrid_dynamics,
                       inverse_dynamics, rnea_oracle, solve_problem)
from dynfg.fgcore import build_dynamics_graph, qdd
from dynfg.robot import (JointState, kinetic_energy, load_urdf_file,
                         planar_chain, puma_like, random_state)
from dynfg.spatial import ad, adjoint

DATA = resources.files("dynfg") / "data"
ALL_TAGS = ("rnea", "crba", "aba", "min_degree", "colamd_like", "nested_dissection",
            "reverse_index")


def pendulum():
    return load_urdf_file(DATA / "pend.urdf")


def inv(model, q, qd_, qdd_, **kw):
    return inverse_dynamics(DynamicsProblem(model, JointState.inverse(q, qd_, qdd_), **kw))[0].tau


def fwd(model, q, qd_, tau_, ordering="aba", **kw):
    p = DynamicsProblem(model, JointState.forward(q, qd_, tau_), **kw)
    return forward_dynamics(p, ordering)[0].qdd


def stacked_inverse(model, q, qd_, qdd_):
    """Every link relation stacked in one dense system over (V, Vdot, F, tau)."""
    n = model.n
    size = 19 * n
    a = np.zeros((size, size))
    b = np.zeros(size)
    V = lambda i: slice(6 * i, 6 * i + 6)
    A = lambda i: slice(6 * n + 6 * i, 6 * n + 6 * i + 6)
    W = lambda i: slice(12 * n + 6 * i, 12 * n + 6 * i + 6)
    T = lambda i: 18 * n + i
    ads = [adjoint(j.pose(qi).inverse()) for j, qi in zip(model.joints, q)]
    row = 0
    for i, j in enumerate(model.joints):
        rows = slice(row, row + 6)
        a[rows, V(i)] = np.eye(6)
        if i:
            a[rows, V(i - 1)] = -ads[i]
        b[rows] = j.axis * qd_[i]
        row += 6
    for i, j in enumerate(model.joints):
        rows = slice(row, row + 6)
        a[rows, A(i)] = np.eye(6)
        if i:
            a[rows, A(i - 1)] = -ads[i]
        else:
            b[rows] = ads[0] @ model.base_acceleration
        b[rows] += j.axis * qdd_[i]
        row += 6
    v = np.linalg.solve(a[:6 * n, :6 * n], b[:6 * n]).reshape(n, 6)
    # the bracket terms are nonlinear in V, so they enter with V from the twist rows
    for i, j in enumerate(model.joints):
        b[6 * n + 6 * i:6 * n + 6 * i + 6] += ad(v[i]) @ j.axis * qd_[i]
    for i in range(n):
        rows = slice(row, row + 6)
        g = model.links[i + 1].inertia
        a[rows, W(i)] = np.eye(6)
        a[rows, A(i)] = -g
        if i + 1 < n:
            a[rows, W(i + 1)] = -ads[i + 1].T
        b[rows] = -ad(v[i]).T @ g @ v[i]
        row += 6
    for i, j in enumerate(model.joints):
        a[row, W(i)] = j.axis
        a[row, T(i)] = -1.0
        row += 1
    x = np.linalg.solve(a, b)
    return x[18 * n:]


def test_zero_state_zero_torque():
    for m in (planar_chain(3), puma_like(gravity=(0, 0, 0))):
        np.testing.assert_allclose(inv(m, np.linspace(-1, 1, m.n), np.zeros(m.n),
                                       np.zeros(m.n), gravity=np.zeros(3)), 0.0, atol=1e-14)
        np.testing.assert_allclose(rnea_oracle(m, np.ones(m.n), np.zeros(m.n), np.zeros(m.n),
                                               gravity=np.zeros(3)), 0.0, atol=1e-14)
        np.testing.assert_allclose(fwd(m, np.ones(m.n), np.zeros(m.n), np.zeros(m.n),
                                       gravity=np.zeros(3)), 0.0, atol=1e-14)


def test_pendulum_holding_torque_and_release():
    m = pendulum()
    tau = inv(m, [0.0], [0.0], [0.0])
    assert abs(tau[0] - 9.81) < 1e-9
    acc = fwd(m, [0.0], [0.0], [0.0])
    assert abs(acc[0] + 9.81) < 1e-9
    # away from horizontal the gravity moment scales with cos(q)
    assert abs(inv(m, [0.4], [0.0], [0.0])[0] - 9.81 * np.cos(0.4)) < 1e-9


def test_pendulum_mass_matrix():
    np.testing.assert_allclose(crba_oracle(pendulum(), [0.3]), [[1.0]], atol=1e-12)


def test_inverse_against_stacked_dense_oracle(rng):
    m = planar_chain(3)
    for _ in range(20):
        q, qd_, qdd_ = random_state(m, rng)
        np.testing.assert_allclose(inv(m, q, qd_, qdd_), stacked_inverse(m, q, qd_, qdd_),
                                   atol=1e-10)
    m = puma_like()
    for _ in range(10):
        q, qd_, qdd_ = random_state(m, rng)
        np.testing.assert_allclose(inv(m, q, qd_, qdd_), stacked_inverse(m, q, qd_, qdd_),
                                   atol=1e-10)


def test_inverse_residuals(rng):
    m = puma_like()
    q, qd_, qdd_ = random_state(m, rng)
    state, sol = inverse_dynamics(DynamicsProblem(m, JointState.inverse(q, qd_, qdd_)))
    vals = dict(sol.values)
    vals.update({qdd(i + 1): qdd_[i:i + 1] for i in range(m.n)})
    assert build_dynamics_graph(m, q, qd_).residual_norm(vals) < 1e-9


def test_tool_wrench_matches_oracle(rng):
    m = puma_like()
    for _ in range(10):
        q, qd_, qdd_ = random_state(m, rng)
        ft = rng.normal(size=6)
        np.testing.assert_allclose(inv(m, q, qd_, qdd_, tool_wrench=ft),
                                   rnea_oracle(m, q, qd_, qdd_, tool_wrench=ft), atol=1e-10)
        tau = rng.normal(size=6)
        np.testing.assert_allclose(fwd(m, q, qd_, tau, tool_wrench=ft),
                                   aba_oracle(m, q, qd_, tau, tool_wrench=ft), atol=1e-8)


def test_forward_triple_check(rng):
    for m in (planar_chain(3, gravity=(0, -9.81, 0)), puma_like()):
        for _ in range(20):
            q, qd_, tau = random_state(m, rng)
            a = aba_oracle(m, q, qd_, tau)
            np.testing.assert_allclose(crba_forward(m, q, qd_, tau), a, atol=1e-8)
            np.testing.assert_allclose(fwd(m, q, qd_, tau), a, atol=1e-8)


def test_round_trip(rng):
    for m in (planar_chain(3, gravity=(0, -9.81, 0)), puma_like()):
        for _ in range(50):
            q, qd_, x = random_state(m, rng)
            np.testing.assert_allclose(inv(m, q, qd_, fwd(m, q, qd_, x)), x, atol=1e-8)
            np.testing.assert_allclose(fwd(m, q, qd_, inv(m, q, qd_, x)), x, atol=1e-8)


def test_mass_matrix_properties(rng):
    m = puma_like()
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, 6)
        mm = crba_oracle(m, q)
        np.testing.assert_allclose(mm, mm.T, atol=1e-12)
        assert np.linalg.eigvalsh(mm).min() > 0


def test_mass_matrix_from_unit_rnea_calls(rng):
    m = puma_like()
    for _ in range(10):
        q = rng.uniform(-np.pi, np.pi, 6)
        cols = [rnea_oracle(m, q, np.zeros(6), e, gravity=np.zeros(3)) for e in np.eye(6)]
        np.testing.assert_allclose(crba_oracle(m, q), np.array(cols).T, atol=1e-10)


def test_hybrid_boundaries_and_3r_configuration(rng):
    m = planar_chain(3, gravity=(0, -9.81, 0))
    for _ in range(10):
        q, qd_, x = random_state(m, rng)
        y = rng.uniform(-1, 1, 3)
        # all inverse-type and all forward-type joints reduce to the plain solvers
        all_id = DynamicsProblem(m, JointState.hybrid(q, qd_, x, y, [True] * 3))
        np.testing.assert_allclose(hybrid_dynamics(all_id)[0].tau, inv(m, q, qd_, x),
                                   atol=1e-10)
        np.testing.assert_allclose(featherstone_hybrid_oracle(all_id).tau,
                                   inv(m, q, qd_, x), atol=1e-10)
        all_fd = DynamicsProblem(m, JointState.hybrid(q, qd_, x, y, [False] * 3))
        np.testing.assert_allclose(hybrid_dynamics(all_fd)[0].qdd, fwd(m, q, qd_, y),
                                   atol=1e-10)
        np.testing.assert_allclose(featherstone_hybrid_oracle(all_fd).qdd,
                                   fwd(m, q, qd_, y), atol=1e-10)
        # qdd_1 known, tau_2 and tau_3 known
        p = DynamicsProblem(m, JointState.hybrid(q, qd_, x, y, [True, False, False]))
        el, _ = hybrid_dynamics(p, "elimination")
        fs, none = hybrid_dynamics(p, "featherstone")
        assert none is None
        np.testing.assert_allclose(el.qdd, fs.qdd, atol=1e-9)
        np.testing.assert_allclose(el.tau, fs.tau, atol=1e-9)
        assert el.qdd[0] == x[0] and np.all(el.tau[1:] == y[1:])


def test_hybrid_is_consistent_with_inverse(rng):
    m = puma_like()
    q, qd_, x = random_state(m, rng)
    mask = np.array([True, False, True, False, False, True])
    st_, _ = hybrid_dynamics(DynamicsProblem(m, JointState.hybrid(q, qd_, x, x, mask)))
    np.testing.assert_allclose(inv(m, q, qd_, st_.qdd), st_.tau, atol=1e-9)


def test_problem_validation():
    m = planar_chain(2)
    with pytest.raises(ValueError):
        DynamicsProblem(m, JointState.inverse([0, 0, 0], [0, 0, 0], [0, 0, 0]))
    p = DynamicsProblem(m, JointState.forward([0, 0], [0, 0], [0, 0]))
    with pytest.raises(ValueError):
        inverse_dynamics(p)
    with pytest.raises(ValueError):
        hybrid_dynamics(p, "magic")


def test_every_ordering_same_answer(rng):
    m = puma_like()
    for mask in (np.ones(6, bool), np.zeros(6, bool), rng.random(6) < 0.5):
        q, qd_, x = random_state(m, rng)
        p = DynamicsProblem(m, JointState.hybrid(q, qd_, x, x, mask))
        ref, _ = solve_problem(p)
        for tag in ALL_TAGS:
            try:
                got, _ = solve_problem(p, tag)
            except ValueError:
                continue
            np.testing.assert_allclose(got.qdd, ref.qdd, atol=1e-9)
            np.testing.assert_allclose(got.tau, ref.tau, atol=1e-9)


def power_balance_errors(model, seconds=1.0, dt=1e-3, fd_step=1e-6):
    """Relative |tau.qd - dKE/dt| along an RK4 rollout under a smooth torque."""
    q = np.array([0.3, -0.5, 0.8])
    qd_ = np.array([0.5, -0.2, 0.4])
    torque = lambda t: np.array([np.sin(2 * t), 0.5 * np.cos(3 * t), -0.3 * np.sin(t)])
    acc = lambda t, q_, v_: fwd(model, q_, v_, torque(t))
    errs = []
    t = 0.0
    for step in range(int(round(seconds / dt))):
        if step % 50 == 0:
            a = acc(t, q, qd_)
            ke = lambda s: kinetic_energy(model, q + s * qd_ + 0.5 * s * s * a, qd_ + s * a)
            dke = (ke(fd_step) - ke(-fd_step)) / (2 * fd_step)
            power = torque(t) @ qd_
            errs.append(abs(power - dke) / max(abs(power), 1e-3))
        k1q, k1v = qd_, acc(t, q, qd_)
        k2q, k2v = qd_ + 0.5 * dt * k1v, acc(t + dt / 2, q + 0.5 * dt * k1q, qd_ + 0.5 * dt * k1v)
        k3q, k3v = qd_ + 0.5 * dt * k2v, acc(t + dt / 2, q + 0.5 * dt * k2q, qd_ + 0.5 * dt * k2v)
        k4q, k4v = qd_ + dt * k3v, acc(t + dt, q + dt * k3q, qd_ + dt * k3v)
        q = q + dt / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        qd_ = qd_ + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t += dt
    return errs


def test_power_balance():
    errs = power_balance_errors(planar_chain(3, rotational=0.05))
    assert max(errs) < 1e-4


@given(st.integers(0, 10**6), st.sampled_from([1, 2, 3, 6]))
def test_rnea_agreement_property(seed, n):
    rng = np.random.default_rng(seed)
    m = puma_like() if n == 6 else planar_chain(n, gravity=(0, -9.81, 0))
    q, qd_, x = random_state(m, rng)
    assert np.max(np.abs(inv(m, q, qd_, x) - rnea_oracle(m, q, qd_, x))) < 1e-10
