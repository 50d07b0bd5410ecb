import math
import warnings
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynfg.robot import (BranchingChain, Joint, JointState, Link, MalformedXml, RobotModel,
                         UnsupportedJointType,
                         cartpole_model, compute_twists, gravity_base_acceleration,
                         kinetic_energy, load_urdf, load_urdf_file, puma_like)
from dynfg.spatial import Pose, adjoint, spatial_inertia

DATA = resources.files("dynfg") / "data"

ONE_LINK = """<robot name="one">
  <link name="base"/>
  <link name="l1"><inertial><origin xyz="0.5 0 0"/><mass value="2"/>
    <inertia ixx="0" iyy="0" izz="0" ixy="0" ixz="0" iyz="0"/></inertial></link>
  <joint name="j1" type="{kind}"><parent link="base"/><child link="l1"/>
    <axis xyz="0 0 1"/><limit lower="-1" upper="1" effort="5" velocity="2"/></joint>
</robot>"""


def chain_urdf(middle_type):
    return f"""<robot name="c">
  <link name="base"/>
  <link name="a"><inertial><origin xyz="0.3 0 0"/><mass value="1"/>
    <inertia ixx="0.01" iyy="0.01" izz="0.01" ixy="0" ixz="0" iyz="0"/></inertial></link>
  <link name="b"><inertial><origin xyz="0 0.2 0"/><mass value="0.5"/>
    <inertia ixx="0.01" iyy="0.01" izz="0.01" ixy="0" ixz="0" iyz="0"/></inertial></link>
  <link name="c"><inertial><origin xyz="0 0 0.4"/><mass value="0.7"/>
    <inertia ixx="0.02" iyy="0.01" izz="0.01" ixy="0" ixz="0" iyz="0"/></inertial></link>
  <joint name="j1" type="revolute"><parent link="base"/><child link="a"/>
    <axis xyz="0 0 1"/><limit lower="-3" upper="3"/></joint>
  <joint name="j2" type="{middle_type}"><parent link="a"/><child link="b"/>
    <origin xyz="0.6 0 0" rpy="0.3 0 0.2"/><axis xyz="0 1 0"/><limit lower="-3" upper="3"/></joint>
  <joint name="j3" type="revolute"><parent link="b"/><child link="c"/>
    <origin xyz="0 0.4 0.1"/><axis xyz="1 0 0"/><limit lower="-3" upper="3"/></joint>
</robot>"""


def test_minimal_urdf():
    m = load_urdf(ONE_LINK.format(kind="revolute"))
    assert m.n == 1
    assert abs(np.linalg.norm(m.joints[0].axis[:3]) - 1.0) < 1e-12
    assert m.joints[0].lower_limit == -1 and m.joints[0].upper_limit == 1
    assert m.joints[0].effort_limit == 5


def test_continuous_is_unbounded_revolute():
    m = load_urdf(ONE_LINK.format(kind="continuous"))
    j = m.joints[0]
    assert j.kind == "revolute"
    assert j.lower_limit == -math.inf and j.upper_limit == math.inf


def test_default_gravity_in_base_acceleration():
    m = load_urdf(ONE_LINK.format(kind="revolute"))
    np.testing.assert_allclose(m.base_acceleration, [0, 0, 0, 0, 0, 9.81])


def test_r3_offsets_match_hand_built_transforms():
    m = load_urdf_file(DATA / "r3.urdf")
    assert m.n == 3
    for j in m.joints:
        np.testing.assert_allclose(j.offset.matrix(), Pose(np.eye(3), [1, 0, 0]).matrix(),
                                   atol=1e-12)
    # the tip of the chain at q = (pi/2, 0, 0) sits at (0, 3) in the base frame
    t = Pose.identity()
    for j, q in zip(m.joints, (math.pi / 2, 0.0, 0.0)):
        t = t @ j.pose(q)
    np.testing.assert_allclose(t.translation, [0, 3, 0], atol=1e-12)


def test_shipped_urdfs_load():
    names = {"pend.urdf": 1, "r3.urdf": 3, "cartpole.urdf": 2, "puma6.urdf": 6}
    for name, n in names.items():
        assert load_urdf_file(DATA / name).n == n


def test_urdf_errors():
    with pytest.raises(MalformedXml):
        load_urdf("<robot><link name='a'>")
    with pytest.raises(UnsupportedJointType):
        load_urdf(ONE_LINK.format(kind="floating"))
    with pytest.raises(UnsupportedJointType):
        load_urdf(ONE_LINK.format(kind="planar"))
    branched = """<robot name="b"><link name="base"/>
      <link name="a"><inertial><mass value="1"/></inertial></link>
      <link name="b"><inertial><mass value="1"/></inertial></link>
      <joint name="j1" type="revolute"><parent link="base"/><child link="a"/><axis xyz="0 0 1"/>
        <limit lower="-1" upper="1"/></joint>
      <joint name="j2" type="revolute"><parent link="base"/><child link="b"/><axis xyz="0 0 1"/>
        <limit lower="-1" upper="1"/></joint></robot>"""
    with pytest.raises(BranchingChain):
        load_urdf(branched)


def test_unknown_elements_warn():
    text = ONE_LINK.format(kind="revolute").replace("</robot>", "<sensor name='s'/></robot>")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        load_urdf(text)
    assert any("sensor" in str(w.message) for w in caught)


def test_twists_zero_velocity():
    m = puma_like()
    for v in compute_twists(m, np.linspace(-1, 1, 6), np.zeros(6)):
        assert not np.any(v)


def test_single_revolute_twist():
    m = load_urdf(ONE_LINK.format(kind="revolute"))
    v = compute_twists(m, [0.0], [2.0])[0]
    np.testing.assert_allclose(v[:3], [0, 0, 2])
    # the COM frame sits 0.5 m out along x, so it moves at 1 m/s along y
    np.testing.assert_allclose(v[3:], [0, 1, 0])


def test_single_revolute_twist_at_joint_frame():
    links = (Link("base", spatial_inertia(1.0, np.eye(3))), Link("l1", spatial_inertia(1.0)))
    joint = Joint("j1", "revolute", np.array([0, 0, 1, 0, 0, 0.0]), Pose.identity())
    m = RobotModel(links, (joint,))
    v = compute_twists(m, [0.7], [2.0])[0]
    np.testing.assert_allclose(v, [0, 0, 2, 0, 0, 0], atol=1e-12)


def stacked_twists(model, q, qd):
    """Stack every twist relation as rows of one linear system and solve it."""
    n = model.n
    a = np.zeros((6 * n, 6 * n))
    b = np.zeros(6 * n)
    for i, (j, qi, qdi) in enumerate(zip(model.joints, q, qd)):
        a[6 * i:6 * i + 6, 6 * i:6 * i + 6] = np.eye(6)
        if i:
            a[6 * i:6 * i + 6, 6 * i - 6:6 * i] = -adjoint(j.pose(qi).inverse())
        b[6 * i:6 * i + 6] = j.axis * qdi
    return np.linalg.solve(a, b).reshape(n, 6)


def test_twists_against_stacked_system():
    m = load_urdf_file(DATA / "r3.urdf")
    q, qd = np.array([0.1, 0.2, 0.3]), np.array([1.0, -1.0, 0.5])
    got = np.array(compute_twists(m, q, qd))
    np.testing.assert_allclose(got, stacked_twists(m, q, qd), atol=1e-12)
    # planar arm: the tip link spins at the summed rate
    np.testing.assert_allclose(got[:, 2], np.cumsum(qd), atol=1e-12)


def test_twists_against_stacked_system_puma(rng):
    m = puma_like()
    for _ in range(5):
        q, qd = rng.uniform(-3, 3, 6), rng.uniform(-1, 1, 6)
        np.testing.assert_allclose(np.array(compute_twists(m, q, qd)),
                                   stacked_twists(m, q, qd), atol=1e-12)


def test_gravity_base_acceleration():
    assert not gravity_base_acceleration([0, 0, 0]).any()
    np.testing.assert_allclose(gravity_base_acceleration([0, 0, -9.81]), [0, 0, 0, 0, 0, 9.81])
    with pytest.raises(ValueError):
        gravity_base_acceleration([0, np.inf, 0])


def test_kinetic_energy_of_cart():
    m = cartpole_model()
    # pole at rest relative to the cart: everything translates at 2 m/s
    assert abs(kinetic_energy(m, [0.0, 0.3], [2.0, 0.0]) - 0.5 * 1.3 * 4.0) < 1e-12


def test_joint_state_classes():
    s = JointState.inverse([0, 0], [0, 0], [1, 2])
    assert s.problem_class() == "inverse"
    assert JointState.forward([0, 0], [0, 0], [1, 2]).problem_class() == "forward"
    assert JointState.hybrid([0, 0], [0, 0], [1, 0], [0, 1], [True, False]).problem_class() \
        == "hybrid"
    with pytest.raises(ValueError):
        JointState([0, 0], [0], [0, 0], [0, 0], [1, 1], [0, 0])


@given(arrays(float, 6, elements=st.floats(-3, 3)), arrays(float, 6, elements=st.floats(-2, 2)),
       arrays(float, 6, elements=st.floats(-2, 2)), st.floats(-2, 2), st.floats(-2, 2))
def test_twists_linear_in_velocity(q, qd1, qd2, a, b):
    m = puma_like()
    lhs = np.array(compute_twists(m, q, a * qd1 + b * qd2))
    rhs = a * np.array(compute_twists(m, q, qd1)) + b * np.array(compute_twists(m, q, qd2))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * 50)


@given(arrays(float, 2, elements=st.floats(-3, 3)), arrays(float, 2, elements=st.floats(-2, 2)))
def test_fixed_joint_folding_leaves_twists_unchanged(q, qd):
    folded = load_urdf(chain_urdf("fixed"))
    explicit = load_urdf(chain_urdf("revolute"))
    assert folded.n == 2 and explicit.n == 3
    tf = compute_twists(folded, q, qd)
    te = compute_twists(explicit, [q[0], 0.0, q[1]], [qd[0], 0.0, qd[1]])
    np.testing.assert_allclose(tf[0], te[0], atol=1e-12)
    np.testing.assert_allclose(tf[1], te[2], atol=1e-12)
