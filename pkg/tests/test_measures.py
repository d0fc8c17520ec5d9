import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from witscoord.errors import InvalidPmfError, SchemaError
from witscoord.measures import (JointPmf, conditional_mutual_information, entropy,
                                info_constraint_value, mutual_information)


def random_joint(rng, shape, labels, sparsity=0.0):
    p = rng.random(shape) ** 3
    if sparsity:
        p[rng.random(shape) < sparsity] = 0.0
    if p.sum() == 0:
        p.flat[0] = 1.0
    return JointPmf(labels, p / p.sum())


def mi_oracle(pxy):
    """KL(p(x,y) || p(x)p(y)) with explicit loops."""
    px, py = pxy.sum(1), pxy.sum(0)
    total = 0.0
    for i in range(pxy.shape[0]):
        for j in range(pxy.shape[1]):
            if pxy[i, j] > 0:
                total += pxy[i, j] * math.log(pxy[i, j] / (px[i] * py[j]))
    return total


def cmi_oracle(pxyz):
    pz = pxyz.sum((0, 1))
    pxz = pxyz.sum(1)
    pyz = pxyz.sum(0)
    total = 0.0
    for (i, j, k), v in np.ndenumerate(pxyz):
        if v > 0:
            total += v * math.log(v * pz[k] / (pxz[i, k] * pyz[j, k]))
    return total


def test_entropy_uniform_and_point_mass():
    assert entropy(np.full(8, 1 / 8)) == pytest.approx(math.log(8), abs=1e-14)
    assert entropy([1.0, 0.0, 0.0]) == 0.0


def test_entropy_rejects_negative_mass():
    with pytest.raises(InvalidPmfError):
        entropy([0.5, 0.6, -0.1])


def test_binary_symmetric_channel_capacity():
    eps = 0.11
    pxy = 0.5 * np.array([[1 - eps, eps], [eps, 1 - eps]])
    h = -eps * math.log(eps) - (1 - eps) * math.log(1 - eps)
    j = JointPmf(("X0", "Y1"), pxy)
    assert mutual_information(j, "X0", "Y1") == pytest.approx(math.log(2) - h, abs=1e-13)


def test_mi_matches_kl_oracle(rng):
    for _ in range(20):
        j = random_joint(rng, (5, 7), ("X0", "Y1"), sparsity=0.3)
        assert mutual_information(j, "X0", "Y1") == pytest.approx(mi_oracle(j.data), abs=1e-12)


def test_cmi_matches_oracle(rng):
    for _ in range(20):
        j = random_joint(rng, (3, 4, 5), ("X0", "U2", "Y1"), sparsity=0.2)
        got = conditional_mutual_information(j, "X0", "U2", "Y1")
        assert got == pytest.approx(cmi_oracle(j.data), abs=1e-12)


def test_independent_product_has_zero_mi():
    px = np.array([0.2, 0.3, 0.5])
    py = np.array([0.1, 0.9])
    j = JointPmf(("X0", "Y1"), np.outer(px, py))
    assert mutual_information(j, "X0", "Y1") == 0.0


def test_groups_and_axis_order_do_not_matter(rng):
    j = random_joint(rng, (3, 2, 4), ("X0", "U1", "Y1"))
    a = mutual_information(j, ("X0", "U1"), "Y1")
    b = mutual_information(j, ("U1", "X0"), ("Y1",))
    perm = JointPmf(("Y1", "X0", "U1"), np.transpose(j.data, (2, 0, 1)))
    c = mutual_information(perm, "Y1", ("X0", "U1"))
    assert a == pytest.approx(b, abs=1e-15)
    assert a == pytest.approx(c, abs=1e-14)


def test_schema_errors(rng):
    j = random_joint(rng, (2, 2, 2), ("X0", "U1", "Y1"))
    with pytest.raises(SchemaError):
        mutual_information(j, "X0", "X0")
    with pytest.raises(SchemaError):
        mutual_information(j, "X0", "U2")
    with pytest.raises(SchemaError):
        conditional_mutual_information(j, "X0", (), "Y1")


def test_jointpmf_validation():
    with pytest.raises(InvalidPmfError):
        JointPmf(("X0", "Y1"), np.array([[0.5, 0.6], [0.0, -0.1]]))
    with pytest.raises(InvalidPmfError):
        JointPmf(("X0", "Y1"), np.full((2, 2), 0.3))
    with pytest.raises(SchemaError):
        JointPmf(("X0", "X0"), np.full((2, 2), 0.25))
    with pytest.raises(SchemaError):
        JointPmf(("X0",), np.full((2, 2), 0.25))


def test_info_constraint_on_hand_built_joint():
    # W1 = X0 (binary, uniform), Y1 = W1 noiselessly, U2 = X0; U1 absent.
    p = np.zeros((2, 2, 2, 2))
    for x in range(2):
        p[x, x, x, x] = 0.5
    j = JointPmf(("X0", "W1", "Y1", "U2"), p)
    # I(W1;Y1) = log 2 and U2 is a function of (W1, Y1) so the leak is 0.
    assert info_constraint_value(j) == pytest.approx(math.log(2), abs=1e-14)
    # Decoder copying an independent X0 bit with blind W1, Y1: value -log 2.
    q = np.zeros((2, 1, 1, 2))
    q[0, 0, 0, 0] = q[1, 0, 0, 1] = 0.5
    j2 = JointPmf(("X0", "W1", "Y1", "U2"), q)
    assert info_constraint_value(j2) == pytest.approx(-math.log(2), abs=1e-14)


def test_info_constraint_requires_axes(rng):
    j = random_joint(rng, (2, 2, 2), ("X0", "Y1", "U2"))
    with pytest.raises(SchemaError):
        info_constraint_value(j)


joint_arrays = arrays(np.float64, (3, 2, 3), elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3)


@settings(max_examples=60, deadline=None)
@given(joint_arrays)
def test_nonnegativity_and_chain_rule(a):
    j = JointPmf(("X0", "U1", "Y1"), a / a.sum())
    i_ab = mutual_information(j, "X0", ("U1", "Y1"))
    i_ac = mutual_information(j, "X0", "Y1")
    i_ab_c = conditional_mutual_information(j, "X0", "U1", "Y1")
    assert i_ab >= 0 and i_ac >= 0 and i_ab_c >= 0
    assert abs(i_ab - (i_ac + i_ab_c)) <= 1e-10
