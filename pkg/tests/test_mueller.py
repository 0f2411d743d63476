import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokes_sqcc import mueller as m

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def _oracle_chain(phi1, phi2):
    # propagate the Jones field and read its Stokes vector; no Mueller matrices involved
    hwp = m.jones_hwp(m.MOD_HWP_ANGLE)
    j = hwp @ m.jones_mom(phi2) @ m.jones_eom(phi1) @ hwp
    return m.field_to_stokes(j @ np.array([1.0, 0.0]))


def test_pauli_basis_reads_stokes_of_h_beam():
    assert np.allclose(m.field_to_stokes([1, 0]), m.H_BEAM)
    assert np.allclose(m.field_to_stokes([0, 1]), [1, -1, 0, 0])
    assert np.allclose(m.field_to_stokes(np.array([1, 1]) / np.sqrt(2)), [1, 0, 1, 0])
    assert np.allclose(m.field_to_stokes(np.array([1, 1j]) / np.sqrt(2)), [1, 0, 0, 1])


@pytest.mark.parametrize("phi1,phi2", [(0.0, 0.0), (0.3, -0.7), (np.pi / 2, 0.1), (-1.2, 1.5)])
def test_chain_matches_field_oracle(phi1, phi2):
    assert np.allclose(m.alice_chain(phi1, phi2), _oracle_chain(phi1, phi2), atol=1e-12)
    assert np.allclose(m.alice_chain(phi1, phi2), m.alice_chain_closed_form(phi1, phi2), atol=1e-12)


def test_chain_identity_point_value():
    # phi1 = 30 deg, phi2 = 45 deg
    s = m.alice_chain(np.pi / 6, np.pi / 4)
    c = np.sqrt(3) / 2
    assert np.allclose(s, [1, c * np.sqrt(0.5), c * np.sqrt(0.5), 0.5], atol=1e-12)


def test_chain_vectorized_grid_shape():
    p = np.linspace(-1, 1, 7)
    out = m.alice_chain(p[:, None], p[None, :])
    assert out.shape == (7, 7, 4)


def test_small_angle_limit():
    for eps in (1e-2, 1e-3, 1e-4):
        err = np.max(np.abs(m.alice_chain(eps, -eps) - m.alice_chain_small_angle(eps, -eps)))
        assert err < eps**2


@settings(max_examples=100, deadline=None)
@given(angles, angles, angles, angles)
def test_mueller_is_homomorphism(a, b, c, d):
    j1 = m.jones_hwp(a) @ m.jones_eom(b)
    j2 = m.jones_qwp(c) @ m.jones_mom(d)
    lhs = m.jones_to_mueller(j2 @ j1)
    rhs = m.jones_to_mueller(j2) @ m.jones_to_mueller(j1)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(angles, angles)
def test_chain_output_fully_polarized(a, b):
    s = m.alice_chain(a, b)
    assert s[0] == pytest.approx(1.0)
    assert np.linalg.norm(s[1:]) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["hwp", "qwp", "eom", "mom"]), angles)
def test_retarders_are_orthogonal_on_polarization(kind, theta):
    mat = m.element(kind, theta)
    assert mat[0, 0] == pytest.approx(1.0)
    assert np.allclose(mat[1:, 1:] @ mat[1:, 1:].T, np.eye(3), atol=1e-12)


def test_hwp_known_matrices():
    assert np.allclose(m.element("hwp", 0.0), np.diag([1, 1, -1, -1]), atol=1e-15)
    assert np.allclose(m.apply(m.element("hwp", np.pi / 8), m.H_BEAM), [1, 0, 1, 0], atol=1e-15)
    assert np.allclose(m.apply(m.element("hwp", np.pi / 4), m.H_BEAM), [1, -1, 0, 0], atol=1e-15)


def test_qwp_makes_circular_light_from_diagonal():
    out = m.apply(m.element("qwp", 0.0), [1, 0, 1, 0])
    assert np.allclose(np.abs(out), [1, 0, 0, 1], atol=1e-12)


def test_eom_and_mom_rotate_into_s3_and_s2():
    # phase -phi1 on V turns D into the S3 = -1 state
    assert np.allclose(m.apply(m.element("eom", np.pi / 2), [1, 0, 1, 0]), [1, 0, 0, -1], atol=1e-12)
    # MOM alone takes H onto the S2 axis; the HWP pair in the chain fixes the sign
    out = m.apply(m.element("mom", np.pi / 2), m.H_BEAM)
    assert np.allclose(out, m.field_to_stokes(m.jones_mom(np.pi / 2) @ np.array([1, 0])), atol=1e-12)
    assert np.allclose(np.abs(out), [1, 0, 1, 0], atol=1e-12)


def test_pockels_switch():
    assert np.allclose(m.apply(m.element("pockels", True), m.H_BEAM), [1, -1, 0, 0])
    assert np.allclose(m.element("pockels", False), np.eye(4))
    assert np.allclose(m.element("pockels", True), np.diag([1, -1, 1, -1]))


def test_pbs_ports_and_beam_splitter():
    h = m.element("pbs_port", "H")
    assert np.allclose(h, 0.5 * np.array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]))
    assert np.allclose(m.apply(m.element("pbs_port", "V"), m.H_BEAM), 0)
    assert np.allclose(m.element("bs", 0.5), 0.5 * np.eye(4))
    with pytest.raises(ValueError):
        m.element("bs", 1.5)
    with pytest.raises(ValueError):
        m.element("pbs_port", "D")


def test_arm_rows_read_s2_and_s3():
    assert np.allclose(m.s2_arm_matrix()[1], [0, 0, 1, 0], atol=1e-12)
    assert np.allclose(m.s3_arm_matrix()[1], [0, 0, 0, -1], atol=1e-12)


def test_unknown_element_and_bad_jones():
    with pytest.raises(ValueError):
        m.element("lens", 0)
    with pytest.raises(m.JonesError):
        m.jones_to_mueller(np.eye(3))


def test_compose_order_is_light_order():
    a, b = m.element("hwp", 0.2), m.element("qwp", 0.7)
    assert np.allclose(m.compose(a, b), b @ a)
