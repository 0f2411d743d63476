"""Jones and Mueller calculus for the polarization elements of the SQCC chain.

Stokes vectors are ordered (S0, S1, S2, S3) with S1 = H - V, S2 = D - A and
S3 = 2 Im(E_H* E_V), so that a pure H beam is [1, 1, 0, 0].

All functions accept scalar angles or numpy arrays; array arguments produce a
stack of matrices with the element axes last.
"""

from __future__ import annotations

import numpy as np

# Pauli basis (identity, sigma_z, sigma_x, sigma_y) paired with S0..S3.
PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
    ],
    dtype=complex,
)

IMAG_TOL = 1e-12

H_BEAM = np.array([1.0, 1.0, 0.0, 0.0])

# linear -> circular basis change; columns are the (unnormalized) circular states
_CIRC = np.array([[1, 1], [1j, -1j]], dtype=complex)
_CIRC_INV = np.linalg.inv(_CIRC)


class JonesError(ValueError):
    """Jones input that cannot be mapped to a real Mueller matrix."""


def jones_to_mueller(j):
    """Mueller matrix of a (stack of) 2x2 Jones matrices.

    m_ij = 1/2 Tr(sigma_i J sigma_j J^dagger). This index order makes the map a
    homomorphism, M(J2 J1) = M(J2) M(J1).
    """
    j = np.asarray(j, dtype=complex)
    if j.shape[-2:] != (2, 2):
        raise JonesError(f"expected (..., 2, 2) Jones matrix, got shape {j.shape}")
    jd = np.conj(np.swapaxes(j, -1, -2))
    m = 0.5 * np.einsum("iab,...bc,jcd,...da->...ij", PAULI, j, PAULI, jd)
    resid = np.max(np.abs(m.imag), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(m.real), initial=0.0)))
    if resid > IMAG_TOL * scale:
        raise JonesError(f"Mueller entries have imaginary residue {resid:.3g}")
    return m.real


def field_to_stokes(e):
    """Stokes vector of a (stack of) Jones field vectors (E_H, E_V)."""
    e = np.asarray(e, dtype=complex)
    eh, ev = e[..., 0], e[..., 1]
    cross = np.conj(eh) * ev
    return np.stack(
        [
            np.abs(eh) ** 2 + np.abs(ev) ** 2,
            np.abs(eh) ** 2 - np.abs(ev) ** 2,
            2 * cross.real,
            2 * cross.imag,
        ],
        axis=-1,
    )


# --- Jones matrices -------------------------------------------------------


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2).astype(complex)


def jones_hwp(theta):
    """Half-wave plate, theta between fast axis and the H polarization plane."""
    c, s = np.cos(2 * np.asarray(theta)), np.sin(2 * np.asarray(theta))
    return np.stack([np.stack([c, s], -1), np.stack([s, -c], -1)], -2).astype(complex)


def jones_qwp(theta):
    # Textbook fast-axis form R(-theta) diag(e^{-i pi/4}, e^{i pi/4}) R(theta).
    theta = np.asarray(theta, dtype=float)
    ret = np.zeros(theta.shape + (2, 2), dtype=complex)
    ret[..., 0, 0] = np.exp(-1j * np.pi / 4)
    ret[..., 1, 1] = np.exp(1j * np.pi / 4)
    return _rotation(-theta) @ ret @ _rotation(theta)


def jones_eom(phi1):
    """Electro-optic modulator: phase -phi1 on V relative to H."""
    phi1 = np.asarray(phi1, dtype=float)
    j = np.zeros(phi1.shape + (2, 2), dtype=complex)
    j[..., 0, 0] = 1.0
    j[..., 1, 1] = np.exp(-1j * phi1)
    return j


def jones_mom(phi2):
    """Magneto-optic modulator: phase phi2 between the two circular components.

    Built as P diag(1, e^{-i phi2}) P^{-1} with P the linear-to-circular basis
    change, which is unitary and rotates S1 into S2 by phi2.
    """
    return _CIRC @ jones_eom(phi2) @ _CIRC_INV


def jones_pockels(active):
    # Switched half-wave retarder at 45 deg: H <-> V when active.
    active = np.asarray(active, dtype=bool)
    off = np.eye(2, dtype=complex)
    on = np.array([[0, 1], [1, 0]], dtype=complex)
    return np.where(active[..., None, None], on, off)


def jones_pbs_port(port: str):
    """Projector onto the H or V output port of a polarizing beam splitter."""
    if port == "H":
        return np.array([[1, 0], [0, 0]], dtype=complex)
    if port == "V":
        return np.array([[0, 0], [0, 1]], dtype=complex)
    raise ValueError(f"PBS port must be 'H' or 'V', got {port!r}")


def jones_bs(tau):
    """Transmitted port of a polarization-insensitive beam splitter."""
    tau = np.asarray(tau, dtype=float)
    if np.any((tau < 0) | (tau > 1)):
        raise ValueError(f"beam-splitter transmittance must lie in [0, 1], got {tau}")
    return np.sqrt(tau)[..., None, None] * np.eye(2, dtype=complex)


_JONES = {
    "hwp": jones_hwp,
    "qwp": jones_qwp,
    "eom": jones_eom,
    "mom": jones_mom,
    "pockels": jones_pockels,
    "pbs_port": jones_pbs_port,
    "bs": jones_bs,
}


def element(kind: str, arg):
    """Mueller matrix of a named element.

    kind is one of hwp(theta), qwp(theta), eom(phi1), mom(phi2),
    pockels(active), pbs_port('H'|'V'), bs(tau). Angles in radians.
    """
    try:
        make = _JONES[kind]
    except KeyError:
        raise ValueError(f"unknown optical element {kind!r}") from None
    return jones_to_mueller(make(arg))


def apply(m, s):
    """Propagate Stokes vector(s) s through Mueller matrix (stack) m."""
    return np.einsum("...ij,...j->...i", np.asarray(m), np.asarray(s, dtype=float))


def compose(*matrices):
    """Product of Mueller matrices listed in the order light meets them."""
    out = np.eye(4)
    for m in matrices:
        out = np.asarray(m) @ out
    return out


# --- Alice's modulation chain ---------------------------------------------

MOD_HWP_ANGLE = np.pi / 8


def alice_chain_matrix(phi1, phi2):
    """Overall Mueller matrix HWP(pi/8) -> EOM(phi1) -> MOM(phi2) -> HWP(pi/8)."""
    hwp = element("hwp", MOD_HWP_ANGLE)
    return compose(hwp, element("eom", phi1), element("mom", phi2), hwp)


def alice_chain(phi1, phi2):
    """Output Stokes vector(s) of the modulation chain for an H input beam."""
    return apply(alice_chain_matrix(phi1, phi2), H_BEAM)


def alice_chain_small_angle(phi1, phi2):
    """First-order version of alice_chain: [1, 1, phi2, phi1]."""
    phi1, phi2 = np.broadcast_arrays(np.asarray(phi1, float), np.asarray(phi2, float))
    return np.stack([np.ones_like(phi1), np.ones_like(phi1), phi2, phi1], axis=-1)


def alice_chain_closed_form(phi1, phi2):
    phi1, phi2 = np.broadcast_arrays(np.asarray(phi1, float), np.asarray(phi2, float))
    return np.stack(
        [
            np.ones_like(phi1),
            np.cos(phi1) * np.cos(phi2),
            np.cos(phi1) * np.sin(phi2),
            np.sin(phi1),
        ],
        axis=-1,
    )


# --- Bob's measurement arms -------------------------------------------------

ARM_HWP_ANGLE = np.pi / 8
ARM_QWP_ANGLE = np.pi / 4


def s2_arm_matrix():
    """HWP at 22.5 deg ahead of the PBS; the PBS difference then reads S2."""
    return element("hwp", ARM_HWP_ANGLE)


def s3_arm_matrix():
    """HWP at 22.5 deg then QWP at 45 deg; the PBS difference reads +-S3."""
    return compose(element("hwp", ARM_HWP_ANGLE), element("qwp", ARM_QWP_ANGLE))
