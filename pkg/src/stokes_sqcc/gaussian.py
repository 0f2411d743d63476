"""Generic Gaussian-state toolkit: symplectic spectra, entropies, conditioning.

Quadrature ordering is (x1, p1, x2, p2, ...), vacuum covariance = identity.
Nothing here knows about the SQCC protocol; the key-rate closed forms are
checked against these routines.
"""

from __future__ import annotations

import numpy as np


def omega(n_modes: int) -> np.ndarray:
    """Symplectic form for n_modes modes."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cov) -> np.ndarray:
    """Sorted symplectic spectrum (one value per mode), via |eig(i Omega cov)|."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(1j * omega(n) @ cov))
    ev.sort()
    # eigenvalues come in +- pairs
    return ev[::2]


def entropy_bits(nu) -> np.ndarray:
    """Von Neumann entropy contribution of one symplectic eigenvalue, in bits."""
    nu = np.maximum(np.asarray(nu, dtype=float), 1.0)
    a, b = (nu + 1) / 2, (nu - 1) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * np.log2(a) - np.where(b > 0, b * np.log2(np.where(b > 0, b, 1.0)), 0.0)
    return out


def tmsv(v: float) -> np.ndarray:
    """Two-mode squeezed vacuum with local variance v."""
    c = np.sqrt(v * v - 1)
    z = np.diag([1.0, -1.0])
    i2 = np.eye(2)
    return np.block([[v * i2, c * z], [c * z, v * i2]])


def beam_splitter(n_modes: int, i: int, j: int, transmittance: float) -> np.ndarray:
    """Symplectic matrix mixing modes i and j on a beam splitter."""
    t, r = np.sqrt(transmittance), np.sqrt(1 - transmittance)
    s = np.eye(2 * n_modes)
    for q in range(2):
        a, b = 2 * i + q, 2 * j + q
        s[a, a], s[a, b] = t, r
        s[b, a], s[b, b] = -r, t
    return s


def direct_sum(*blocks) -> np.ndarray:
    size = sum(b.shape[0] for b in blocks)
    out = np.zeros((size, size))
    k = 0
    for b in blocks:
        d = b.shape[0]
        out[k : k + d, k : k + d] = b
        k += d
    return out


def condition_on_mode(cov, mode: int, measurement: str) -> np.ndarray:
    """Covariance of the remaining modes after measuring `mode`.

    measurement is 'homodyne' (x quadrature) or 'heterodyne'.
    """
    cov = np.asarray(cov, dtype=float)
    idx = [2 * mode, 2 * mode + 1]
    rest = [k for k in range(cov.shape[0]) if k not in idx]
    a = cov[np.ix_(rest, rest)]
    b = cov[np.ix_(idx, idx)]
    c = cov[np.ix_(rest, idx)]
    if measurement == "heterodyne":
        return a - c @ np.linalg.inv(b + np.eye(2)) @ c.T
    if measurement == "homodyne":
        proj = np.diag([1.0, 0.0])
        return a - c @ np.linalg.pinv(proj @ b @ proj) @ c.T
    raise ValueError(f"unknown measurement {measurement!r}")
