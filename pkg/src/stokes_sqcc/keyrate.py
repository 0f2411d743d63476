"""Closed-form performance metrics for the Stokes-encoded SQCC link.

Classical bit error rate, asymptotic CV-QKD key rates under collective attacks
(heterodyne and homodyne, trusted detector noise), composable finite-size
rates, the PLOB repeaterless bound and modulation-variance optimization.

Every rate is in bits per pulse. Channel loss L in dB maps to T = 10^(-L/10).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erfc, erfinv

LN2 = math.log(2.0)
EIG_TOL = 1e-9
_DISC_NOISE = 64 * np.finfo(float).eps
HOMODYNE, HETERODYNE = "homodyne", "heterodyne"
_DETECTION_ALIASES = {"hom": HOMODYNE, "homodyne": HOMODYNE, "het": HETERODYNE, "heterodyne": HETERODYNE}

VMOD_MIN, VMOD_MAX = 1e-3, 1e3


class UnphysicalCovariance(ValueError):
    """Symplectic eigenvalue below 1 beyond rounding tolerance."""


class FiniteSizeError(ValueError):
    """Parameter-estimation sample too small for the requested confidence."""


def detection_mode(name: str) -> str:
    try:
        return _DETECTION_ALIASES[name.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"detection must be homodyne/heterodyne (or hom/het), got {name!r}") from None


def db_to_transmissivity(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)


def transmissivity_to_db(t):
    return -10.0 * np.log10(t)


# --- classical channel -----------------------------------------------------


def classical_ber(alpha, t, eta, nu_el):
    """Bit error rate of the classical S1 channel, 1/2 erfc(sqrt(2 T eta) alpha / sqrt(1 + nu_el))."""
    if np.any(np.asarray(alpha) < 0) or not (0 <= t <= 1) or not (0 <= eta <= 1) or nu_el < 0:
        raise ValueError("classical_ber needs alpha, nu_el >= 0 and t, eta in [0, 1]")
    return 0.5 * erfc(np.sqrt(2 * t * eta) * np.asarray(alpha, dtype=float) / math.sqrt(1 + nu_el))


def direct_detection_ber(alpha, t, eta, nu_el, xi=0.0):
    """BER of a linearized S1 = n_H - n_V measurement with threshold at zero.

    The decision statistic has mean +-T eta alpha^2 and variance
    T eta alpha^2 (1 + nu_el + T eta xi), giving 1/2 erfc(alpha'/sqrt(2(1+nu_el+T eta xi)))
    with alpha' = sqrt(T eta) alpha. This is what protocol.simulate reproduces.
    """
    a_rx = np.sqrt(t * eta) * np.asarray(alpha, dtype=float)
    return 0.5 * erfc(a_rx / np.sqrt(2 * (1 + nu_el + t * eta * xi)))


# --- noise budget ------------------------------------------------------------


@dataclass(frozen=True)
class NoiseBudget:
    """Channel and detector noise, shot-noise units referred to the channel input.

    eta is the efficiency of Bob's quantum detection and nu_el its electronic
    noise; both are trusted (outside Eve's control).
    """

    t: float
    xi: float = 0.01
    eta: float = 0.5
    nu_el: float = 0.1
    detection: str = HETERODYNE

    def __post_init__(self):
        if not (0 < self.t <= 1):
            raise ValueError(f"transmissivity must lie in (0, 1], got {self.t}")
        if not (0 < self.eta <= 1):
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.xi < 0 or self.nu_el < 0:
            raise ValueError("xi and nu_el must be non-negative")
        object.__setattr__(self, "detection", detection_mode(self.detection))

    @classmethod
    def from_loss_db(cls, loss_db: float, **kwargs) -> "NoiseBudget":
        return cls(t=float(db_to_transmissivity(loss_db)), **kwargs)

    @property
    def xi_ch(self) -> float:
        return (1 - self.t) / self.t + self.xi

    @property
    def xi_det(self) -> float:
        if self.detection == HETERODYNE:
            return (2 - self.eta + 2 * self.nu_el) / self.eta
        return (1 - self.eta + self.nu_el) / self.eta

    @property
    def xi_tot(self) -> float:
        return self.xi_ch + self.xi_det / self.t

    def with_second_order(self, alpha_received: float) -> "NoiseBudget":
        """Add the second-order fluctuation floor as untrusted excess noise.

        The 2/alpha'^2 term sits on Bob's detected normalized quadratures, so it
        is referred back to the channel input through eta and T.
        """
        from .stokes import second_order_correction

        extra = second_order_correction(alpha_received) / (self.eta * self.t)
        return replace(self, xi=self.xi + extra)


# --- entropies and symplectic spectra ------------------------------------------


def g_entropy(x):
    """G(x) = ((x+1)/2) log2((x+1)/2) - ((x-1)/2) log2((x-1)/2), with G(1) = 0."""
    x = np.asarray(x, dtype=float)
    h = (x - 1) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        # (1+h) log(1+h) via log1p keeps precision as x -> 1
        out = (1 + h) * np.log1p(h) - np.where(h > 0, h * np.log(np.where(h > 0, h, 1.0)), 0.0)
    return out / LN2


def _clamp(lam):
    if lam < 1 - EIG_TOL:
        raise UnphysicalCovariance(f"symplectic eigenvalue {lam:.12g} < 1")
    return max(lam, 1.0)


def _eigen_pair(s, p):
    """sqrt of the roots of z^2 - s z + p = 0, computed without cancellation."""
    disc = s * s - 4 * p
    if disc < 0 and disc < -EIG_TOL * max(1.0, s * s):
        raise UnphysicalCovariance(f"negative discriminant {disc:.3g}")
    # a degenerate pair leaves only rounding noise (~eps s^2) here, and its
    # square root would move the eigenvalues by ~1e-8
    if disc < _DISC_NOISE * s * s:
        disc = 0.0
    root = math.sqrt(disc)
    hi = (s + root) / 2
    lo = p / hi if hi > 0 else 0.0
    return _clamp(math.sqrt(hi)), _clamp(math.sqrt(lo))


def ab_coefficients(v: float, t: float, xi_ch: float):
    a = v * v * (1 - 2 * t) + 2 * t + t * t * (v + xi_ch) ** 2
    b = t * t * (v * xi_ch + 1) ** 2
    return a, b


def heterodyne_eigenvalues(v, t, xi_ch, xi_det, xi_tot):
    """lambda_1..4 of Eve's state and of Alice plus detector given Bob's heterodyne outcome."""
    a, b = ab_coefficients(v, t, xi_ch)
    l1, l2 = _eigen_pair(a, b)
    denom = t * (v + xi_tot)
    c = (
        a * xi_det**2 + b + 1 + 2 * xi_det * (v * math.sqrt(b) + t * (v + xi_ch)) + 2 * t * (v * v - 1)
    ) / denom**2
    d = ((v + math.sqrt(b) * xi_det) / denom) ** 2
    l3, l4 = _eigen_pair(c, d)
    return l1, l2, l3, l4


def homodyne_eigenvalues(v, t, xi_ch, xi_det, xi_tot):
    """Homodyne counterpart; the fifth eigenvalue of the conditional state is 1."""
    a, b = ab_coefficients(v, t, xi_ch)
    l1, l2 = _eigen_pair(a, b)
    denom = t * (v + xi_tot)
    c = (a * xi_det + v * math.sqrt(b) + t * (v + xi_ch)) / denom
    d = math.sqrt(b) * (v + math.sqrt(b) * xi_det) / denom
    l3, l4 = _eigen_pair(c, d)
    return l1, l2, l3, l4


def symplectic_eigenvalues(v: float, noise: NoiseBudget):
    if v < 1:
        raise UnphysicalCovariance(f"V = {v} < 1")
    fn = heterodyne_eigenvalues if noise.detection == HETERODYNE else homodyne_eigenvalues
    return fn(v, noise.t, noise.xi_ch, noise.xi_det, noise.xi_tot)


def holevo_heterodyne(v, t, xi_ch, xi_det, xi_tot) -> float:
    l1, l2, l3, l4 = heterodyne_eigenvalues(v, t, xi_ch, xi_det, xi_tot)
    return float(g_entropy(l1) + g_entropy(l2) - g_entropy(l3) - g_entropy(l4))


def holevo_homodyne(v, t, xi_ch, xi_det, xi_tot) -> float:
    l1, l2, l3, l4 = homodyne_eigenvalues(v, t, xi_ch, xi_det, xi_tot)
    return float(g_entropy(l1) + g_entropy(l2) - g_entropy(l3) - g_entropy(l4))


def holevo_bound(v: float, noise: NoiseBudget) -> float:
    """Eve's Holevo information on Bob's data (reverse reconciliation)."""
    l1, l2, l3, l4 = symplectic_eigenvalues(v, noise)
    chi = float(g_entropy(l1) + g_entropy(l2) - g_entropy(l3) - g_entropy(l4))
    # rounding can leave -1e-16 in the lossless case
    return max(chi, 0.0) if chi > -1e-12 else chi


def mutual_information(v: float, noise: NoiseBudget) -> float:
    ratio = (v + noise.xi_tot) / (1 + noise.xi_tot)
    i_ab = math.log2(ratio)
    return i_ab if noise.detection == HETERODYNE else 0.5 * i_ab


def covariance_ab(v: float, t: float, xi_ch: float) -> np.ndarray:
    """Alice-Bob covariance after the channel: [[V I, c Z], [c Z, T(V+Xi_ch) I]]."""
    c = math.sqrt(t * (v * v - 1))
    z = np.diag([1.0, -1.0])
    i2 = np.eye(2)
    return np.block([[v * i2, c * z], [c * z, t * (v + xi_ch) * i2]])


@dataclass(frozen=True)
class CovMatrix2Mode:
    """Two-mode covariance in block form (V I, c Z; c Z, w I), validated for physicality."""

    v: float
    c: float
    w: float

    def __post_init__(self):
        from .gaussian import omega

        # uncertainty principle: Sigma + i Omega >= 0 (implies symplectic eigenvalues >= 1)
        low = np.min(np.linalg.eigvalsh(self.matrix + 1j * omega(2)))
        if low < -EIG_TOL * max(1.0, abs(self.v), abs(self.w)):
            raise UnphysicalCovariance(f"covariance violates the uncertainty bound (min eig {low:.3g})")

    @classmethod
    def after_channel(cls, v: float, t: float, xi_ch: float) -> "CovMatrix2Mode":
        return cls(v, math.sqrt(t * (v * v - 1)), t * (v + xi_ch))

    @property
    def matrix(self) -> np.ndarray:
        z = np.diag([1.0, -1.0])
        i2 = np.eye(2)
        return np.block([[self.v * i2, self.c * z], [self.c * z, self.w * i2]])


# --- rates -----------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticRate:
    i_ab: float
    chi_be: float
    rate: float


def asymptotic_rate(v_mod: float, noise: NoiseBudget, beta: float = 0.95) -> AsymptoticRate:
    """r = max(0, beta I_AB - chi_BE) at modulation variance v_mod."""
    if v_mod <= 0:
        raise ValueError(f"v_mod must be positive, got {v_mod}")
    v = 1 + v_mod
    i_ab = mutual_information(v, noise)
    chi = holevo_bound(v, noise)
    return AsymptoticRate(i_ab, chi, max(0.0, beta * i_ab - chi))


def plob_bound(t):
    """Repeaterless secret-key capacity -log2(1 - T) of a pure-loss channel."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= 1):
        raise ValueError("PLOB bound diverges at T = 1")
    if np.any(t <= 0):
        raise ValueError("PLOB bound needs T > 0")
    out = -np.log1p(-t) / LN2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FiniteSizeParams:
    """Composable security settings.

    disc_bits is the per-quadrature discretization used for key generation;
    heterodyne keys two quadratures per pulse.
    """

    eps_pe: float = 2.0**-32
    eps_s: float = 2.0**-32
    eps_h: float = 2.0**-32
    eps_cor: float = 2.0**-32
    p_ec: float = 0.95
    m_fraction: float = 0.1
    disc_bits: int = 5

    def __post_init__(self):
        for name in ("eps_pe", "eps_s", "eps_h", "eps_cor"):
            if not (0 < getattr(self, name) < 1):
                raise ValueError(f"{name} must lie in (0, 1)")
        if not (0 < self.p_ec <= 1):
            raise ValueError("p_ec must lie in (0, 1]")
        if not (0 < self.m_fraction < 1):
            raise ValueError("m_fraction must lie in (0, 1)")

    @property
    def epsilon(self) -> float:
        """Overall security parameter eps_cor + eps_s + eps_h + p_ec eps_pe."""
        return self.eps_cor + self.eps_s + self.eps_h + self.p_ec * self.eps_pe


@dataclass(frozen=True)
class FiniteSizeRate:
    rate: float
    raw: float
    t_wc: float
    xi_wc: float
    chi_wc: float
    i_ab: float
    delta_aep: float
    theta: float
    n_key: float
    m_pe: float


def _pe_model(noise: NoiseBudget):
    """Per-sample gain g and sample multiplicity of Bob's PE data y = sqrt(g T) x + z."""
    if noise.detection == HETERODYNE:
        return noise.eta / 2, 2
    return noise.eta, 1


def worst_case_channel(v_mod: float, noise: NoiseBudget, m: float, eps_pe: float):
    """Worst-case (T, xi) at confidence eps_pe from m parameter-estimation pulses.

    Gaussian ML estimators of sqrt(g T) and of the noise variance
    s = 1 + nu_el + g T xi, each shifted by w standard deviations,
    w = sqrt(2) erfinv(1 - eps_pe).
    """
    g, mult = _pe_model(noise)
    m_eff = mult * m
    s = 1 + noise.nu_el + g * noise.t * noise.xi
    w = math.sqrt(2) * float(erfinv(1 - eps_pe))
    root_wc = math.sqrt(g * noise.t) - w * math.sqrt(s / (m_eff * v_mod))
    if root_wc <= 0:
        raise FiniteSizeError(
            f"m = {m:.3g} pulses cannot bound T away from 0 at eps_pe = {eps_pe:.3g} (v_mod = {v_mod:.3g})"
        )
    t_wc = root_wc**2 / g
    s_wc = s + w * s * math.sqrt(2 / m_eff)
    xi_wc = (s_wc - 1 - noise.nu_el) / (g * t_wc)
    return t_wc, xi_wc


def aep_penalty(params: FiniteSizeParams, detection: str) -> float:
    bits = params.disc_bits * (2 if detection_mode(detection) == HETERODYNE else 1)
    return 4 * math.log2(2 ** (1 + bits / 2) + 1) * math.sqrt(
        math.log2(18 / (params.p_ec**2 * params.eps_s**4))
    )


def finite_size_rate(
    v_mod: float,
    noise: NoiseBudget,
    beta: float,
    n_total: float,
    params: FiniteSizeParams = FiniteSizeParams(),
) -> FiniteSizeRate:
    """Composable key rate for a block of n_total pulses.

    r = (n p_ec / N) [beta I_AB - chi_BE(T_wc, xi_wc) - Delta_aep / sqrt(n) + Theta / n],
    clipped at zero, with m = m_fraction N pulses spent on parameter estimation.
    """
    if n_total < 1e4:
        raise ValueError(f"block size must be >= 1e4, got {n_total}")
    if v_mod <= 0:
        raise ValueError(f"v_mod must be positive, got {v_mod}")
    m = params.m_fraction * n_total
    n = n_total - m
    t_wc, xi_wc = worst_case_channel(v_mod, noise, m, params.eps_pe)
    v = 1 + v_mod
    i_ab = mutual_information(v, noise)
    chi_wc = holevo_bound(v, replace(noise, t=min(t_wc, 1.0), xi=xi_wc))
    delta = aep_penalty(params, noise.detection)
    theta = math.log2(params.p_ec * (1 - params.eps_s**2 / 3)) + 2 * math.log2(math.sqrt(2) * params.eps_h)
    raw = (n * params.p_ec / n_total) * (beta * i_ab - chi_wc - delta / math.sqrt(n) + theta / n)
    return FiniteSizeRate(max(raw, 0.0), raw, t_wc, xi_wc, chi_wc, i_ab, delta, theta, n, m)


# --- optimization -------------------------------------------------------------------

GOLDEN = (math.sqrt(5) - 1) / 2


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-4, max_iter: int = 200):
    """Maximize a unimodal f on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def rate_function(noise: NoiseBudget, beta: float = 0.95, block_size=None, params=FiniteSizeParams()):
    """Key rate as a function of v_mod; finite-size when block_size is given.

    Uses the unclipped rate so the optimizer can climb out of the zero region;
    a parameter-estimation failure counts as -inf.
    """

    def rate(v_mod):
        if block_size is None:
            r = asymptotic_rate(v_mod, noise, beta)
            return beta * r.i_ab - r.chi_be
        try:
            return finite_size_rate(v_mod, noise, beta, block_size, params).raw
        except FiniteSizeError:
            return -math.inf

    return rate


def optimize_vmod(
    noise: NoiseBudget,
    beta: float = 0.95,
    block_size=None,
    params: FiniteSizeParams = FiniteSizeParams(),
    lo: float = VMOD_MIN,
    hi: float = VMOD_MAX,
    rtol: float = 1e-4,
    n_scan: int = 61,
):
    """Maximize the key rate over v_mod in [lo, hi].

    A log-spaced coarse scan picks the bracket, then golden-section search in
    log(v_mod) refines it to relative tolerance rtol. Returns (nan, 0.0) when no
    v_mod gives a positive rate.
    """
    f = rate_function(noise, beta, block_size, params)
    grid = np.geomspace(lo, hi, n_scan)
    vals = np.array([f(v) for v in grid])
    k = int(np.argmax(vals))
    if not vals[k] > 0:
        return math.nan, 0.0
    finite = np.isfinite(vals)
    peaks = np.sum((vals[1:-1] > vals[:-2]) & (vals[1:-1] > vals[2:]) & finite[1:-1])
    if peaks > 1:
        warnings.warn("key rate is not unimodal in v_mod on the coarse scan", stacklevel=2)
    a = math.log(grid[max(k - 1, 0)])
    b = math.log(grid[min(k + 1, n_scan - 1)])
    x, fx = golden_section_max(lambda u: f(math.exp(u)), a, b, tol=rtol)
    if fx < vals[k]:
        x, fx = math.log(grid[k]), vals[k]
    return math.exp(x), max(fx, 0.0)


@dataclass(frozen=True)
class KeyRatePoint:
    loss_db: float
    detection: str
    block_size: float  # inf for the asymptotic regime
    v_mod_opt: float
    i_ab: float
    chi_be: float
    rate: float
    rate_asymptotic: float
    v_mod_opt_asymptotic: float
    plob: float
    c_ber: float


def key_rate_point(
    loss_db: float,
    detection: str = HETERODYNE,
    block_size=None,
    xi: float = 0.01,
    eta: float = 0.5,
    nu_el: float = 0.1,
    beta: float = 0.95,
    alpha: float = math.inf,
    params: FiniteSizeParams = FiniteSizeParams(),
    alpha_received=None,
) -> KeyRatePoint:
    """Optimized rates at one loss value.

    With alpha = inf the classical BER is 0, matching the bright-beam regime the
    key-rate curves assume. alpha_received switches on the second-order noise floor.
    """
    noise = NoiseBudget.from_loss_db(loss_db, xi=xi, eta=eta, nu_el=nu_el, detection=detection)
    if alpha_received is not None:
        noise = noise.with_second_order(alpha_received)
    v_asym, r_asym = optimize_vmod(noise, beta)
    if block_size is None:
        v_opt, r = v_asym, r_asym
    else:
        v_opt, r = optimize_vmod(noise, beta, block_size, params)
    if math.isnan(v_opt):
        i_ab = chi = math.nan
    else:
        parts = asymptotic_rate(v_opt, noise, beta)
        i_ab, chi = parts.i_ab, parts.chi_be
    c_ber = 0.0 if math.isinf(alpha) else float(classical_ber(alpha, noise.t, eta, nu_el))
    return KeyRatePoint(
        loss_db=float(loss_db),
        detection=noise.detection,
        block_size=math.inf if block_size is None else float(block_size),
        v_mod_opt=v_opt,
        i_ab=i_ab,
        chi_be=chi,
        rate=r,
        rate_asymptotic=r_asym,
        v_mod_opt_asymptotic=v_asym,
        plob=plob_bound(noise.t) if noise.t < 1 else math.inf,
        c_ber=c_ber,
    )


def finite_size_cutoff(
    detection: str,
    block_size: float,
    lo_db: float = 0.0,
    hi_db: float = 40.0,
    tol_db: float = 1e-3,
    **kwargs,
) -> float:
    """Smallest loss at which the optimized finite-size rate reaches zero (bisection)."""

    def alive(loss):
        return key_rate_point(loss, detection, block_size, **kwargs).rate > 0

    if not alive(lo_db):
        return lo_db
    if alive(hi_db):
        return math.inf
    a, b = lo_db, hi_db
    while b - a > tol_db:
        mid = (a + b) / 2
        if alive(mid):
            a = mid
        else:
            b = mid
    return (a + b) / 2
