"""Shot-level Monte Carlo of the Stokes-encoded SQCC link.

Alice prepares a bright H pulse, puts a weak Gaussian sideband modulation on V
and, for bit 0, flips the pulse to V with a Pockels cell. The pulse crosses a
lossy noisy channel. Bob taps a fraction eta to measure S1, which gives the bit
and the normalization. The rest goes to the S2/S3 arms (homodyne switch or
heterodyne 50:50 split), whose photocurrent differences are mixed down at the
modulation frequency.

Representation
--------------
The mean field is kept as mode amplitudes. The carrier is a real amplitude in
the envelope mode f(t). The sideband modulation is given as the quadratures
[X+ in u_c, X- in u_s] of the two sideband modes, u_c ~ f cos(w t) and
u_s ~ f sin(w t). Vacuum fluctuations are Gaussian samples attached to the
same three modes, in shot-noise units. The S1 measurement uses the mode-level
integral. The quantum arms are mixed down by integrating the linearized Stokes
density against cos/sin(w t) with the trapezoid rule; the integral is taken on
the mode basis, which matches the sampled-time version to rounding.

Randomness comes from counter-based substreams keyed on (seed, stream, chunk).
Bits, modulation, classical-port noise, quantum-port noise and the homodyne
switch each use their own stream. That makes campaigns reproducible across any
worker count, and lets runs that differ only in v_mod share identical
classical noise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from . import mueller
from .keyrate import HETERODYNE, HOMODYNE, db_to_transmissivity, detection_mode

CHUNK = 4096
MIN_SHOTS = 1000
N_BATCHES = 100

# substream ids
_BITS, _MOD, _CLASSICAL, _QUANTUM, _SWITCH = range(5)


class SidebandError(ValueError):
    """Sideband modes overlap the carrier or are not resolved by the time grid."""


class NormalizationError(ArithmeticError):
    """S1 reading of zero; the quantum quadratures cannot be normalized."""


@dataclass(frozen=True)
class ProtocolParams:
    alpha: float = 1e4
    v_mod: float = 4.0
    loss_db: float = 10.0
    eta: float = 0.5
    xi: float = 0.01
    nu_el: float = 0.1
    omega_d: float = 2 * math.pi * 1e9
    sigma_pulse: float = 1e-9
    samples_per_pulse: int = 256
    detection: str = HETERODYNE
    seed: int = 0
    # optional fixed bit pattern, cycled over the campaign
    bit_pattern: tuple = ()

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.v_mod < 0:
            raise ValueError(f"v_mod must be >= 0, got {self.v_mod}")
        if not (math.isfinite(self.loss_db) and self.loss_db >= 0):
            raise ValueError(f"loss_db must be finite and >= 0, got {self.loss_db}")
        if not (0 <= self.eta <= 1):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.xi < 0 or self.nu_el < 0:
            raise ValueError("xi and nu_el must be >= 0")
        if self.samples_per_pulse < 16:
            raise ValueError("samples_per_pulse must be >= 16")
        if any(b not in (0, 1) for b in self.bit_pattern):
            raise ValueError("bit_pattern entries must be 0 or 1")
        object.__setattr__(self, "detection", detection_mode(self.detection))
        object.__setattr__(self, "bit_pattern", tuple(int(b) for b in self.bit_pattern))

    @property
    def t(self) -> float:
        return float(db_to_transmissivity(self.loss_db))

    @property
    def kappa(self) -> float:
        """Power fraction reaching each quantum arm."""
        share = 1 - self.eta
        return share / 2 if self.detection == HETERODYNE else share


# --- pulse modes --------------------------------------------------------------


@dataclass(frozen=True)
class PulseGrid:
    t: np.ndarray
    w: np.ndarray  # trapezoid weights
    f: np.ndarray  # envelope mode, sum(w f^2) = 1
    cos: np.ndarray
    sin: np.ndarray
    u_c: np.ndarray
    u_s: np.ndarray
    norm_c: float  # ||f cos||
    norm_s: float  # ||f sin||
    key: tuple  # (sigma, omega, samples)


@lru_cache(maxsize=16)
def _grid(sigma: float, omega: float, samples: int) -> PulseGrid:
    t = np.linspace(-4 * sigma, 4 * sigma, samples)
    dt = t[1] - t[0]
    w = np.full(samples, dt)
    w[0] = w[-1] = dt / 2
    f = np.exp(-(t**2) / (4 * sigma**2))
    f /= math.sqrt(np.sum(w * f * f))
    cos, sin = np.cos(omega * t), np.sin(omega * t)
    norm_c = math.sqrt(np.sum(w * (f * cos) ** 2))
    norm_s = math.sqrt(np.sum(w * (f * sin) ** 2))
    return PulseGrid(
        t, w, f, cos, sin, f * cos / norm_c, f * sin / norm_s, norm_c, norm_s, (sigma, omega, samples)
    )


def pulse_grid(params: ProtocolParams) -> PulseGrid:
    """Time grid and mode functions; refuses unresolved sidebands."""
    if abs(params.omega_d) * params.sigma_pulse <= 1:
        raise SidebandError(
            f"|omega_d| sigma = {abs(params.omega_d) * params.sigma_pulse:.3g} <= 1; "
            "sidebands overlap the carrier"
        )
    dt = 8 * params.sigma_pulse / (params.samples_per_pulse - 1)
    if abs(params.omega_d) * dt >= math.pi:
        raise SidebandError("time grid does not resolve the modulation frequency")
    return _grid(float(params.sigma_pulse), float(params.omega_d), int(params.samples_per_pulse))


# --- fields ------------------------------------------------------------------


@dataclass
class ShotStreams:
    """Independent generators for the classical and quantum detection paths.

    quantum=None skips every sideband fluctuation (classical-only runs).
    """

    classical: np.random.Generator
    quantum: np.random.Generator | None


def _as_streams(rng) -> ShotStreams:
    if isinstance(rng, ShotStreams):
        return rng
    return ShotStreams(rng, rng)


def _vacuum(streams: ShotStreams, n: int) -> np.ndarray:
    """Vacuum samples shaped (n, pol, [X+ f, X+ u_c, X- u_s])."""
    out = np.zeros((n, 2, 3))
    out[:, :, 0] = streams.classical.standard_normal((n, 2))
    if streams.quantum is not None:
        out[:, :, 1:] = streams.quantum.standard_normal((n, 2, 2))
    return out


@dataclass
class PulseField:
    """A batch of n pulses in the (f, u_c, u_s) mode picture.

    carrier: (n, 2) real amplitude of H and V in mode f.
    side: (n, 2, 2) mean [X+ in u_c, X- in u_s] per polarization.
    noise: (n, 2, 3) fluctuations [X+ f, X+ u_c, X- u_s] per polarization.
    """

    carrier: np.ndarray
    side: np.ndarray
    noise: np.ndarray
    grid: PulseGrid

    @property
    def n(self) -> int:
        return self.carrier.shape[0]

    def beam_split(self, tau: float, vacuum: np.ndarray) -> "PulseField":
        """One output port of a beam splitter with power transmittance tau."""
        a, r = math.sqrt(tau), math.sqrt(1 - tau)
        return PulseField(a * self.carrier, a * self.side, a * self.noise + r * vacuum, self.grid)

    def mean_fields(self):
        """Time-sampled mean amplitudes <a_H(t)>, <a_V(t)>, shape (n, samples) each."""
        g = self.grid
        e = (
            self.carrier[..., None] * g.f
            + 0.5 * self.side[..., 0, None] * g.u_c
            + 0.5j * self.side[..., 1, None] * g.u_s
        )
        return e[:, 0], e[:, 1]

    def fluctuation_fields(self):
        g = self.grid
        d = (
            0.5 * self.noise[..., 0, None] * g.f
            + 0.5 * self.noise[..., 1, None] * g.u_c
            + 0.5j * self.noise[..., 2, None] * g.u_s
        )
        return d[:, 0], d[:, 1]

    def stokes_density(self) -> np.ndarray:
        """Linearized Stokes densities S_k(t), shape (n, 4, samples).

        Products of two fluctuation fields are dropped. So is the intensity of
        the weak sideband, which is second order in the modulation.
        """
        mh, mv = self.mean_fields()
        dh, dv = self.fluctuation_fields()
        g = self.grid
        ch, cv = self.carrier[:, 0, None] * g.f, self.carrier[:, 1, None] * g.f
        # |E|^2 to first order in fluctuations, carrier-only mean intensity
        ih = ch * ch + 2 * np.real(np.conj(mh) * dh)
        iv = cv * cv + 2 * np.real(np.conj(mv) * dv)
        cross = np.conj(mh) * mv + np.conj(mh) * dv + np.conj(dh) * mv
        return np.stack([ih + iv, ih - iv, 2 * cross.real, 2 * cross.imag], axis=1)


def transmitter_quadratures(field: PulseField) -> np.ndarray:
    """Alice-side sideband quadratures of the weak polarization, (n, 2) = [X+, X-]."""
    weak = np.where(np.abs(field.carrier[:, 0]) >= np.abs(field.carrier[:, 1]), 1, 0)
    idx = np.arange(field.n)
    return field.side[idx, weak] + field.noise[idx, weak, 1:]


def encode(params: ProtocolParams, bits, a, b, rng) -> PulseField:
    """Prepare a batch of pulses.

    For bit 1 the mean field is <a_H(t)> = alpha f(t) and
    <a_V(t)> = alpha f(t) [b cos(w t) - i a sin(w t)], with sum(w f^2) = 1.
    Bit 0 applies the Pockels swap H <-> V. Vacuum fluctuations are attached
    to every mode.
    """
    g = pulse_grid(params)
    bits = np.asarray(bits, dtype=int)
    n = bits.size
    carrier = np.zeros((n, 2))
    side = np.zeros((n, 2, 2))
    carrier[:, 0] = params.alpha
    side[:, 1, 0] = 2 * params.alpha * np.asarray(b, float) * g.norm_c
    side[:, 1, 1] = -2 * params.alpha * np.asarray(a, float) * g.norm_s
    noise = _vacuum(_as_streams(rng), n)
    flip = bits == 0
    # Pockels cell: H <-> V
    carrier[flip] = carrier[flip][:, ::-1]
    side[flip] = side[flip][:, ::-1]
    return PulseField(carrier, side, noise, g)


def modulation_scales(params: ProtocolParams):
    """Standard deviations of (a, b) giving Var(X-) = Var(X+) = v_mod."""
    g = pulse_grid(params)
    if params.alpha == 0:
        return 0.0, 0.0
    root = math.sqrt(params.v_mod)
    return root / (2 * params.alpha * g.norm_s), root / (2 * params.alpha * g.norm_c)


def encode_shot(params: ProtocolParams, bit: int, rng, a=None, b=None) -> PulseField:
    """Single-pulse encode; draws (a, b) from rng unless given."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    gen = rng.classical if isinstance(rng, ShotStreams) else rng
    sa, sb = modulation_scales(params)
    if a is None:
        a = sa * gen.standard_normal()
    if b is None:
        b = sb * gen.standard_normal()
    return encode(params, [bit], [a], [b], rng)


def transmit(field: PulseField, t: float, xi: float, rng) -> PulseField:
    """Lossy channel with excess noise T xi added at the output."""
    if not (0 < t <= 1):
        raise ValueError(f"transmissivity must lie in (0, 1], got {t}")
    streams = _as_streams(rng)
    out = field.beam_split(t, _vacuum(streams, field.n))
    out.noise = out.noise + math.sqrt(t * xi) * _vacuum(streams, field.n)
    return out


def decode_classical(field: PulseField, eta: float, nu_el: float, rng):
    """S1 = n_H - n_V on the transmitted BS1 port; returns (bit_rx, s1_measured).

    Electronic noise has variance nu_el relative to the shot noise of the
    difference current.
    """
    streams = _as_streams(rng)
    port = field.beam_split(eta, _vacuum(streams, field.n))
    c = port.carrier
    s1 = c[:, 0] ** 2 - c[:, 1] ** 2 + c[:, 0] * port.noise[:, 0, 0] - c[:, 1] * port.noise[:, 1, 0]
    e = streams.classical.standard_normal(field.n)
    s1 = s1 + math.sqrt(nu_el) * np.sqrt(c[:, 0] ** 2 + c[:, 1] ** 2) * e
    bit_rx = (s1 >= 0).astype(np.int8)
    return bit_rx, s1


_S2_ROW = mueller.s2_arm_matrix()[1]
_S3_ROW = mueller.s3_arm_matrix()[1]


def _basis_coefficients(arm: PulseField):
    """Real and imaginary parts of mean and fluctuation fields on the basis (f, u_c, u_s).

    Each is shaped (n, pol, 3).
    """
    n = arm.n
    rm = np.zeros((n, 2, 3))
    im = np.zeros((n, 2, 3))
    rm[..., 0] = arm.carrier
    rm[..., 1] = 0.5 * arm.side[..., 0]
    im[..., 2] = 0.5 * arm.side[..., 1]
    rd = np.zeros((n, 2, 3))
    idd = np.zeros((n, 2, 3))
    rd[..., 0] = 0.5 * arm.noise[..., 0]
    rd[..., 1] = 0.5 * arm.noise[..., 1]
    idd[..., 2] = 0.5 * arm.noise[..., 2]
    return rm, im, rd, idd


@lru_cache(maxsize=16)
def _mix_kernels(grid_key):
    g = _grid(*grid_key)
    basis = np.stack([g.f, g.u_c, g.u_s])
    # K[i, j] = sum_t w B_i B_j lo(t)
    k_cos = np.einsum("it,jt,t->ij", basis, basis, g.w * g.cos)
    k_sin = np.einsum("it,jt,t->ij", basis, basis, g.w * g.sin)
    return k_cos, k_sin


def _bilinear(a, k, b):
    return np.einsum("ni,ij,nj->n", a, k, b)


def _mixed_cross(arm: PulseField, kernel: np.ndarray):
    """Mixdown of linearized 2 Re and 2 Im of conj(E_H) E_V against a local-oscillator kernel.

    Equals sum_t w S2(t) lo(t) (or S3) from stokes_density(), evaluated on
    the mode basis instead of the dense time grid.
    """
    rm, im, rd, idd = _basis_coefficients(arm)
    h, v = 0, 1
    re = (
        _bilinear(rm[:, h], kernel, rm[:, v]) + _bilinear(im[:, h], kernel, im[:, v])
        + _bilinear(rm[:, h], kernel, rd[:, v]) + _bilinear(im[:, h], kernel, idd[:, v])
        + _bilinear(rd[:, h], kernel, rm[:, v]) + _bilinear(idd[:, h], kernel, im[:, v])
    )
    imag = (
        _bilinear(rm[:, h], kernel, im[:, v]) - _bilinear(im[:, h], kernel, rm[:, v])
        + _bilinear(rm[:, h], kernel, idd[:, v]) - _bilinear(im[:, h], kernel, rd[:, v])
        + _bilinear(rd[:, h], kernel, im[:, v]) - _bilinear(idd[:, h], kernel, rm[:, v])
    )
    return 2 * re, 2 * imag


def mixdown(arm: PulseField, row: np.ndarray, quadrature: str, amp_est) -> np.ndarray:
    """Mix the arm's PBS difference current down and normalize to shot-noise units.

    The current is row . S(t), with row the arm's Mueller row for the detected
    output. quadrature 'plus' mixes with cos(w t), 'minus' with sin(w t).
    """
    g = arm.grid
    k_cos, k_sin = _mix_kernels(g.key)
    if quadrature == "plus":
        kernel, norm, sign = k_cos, g.norm_c, row[2]
    elif quadrature == "minus":
        kernel, norm, sign = k_sin, g.norm_s, row[3]
    else:
        raise ValueError(f"quadrature must be 'plus' or 'minus', got {quadrature!r}")
    s2, s3 = _mixed_cross(arm, kernel)
    # S0/S1 carry no sideband content, and the S2/S3 arm rows do not read them
    current = row[2] * s2 + row[3] * s3
    # divide out the sign of the Stokes component the arm reads
    return sign * current / (amp_est * norm)


def mixdown_time_domain(arm: PulseField, row: np.ndarray, quadrature: str, amp_est) -> np.ndarray:
    """Reference implementation of mixdown() on the sampled time grid."""
    g = arm.grid
    current = np.einsum("k,nkt->nt", row, arm.stokes_density())
    lo, norm, sign = (g.cos, g.norm_c, row[2]) if quadrature == "plus" else (g.sin, g.norm_s, row[3])
    return sign * (current @ (g.w * lo)) / (amp_est * norm)


def decode_quantum(field: PulseField, params: ProtocolParams, s1_measured, rng, switch=None):
    """Mixed-down normalized quadratures (quad_plus, quad_minus) from S2/S3 arms.

    The reflected BS1 port (fraction 1 - eta) feeds either one arm chosen by
    `switch` (homodyne; True selects S3) or both arms through a 50:50 splitter
    (heterodyne). Each quadrature is scaled by 1 / sqrt(|s1| kappa / eta), Bob's
    estimate of the carrier amplitude in the arm, and its sign is corrected
    with the decoded bit. The arm that is not measured returns NaN.
    """
    s1_measured = np.asarray(s1_measured, dtype=float)
    if np.any(s1_measured == 0) or params.eta == 0:
        raise NormalizationError("S1 reading is zero; cannot normalize the quadratures")
    streams = _as_streams(rng)
    if streams.quantum is None:
        raise ValueError("quantum decoding needs a quantum noise stream")
    n = field.n
    kappa = params.kappa
    port = field.beam_split(1 - params.eta, _vacuum(streams, n))
    if params.detection == HETERODYNE:
        vac = _vacuum(streams, n)
        arm_p = port.beam_split(0.5, vac)
        arm_m = PulseField(arm_p.carrier, arm_p.side, (port.noise - vac) * math.sqrt(0.5), port.grid)
    else:
        arm_p = arm_m = port
    amp_est = np.sqrt(np.abs(s1_measured) * kappa / params.eta)
    bit_sign = np.sign(s1_measured)
    e = streams.quantum.standard_normal((n, 2))
    q_plus = mixdown(arm_p, _S2_ROW, "plus", amp_est) + math.sqrt(params.nu_el) * e[:, 0]
    q_minus = bit_sign * mixdown(arm_m, _S3_ROW, "minus", amp_est) + math.sqrt(params.nu_el) * e[:, 1]
    if params.detection == HOMODYNE:
        if switch is None:
            raise ValueError("homodyne decoding needs the switch setting")
        switch = np.asarray(switch, dtype=bool)
        q_plus = np.where(switch, np.nan, q_plus)
        q_minus = np.where(switch, q_minus, np.nan)
    return q_plus, q_minus


# --- campaigns ---------------------------------------------------------------


def substream(seed: int, stream: int, chunk: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream, chunk)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, chunk))))


@dataclass(frozen=True)
class ShotRecord:
    bit_tx: int
    a: float
    b: float
    s1_measured: float
    bit_rx: int
    quad_plus: float
    quad_minus: float


@dataclass
class ShotBatch:
    """Per-shot arrays from simulate(); x_plus/x_minus are Alice's quadrature values."""

    bit_tx: np.ndarray
    a: np.ndarray
    b: np.ndarray
    s1_measured: np.ndarray
    bit_rx: np.ndarray
    x_plus: np.ndarray
    x_minus: np.ndarray
    quad_plus: np.ndarray
    quad_minus: np.ndarray

    def __len__(self):
        return self.bit_tx.size

    def record(self, i: int) -> ShotRecord:
        return ShotRecord(
            int(self.bit_tx[i]),
            float(self.a[i]),
            float(self.b[i]),
            float(self.s1_measured[i]),
            int(self.bit_rx[i]),
            float(self.quad_plus[i]),
            float(self.quad_minus[i]),
        )


def _chunk_bits(params: ProtocolParams, chunk: int, n: int) -> np.ndarray:
    if params.bit_pattern:
        idx = (chunk * CHUNK + np.arange(n)) % len(params.bit_pattern)
        return np.asarray(params.bit_pattern, dtype=np.int8)[idx]
    return substream(params.seed, _BITS, chunk).integers(0, 2, n, dtype=np.int8)


def simulate_chunk(params: ProtocolParams, chunk: int, n: int, quantum: bool = True) -> ShotBatch:
    """Run shots [chunk*CHUNK, chunk*CHUNK + n) of the campaign."""
    bits = _chunk_bits(params, chunk, n)
    z = substream(params.seed, _MOD, chunk).standard_normal((n, 2))
    sa, sb = modulation_scales(params)
    a, b = sa * z[:, 0], sb * z[:, 1]
    streams = ShotStreams(
        substream(params.seed, _CLASSICAL, chunk),
        substream(params.seed, _QUANTUM, chunk) if quantum else None,
    )
    field = encode(params, bits, a, b, streams)
    x = transmitter_quadratures(field) - field.noise[np.arange(n), np.where(bits == 1, 1, 0), 1:]
    rx = transmit(field, params.t, params.xi, streams)
    bit_rx, s1 = decode_classical(rx, params.eta, params.nu_el, streams)
    if quantum:
        switch = substream(params.seed, _SWITCH, chunk).random(n) < 0.5
        qp, qm = decode_quantum(rx, params, s1, streams, switch)
    else:
        qp = qm = np.full(n, np.nan)
    return ShotBatch(bits, a, b, s1, bit_rx, x[:, 0], x[:, 1], qp, qm)


def _chunk_sizes(n_shots: int):
    full, rest = divmod(n_shots, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _run_chunk(args):
    params, k, n, quantum, keep = args
    batch = simulate_chunk(params, k, n, quantum)
    if keep:
        return batch
    # classical-only summaries keep memory flat for long BER runs
    return int(np.count_nonzero(batch.bit_tx != batch.bit_rx))


def _map_chunks(params, n_shots, quantum, keep, workers):
    tasks = [(params, k, n, quantum, keep) for k, n in enumerate(_chunk_sizes(n_shots))]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_chunk, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [_run_chunk(t) for t in tasks]


def simulate(params: ProtocolParams, n_shots: int, quantum: bool = True, workers: int = 1) -> ShotBatch:
    """All per-shot data for a campaign, in shot order."""
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    parts = _map_chunks(params, n_shots, quantum, True, workers)
    names = ShotBatch.__dataclass_fields__
    return ShotBatch(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in names})


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def z(self, target: float) -> float:
        diff = self.value - target
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr


@dataclass(frozen=True)
class SimReport:
    """Summary of a campaign.

    The eb_* entries are estimates of the entanglement-based covariance matrix
    entries V, sqrt(T(V^2-1)) and T(V+Xi_ch), referred to the channel output.
    """

    n_shots: int
    n_errors: int
    ber_empirical: float
    ber_stderr: float
    var_s2p: float = math.nan
    var_s3p: float = math.nan
    t_hat: Estimate = Estimate(math.nan, math.nan)
    xi_hat: Estimate = Estimate(math.nan, math.nan)
    eb_v: Estimate = Estimate(math.nan, math.nan)
    eb_c: Estimate = Estimate(math.nan, math.nan)
    eb_w: Estimate = Estimate(math.nan, math.nan)
    n_quad: int = 0
    extra: dict = dc_field(default_factory=dict)


def _pairs(batch: ShotBatch):
    x = np.concatenate([batch.x_plus, batch.x_minus])
    y = np.concatenate([batch.quad_plus, batch.quad_minus])
    ok = ~np.isnan(y)
    return x[ok], y[ok]


def channel_estimates(x, y, kappa: float, nu_el: float):
    """ML estimates of T and xi from pairs y = sqrt(T kappa) x + z."""
    n = x.size
    sxx = float(np.dot(x, x))
    if sxx == 0:
        # no modulation: the channel is not identifiable
        nan = Estimate(math.nan, math.nan)
        return nan, nan
    t_root = float(np.dot(x, y)) / sxx
    s_hat = float(np.mean((y - t_root * x) ** 2))
    se_root = math.sqrt(s_hat / sxx)
    t_hat = t_root**2 / kappa
    se_t = 2 * abs(t_root) * se_root / kappa
    xi_hat = (s_hat - 1 - nu_el) / (kappa * t_hat)
    se_s = s_hat * math.sqrt(2 / n)
    se_xi = math.hypot(se_s / (kappa * t_hat), (s_hat - 1 - nu_el) / (kappa * t_hat**2) * se_t)
    return Estimate(t_hat, se_t), Estimate(xi_hat, se_xi)


def _eb_entries(x, y_ref, offset):
    vx = np.mean(x * x)
    v = vx + 1
    c = np.mean(x * y_ref) * math.sqrt((v + 1) / (v - 1)) if vx > 0 else math.nan
    w = np.mean(y_ref * y_ref) - offset
    return np.array([v, c, w])


def covariance_estimates(x, y, kappa: float, nu_el: float, n_batches: int = N_BATCHES):
    """Eb-picture CM entries with batch-means standard errors."""
    y_ref = y / math.sqrt(kappa)
    offset = (1 - kappa + nu_el) / kappa
    full = _eb_entries(x, y_ref, offset)
    parts = np.array(
        [_eb_entries(xb, yb, offset) for xb, yb in zip(np.array_split(x, n_batches), np.array_split(y_ref, n_batches))]
    )
    se = parts.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return [Estimate(float(m), float(s)) for m, s in zip(full, se)]


def run_campaign(params: ProtocolParams, n_shots: int, quantum: bool = True, workers: int = 1) -> SimReport:
    """Simulate n_shots pulses and summarize BER, quadrature variances and channel estimates.

    With quantum=False only the classical path runs, which is what long BER
    campaigns need.
    """
    if n_shots < MIN_SHOTS:
        raise ValueError(f"n_shots must be >= {MIN_SHOTS}, got {n_shots}")
    if not quantum:
        errors = sum(_map_chunks(params, n_shots, False, False, workers))
        p = errors / n_shots
        return SimReport(n_shots, errors, p, math.sqrt(max(p * (1 - p), 0.0) / n_shots))
    batch = simulate(params, n_shots, True, workers)
    errors = int(np.count_nonzero(batch.bit_tx != batch.bit_rx))
    p = errors / n_shots
    x, y = _pairs(batch)
    kappa = params.kappa
    t_hat, xi_hat = channel_estimates(x, y, kappa, params.nu_el)
    eb_v, eb_c, eb_w = covariance_estimates(x, y, kappa, params.nu_el)
    return SimReport(
        n_shots=n_shots,
        n_errors=errors,
        ber_empirical=p,
        ber_stderr=math.sqrt(p * (1 - p) / n_shots),
        var_s2p=float(np.nanvar(batch.quad_plus)),
        var_s3p=float(np.nanvar(batch.quad_minus)),
        t_hat=t_hat,
        xi_hat=xi_hat,
        eb_v=eb_v,
        eb_c=eb_c,
        eb_w=eb_w,
        n_quad=int(x.size),
    )
