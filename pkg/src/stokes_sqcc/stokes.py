"""Means and variances of Stokes operators for a bright two-mode coherent beam.

Shot-noise units throughout (hbar = 2): a vacuum quadrature has variance 1.
The linearized treatment keeps terms first order in the fluctuations
dX+ = da^dag + da and dX- = i(da^dag - da) of each polarization mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

VAR_FLOOR_TOL = 1e-12

# below this received amplitude the linearization is flagged
BRIGHT_BEAM_MIN = 1e2


class NonViableRegime(ValueError):
    """Received amplitude too small for the normalized-Stokes encoding."""


@dataclass(frozen=True)
class CoherentTwoMode:
    alpha_h: float
    alpha_v: float
    vac_var_plus_h: float = 1.0
    vac_var_plus_v: float = 1.0
    vac_var_minus_h: float = 1.0
    vac_var_minus_v: float = 1.0
    # <dX_H dX_V> for the + and - quadratures; zero for independent modes
    cross_plus: float = 0.0
    cross_minus: float = 0.0

    def __post_init__(self):
        for name in ("alpha_h", "alpha_v"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {val}")
        for name in ("vac_var_plus_h", "vac_var_plus_v", "vac_var_minus_h", "vac_var_minus_v"):
            if getattr(self, name) < 1 - VAR_FLOOR_TOL:
                raise ValueError(f"{name} below the vacuum level: {getattr(self, name)}")


@dataclass(frozen=True)
class StokesMoments:
    mean_s0: float
    mean_s1: float
    mean_s2: float
    mean_s3: float
    var_s0: float = math.nan
    var_s1: float = math.nan
    var_s2: float = math.nan
    var_s3: float = math.nan
    order: str = "first"

    @property
    def means(self):
        return np.array([self.mean_s0, self.mean_s1, self.mean_s2, self.mean_s3])

    @property
    def variances(self):
        return np.array([self.var_s0, self.var_s1, self.var_s2, self.var_s3])


@dataclass(frozen=True)
class NormalizedQuadPair:
    mean_s2p: float
    mean_s3p: float
    var_s2p: float
    var_s3p: float


def stokes_means(state: CoherentTwoMode) -> StokesMoments:
    ah, av = state.alpha_h, state.alpha_v
    return StokesMoments(
        mean_s0=ah**2 + av**2,
        mean_s1=ah**2 - av**2,
        mean_s2=2 * ah * av,
        # real amplitudes carry no circular component
        mean_s3=0.0,
    )


def stokes_variances_first_order(state: CoherentTwoMode) -> StokesMoments:
    """Linearized Stokes variances, including optional H/V cross-correlations.

    S3 = alpha_H dX-_V - alpha_V dX-_H to first order, so its cross term enters
    with a minus sign.
    """
    ah, av = state.alpha_h, state.alpha_v
    means = stokes_means(state)
    return StokesMoments(
        mean_s0=means.mean_s0,
        mean_s1=means.mean_s1,
        mean_s2=means.mean_s2,
        mean_s3=means.mean_s3,
        var_s0=ah**2 * state.vac_var_plus_h + av**2 * state.vac_var_plus_v
        + 2 * ah * av * state.cross_plus,
        var_s1=ah**2 * state.vac_var_plus_h + av**2 * state.vac_var_plus_v
        - 2 * ah * av * state.cross_plus,
        var_s2=ah**2 * state.vac_var_plus_v + av**2 * state.vac_var_plus_h
        + 2 * ah * av * state.cross_plus,
        var_s3=ah**2 * state.vac_var_minus_v + av**2 * state.vac_var_minus_h
        - 2 * ah * av * state.cross_minus,
        order="first",
    )


def sample_stokes_first_order(state: CoherentTwoMode, n: int, rng: np.random.Generator):
    """Draw linearized Stokes values shot by shot; returns an (n, 4) array.

    Independent-mode sampler (cross terms ignored); used as a Monte Carlo
    check on stokes_variances_first_order.
    """
    ah, av = state.alpha_h, state.alpha_v
    xph = rng.normal(0.0, math.sqrt(state.vac_var_plus_h), n)
    xpv = rng.normal(0.0, math.sqrt(state.vac_var_plus_v), n)
    xmh = rng.normal(0.0, math.sqrt(state.vac_var_minus_h), n)
    xmv = rng.normal(0.0, math.sqrt(state.vac_var_minus_v), n)
    return np.column_stack(
        [
            ah**2 + av**2 + ah * xph + av * xpv,
            ah**2 - av**2 + ah * xph - av * xpv,
            2 * ah * av + ah * xpv + av * xph,
            ah * xmv - av * xmh,
        ]
    )


def normalized_quads(state: CoherentTwoMode, v_mod: float) -> NormalizedQuadPair:
    """Statistics of S2' = S2 / <S1>^(1/2) and S3' with Gaussian modulation v_mod.

    The weak polarization carries both vacuum noise and the modulation, so each
    normalized quadrature has variance (vacuum variance) + v_mod.
    """
    if v_mod < 0:
        raise ValueError(f"v_mod must be non-negative, got {v_mod}")
    bright_h = state.alpha_h >= state.alpha_v
    bright = state.alpha_h if bright_h else state.alpha_v
    if bright < BRIGHT_BEAM_MIN:
        warnings.warn(
            f"dominant amplitude {bright:g} is not >> 1; second-order terms may matter",
            stacklevel=2,
        )
    weak_plus = state.vac_var_plus_v if bright_h else state.vac_var_plus_h
    weak_minus = state.vac_var_minus_v if bright_h else state.vac_var_minus_h
    return NormalizedQuadPair(0.0, 0.0, weak_plus + v_mod, weak_minus + v_mod)


def second_order_correction(alpha_received: float, operator: str = "s2p") -> float:
    """Excess variance from second-order fluctuations at received amplitude alpha'.

    Returns 2/alpha'^2 for the normalized S2' and S3' (the equality case of a
    lower bound, so a conservative noise floor) and 1/alpha'^2 for S1.
    """
    if alpha_received <= 0:
        raise NonViableRegime("received amplitude is zero; second-order noise diverges")
    if math.isinf(alpha_received):
        return 0.0
    if operator in ("s2p", "s3p"):
        return 2.0 / alpha_received**2
    if operator == "s1":
        return 1.0 / alpha_received**2
    raise ValueError(f"operator must be 's1', 's2p' or 's3p', got {operator!r}")
