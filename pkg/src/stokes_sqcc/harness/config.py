"""Flat key = value configuration with command-line overrides."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields

import numpy as np

from ..keyrate import FiniteSizeParams, detection_mode
from ..protocol import ProtocolParams

SECTION = "sqcc"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def parse_float(text: str, name: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {text!r}") from None


def parse_bool(text: str, name: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {text!r}")


def parse_grid(text: str, name: str = "loss_db") -> tuple:
    """Comma list ('0,5,10') or inclusive range ('start:stop:step')."""
    text = str(text).strip()
    if not text:
        raise ConfigError(f"{name}: empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{name}: range must be start:stop:step, got {text!r}")
        start, stop, step = (parse_float(p, name) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"{name}: range {text!r} is empty or has non-positive step")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = tuple(float(np.round(start + k * step, 12)) for k in range(count))
    else:
        values = tuple(parse_float(p, name) for p in text.split(",") if p.strip())
    if not values:
        raise ConfigError(f"{name}: empty grid")
    return values


def parse_block_sizes(text: str) -> tuple:
    """Comma list of N; 'inf' or 'asymptotic' selects the asymptotic rate."""
    out = []
    for p in str(text).split(","):
        p = p.strip().lower()
        if not p:
            continue
        if p in ("inf", "asymptotic"):
            out.append(None)
            continue
        n = parse_float(p, "block_size")
        if n < 1e4:
            raise ConfigError(f"block_size: N must be >= 1e4, got {p}")
        out.append(n)
    if not out:
        raise ConfigError("block_size: empty list")
    return tuple(out)


@dataclass(frozen=True)
class SweepConfig:
    loss_db: tuple = parse_grid("0:30:1")
    detection: tuple = ("heterodyne", "homodyne")
    block_size: tuple = (None, 1e8, 1e10, 1e12)
    eta: float = 0.5
    xi: float = 0.01
    nu_el: float = 0.1
    beta: float = 0.95
    alpha: float = 1e4
    v_mod: float = 4.0
    omega_d_ghz: float = 1.0  # modulation frequency / 2 pi, in GHz
    sigma_pulse_ns: float = 1.0
    samples_per_pulse: int = 256
    eps: float = 2.0**-32
    p_ec: float = 0.95
    m_fraction: float = 0.1
    disc_bits: int = 5
    second_order_alpha: float | None = None
    seed: int = 0
    shots: int = 100_000
    workers: int = 1
    simulate: bool = False
    inject_xi: float | None = None
    out: str | None = None
    gnuplot: str | None = None

    def __post_init__(self):
        grid = self.loss_db
        if not grid:
            raise ConfigError("loss_db: empty grid")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("loss_db: grid must be strictly increasing")
        if any(v < 0 for v in grid):
            raise ConfigError("loss_db: losses must be >= 0 dB")
        if self.shots < 1:
            raise ConfigError("shots: must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if not (0 < self.beta <= 1):
            raise ConfigError("beta: must lie in (0, 1]")
        if self.second_order_alpha is not None and self.second_order_alpha <= 0:
            raise ConfigError("second_order_alpha: must be positive")
        try:
            self.finite_params()
            self.protocol_params(grid[0], self.detection[0])
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def finite_params(self) -> FiniteSizeParams:
        return FiniteSizeParams(
            eps_pe=self.eps,
            eps_s=self.eps,
            eps_h=self.eps,
            eps_cor=self.eps,
            p_ec=self.p_ec,
            m_fraction=self.m_fraction,
            disc_bits=self.disc_bits,
        )

    def protocol_params(self, loss_db: float, detection: str, xi: float | None = None) -> ProtocolParams:
        return ProtocolParams(
            alpha=self.alpha,
            v_mod=self.v_mod,
            loss_db=loss_db,
            eta=self.eta,
            xi=self.xi if xi is None else xi,
            nu_el=self.nu_el,
            omega_d=2 * math.pi * self.omega_d_ghz * 1e9,
            sigma_pulse=self.sigma_pulse_ns * 1e-9,
            samples_per_pulse=self.samples_per_pulse,
            detection=detection,
            seed=self.seed,
        )


_FLOAT_KEYS = {
    "eta", "xi", "nu_el", "beta", "alpha", "v_mod", "omega_d_ghz", "sigma_pulse_ns",
    "eps", "p_ec", "m_fraction",
}
_INT_KEYS = {"samples_per_pulse", "disc_bits", "seed", "shots", "workers"}
_OPT_FLOAT_KEYS = {"second_order_alpha", "inject_xi"}
_STR_KEYS = {"out", "gnuplot"}
KNOWN_KEYS = {f.name for f in fields(SweepConfig)}


def _convert(key: str, raw: str):
    if key == "loss_db":
        return parse_grid(raw)
    if key == "detection":
        try:
            return tuple(detection_mode(p.strip()) for p in str(raw).split(",") if p.strip())
        except ValueError as exc:
            raise ConfigError(f"detection: {exc}") from None
    if key == "block_size":
        return parse_block_sizes(raw)
    if key == "simulate":
        return parse_bool(raw, key)
    if key in _FLOAT_KEYS:
        return parse_float(raw, key)
    if key in _INT_KEYS:
        val = parse_float(raw, key)
        if val != int(val):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(val)
    if key in _OPT_FLOAT_KEYS:
        return None if str(raw).strip().lower() in ("", "none", "off") else parse_float(raw, key)
    if key in _STR_KEYS:
        return str(raw).strip() or None
    raise ConfigError(f"unknown configuration key {key!r}")


def read_config_file(path: str) -> dict:
    """Raw key/value strings from a flat file (no section header needed)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        parser.read_string(f"[{SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    return {k.replace("-", "_"): v for k, v in parser[SECTION].items()}


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> SweepConfig:
    """Merge defaults, config-file values and CLI overrides (CLI wins)."""
    values = {}
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = _convert(key, raw) if isinstance(raw, str) else raw
    try:
        return SweepConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
