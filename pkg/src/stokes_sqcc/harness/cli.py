"""Command-line front end: loss sweeps, Monte Carlo cross-checks and optics checks.

Exit codes: 0 success, 1 a check failed, 2 configuration or output error,
3 numerical-domain error.
"""

from __future__ import annotations

import argparse
import io
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import keyrate, mueller, protocol
from ..stokes import NonViableRegime
from .config import ConfigError, build_config, read_config_file

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
Z_PASS = 5.0

SWEEP_COLUMNS = (
    "loss_db", "transmissivity", "detection", "block_size",
    "v_mod_opt", "i_ab", "chi_be", "rate", "rate_asymptotic", "v_mod_opt_asymptotic",
    "plob", "c_ber", "eta", "xi", "nu_el", "beta",
    "sim_n_shots", "sim_ber", "sim_ber_se", "sim_t_hat", "sim_t_hat_se",
    "sim_xi_hat", "sim_xi_hat_se", "sim_var_s2p", "sim_var_s3p",
    "git_hash", "seed", "timestamp",
)
CROSSCHECK_COLUMNS = ("loss_db", "detection", "check", "empirical", "stderr", "analytic", "z", "result")
BER_COLUMNS = ("loss_db", "alpha", "eta", "nu_el", "xi", "n_shots", "n_errors", "ber_mc", "ber_mc_se",
               "ber_eq", "ber_direct", "z_eq", "z_direct")

_NUMERIC_ERRORS = (
    keyrate.UnphysicalCovariance,
    keyrate.FiniteSizeError,
    protocol.NormalizationError,
    NonViableRegime,
    FloatingPointError,
    ArithmeticError,
)


# --- formatting ------------------------------------------------------------------


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.12g" % v
    return str(value)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(row.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"out: cannot write {out}: {exc.strerror}") from None


def git_hash() -> str:
    try:
        res = subprocess.run(
            ["git", "rev-parse", "--short=12", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def provenance_timestamp() -> str:
    """SOURCE_DATE_EPOCH as ISO-8601 UTC, else 'unset' so reruns stay byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return "unset"
    try:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    except ValueError:
        raise ConfigError(f"SOURCE_DATE_EPOCH: not an integer: {epoch!r}") from None


# --- sweep --------------------------------------------------------------------------


def _rate_row(task):
    cfg, loss, det, n_block = task
    pt = keyrate.key_rate_point(
        loss,
        det,
        n_block,
        xi=cfg.xi,
        eta=cfg.eta,
        nu_el=cfg.nu_el,
        beta=cfg.beta,
        alpha=cfg.alpha,
        params=cfg.finite_params(),
        alpha_received=cfg.second_order_alpha,
    )
    row = {
        "loss_db": loss,
        "transmissivity": float(keyrate.db_to_transmissivity(loss)),
        "detection": det,
        "block_size": pt.block_size,
        "v_mod_opt": pt.v_mod_opt,
        "i_ab": pt.i_ab,
        "chi_be": pt.chi_be,
        "rate": pt.rate,
        "rate_asymptotic": pt.rate_asymptotic,
        "v_mod_opt_asymptotic": pt.v_mod_opt_asymptotic,
        "plob": pt.plob,
        "c_ber": pt.c_ber,
        "eta": cfg.eta,
        "xi": cfg.xi,
        "nu_el": cfg.nu_el,
        "beta": cfg.beta,
    }
    if cfg.simulate:
        rep = protocol.run_campaign(cfg.protocol_params(loss, det), cfg.shots)
        row.update(
            sim_n_shots=rep.n_shots,
            sim_ber=rep.ber_empirical,
            sim_ber_se=rep.ber_stderr,
            sim_t_hat=rep.t_hat.value,
            sim_t_hat_se=rep.t_hat.stderr,
            sim_xi_hat=rep.xi_hat.value,
            sim_xi_hat_se=rep.xi_hat.stderr,
            sim_var_s2p=rep.var_s2p,
            sim_var_s3p=rep.var_s3p,
        )
    return row


def run_sweep(cfg) -> list:
    """One row per (loss, detection, N), in grid order whatever the worker count."""
    tasks = [(cfg, loss, det, n) for det in cfg.detection for n in cfg.block_size for loss in cfg.loss_db]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_rate_row, tasks))
    else:
        rows = [_rate_row(t) for t in tasks]
    stamp, commit = provenance_timestamp(), git_hash()
    for row in rows:
        row.update(git_hash=commit, seed=cfg.seed, timestamp=stamp)
    return rows


def gnuplot_script(cfg, csv_path: str) -> str:
    lines = [
        "# rate vs loss; columns per the CSV header",
        "set datafile separator ','",
        "set logscale y",
        "set xlabel 'channel loss (dB)'",
        "set ylabel 'secret key rate (bits/pulse)'",
        "set key outside",
    ]
    plots = []
    col = {c: i + 1 for i, c in enumerate(SWEEP_COLUMNS)}
    for det in cfg.detection:
        for n in cfg.block_size:
            label = f"{det} N={'inf' if n is None else fmt(n)}"
            bs = "inf" if n is None else fmt(float(n))
            cond = f"(strcol({col['detection']}) eq '{det}' && strcol({col['block_size']}) eq '{bs}')"
            plots.append(
                f"'{csv_path}' every ::1 using {col['loss_db']}:({cond} ? ${col['rate']} : 1/0) "
                f"with lines title '{label}'"
            )
    first = cfg.detection[0]
    plots.append(
        f"'{csv_path}' every ::1 using {col['loss_db']}:((strcol({col['detection']}) eq '{first}') ? "
        f"${col['plob']} : 1/0) with lines dt 2 title 'PLOB'"
    )
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# --- crosscheck ----------------------------------------------------------------------


def _check(rows, loss, det, name, est_value, est_se, analytic):
    if est_se > 0:
        z = (est_value - analytic) / est_se
    else:
        z = 0.0 if est_value == analytic else math.copysign(math.inf, est_value - analytic)
    rows.append(
        {
            "loss_db": loss,
            "detection": det,
            "check": name,
            "empirical": est_value,
            "stderr": est_se,
            "analytic": analytic,
            "z": z,
            "result": "pass" if abs(z) < Z_PASS else "FAIL",
        }
    )


def run_crosscheck(cfg, n_shots: int | None = None) -> list:
    """Simulate each (loss, detection) point and score it against the analytic model.

    cfg.inject_xi, when set, is the excess noise the simulated channel actually
    applies; the analytic side keeps cfg.xi (negative control).
    """
    n_shots = cfg.shots if n_shots is None else n_shots
    if n_shots < 100_000:
        raise ConfigError(f"shots: crosscheck needs >= 1e5 shots, got {n_shots}")
    rows = []
    for det in cfg.detection:
        for loss in cfg.loss_db:
            params = cfg.protocol_params(loss, det, xi=cfg.inject_xi)
            rep = protocol.run_campaign(params, n_shots, workers=cfg.workers)
            t = params.t
            v = 1 + cfg.v_mod
            xi_ch = (1 - t) / t + cfg.xi
            p = float(keyrate.direct_detection_ber(cfg.alpha, t, cfg.eta, cfg.nu_el, cfg.xi))
            _check(rows, loss, det, "ber", rep.ber_empirical, math.sqrt(p * (1 - p) / n_shots), p)
            _check(rows, loss, det, "cm_v", rep.eb_v.value, rep.eb_v.stderr, v)
            _check(rows, loss, det, "cm_c", rep.eb_c.value, rep.eb_c.stderr, math.sqrt(t * (v * v - 1)))
            _check(rows, loss, det, "cm_w", rep.eb_w.value, rep.eb_w.stderr, t * (v + xi_ch))
            _check(rows, loss, det, "t_hat", rep.t_hat.value, rep.t_hat.stderr, t)
            _check(rows, loss, det, "xi_hat", rep.xi_hat.value, rep.xi_hat.stderr, cfg.xi)
    return rows


# --- ber -------------------------------------------------------------------------------


def run_ber(cfg) -> list:
    rows = []
    for loss in cfg.loss_db:
        params = cfg.protocol_params(loss, cfg.detection[0])
        rep = protocol.run_campaign(params, cfg.shots, quantum=False, workers=cfg.workers)
        t = params.t
        p_eq = float(keyrate.classical_ber(cfg.alpha, t, cfg.eta, cfg.nu_el))
        p_dd = float(keyrate.direct_detection_ber(cfg.alpha, t, cfg.eta, cfg.nu_el, cfg.xi))

        def z(p):
            se = math.sqrt(p * (1 - p) / rep.n_shots)
            return (rep.ber_empirical - p) / se if se > 0 else (0.0 if rep.ber_empirical == p else math.inf)

        rows.append(
            {
                "loss_db": loss,
                "alpha": cfg.alpha,
                "eta": cfg.eta,
                "nu_el": cfg.nu_el,
                "xi": cfg.xi,
                "n_shots": rep.n_shots,
                "n_errors": rep.n_errors,
                "ber_mc": rep.ber_empirical,
                "ber_mc_se": rep.ber_stderr,
                "ber_eq": p_eq,
                "ber_direct": p_dd,
                "z_eq": z(p_eq),
                "z_direct": z(p_dd),
            }
        )
    return rows


# --- rate ------------------------------------------------------------------------------


def run_rate(cfg) -> str:
    rows = run_sweep(cfg)
    out = []
    for row in rows:
        out.append(
            f"loss_db={fmt(row['loss_db'])} detection={row['detection']} N={fmt(row['block_size'])} "
            f"rate={fmt(row['rate'])} rate_asymptotic={fmt(row['rate_asymptotic'])} "
            f"v_mod_opt={fmt(row['v_mod_opt'])} plob={fmt(row['plob'])}"
        )
    return "\n".join(out) + "\n"


# --- optics check -------------------------------------------------------------------------


def run_optics_check(n_grid: int = 100, phi_deg=None):
    """Mueller-chain identity over an n x n grid of (phi1, phi2) in [-90, 90] degrees."""
    lines = []
    ok = True
    phis = np.linspace(-np.pi / 2, np.pi / 2, n_grid)
    p1, p2 = np.meshgrid(phis, phis, indexing="ij")
    err = float(np.max(np.abs(mueller.alice_chain(p1, p2) - mueller.alice_chain_closed_form(p1, p2))))
    passed = err < 1e-10
    ok &= passed
    lines.append(f"alice_chain_grid n={n_grid} max_abs_err={fmt(err)} {'pass' if passed else 'FAIL'}")
    flip = mueller.apply(mueller.element("pockels", True), mueller.H_BEAM)
    passed = np.allclose(flip, [1, -1, 0, 0], atol=1e-12)
    ok &= passed
    lines.append(f"pockels_on_H={','.join(fmt(v) for v in flip)} {'pass' if passed else 'FAIL'}")
    for name, row, want in (
        ("s2_arm_row", mueller.s2_arm_matrix()[1], [0, 0, 1, 0]),
        ("s3_arm_row", mueller.s3_arm_matrix()[1], [0, 0, 0, -1]),
    ):
        passed = np.allclose(row, want, atol=1e-12)
        ok &= passed
        lines.append(f"{name}={','.join(fmt(v) for v in row)} {'pass' if passed else 'FAIL'}")
    if phi_deg is not None:
        a, b = np.deg2rad(phi_deg[0]), np.deg2rad(phi_deg[1])
        s = mueller.alice_chain(a, b)
        lines.append(f"s_out(phi1={fmt(phi_deg[0])}deg,phi2={fmt(phi_deg[1])}deg)={','.join(fmt(v) for v in s)}")
    return ok, "\n".join(lines) + "\n"


# --- argument parsing --------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss-db", dest="loss_db", help="loss grid in dB: '10', '0,5,10' or '0:30:1'")
    p.add_argument("--detection", help="hom, het or a comma list")
    p.add_argument("--block-size", dest="block_size", help="comma list of N; 'inf' for asymptotic")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--shots", type=int)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqcc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", help="optimized key rates over the loss grid (CSV)")
    _common(p)
    p.add_argument("--simulate", action="store_const", const="true", help="add Monte Carlo columns")
    p.add_argument("--gnuplot", help="also write a gnuplot script plotting --out")
    p = sub.add_parser("crosscheck", help="Monte Carlo vs analytic checks with z-scores")
    _common(p)
    p.add_argument("--inject-xi", dest="inject_xi", help="excess noise applied by the simulated channel")
    p = sub.add_parser("ber", help="classical BER, Monte Carlo vs analytic (CSV)")
    _common(p)
    p.add_argument("--alpha", help="coherent amplitude sqrt(photon number)")
    p = sub.add_parser("rate", help="key rate at the given loss values")
    _common(p)
    p = sub.add_parser("optics-check", help="Mueller-chain identity and element checks")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--phi", nargs=2, type=float, metavar=("PHI1_DEG", "PHI2_DEG"))
    p.add_argument("--out")
    return parser


_OVERRIDE_KEYS = ("seed", "loss_db", "detection", "block_size", "out", "shots", "workers",
                  "simulate", "gnuplot", "inject_xi", "alpha")


def config_from_args(args):
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {}
    for key in _OVERRIDE_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val) if not isinstance(val, str) else val
    return build_config(file_values, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "optics-check":
            if args.grid < 2:
                raise ConfigError("grid: must be >= 2")
            ok, text = run_optics_check(args.grid, args.phi)
            emit(text, args.out)
            return EXIT_OK if ok else EXIT_FAIL
        cfg = config_from_args(args)
        if args.command == "sweep":
            emit(render_csv(SWEEP_COLUMNS, run_sweep(cfg)), cfg.out)
            if cfg.gnuplot:
                emit(gnuplot_script(cfg, cfg.out or "sweep.csv"), cfg.gnuplot)
            return EXIT_OK
        if args.command == "crosscheck":
            rows = run_crosscheck(cfg)
            emit(render_csv(CROSSCHECK_COLUMNS, rows), cfg.out)
            return EXIT_OK if all(r["result"] == "pass" for r in rows) else EXIT_FAIL
        if args.command == "ber":
            emit(render_csv(BER_COLUMNS, run_ber(cfg)), cfg.out)
            return EXIT_OK
        if args.command == "rate":
            emit(run_rate(cfg), cfg.out)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except protocol.SidebandError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
