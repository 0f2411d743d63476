"""Acceptance criteria, one test per criterion.

Every test prints a single 'CRITERION n: PASS|FAIL ...' line (visible without
-s) before asserting, so a full run doubles as the acceptance report.
"""

import math
import time

import numpy as np
import pytest

from stokes_sqcc import gaussian as gs
from stokes_sqcc import keyrate as kr
from stokes_sqcc import mueller
from stokes_sqcc import protocol as pr
from stokes_sqcc.harness import cli

SETTINGS = dict(eta=0.5, xi=0.01, nu_el=0.1, beta=0.95)
SWEEP = np.arange(0.0, 31.0, 1.0)
BLOCKS = (1e8, 1e10, 1e12)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")

    return emit


def test_criterion_1_mueller_chain_identity(report):
    t0 = time.perf_counter()
    phis = np.linspace(-np.pi / 2, np.pi / 2, 100)
    p1, p2 = np.meshgrid(phis, phis, indexing="ij")
    err = float(np.max(np.abs(mueller.alice_chain(p1, p2) - mueller.alice_chain_closed_form(p1, p2))))
    dt = time.perf_counter() - t0
    ok = err < 1e-10 and dt < 1.0
    report(1, ok, f"max |S_out - closed form| = {err:.2e} (tol 1e-10), {dt:.3f} s (limit 1 s)")
    assert ok


def test_criterion_2_ber_oracle(report):
    t, eta, nu = 0.5, 0.5, 0.1
    n_shots = 10**7
    t0 = time.perf_counter()
    lines, ok = [], True
    for k, arg in enumerate(np.linspace(1.0, 3.0, 5)):
        alpha = arg * math.sqrt(1 + nu) / math.sqrt(2 * t * eta)
        params = pr.ProtocolParams(alpha=alpha, loss_db=-10 * math.log10(t), eta=eta, nu_el=nu, xi=0.0, seed=100 + k)
        rep = pr.run_campaign(params, n_shots, quantum=False)
        p = float(kr.classical_ber(alpha, t, eta, nu))
        z = (rep.ber_empirical - p) / math.sqrt(p * (1 - p) / n_shots)
        p_dd = float(kr.direct_detection_ber(alpha, t, eta, nu))
        z_dd = (rep.ber_empirical - p_dd) / math.sqrt(p_dd * (1 - p_dd) / n_shots)
        ok &= abs(z) < 3
        lines.append(f"arg={arg:.1f}: mc={rep.ber_empirical:.4e} eq={p:.4e} z={z:.1f} (direct-detection z={z_dd:.2f})")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    report(2, ok, f"{dt:.1f} s (limit 60 s); " + "; ".join(lines))
    assert ok


def test_criterion_3_qkd_classical_non_interference(report):
    base = dict(alpha=2.0, loss_db=3.0, seed=3)
    a = pr.simulate(pr.ProtocolParams(v_mod=0.0, **base), 10**6)
    b = pr.simulate(pr.ProtocolParams(v_mod=4.0, **base), 10**6)
    same = bool(np.array_equal(a.bit_rx, b.bit_rx))
    differ = int(np.count_nonzero(a.bit_rx != b.bit_rx))
    errors = int(np.count_nonzero(a.bit_rx != a.bit_tx))
    report(3, same, f"10^6 paired shots, {differ} decoded bits differ (bit errors per run: {errors})")
    assert same


def test_criterion_4_covariance_reproduction(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    v = 5.0
    for det in ("het", "hom"):
        for t in (0.5, 0.1):
            params = pr.ProtocolParams(loss_db=-10 * math.log10(t), xi=0.01, v_mod=4.0, detection=det, seed=7)
            rep = pr.run_campaign(params, 10**6)
            xi_ch = (1 - t) / t + 0.01
            zs = (
                rep.eb_v.z(v),
                rep.eb_c.z(math.sqrt(t * (v * v - 1))),
                rep.eb_w.z(t * (v + xi_ch)),
            )
            ok &= all(abs(z) < 5 for z in zs)
            lines.append(f"{det} T={t}: z(V, c, w) = " + ", ".join(f"{z:+.2f}" for z in zs))
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report(4, ok, f"{dt:.1f} s (limit 120 s); " + "; ".join(lines))
    assert ok


def _oracle(v, t, xi, eta, nu_el, det):
    cov = kr.covariance_ab(v, t, (1 - t) / t + xi)
    lab = np.sort(gs.symplectic_eigenvalues(cov))
    nu = 1 + (nu_el / (1 - eta) if det == kr.HOMODYNE else 2 * nu_el / (1 - eta))
    full = gs.direct_sum(cov, gs.tmsv(nu))
    s = gs.beam_splitter(4, 1, 2, eta)
    lc = np.sort(gs.symplectic_eigenvalues(gs.condition_on_mode(s @ full @ s.T, 1, det)))
    return lab, lc[1:]


def test_criterion_5_eigenvalue_oracle(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(1000):
        det = kr.HETERODYNE if k % 2 else kr.HOMODYNE
        v = 1 + 10 ** rng.uniform(-2, 2)
        t = 10 ** rng.uniform(-3, 0)
        xi = rng.uniform(0, 0.2)
        eta = rng.uniform(0.05, 0.95)
        nu = rng.uniform(0, 0.5)
        nb = kr.NoiseBudget(t=t, xi=xi, eta=eta, nu_el=nu, detection=det)
        l1, l2, l3, l4 = kr.symplectic_eigenvalues(v, nb)
        lab, lc = _oracle(v, t, xi, eta, nu, det)
        mine = np.concatenate([np.sort([l1, l2]), np.sort([l3, l4])])
        ref = np.concatenate([lab, lc])
        worst = max(worst, float(np.max(np.abs(mine - ref) / np.maximum(1.0, np.abs(ref)))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 10
    report(5, ok, f"1000 points, max rel. deviation {worst:.2e} (tol 1e-8), {dt:.2f} s (limit 10 s)")
    assert ok


def test_criterion_6_finite_size_thresholds(report):
    t0 = time.perf_counter()
    cut_hom = kr.finite_size_cutoff("hom", 1e10, tol_db=1e-3, **SETTINGS)
    cut_het = kr.finite_size_cutoff("het", 1e10, tol_db=1e-3, **SETTINGS)
    dt = time.perf_counter() - t0
    ok_hom = abs(cut_hom - 16) <= 2
    ok_het = abs(cut_het - 18) <= 2
    ok = ok_hom and ok_het and dt < 300
    report(
        6,
        ok,
        f"N=1e10 cutoff homodyne {cut_hom:.2f} dB (16 +- 2: {'ok' if ok_hom else 'out'}), "
        f"heterodyne {cut_het:.2f} dB (18 +- 2: {'ok' if ok_het else 'out'}), {dt:.1f} s",
    )
    assert ok


def test_criterion_7_ordering(report):
    bad = []
    for det in ("het", "hom"):
        for loss in SWEEP:
            pts = [kr.key_rate_point(loss, det, n, **SETTINGS) for n in BLOCKS]
            r_asym = pts[0].rate_asymptotic
            plob = pts[0].plob
            chain = [0.0] + [p.rate for p in pts] + [r_asym, plob]
            if not all(a <= b + 1e-15 for a, b in zip(chain, chain[1:])):
                bad.append(f"{det}@{loss:g}dB")
    ok = not bad
    report(7, ok, f"{2 * len(SWEEP)} loss points, violations: {', '.join(bad) if bad else 'none'}")
    assert ok


def test_criterion_8_second_order_limit(report):
    t0 = time.perf_counter()
    base = kr.key_rate_point(10, "het", **SETTINGS).rate
    bright = kr.key_rate_point(10, "het", alpha_received=1e3, **SETTINGS).rate
    rel = abs(bright - base) / base
    dim = max(kr.key_rate_point(20, det, alpha_received=a, **SETTINGS).rate for det in ("het", "hom") for a in (10.0, 3.0, 1.0))
    dt = time.perf_counter() - t0
    ok = rel < 5e-3 and dim == 0.0 and dt < 10
    report(8, ok, f"rel. change at 10 dB, alpha'=1e3: {rel:.2e} (< 5e-3); max rate at 20 dB, alpha'<=10: {dim:g}; {dt:.2f} s")
    assert ok


def test_criterion_9_determinism(report, tmp_path):
    commands = {
        "sweep": ["sweep", "--loss-db", "0:30:5", "--simulate", "--shots", "5000"],
        "crosscheck": ["crosscheck", "--loss-db", "0,10", "--shots", "100000"],
        "ber": ["ber", "--loss-db", "3,6", "--alpha", "3", "--shots", "50000"],
        "rate": ["rate", "--loss-db", "10,16"],
        "optics-check": ["optics-check", "--phi", "15", "-30"],
    }
    differing = []
    for name, args in commands.items():
        outs = []
        for k in range(2):
            path = tmp_path / f"{name}_{k}.out"
            cli.main(args + ["--out", str(path)])
            outs.append(path.read_bytes())
        if outs[0] != outs[1] or not outs[0]:
            differing.append(name)
    ok = not differing
    report(9, ok, f"{len(commands)} subcommands re-run, differing outputs: {', '.join(differing) or 'none'}")
    assert ok
