"""Acceptance criteria, one test per criterion.

Each test prints a ``[PASS]``/``[FAIL]`` line (repeated in the terminal
summary) before asserting.  Reference values come from independent oracles:
the Fourier European pricer, closed-form exponents, and exact flows.
"""
import json
import math
import time

import numpy as np
import pytest

from levyobstacle import (DriftSpec, JumpCoefficient, PricingConfig, ProblemData, SimConfig,
                          calibrate_drift, characteristic_exponent, cli, comparison_probe,
                          constant, dpp_check, holder_fit, price_evolution, price_perpetual,
                          probe_evolution, probe_stationary, put, simulate_batch,
                          simulate_coupled, solve_pide)
from levyobstacle.fourier import european_put_curve
from levyobstacle.jump_sde import coupling_violations, moment_probe
from levyobstacle.pide_solver import Discretization

R = 0.05
ATM = 2  # index of S = 1 in the spot grid


@pytest.fixture(scope="module")
def oracle_put(vg, vg_b, spots):
    return european_put_curve(vg, vg_b, R, 1.0, spots, 1.0)


@pytest.fixture(scope="module")
def american_problem():
    return ProblemData(c=R, f=0.0, phi=put(1.0), g=put(1.0), T=1.0)


@pytest.fixture(scope="module")
def european_problem():
    # obstacle far below the payoff: exercise never pays
    return ProblemData(c=R, f=0.0, phi=constant(-10.0), g=put(1.0), T=1.0)


@pytest.fixture(scope="module")
def mc_sim():
    return SimConfig(dt=0.01, n_paths=100_000, seed=11, record_jumps=False)


@pytest.fixture(scope="module")
def mc_european(vg, vg_b, spots, european_problem, mc_sim):
    t0 = time.time()
    s = price_evolution(vg, vg_b, None, european_problem,
                        PricingConfig(mc_sim, tuple(spots), american=False))
    return s, time.time() - t0


@pytest.fixture(scope="module")
def mc_american(vg, vg_b, spots, american_problem, mc_sim):
    t0 = time.time()
    s = price_evolution(vg, vg_b, None, american_problem, PricingConfig(mc_sim, tuple(spots)))
    return s, time.time() - t0


@pytest.fixture(scope="module")
def pide_fine():
    return Discretization(dx=2.5e-4, dt=1e-3, store_every=10)


@pytest.fixture(scope="module")
def pide_american(vg, vg_b, american_problem, pide_fine):
    t0 = time.time()
    s = solve_pide(vg, vg_b, american_problem, pide_fine)
    return s, time.time() - t0


@pytest.fixture(scope="module")
def pide_european(vg, vg_b, european_problem, pide_fine):
    from dataclasses import replace
    t0 = time.time()
    s = solve_pide(vg, vg_b, european_problem, replace(pide_fine, boundary_ext="discounted_g"))
    return s, time.time() - t0


def test_criterion_01_martingale_calibration(vg, cgmy_model, criterion):
    t0 = time.time()
    details, ok = [], True
    for name, model in (("VG", vg), ("CGMY", cgmy_model)):
        b = calibrate_drift(model, R)
        resid = abs(characteristic_exponent(model, b, -1j) - R)
        batch = simulate_batch(model, b, None, 0.0,
                               SimConfig(dt=0.01, n_paths=100_000, seed=2024, record_jumps=False))
        z = np.exp(-R + batch.states[:, -1])
        se = z.std(ddof=1) / math.sqrt(z.size)
        dev = abs(z.mean() - 1.0) / se
        ok &= resid < 1e-10 and dev < 3.0
        details.append(f"{name}: |psi(-i)-r|={resid:.1e}, MC mean dev={dev:.2f} SE")
    elapsed = time.time() - t0
    ok &= elapsed < 30
    criterion(1, "martingale calibration", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def test_criterion_02_european_oracle(mc_european, pide_european, oracle_put, criterion):
    mc, t_mc = mc_european
    pde, t_pde = pide_european
    v_mc, se = mc.values[0], mc.std_err[0]
    v_pde = pde.to_surface().evaluate(0.0, mc.grid_x)
    tol_mc = np.maximum(3 * se, 0.005 * oracle_put)
    tol_pde = 0.005 * oracle_put
    err_mc = np.abs(v_mc - oracle_put)
    err_pde = np.abs(v_pde - oracle_put)
    ok = bool(np.all(err_mc <= tol_mc) and np.all(err_pde <= tol_pde) and t_mc + t_pde < 120)
    criterion(2, "European oracle agreement", ok,
              f"MC max err/tol={np.max(err_mc / tol_mc):.2f}, PIDE max rel err="
              f"{np.max(err_pde / oracle_put):.2e}; {t_mc + t_pde:.1f}s")
    assert ok


def test_criterion_03_mc_pide_cross_validation(mc_american, pide_american, criterion):
    mc, t_mc = mc_american
    pde, t_pde = pide_american
    v_mc, se = mc.values[0], mc.std_err[0]
    v_pde = pde.to_surface().evaluate(0.0, mc.grid_x)
    diff = np.abs(v_mc - v_pde)
    tol = 3 * se
    tol[ATM] = 0.01 * v_pde[ATM]
    ok = bool(np.all(diff <= tol + 1e-12) and t_mc + t_pde < 300)
    rows = ", ".join(f"{d:.1e}/{t:.1e}" for d, t in zip(diff, tol))
    criterion(3, "MC/PIDE American agreement", ok,
              f"|diff|/tol per spot: {rows}; {t_mc + t_pde:.1f}s")
    assert ok


def test_criterion_04_dpp_residual(vg, vg_b, american_problem, criterion):
    t0 = time.time()
    coarse = solve_pide(vg, vg_b, american_problem, Discretization(dx=1e-3, dt=2e-3, store_every=5))
    fine = solve_pide(vg, vg_b, american_problem, Discretization(dx=5e-4, dt=1e-3, store_every=10))
    bias = float(np.max(np.abs(coarse.values[0] - fine.values[0][::2])))
    surf = fine.to_surface(bias_budget=bias)
    xs = np.log([0.95, 1.0, 1.1])  # continuation region at t = 0
    assert not np.any(surf.exercise[0][np.searchsorted(surf.grid_x, xs)])
    cfg = PricingConfig(SimConfig(dt=0.01, n_paths=20_000, seed=5, record_jumps=False), tuple(xs))
    reps = [dpp_check(vg, vg_b, None, american_problem, x, 0.1, cfg, surf) for x in xs]
    triv_p = ProblemData(c=R, f=0.0, phi=constant(0.3), g=constant(0.3), T=1.0)
    triv_surf = solve_pide(vg, vg_b, triv_p, Discretization(dx=1e-3, dt=2e-3, store_every=5))
    triv = dpp_check(vg, vg_b, None, triv_p, 0.0, 0.1, cfg, triv_surf.to_surface())
    elapsed = time.time() - t0
    ok = all(r.passed for r in reps) and triv.residual <= 1e-12 + triv.combined_se \
        and elapsed < 180
    detail = ", ".join(f"{r.residual:.1e}<={3 * r.combined_se + r.bias_budget:.1e}" for r in reps)
    criterion(4, "DPP residual", ok, f"{detail}; constant obstacle residual={triv.residual:.1e}; "
              f"{elapsed:.1f}s")
    assert ok


def test_criterion_05_gronwall_coupling(vg, vg_b, criterion):
    kappa, x1, x2 = 1.0, 0.0, 0.5
    cfg = SimConfig(dt=0.01, n_paths=10_000, seed=3)
    a, b = simulate_coupled(vg, DriftSpec.affine(0.0, kappa), None, [x1, x2], cfg)
    viol = coupling_violations(a, b, kappa)
    exact = abs(x1 - x2) * np.exp(-kappa * a.grid)
    lin_err = float(np.max(np.abs(np.abs(a.states - b.states) - exact[None, :])))
    c, d = simulate_coupled(vg, DriftSpec.tanh(vg_b, 2.0, 0.1, 0.3), None, [x1, x2], cfg)
    viol_nl = coupling_violations(c, d, 2.0)
    ok = viol == 0 and viol_nl == 0 and lin_err <= 1e-12
    criterion(5, "Gronwall coupling bound", ok,
              f"violations linear={viol}, tanh={viol_nl}; linear-drift max err={lin_err:.1e}")
    assert ok


def test_criterion_06_moment_envelopes(vg, vg_b, criterion):
    cfg = SimConfig(n_paths=10_000, seed=3, horizon=1.0, dt=1 / 1024, record_jumps=False)
    pair = simulate_coupled(vg, DriftSpec.tanh(vg_b, 0.5, 0.0, 0.5),
                            JumpCoefficient.tanh(1.0, 0.3), [0.0, 0.1], cfg)
    sp = moment_probe(pair, "spatial")
    one = simulate_batch(vg, vg_b, None, 0.0, SimConfig(n_paths=10_000, seed=4, horizon=1.0,
                                                         dt=1 / 1024, record_jumps=False))
    tp = moment_probe(one, "temporal")
    bounded = bool(np.all(tp.estimates / np.maximum(tp.lags, tp.lags ** 2)
                          <= tp.envelope_constant * (1 + 1e-12)))
    ok = sp.r2 >= 0.95 and tp.r2 >= 0.95 and math.isfinite(sp.constant) and \
        math.isfinite(tp.constant) and bounded
    criterion(6, "moment envelopes", ok,
              f"spatial C={sp.constant:.3f} growth={sp.growth:.3f} R2={sp.r2:.4f}; "
              f"temporal C={tp.constant:.3f} power={tp.growth:.3f} R2={tp.r2:.4f}")
    assert ok


def test_criterion_07_regularity_probes(vg, vg_b, american_problem, criterion):
    t0 = time.time()
    d = 2.0 ** -np.arange(24)
    recovered = {p: holder_fit(d, d ** p).exponent for p in (0.25, 0.5, 0.75, 1.0)}
    ok_pow = all(abs(v - p) <= 0.05 for p, v in recovered.items())
    evo = solve_pide(vg, vg_b, american_problem, Discretization(dx=5e-4, dt=2e-3, store_every=1))
    rep = probe_evolution(evo.to_surface())
    steep = DriftSpec.tanh(0.0, 0.2, 0.0, 0.5)  # β = 0.2 = 4 c0
    stat_p = ProblemData(c=R, f=0.0, phi=put(1.0), g=None, T=40.0)
    stat = solve_pide(vg, steep, stat_p, Discretization(dx=1e-3, dt=1e-2, store_every=10 ** 6))
    surf = stat.to_surface()
    surf.meta["stationary"] = True
    srep = probe_stationary(surf, stat_p, steep)
    ok = ok_pow and rep.alpha_hat_x >= 0.9 and rep.alpha_hat_t >= 0.4 and \
        srep.alpha_theory == pytest.approx(0.25) and srep.alpha_hat_x >= 0.15 and srep.passed
    criterion(7, "regularity probes", ok,
              "power laws " + ", ".join(f"{p}->{v:.3f}" for p, v in recovered.items())
              + f"; put alpha_x={rep.alpha_hat_x:.3f}, alpha_t={rep.alpha_hat_t:.3f}; "
              f"steep drift alpha={srep.alpha_hat_x:.3f} (theory {srep.alpha_theory}); "
              f"{time.time() - t0:.1f}s")
    assert ok


def test_criterion_08_perpetual_truncation(vg, vg_b, spots, criterion):
    t0 = time.time()
    p = ProblemData(c=R, f=0.0, phi=put(1.0), g=None, T=40.0)
    xs = spots[[0, 2, 4]]
    cfg = PricingConfig(SimConfig(dt=0.1, n_paths=10_000, seed=8, horizon=40.0,
                                  record_jumps=False), tuple(xs))
    s = price_perpetual(vg, vg_b, None, p, cfg)
    budget = 2 * (p.sup_phi() + p.sup_f() / p.c0) * math.exp(-p.c0 * p.T)
    gap = np.abs(np.array(s.meta["short_values"]) - s.values[0])
    ok = bool(np.all(gap <= budget + 3 * np.sqrt(2) * s.std_err[0] + 1e-12)) and \
        s.meta["truncation_budget"] == pytest.approx(budget)
    criterion(8, "perpetual truncation certificate", ok,
              f"max |v_T - v_2T|={gap.max():.2e}, budget={budget:.3f}; {time.time() - t0:.1f}s")
    assert ok


def test_criterion_09_ordering_suite(vg, vg_b, mc_american, mc_european, pide_american,
                                     pide_european, american_problem, criterion):
    mc_a, _ = mc_american
    mc_e, _ = mc_european
    pa, _ = pide_american
    pe, _ = pide_european
    phi_mc = american_problem.phi(0.0, mc_a.grid_x)
    above = bool(np.all(mc_a.values >= phi_mc[None, :])) and \
        bool(np.all(pa.values >= american_problem.phi(0.0, pa.grid_x)[None, :]))
    comb = np.hypot(mc_a.std_err[0], mc_e.std_err[0])
    am_eu = bool(np.all(mc_a.values[0] >= mc_e.values[0] - 3 * comb)) and \
        bool(np.all(pa.values[0] >= pe.values[0] - pa.disc.solver_tol))
    rng = np.random.default_rng(2024)
    disc = Discretization(x_lo=-2, x_hi=2, dx=2e-3, dt=5e-3, store_every=20)
    base = ProblemData(c=R, f=0.0, phi=put(1.0), g=put(1.0), T=1.0)
    sa = solve_pide(vg, vg_b, base, disc)
    violations, worst = 0, 0.0
    for _ in range(20):
        K = 1.0 + rng.uniform(0, 0.1)
        pb = ProblemData(c=R - rng.uniform(0, 0.04), f=rng.uniform(0, 0.01), phi=put(K),
                         g=put(K), T=1.0)
        rep = comparison_probe(sa, solve_pide(vg, vg_b, pb, disc), tol=1e-10)
        violations += int(not rep.holds)
        worst = max(worst, rep.worst_violation)
    ok = above and am_eu and violations == 0
    criterion(9, "ordering suite", ok, f"v>=phi: {above}; American>=European: {am_eu}; "
              f"comparison violations={violations}/20 (worst {worst:.1e})")
    assert ok


def test_criterion_10_reproducibility(tmp_path, criterion):
    fast = ["--set", "sim.n_paths=3000", "--set", "sim.dt=0.02",
            "--set", "output.formats=[\"csv\",\"bin\"]"]
    files = {"simulate": ["paths.csv", "paths.bin"], "price-evolution": ["surface.csv", "rule.csv"]}
    same = True
    for sub, names in files.items():
        first = tmp_path / f"{sub}-1"
        assert cli.main([sub, *fast, "--set", "sim.workers=1", "--out", str(first)]) == 0
        rerun = tmp_path / f"{sub}-rerun"
        assert cli.main([sub, "--config", str(first / "manifest.txt"), "--out", str(rerun)]) == 0
        wide = tmp_path / f"{sub}-4"
        assert cli.main([sub, "--config", str(first / "manifest.txt"), "--set", "sim.workers=4",
                         "--out", str(wide)]) == 0
        for name in names:
            ref = (first / name).read_bytes()
            same &= ref == (rerun / name).read_bytes() == (wide / name).read_bytes()
        res = [json.loads((d / "manifest.txt").read_text())["results"] for d in (first, rerun, wide)]
        same &= res[0] == res[1] == res[2]
    criterion(10, "reproducibility", same,
              "manifest re-runs with 1 and 4 workers give byte-identical artifacts")
    assert same
