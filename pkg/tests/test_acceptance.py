"""One pass/fail line per acceptance criterion, at the stated tolerances.

Lines are printed as the tests run and collected again in the terminal
summary. Criteria that the method cannot meet under the fixed definitions
fail here rather than being loosened.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, crandn
from jrdap.array_beam import ArrayGeometry, beampattern, steering_vector
from jrdap.config import default_config, reduced_config, small_config
from jrdap.covariance import (contract_fixed_u, contract_fixed_v, mc_covariance_oracle, range_clutter_cov,
                              range_target_cov, reduced_clutter_cov, reduced_target_cov)
from jrdap.filters import ampc_map, estimate_prior, jrdap_map, jrdmf, spc_mtd
from jrdap.harness import (averaged_power_maps, build_dictionary, build_setup, detection_report, model_for,
                           run_benchmark, simulate, validation_model)
from jrdap.io import load_dictionary
from jrdap.scene import DataCube, synthesize
from jrdap.waveform import DopplerGrid, PowerPrior, build_phi_stack, build_upsilon, lfm_waveform, shifted_waveform

GOLDEN = Path(__file__).parent / "fixtures" / "golden_dictionary.txt"


def report(num, ok, text):
    line = f"CRITERION {num}: {'PASS' if ok else 'FAIL'} - {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def rel_fro(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_criterion_1_beampattern_constraints():
    cfg = default_config()
    d = build_dictionary(cfg)
    gold = load_dictionary(GOLDEN)
    g = ArrayGeometry(cfg.array.M)
    eq_t = max(abs(beampattern(w, g, [0.0])[0] - 1) for w in d.weights)
    eq_c = max(abs(beampattern(w, g, [-50.0])[0] - lv * np.exp(1j * ph))
               for w, lv, ph in zip(d.weights, d.levels, d.phases))
    dpsl = np.max(np.abs(20 * np.log10(d.achieved_psl) - 20 * np.log10(gold.achieved_psl)))
    ok = len(d) == 4 and eq_t <= 1e-6 and eq_c <= 1e-6 and dpsl <= 0.5
    report(1, ok, f"K={len(d)} max|w^H a(t)-1|={eq_t:.1e} max|w^H a(c)-D e^jphi|={eq_c:.1e} (tol 1e-6); "
                  f"max PSL diff vs golden {dpsl:.2e} dB (tol 0.5 dB)")


def test_criterion_2_lemma_oracles():
    cfg = small_config()
    setup, m = validation_model(cfg, seed=2024)
    rng = np.random.default_rng(7)
    errs_mc, errs_exact = [], []
    for ell in (1, 8, 16):
        errs_mc.append(rel_fro(mc_covariance_oracle("target", m, ell, 20000, seed=100 + ell), m.target(ell)))
    errs_mc.append(rel_fro(mc_covariance_oracle("clutter", m, 8, 20000, seed=200), m.clutter()))
    u = crandn(rng, m.N)
    v = crandn(rng, m.num_pulses)
    Rc = m.clutter()
    for ell in (1, 8, 16):
        Rt = m.target(ell)
        errs_exact.append(rel_fro(reduced_target_cov(m.aggregates(ell), u), contract_fixed_u(Rt, u, m.num_pulses)))
        errs_exact.append(rel_fro(range_target_cov(m.phi_stack(ell), m.grid, v), contract_fixed_v(Rt, v, m.N)))
    errs_exact.append(rel_fro(reduced_clutter_cov(m.coefficients, m.upsilon, u), contract_fixed_u(Rc, u, m.num_pulses)))
    errs_exact.append(rel_fro(range_clutter_cov(m.coefficients, m.upsilon, v), contract_fixed_v(Rc, v, m.N)))
    ok = max(errs_mc) <= 0.05 and max(errs_exact) <= 1e-10
    report(2, ok, f"max MC rel Frobenius {max(errs_mc):.3f} (tol 0.05, 2e4 draws); "
                  f"max projection identity error {max(errs_exact):.1e} (tol 1e-10)")


def test_criterion_3_jrdmf_equals_spc():
    cfg = reduced_config()
    worst = 0.0
    for seed in range(20):
        setup = build_setup(cfg.with_seed(seed))
        cube, _ = simulate(setup)
        a = spc_mtd(cube, setup.s, setup.grid).estimates
        b = jrdmf(cube, setup.s, setup.grid).estimates
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))))
    report(3, worst <= 1e-10, f"20 seeded cubes, max entrywise relative difference {worst:.1e} (tol 1e-10)")


@pytest.fixture(scope="module")
def reduced_run():
    cfg = reduced_config()
    setup = build_setup(cfg)
    cube, real = simulate(setup)
    ref = spc_mtd(cube, setup.s, setup.grid)
    prior = estimate_prior(ref, setup.scene.noise_power)
    model = model_for(setup, prior)
    jm = jrdap_map(cube, model, record_traces=True, reference=ref)
    am = ampc_map(cube, model)
    return cfg, setup, cube, model, jm, am


def test_criterion_4_convergence(reduced_run):
    cfg, setup, cube, model, jm, am = reduced_run
    factors = jm.meta["factors"]
    rises = []
    for (ell, q), f in factors.items():
        c = np.concatenate([[model.prior.rho[ell - 1, q]], f.cost_trace])
        rises.append(np.max(np.diff(c)) / c[0])
    mono = max(rises) <= 1e-10
    it = jm.meta["iterations"]
    share = float(np.mean(it <= 3))
    est_settle = np.mean([np.abs(f.estimate_trace[-1] - f.estimate_trace[min(1, len(f.estimate_trace) - 1)])
                          <= 1e-3 * max(abs(f.estimate_trace[-1]), 1e-300) for f in factors.values()])
    hist = dict(zip(*[a.tolist() for a in np.unique(it, return_counts=True)]))
    report(4, mono and share >= 0.95,
           f"cost nonincreasing in every cell: {mono} (max rise {max(rises):.1e}); "
           f"cells with ||u^i-u^(i-1)||<=eta by iteration 3: {share:.1%} (need >=95%); "
           f"iterations histogram {hist}; estimate within 0.1% of final after 2 iterations in {est_settle:.1%} of cells")


def test_criterion_5_optimality_sandwich(reduced_run):
    cfg, setup, cube, model, jm, am = reduced_run
    N, P = model.N, model.num_pulses
    worst_lo, worst_hi = -np.inf, -np.inf
    for ell in range(1, model.L + 1):
        R = model.full(ell)
        for q in range(model.Q):
            f = jm.meta["factors"][(ell, q)]
            jp = model.cost(ell, q, f.h, R)
            jm_ = model.cost(ell, q, model.jrdmf_vector(q) / (N * P), R)
            ja = am.meta["cost"][ell - 1, q]
            scale = max(abs(jm_), 1e-300)
            worst_lo = max(worst_lo, (ja - jp) / scale)
            worst_hi = max(worst_hi, (jp - jm_) / scale)
    rel = []
    for t in cfg.targets:
        a = am.estimates[t.range_cell - 1, t.doppler_cell]
        b = jm.estimates[t.range_cell - 1, t.doppler_cell]
        rel.append(abs(a - b) / abs(a))
    ok = worst_lo <= 1e-10 and worst_hi <= 1e-10 and max(rel) <= 0.10
    report(5, ok, f"max normalized (J_AMPC - J_JRDAP) {worst_lo:.1e}, max (J_JRDAP - J_JRDMF) {worst_hi:.1e} (tol 1e-10); "
                  f"JRDAP vs AMPC estimate at targets rel diff {', '.join(f'{r:.3f}' for r in rel)} (tol 0.10)")


@pytest.fixture(scope="module")
def scenario_maps():
    cfg = default_config()
    seeds = range(10)
    free = averaged_power_maps(cfg.without_clutter(), ["spc_mtd", "jrdap"], seeds)
    cbm = averaged_power_maps(cfg, ["spc_mtd", "jrdap"], seeds)
    red = reduced_config()
    free_a = averaged_power_maps(red.without_clutter(), ["ampc"], seeds)
    cbm_a = averaged_power_maps(red, ["ampc"], seeds)
    return cfg, free, cbm, red, free_a, cbm_a


def _fmt(dets):
    return " ".join(f"{d.cell}{'V' if d.visible else '-'}{'M' if d.local_max else '-'}{d.excess_db:+.1f}dB" for d in dets)


@pytest.mark.slow
def test_criterion_6a_clutter_free(scenario_maps):
    cfg, free, cbm, red, free_a, cbm_a = scenario_maps
    spc = detection_report(free["spc_mtd"], cfg.targets)
    jr = detection_report(free["jrdap"], cfg.targets)
    amp = detection_report(free_a["ampc"], red.targets)
    weak = [d for d in spc if d.cell == (40, 52)][0]
    spc_ok = not weak.visible
    jr_ok = all(d.local_max for d in jr)
    report("6a", spc_ok and jr_ok,
           f"SPC&MTD -5 dB target masked: {spc_ok} [{_fmt(spc)}]; JRDAP all local maxima: {jr_ok} [{_fmt(jr)}]; "
           f"AMPC (reduced config) [{_fmt(amp)}]  (V=visible, M=5x5 local max, excess over background median)")


@pytest.mark.slow
def test_criterion_6b_clutter_cbm(scenario_maps):
    cfg, free, cbm, red, free_a, cbm_a = scenario_maps
    spc = detection_report(cbm["spc_mtd"], cfg.targets)
    jr = detection_report(cbm["jrdap"], cfg.targets)
    amp = detection_report(cbm_a["ampc"], red.targets)
    spc_ok = all(d.excess_db < 6.0 for d in spc)
    jr_ok = all(d.excess_db >= 6.0 for d in jr if d.snr_db in (10.0, 5.0))
    report("6b", spc_ok and jr_ok,
           f"SPC&MTD no target 6 dB over clutter median: {spc_ok} [{_fmt(spc)}]; "
           f"JRDAP 10 dB and 5 dB targets 6 dB over median: {jr_ok} [{_fmt(jr)}]; AMPC (reduced config) [{_fmt(amp)}]")


def test_criterion_7_benchmark_ordering():
    rep = run_benchmark(reduced_config(), repeats=10)
    cbm, ncbm = rep.ordering_holds("cbm"), rep.ordering_holds("ncbm")
    txt = "; ".join(f"{t}: AMPC {rep.s_per_cell('ampc', t):.2e} s/cell, JRDAP {rep.s_per_cell('jrdap', t):.2e} s/cell, "
                    f"AMPC shared-factorization {rep.s_per_cell('ampc_shared', t):.2e}" for t in ("cbm", "ncbm"))
    report(7, cbm and ncbm, f"JRDAP < AMPC per cell under CBM: {cbm}, NCBM: {ncbm} ({txt})")


def test_criterion_8_property_suites():
    rng = np.random.default_rng(8)
    cases = 100
    fails = {"kronecker": 0, "scale": 0, "hermitian_psd": 0, "shift_support": 0, "determinism": 0}
    for _ in range(cases):
        N, P, L, Q = (int(x) for x in rng.integers([2, 1, 1, 1], [9, 6, 8, 7]))
        cube = DataCube(crandn(rng, P, L + N - 1), N, L)
        ell = int(rng.integers(1, L + 1))
        u, v = crandn(rng, N), crandn(rng, P)
        lhs = np.vdot(np.kron(v.conj(), u), cube.stacked(ell))
        rhs = u.conj() @ cube.matrix(ell) @ v
        fails["kronecker"] += int(abs(lhs - rhs) > 1e-12 * max(abs(rhs), 1.0))

        s = crandn(rng, N)
        prior = PowerPrior(rng.exponential(size=(L, Q)))
        from jrdap.covariance import CovarianceModel
        m = CovarianceModel(s, DopplerGrid(Q), P, prior, crandn(rng, 3, P), float(rng.uniform(0, 1)), 1.0)
        q = int(rng.integers(0, Q))
        gamma = float(rng.uniform(0.1, 10.0)) * (1 if rng.random() < 0.5 else -1)
        R = m.full(ell)
        j1 = m.cost(ell, q, np.kron(v.conj(), u), R)
        j2 = m.cost(ell, q, np.kron((v / gamma).conj(), gamma * u), R)
        fails["scale"] += abs(j1 - j2) > 1e-10 * abs(j1)

        for M in (m.target(ell), m.clutter(), build_upsilon(s, 0.5), R):
            tr = np.trace(M).real
            bad = np.max(np.abs(M - M.conj().T)) > 1e-12 * tr or np.linalg.eigvalsh(M).min() < -1e-10 * tr
            fails["hermitian_psd"] += int(bad)

        n = int(rng.integers(-N - 2, N + 3))
        fails["shift_support"] += np.count_nonzero(shifted_waveform(s, n)) != min(N, max(0, N - abs(n)))

        setup_seed = int(rng.integers(0, 2 ** 31))
        small = small_config()
        st = build_setup(small)
        a, _ = synthesize(st.scene, st.W, st.waveform, st.grid, seed=setup_seed, geometry=st.geometry)
        b, _ = synthesize(st.scene, st.W, st.waveform, st.grid, seed=setup_seed, geometry=st.geometry)
        fails["determinism"] += a.samples.tobytes() != b.samples.tobytes()
    ok = not any(fails.values())
    report(8, ok, f"{cases} randomized cases per property; failures {fails}")
