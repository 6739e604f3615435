"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Everything runs at desk scale (64^3 or smaller).  Heavy states are shared
through module-scoped fixtures; every tolerance is pinned here, not
computed.
"""

import itertools
import math
import time

import numpy as np
import pytest
import scipy.fft as sfft
from scipy.special import erf

from choquard import make_grid, riesz_convolve
from choquard.grid import ComplexField, gradient, l2_inner, x_dot_gradient
from choquard.potentials import PotentialSpec, build_potential
from choquard.functionals import (
    d2E_lambda,
    d2E_lambda_reduced,
    dilate,
    functional_report,
    x_norm_sq,
)
from choquard.ground_state import solve_ground_state, solve_psi1
from choquard.spectrum import (
    block_identity_check,
    constrained_coercivity,
    lowest_eigenpairs,
    scaling_mode_check,
)
from choquard.dynamics import evolve, virial_check
from choquard.stability import (
    instability_experiment,
    rescaled_limit_study,
    stability_experiment,
)
from conftest import smooth_field


def report(num, name, passed, detail):
    tag = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {num:02d} {name}: {tag} ({detail})")


# ---------------------------------------------------------------------------
# Shared heavy states
# ---------------------------------------------------------------------------

PSI_GRID = (64, 16.0)          # limit-problem grid: decay vs bandwidth balance
TRAP_GRID = (64, 8.0)          # harmonic-trap states at omega = 1
INST_GRID = (64, 6.0)          # omega = 10 collapse runs
STAB_GRID = (32, 7.0)          # omega = 10 stability ensemble


@pytest.fixture(scope="module")
def psi1_21():
    res = solve_psi1(1.0, 2.1, make_grid(*PSI_GRID), tol=2e-10, max_iter=4000)
    assert res.converged
    return res


@pytest.fixture(scope="module")
def trap_state():
    res = solve_ground_state(PotentialSpec.harmonic(1.0), 1.0, 1.0, 2.5,
                             make_grid(*TRAP_GRID), tol=5e-9, max_iter=4000)
    assert res.converged
    return res


@pytest.fixture(scope="module")
def collapse_state():
    res = solve_ground_state(PotentialSpec.harmonic(1.0), 10.0, 1.0, 3.0,
                             make_grid(*INST_GRID), tol=1e-8, max_iter=4000)
    assert res.converged
    return res


@pytest.fixture(scope="module")
def stability_state():
    res = solve_ground_state(PotentialSpec.harmonic(1.0), 10.0, 1.0, 2.1,
                             make_grid(*STAB_GRID), tol=1e-8, max_iter=4000)
    assert res.converged
    return res


# ---------------------------------------------------------------------------
# 1. Convolution oracle
# ---------------------------------------------------------------------------


def test_criterion_01_convolution_oracle():
    t0 = time.perf_counter()
    g = make_grid(16, 6.0)
    rng = np.random.default_rng(5)
    f = rng.standard_normal((16, 16, 16))
    shifts = (np.arange(16)[:, None] - np.arange(32)[None, :]) % 32
    worst = 0.0
    for mu in (0.5, 1.0, 1.5, 2.5):
        conv = riesz_convolve(f, mu, g)
        kernel = sfft.irfftn(g.riesz_multiplier(mu) + 0.0, s=(32, 32, 32))
        shifts_n = (np.arange(16)[:, None] - np.arange(16)[None, :]) % 32
        big = kernel[
            shifts_n[:, None, None, :, None, None],
            shifts_n[None, :, None, None, :, None],
            shifts_n[None, None, :, None, None, :],
        ]
        direct = np.einsum("ijkabc,abc->ijk", big, f)
        worst = max(worst, float(np.abs(conv - direct).max()
                                 / np.abs(direct).max()))
    g64 = make_grid(64, 8.0)
    r = np.sqrt(g64.r2())
    conv = riesz_convolve(np.exp(-g64.r2()), 1.0, g64)
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = np.where(r > 1e-12, math.pi**1.5 * erf(r) / np.where(r > 0, r, 1.0),
                         2 * math.pi)
    mask = r <= g64.half_width
    gauss_err = float((np.abs(conv - exact) / np.abs(exact))[mask].max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and gauss_err < 1e-6 and elapsed < 30.0
    report(1, "convolution-oracle", ok,
           f"double-sum {worst:.2e} < 1e-10, gaussian {gauss_err:.2e} < 1e-6, "
           f"{elapsed:.0f}s < 30s")
    assert worst < 1e-10
    assert gauss_err < 1e-6
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 2. Ground-state identities
# ---------------------------------------------------------------------------


def test_criterion_02_ground_state_identities(trap_state):
    t0 = time.perf_counter()
    r = trap_state.report
    resid = trap_state.residual
    i_rel = abs(r.I_omega) / r.x_norm_sq
    p_rel = abs(r.P) / r.grad_sq
    elapsed = time.perf_counter() - t0  # fixture time not counted; solve is fast
    ok = resid < 1e-8 and i_rel < 1e-8 and p_rel < 1e-6
    report(2, "ground-state-identities", ok,
           f"residual {resid:.2e} < 1e-8, |I|/X {i_rel:.2e} < 1e-8, "
           f"|P|/grad {p_rel:.2e} < 1e-6, iters {trap_state.iterations}")
    assert resid < 1e-8
    assert i_rel < 1e-8
    assert p_rel < 1e-6


# ---------------------------------------------------------------------------
# 3. Virial identity on the dilated trajectory
# ---------------------------------------------------------------------------


def test_criterion_03_virial_identity(collapse_state):
    t0 = time.perf_counter()
    u0 = dilate(collapse_state.phi, 1.2)
    trace = evolve(u0, collapse_state.potential, 1.0, 3.0, 5e-4, 0.25,
                   observer_stride=1)
    out = virial_check(trace)
    elapsed = time.perf_counter() - t0
    ok = out["rel_mismatch"] < 1e-2 and elapsed < 180.0
    report(3, "virial-identity", ok,
           f"rel mismatch {out['rel_mismatch']:.2e} < 1e-2 over "
           f"{out['samples']} samples, {elapsed:.0f}s < 180s")
    assert trace.exit.kind == "completed"
    assert out["rel_mismatch"] < 1e-2
    assert elapsed < 180.0


# ---------------------------------------------------------------------------
# 4. Conservation
# ---------------------------------------------------------------------------


def test_criterion_04_conservation():
    grid = make_grid(*TRAP_GRID)
    pot = build_potential(PotentialSpec.harmonic(1.0), grid)
    u0 = ComplexField(
        grid,
        np.exp(-grid.r2() / 2.0) * (1.0 + 0.1j)
        * (1.0 + 0.05 * np.exp(-((np.sqrt(grid.r2()) - 1.5) ** 2))),
    )
    trace = evolve(u0, pot, 1.0, 2.5, 1e-3, 1.0, observer_stride=50)
    q_drift = float(np.abs(trace.Q_t - trace.Q_t[0]).max() / trace.Q_t[0])
    e_drift = float(np.abs(trace.E_t - trace.E_t[0]).max() / abs(trace.E_t[0]))
    ok = q_drift < 1e-10 and e_drift < 1e-6
    report(4, "conservation", ok,
           f"mass drift {q_drift:.2e} < 1e-10, energy drift {e_drift:.2e} < 1e-6")
    assert trace.exit.kind == "completed"
    assert q_drift < 1e-10
    assert e_drift < 1e-6


# ---------------------------------------------------------------------------
# 5. Dilation-Hessian consistency and sign gate
# ---------------------------------------------------------------------------


def test_criterion_05_dilation_hessian():
    grid = make_grid(*TRAP_GRID)
    pot = build_potential(PotentialSpec.harmonic(1.0), grid)
    worst = 0.0
    for seed in (1, 2, 3, 4, 5):
        base = np.exp(-grid.r2() / (2 * 0.8**2))
        s1 = smooth_field(grid, 10 + seed, k_sigma_frac=0.1, width=1.0,
                          cplx=False).data.real
        s2 = smooth_field(grid, 20 + seed, k_sigma_frac=0.1, width=1.0,
                          cplx=False).data.real
        v = ComplexField(grid, base * (1 + 0.3 * s1 + 0.3j * s2))
        analytic = d2E_lambda(v, pot, 1.0, 2.5)

        def energy(lam):
            return functional_report(dilate(v, lam), pot, 0.0, 1.0, 2.5).E

        e0 = energy(1.0)
        fd = {}
        for eps in (1e-2, 5e-3):
            fd[eps] = (energy(1 + eps) - 2 * e0 + energy(1 - eps)) / eps**2
        rich = (4 * fd[5e-3] - fd[1e-2]) / 3
        worst = max(worst, abs(analytic - rich) / abs(rich))

    # sign gate through the rescaled problem at omega = 100 (both closed
    # forms are evaluated on states where the virial functional vanishes,
    # so the reduced form carries the sign of the original quantity)
    psi_grid = make_grid(*PSI_GRID)
    spec = PotentialSpec.harmonic(1.0)
    gates = {}
    for p_exp in (3.0, 2.1):
        tilde = solve_ground_state(spec.rescaled(100.0), 1.0, 1.0, p_exp,
                                   psi_grid, tol=1e-9, max_iter=4000)
        assert tilde.converged
        gates[p_exp] = d2E_lambda_reduced(tilde.phi, tilde.potential, 1.0, p_exp)
    ok = worst < 1e-5 and gates[3.0] < 0 and gates[2.1] > 0
    report(5, "dilation-hessian", ok,
           f"fd mismatch {worst:.2e} < 1e-5, gate(p=3) {gates[3.0]:.3g} < 0, "
           f"gate(p=2.1) {gates[2.1]:.3g} > 0")
    assert worst < 1e-5
    assert gates[3.0] < 0
    assert gates[2.1] > 0


# ---------------------------------------------------------------------------
# 6. Rescaled-limit trends
# ---------------------------------------------------------------------------


def test_criterion_06_limit_trends():
    grid = make_grid(*PSI_GRID)
    study = rescaled_limit_study(PotentialSpec.harmonic(1.0), 1.0, 2.2,
                                 [10.0, 100.0, 1000.0], grid,
                                 tol=1e-9, max_iter=4000)
    rows = study["rows"]
    assert all(r["converged"] for r in rows)
    pots = [r["rescaled_potential_energy"] for r in rows]
    fdiff = [abs(r["hartree"] - study["psi1"]["hartree"]) for r in rows]
    hdist = [r["h1_dist_to_limit"] for r in rows]
    decade_ok = pots[0] / pots[1] >= 10.0 and pots[1] / pots[2] >= 10.0
    f_ok = fdiff[0] > fdiff[1] > fdiff[2]
    h_ok = hdist[0] > hdist[1] > hdist[2]
    ok = decade_ok and f_ok and h_ok
    report(6, "limit-trends", ok,
           f"potential column {pots[0]:.3g}/{pots[1]:.3g}/{pots[2]:.3g}, "
           f"hartree gaps {fdiff[0]:.3g}/{fdiff[1]:.3g}/{fdiff[2]:.3g}, "
           f"H1 dists {hdist[0]:.3g}/{hdist[1]:.3g}/{hdist[2]:.3g}")
    assert decade_ok
    assert f_ok
    assert h_ok


# ---------------------------------------------------------------------------
# 7. Spectral structure at the limit profile
# ---------------------------------------------------------------------------


def test_criterion_07_spectral_structure(psi1_21):
    grid = psi1_21.phi.grid
    # first block: exactly one negative direction, a 3-dimensional
    # near-kernel aligned with the translation modes
    rep1 = lowest_eigenpairs("L1", psi1_21.phi, None, 1.0, 1.0, 2.1, k=6,
                             seed=2, maxiter=400)
    lam1 = rep1.eigenvalues[0]
    near_kernel = [v for lam, v in zip(rep1.eigenvalues, rep1.eigenvectors)
                   if abs(lam) < 1e-4 * abs(lam1)]
    morse_ok = rep1.morse_index == 1 and lam1 < 0
    kernel_ok = len(near_kernel) == 3

    angle = math.nan
    if kernel_ok:
        from scipy.linalg import subspace_angles

        grads = gradient(grid, psi1_21.phi.data.real)
        A = np.column_stack([g.ravel() for g in grads])
        B = np.column_stack([v.data.real.ravel() for v in near_kernel])
        angle = float(subspace_angles(A, B).max())
    angle_ok = kernel_ok and angle < 1e-2

    rep2 = lowest_eigenpairs("L2", psi1_21.phi, None, 1.0, 1.0, 2.1, k=2,
                             seed=3, maxiter=400)
    lam2 = rep2.eigenvalues[0]
    vec = rep2.eigenvectors[0].data.real
    psi = psi1_21.phi.data.real
    corr = abs(np.sum(vec * psi)) / math.sqrt(np.sum(vec**2) * np.sum(psi**2))
    l2_ok = abs(lam2) < 1e-5 and corr > 0.999

    sm = scaling_mode_check(psi1_21, 2.1)
    mode_ok = (sm["closed_form_rel_err"] < 1e-3
               and sm["mode_residual_rel"] < 1e-4)
    ok = morse_ok and kernel_ok and angle_ok and l2_ok and mode_ok
    report(7, "spectral-structure", ok,
           f"morse {rep1.morse_index} == 1, kernel {len(near_kernel)} == 3, "
           f"angle {angle:.2e} < 1e-2, lam(L2) {lam2:.2e} +- 1e-5, "
           f"corr {corr:.5f} > 0.999, mode quad err "
           f"{sm['closed_form_rel_err']:.2e} < 1e-3, mode residual "
           f"{sm['mode_residual_rel']:.2e} < 1e-4")
    assert morse_ok
    assert kernel_ok
    assert angle_ok
    assert l2_ok
    assert mode_ok


# ---------------------------------------------------------------------------
# 8. Constrained coercivity and the block decomposition
# ---------------------------------------------------------------------------


def test_criterion_08_coercivity(psi1_21, trap_state):
    rep1 = constrained_coercivity("L1", psi1_21.phi, None, 1.0, 1.0, 2.1,
                                  [psi1_21.phi], radial_sector=True, seed=5)
    rep2 = constrained_coercivity("L2", psi1_21.phi, None, 1.0, 1.0, 2.1,
                                  [psi1_21.phi], seed=6)
    c1, c2 = rep1.eigenvalues[0], rep2.eigenvalues[0]

    v = smooth_field(trap_state.phi.grid, 31, width=1.2)
    block = block_identity_check(trap_state, trap_state.potential, 1.0, 1.0,
                                 2.5, v)
    ok = c1 > 0 and c2 > 0 and block["rel_err"] < 1e-5
    report(8, "coercivity", ok,
           f"L1 radial/constrained {c1:.4g} > 0, L2 constrained {c2:.4g} > 0, "
           f"block identity {block['rel_err']:.2e} < 1e-5")
    assert c1 > 0
    assert c2 > 0
    assert block["rel_err"] < 1e-5


# ---------------------------------------------------------------------------
# 9. Instability scenario and contrast
# ---------------------------------------------------------------------------


def test_criterion_09_instability(collapse_state, stability_state):
    verdict = instability_experiment(collapse_state, 1.2, 1e-3, 10.0,
                                     1.0, 3.0, observer_stride=5)
    by_name = {c.name: c for c in verdict.criteria}
    grow_ok = by_name["gradient_growth"].passed
    p_ok = by_name["virial_stays_negative"].passed
    g_ok = by_name["moment_concave_decreasing_after_vertex"].passed
    before_ok = verdict.extra["exit"]["time"] < 10.0

    contrast = instability_experiment(stability_state, 1.2, 2e-3, 10.0,
                                      1.0, 2.1, observer_stride=10)
    c_by_name = {c.name: c for c in contrast.criteria}
    no_blow = (contrast.extra["exit"]["kind"] == "completed"
               and not c_by_name["gradient_growth"].passed)
    ok = verdict.passed and grow_ok and p_ok and g_ok and before_ok and no_blow
    report(9, "instability-scenario", ok,
           f"P<0 {p_ok}, moment concave-decreasing {g_ok}, growth "
           f"{verdict.extra['grad_growth_factor']:.1f}x at "
           f"t={verdict.extra['exit']['time']:.2f} < 10; contrast growth "
           f"{contrast.extra['grad_growth_factor']:.2f}x (no blow-up {no_blow})")
    assert verdict.passed
    assert before_ok
    assert no_blow


# ---------------------------------------------------------------------------
# 10. Stability scenario
# ---------------------------------------------------------------------------


def test_criterion_10_stability(stability_state):
    verdict = stability_experiment(stability_state, epsilon=1e-2,
                                   n_perturbations=10, dt=5e-3, t_final=20.0,
                                   mu=1.0, p=2.1, seed0=0)
    sups = verdict.extra["sup_dists"]
    C = verdict.extra["fitted_C"]
    r2 = verdict.extra["r_squared"]
    ok = verdict.passed and max(sups) < 5e-2 and C > 0 and r2 > 0.9
    report(10, "stability-scenario", ok,
           f"sup dist {max(sups):.3g} < 5e-2 over 10 seeds, C {C:.3g} > 0, "
           f"R^2 {r2:.3f} > 0.9")
    assert verdict.passed
    assert max(sups) < 5e-2
    assert C > 0
    assert r2 > 0.9
