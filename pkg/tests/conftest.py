"""Shared fixtures: field factories and small cached ground-state solves."""

import numpy as np
import pytest
import scipy.fft as sfft

from choquard import make_grid, solve_ground_state, solve_psi1
from choquard.grid import ComplexField
from choquard.potentials import PotentialSpec


def smooth_field(grid, seed, k_sigma_frac=0.15, width=None, cplx=True,
                 normalize=True):
    """Random field with Gaussian spectrum and Gaussian envelope.

    Smooth in both domains: no sharp spectral cutoffs (those ring in
    space) and no hard spatial truncation (that rings in k).
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    arr = rng.standard_normal((n, n, n)).astype(np.complex128)
    if cplx:
        arr += 1j * rng.standard_normal((n, n, n))
    kmax = float(np.abs(grid.k).max())
    filt = np.exp(-grid.k2() / (2 * (k_sigma_frac * kmax) ** 2))
    arr = sfft.ifftn(sfft.fftn(arr) * filt)
    w = width if width is not None else grid.half_width / 6.0
    arr *= np.exp(-grid.r2() / (2 * w**2))
    if normalize:
        arr /= np.abs(arr).max()
    if not cplx:
        arr = arr.real.astype(np.complex128)
    return ComplexField(grid, arr)


def modulated_gaussian(grid, width_sq=4.0, amp_perturb=0.0, seed=0):
    """A wide Gaussian with an optional smooth random modulation."""
    base = np.exp(-grid.r2() / width_sq).astype(np.complex128)
    if amp_perturb:
        pert = smooth_field(grid, seed, k_sigma_frac=0.08,
                            width=grid.half_width / 7.0, cplx=False)
        base = base * (1.0 + amp_perturb * pert.data.real)
    return ComplexField(grid, base)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 12.0)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 6.0)


@pytest.fixture(scope="session")
def psi1_small(grid32):
    """Limit-problem ground state, mu=1 p=2.5, 32^3."""
    res = solve_psi1(1.0, 2.5, grid32, tol=1e-9, max_iter=3000)
    assert res.converged
    return res


@pytest.fixture(scope="session")
def psi1_small_p21(grid32):
    """Limit-problem ground state, mu=1 p=2.1, 32^3."""
    res = solve_psi1(1.0, 2.1, grid32, tol=1e-9, max_iter=3000)
    assert res.converged
    return res


@pytest.fixture(scope="session")
def harmonic_gs_16():
    """Harmonic-trap ground state on the coarse low-drift grid, 16^3."""
    grid = make_grid(16, 8.0)
    res = solve_ground_state(
        PotentialSpec.harmonic(1.0), 1.0, 1.0, 2.5, grid,
        tol=1e-10, max_iter=3000,
    )
    assert res.converged
    return res


@pytest.fixture(scope="session")
def harmonic_gs_small():
    """Harmonic-trap ground state, omega=1 mu=1 p=2.5, 32^3."""
    grid = make_grid(32, 8.0)
    res = solve_ground_state(
        PotentialSpec.harmonic(1.0), 1.0, 1.0, 2.5, grid,
        tol=1e-9, max_iter=2500,
    )
    assert res.converged
    return res
