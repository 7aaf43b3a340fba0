"""Shared small problem instances for the solver and acceptance tests."""

import numpy as np

from buqo.credible_region import build_region, compute_epsilon_bound
from buqo.map_solver import MapProblem, compute_lambda, solve_map
from buqo.operators import PixelMask, db8_analysis, masked_dft
from buqo.sim import add_noise, gaussian_random_pattern
from buqo.structure_sets import build_localized_set


def small_map_problem(seed, rows=4, cols=4, ratio=0.8, sigma2=0.0025,
                      levels=1):
    """Tiny Fourier problem with a nonnegative wavelet-sparse-ish truth."""
    rng = np.random.default_rng(seed)
    pattern = gaussian_random_pattern(rows, cols, ratio, seed=seed)
    phi = masked_dft(pattern)
    psi = db8_analysis(rows, cols, levels)
    truth = np.abs(rng.standard_normal(rows * cols)) * 0.5
    y = add_noise(phi.forward(truth), sigma2, seed=seed + 1)
    eps = compute_epsilon_bound(np.sqrt(sigma2), phi.out_dim)
    return MapProblem(phi, psi, y, eps), truth


def small_region(seed, alpha=0.1, **kwargs):
    """Credible region built on a solved small instance."""
    problem, truth = small_map_problem(seed, **kwargs)
    x_map, diag = solve_map(problem, tol=1e-10, max_iters=100000)
    assert diag.converged
    lam = compute_lambda(x_map, problem.psi)
    return build_region(x_map, lam, alpha, problem), problem, truth


def small_localized_set(seed, rows=4, cols=4, bright=2.0):
    """Localized structure set on a tiny image with a 2-pixel structure."""
    rng = np.random.default_rng(seed)
    x_map = np.abs(rng.standard_normal(rows * cols)) * 0.4
    k = (rows // 2 - 1) * cols + (cols // 2 - 1)  # interior even on 4x4
    x_map[k] += bright
    x_map[k + 1] += 0.75 * bright
    mask = PixelMask(rows, cols, [k, k + 1])
    return build_localized_set(x_map, mask, kernel_sizes=[3]), x_map, mask
