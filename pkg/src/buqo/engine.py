"""Outer feasibility loop and the hypothesis decision.

Alternating projections (or the relaxed forward-backward variant)
between the credible region and the structure-absent set either find a
common point or realize the distance between the sets; the normalized
distance is then compared against the decision threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .credible_region import CredibleRegion, build_region
from .map_solver import MapProblem, compute_lambda, solve_map
from .operators import PixelMask
from .structure_sets import StructureSet, build_background_set, build_localized_set

__all__ = [
    "TestOutcome",
    "BuqoError",
    "run_pocs",
    "run_fb_distance",
    "compute_rho",
    "decide",
    "run_buqo",
]

REJECTED = "rejected"
NOT_REJECTED = "not_rejected"

STOP_ITERATE = "iterate_change"
STOP_DISTANCE = "distance_change"
STOP_MAX_ITERS = "max_iters"


class BuqoError(RuntimeError):
    """Pipeline failure labelled with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class TestOutcome:
    rho_alpha: float
    distance: float
    decision: str
    alpha: float
    eta_threshold: float
    x_region: np.ndarray = field(repr=False)
    x_set: np.ndarray = field(repr=False)
    iterations: int
    stop_reason: str
    delta_series: np.ndarray = field(repr=False)
    narrative: str = ""


def _as_projector(obj, tol: float, max_iters: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(obj, (CredibleRegion, StructureSet)):
        return obj.projector(tol=tol, max_iters=max_iters)
    if hasattr(obj, "projector"):
        return obj.projector(tol=tol, max_iters=max_iters)
    if hasattr(obj, "project"):
        return obj.project
    if callable(obj):
        return obj
    raise TypeError(f"cannot project with object of type {type(obj)!r}")


def _rel_below(numerator: float, denominator: float, tol: float) -> bool:
    # exact-zero sequences count as converged even though tol * 0 = 0
    return numerator < tol * denominator or numerator == 0.0


def run_pocs(region, sset, x0: np.ndarray | None = None, tol: float = 1e-5,
             max_iters: int = 2000, inner_tol: float = 1e-8,
             inner_max_iters: int = 5000):
    """Alternate projections between the region and the structure set.

    Starts from a point of the structure set (the surrogate by default)
    and stops when both relative iterate changes fall below ``tol``, or
    when the relative change of the gap delta_k does, whichever happens
    first. Returns (x_region, x_set, iterations, stop_reason, deltas).
    """
    proj_region = _as_projector(region, inner_tol, inner_max_iters)
    proj_set = _as_projector(sset, inner_tol, inner_max_iters)
    if x0 is None:
        if not hasattr(sset, "surrogate"):
            raise ValueError("x0 required when the set has no surrogate")
        x0 = sset.surrogate
    x = np.asarray(x0, dtype=float).ravel().copy()

    deltas: list[float] = []
    half_prev = None
    stop = STOP_MAX_ITERS
    it = 0
    for it in range(1, max_iters + 1):
        half = proj_region(x)
        x_new = proj_set(half)
        delta = float(np.linalg.norm(half - x_new))
        deltas.append(delta)

        iterate_ok = _rel_below(np.linalg.norm(x_new - x),
                                np.linalg.norm(x_new), tol)
        if half_prev is not None:
            iterate_ok = iterate_ok and _rel_below(
                np.linalg.norm(half - half_prev), np.linalg.norm(half), tol)
        else:
            iterate_ok = False
        delta_ok = len(deltas) >= 2 and _rel_below(
            abs(deltas[-1] - deltas[-2]), deltas[-1], tol)

        half_prev = half
        x = x_new
        if iterate_ok:
            stop = STOP_ITERATE
            break
        if delta_ok:
            stop = STOP_DISTANCE
            break
    return half_prev, x, it, stop, np.asarray(deltas)


def run_fb_distance(region, sset, gamma: float = 0.5, tol: float = 1e-5,
                    max_iters: int = 2000, inner_tol: float = 1e-8,
                    inner_max_iters: int = 5000,
                    x0_region: np.ndarray | None = None,
                    x0_set: np.ndarray | None = None):
    """Forward-backward iteration on the squared distance between the sets.

    Each side moves a fraction ``gamma`` in (0, 1) toward the other and
    is projected back; the pair converges to the minimizing pair of the
    distance problem (alternating projections are the gamma -> 1 limit).
    Same return convention and stopping criteria as :func:`run_pocs`.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie strictly between 0 and 1")
    proj_region = _as_projector(region, inner_tol, inner_max_iters)
    proj_set = _as_projector(sset, inner_tol, inner_max_iters)
    if x0_region is None:
        if not hasattr(region, "x_map"):
            raise ValueError("x0_region required when the region has no anchor")
        x0_region = region.x_map
    if x0_set is None:
        if not hasattr(sset, "surrogate"):
            raise ValueError("x0_set required when the set has no surrogate")
        x0_set = sset.surrogate
    a = np.asarray(x0_region, dtype=float).ravel().copy()
    b = np.asarray(x0_set, dtype=float).ravel().copy()

    deltas: list[float] = []
    stop = STOP_MAX_ITERS
    it = 0
    for it in range(1, max_iters + 1):
        a_new = proj_region((1.0 - gamma) * a + gamma * b)
        b_new = proj_set((1.0 - gamma) * b + gamma * a)
        deltas.append(float(np.linalg.norm(a_new - b_new)))

        iterate_ok = (
            _rel_below(np.linalg.norm(a_new - a), np.linalg.norm(a_new), tol)
            and _rel_below(np.linalg.norm(b_new - b), np.linalg.norm(b_new), tol)
        )
        delta_ok = len(deltas) >= 2 and _rel_below(
            abs(deltas[-1] - deltas[-2]), deltas[-1], tol)

        a, b = a_new, b_new
        if iterate_ok:
            stop = STOP_ITERATE
            break
        if delta_ok:
            stop = STOP_DISTANCE
            break
    return a, b, it, stop, np.asarray(deltas)


def compute_rho(region_pt: np.ndarray, set_pt: np.ndarray,
                x_map: np.ndarray, surrogate: np.ndarray) -> float:
    """Distance between the counter-example pair over the structure energy."""
    x_map = np.asarray(x_map, dtype=float).ravel()
    denom = float(np.linalg.norm(x_map - np.asarray(surrogate).ravel()))
    if denom == 0.0 or denom < 1e-12 * np.linalg.norm(x_map):
        raise ValueError("no structure energy in the MAP estimate: "
                         "the surrogate coincides with it")
    num = float(np.linalg.norm(np.asarray(set_pt).ravel()
                               - np.asarray(region_pt).ravel()))
    return num / denom


def decide(rho: float, eta: float, alpha: float) -> tuple[str, str]:
    """Hypothesis decision and a one-line human-readable narrative."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if rho > eta:
        return REJECTED, (
            f"H0 rejected at significance alpha={alpha:g}; "
            f"confirmed intensity rho_alpha = {100.0 * rho:.2f}%"
        )
    return NOT_REJECTED, (
        f"we fail to reject the null hypothesis at alpha={alpha:g}; "
        f"rho_alpha = {100.0 * rho:.2f}% <= eta = {100.0 * eta:.2f}%"
    )


def _build_structure(problem: MapProblem, x_map: np.ndarray, spec,
                     rows: int, cols: int) -> StructureSet:
    if isinstance(spec, StructureSet):
        return spec
    if isinstance(spec, PixelMask):
        return build_localized_set(x_map, spec)
    # duck-typed structure spec (see buqo.io.StructureSpec)
    kind = getattr(spec, "kind")
    params = dict(getattr(spec, "params", {}) or {})
    if kind == "localized":
        mask = getattr(spec, "mask")
        return build_localized_set(
            x_map, mask,
            kernel_sizes=params.get("kernel_sizes", (3, 7, 11)),
            tau=params.get("tau"),
            theta=params.get("theta"),
        )
    if kind == "background":
        mask = getattr(spec, "mask", None)
        if mask is not None and mask.n_selected == 0:
            mask = None
        return build_background_set(
            x_map, rows, cols,
            threshold_frac=params.get("threshold_frac", 1e-3),
            dilation_radius=int(params.get("dilation_radius", 7)),
            vartheta=params.get("vartheta", 1e-2),
            mask=mask,
        )
    raise ValueError(f"unknown structure kind {kind!r}")


def run_buqo(problem: MapProblem, structure, alpha: float = 0.01,
             mode: str = "pocs", eta: float = 0.03,
             rows: int | None = None, cols: int | None = None,
             map_tol: float = 1e-6, map_max_iters: int = 20000,
             outer_tol: float = 1e-5, outer_max_iters: int = 2000,
             inner_tol: float = 1e-8, inner_max_iters: int = 5000,
             gamma: float = 0.5,
             x_map: np.ndarray | None = None) -> TestOutcome:
    """Full uncertainty-quantification pipeline for one structure.

    Runs the four stages (MAP estimate, credible region, structure set,
    feasibility loop) and returns the decision with the counter-example
    pair. ``structure`` may be a StructureSet, a PixelMask (treated as a
    localized structure) or a parsed structure spec. A precomputed MAP
    estimate can be passed to skip the first stage. Stage failures are
    re-raised as :class:`BuqoError` with the stage label.
    """
    if mode not in ("pocs", "fb"):
        raise BuqoError("engine", f"unknown mode {mode!r}")

    try:
        if x_map is None:
            x_map, diag = solve_map(problem, tol=map_tol, max_iters=map_max_iters)
            if not diag.converged:
                raise ValueError(
                    f"MAP solver did not converge in {diag.iterations} iterations "
                    f"(feasibility gap {diag.feasibility_gap:.3e})"
                )
        lam = compute_lambda(x_map, problem.psi)
    except BuqoError:
        raise
    except Exception as exc:
        raise BuqoError("map", str(exc)) from exc

    try:
        region = build_region(x_map, lam, alpha, problem)
    except Exception as exc:
        raise BuqoError("region", str(exc)) from exc

    try:
        if rows is None or cols is None:
            side = int(round(np.sqrt(problem.n_pixels)))
            if side * side != problem.n_pixels:
                raise ValueError("rows/cols required for non-square grids")
            rows = cols = side
        sset = _build_structure(problem, x_map, structure, rows, cols)
    except Exception as exc:
        raise BuqoError("set", str(exc)) from exc

    try:
        if mode == "pocs":
            x_region, x_set, iters, stop, deltas = run_pocs(
                region, sset, tol=outer_tol, max_iters=outer_max_iters,
                inner_tol=inner_tol, inner_max_iters=inner_max_iters)
        else:
            x_region, x_set, iters, stop, deltas = run_fb_distance(
                region, sset, gamma=gamma, tol=outer_tol,
                max_iters=outer_max_iters, inner_tol=inner_tol,
                inner_max_iters=inner_max_iters)
        rho = compute_rho(x_region, x_set, x_map, sset.surrogate)
        decision, narrative = decide(rho, eta, alpha)
    except BuqoError:
        raise
    except Exception as exc:
        raise BuqoError("engine", str(exc)) from exc

    return TestOutcome(
        rho_alpha=rho,
        distance=float(np.linalg.norm(x_region - x_set)),
        decision=decision,
        alpha=alpha,
        eta_threshold=eta,
        x_region=x_region,
        x_set=x_set,
        iterations=iters,
        stop_reason=stop,
        delta_series=deltas,
        narrative=narrative,
    )
