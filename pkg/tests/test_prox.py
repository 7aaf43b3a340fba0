import numpy as np
import pytest

from buqo.prox import (
    IntervalBox,
    L1Levelset,
    L2Ball,
    project_box,
    project_l1_levelset,
    project_l2_ball,
)

from oracles import l1_projection_bisection

NONNEG = IntervalBox(0.0, np.inf)


def all_projections(rng, n):
    """(projection, random feasible point sampler) pairs on R^n."""
    box = IntervalBox(-1.0, 2.0)
    ball = L2Ball(rng.standard_normal(n), 1.5)
    lev = L1Levelset(2.0)

    def feas_box():
        return rng.uniform(-1.0, 2.0, n)

    def feas_ball():
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        return ball.center + ball.radius * rng.uniform(0, 1) ** (1 / n) * d

    def feas_lev():
        w = rng.dirichlet(np.ones(n)) * lev.level * rng.uniform(0, 1)
        return w * rng.choice([-1.0, 1.0], n)

    return [
        (lambda x: project_box(x, box), feas_box),
        (lambda x: project_l2_ball(x, ball), feas_ball),
        (lambda x: project_l1_levelset(x, lev), feas_lev),
    ]


# ---------------------------------------------------------------------------
# box

def test_box_clips_to_nonnegative():
    out = project_box(np.array([-1.0, 2.0]), NONNEG)
    np.testing.assert_array_equal(out, [0.0, 2.0])


def test_box_interior_point_unchanged():
    x = np.array([0.5, 1.0, 0.1])
    np.testing.assert_array_equal(project_box(x, NONNEG), x)


def test_box_symmetric_clip():
    out = project_box(np.array([5.0, -5.0]), IntervalBox(-1.0, 1.0))
    np.testing.assert_array_equal(out, [1.0, -1.0])


def test_box_rejects_crossed_bounds():
    with pytest.raises(ValueError):
        IntervalBox(1.0, -1.0)


# ---------------------------------------------------------------------------
# l2 ball

def test_ball_radial_scaling():
    out = project_l2_ball(np.array([3.0, 4.0]), L2Ball(0.0, 1.0))
    np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-15)


def test_ball_interior_unchanged():
    ball = L2Ball(np.array([1.0, 1.0]), 2.0)
    x = np.array([1.5, 1.2])
    np.testing.assert_array_equal(project_l2_ball(x, ball), x)


def test_ball_complex_modulus_scaling():
    out = project_l2_ball(np.array([3.0 + 4.0j]), L2Ball(0.0, 1.0))
    np.testing.assert_allclose(out, [0.6 + 0.8j], atol=1e-15)


def test_ball_rejects_negative_radius():
    with pytest.raises(ValueError):
        L2Ball(0.0, -1.0)


# ---------------------------------------------------------------------------
# l1 level set

def test_l1_axis_point():
    out = project_l1_levelset(np.array([3.0, 0.0]), L1Levelset(1.0))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_l1_off_axis_point_brute_force():
    # oracle: dense grid search over the l1 ball
    x = np.array([2.0, 1.0])
    grid = np.linspace(-1.0, 1.0, 2001)
    best, best_d = None, np.inf
    for u1 in grid:
        rem = 1.0 - abs(u1)
        for u2 in (rem, -rem, 0.0, min(rem, x[1]), max(-rem, min(rem, x[1]))):
            d = (x[0] - u1) ** 2 + (x[1] - u2) ** 2
            if d < best_d:
                best_d, best = d, (u1, u2)
    out = project_l1_levelset(x, L1Levelset(1.0))
    np.testing.assert_allclose(out, best, atol=2e-3)
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_l1_feasible_point_unchanged():
    x = np.array([0.2, -0.3, 0.1])
    np.testing.assert_array_equal(project_l1_levelset(x, L1Levelset(1.0)), x)


def test_l1_zero_level():
    out = project_l1_levelset(np.array([1.0, -2.0]), L1Levelset(0.0))
    np.testing.assert_array_equal(out, [0.0, 0.0])


def test_l1_matches_bisection_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = rng.integers(1, 40)
        x = rng.standard_normal(n) * rng.uniform(0.2, 5.0)
        beta = rng.uniform(0.0, 4.0)
        got = project_l1_levelset(x, L1Levelset(beta))
        expected = l1_projection_bisection(x, beta)
        np.testing.assert_allclose(got, expected, atol=1e-10)


def test_l1_budget_respected():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.standard_normal(20) * 3.0
        beta = rng.uniform(0.0, 2.0)
        out = project_l1_levelset(x, L1Levelset(beta))
        assert np.abs(out).sum() <= beta + 1e-10 * max(1.0, beta)


# ---------------------------------------------------------------------------
# shared properties

def test_idempotence_all_projections():
    rng = np.random.default_rng(3)
    for proj, _ in all_projections(rng, 8):
        for _ in range(20):
            x = rng.standard_normal(8) * 4.0
            once = proj(x)
            np.testing.assert_allclose(proj(once), once, atol=1e-12)


def test_nonexpansiveness_all_projections():
    rng = np.random.default_rng(4)
    for proj, _ in all_projections(rng, 8):
        for _ in range(20):
            x = rng.standard_normal(8) * 3.0
            z = rng.standard_normal(8) * 3.0
            lhs = np.linalg.norm(proj(x) - proj(z))
            assert lhs <= np.linalg.norm(x - z) + 1e-12


def test_optimality_against_random_feasible_points():
    rng = np.random.default_rng(5)
    for proj, sample in all_projections(rng, 8):
        for _ in range(5):
            x = rng.standard_normal(8) * 4.0
            px = proj(x)
            dist = np.linalg.norm(x - px)
            for _ in range(100):
                u = sample()
                assert dist <= np.linalg.norm(x - u) + 1e-10
