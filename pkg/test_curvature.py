import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.curvature import (
    GradientAssignment, batch_frames, curvature_summary, elementary_symmetric, gradients_fg,
    graph_frame, lr_divergence_check, lr_f, lr_g, lr_s, newton_polynomial, newton_stack,
    normbound_excess, point_geometry, resolve_gradient_assignment, stack_identities,
)
from models.field_expr import Family, FamilyParams, builtin, parse
from models.jet import Jet2, jet2, observed_order
from utils.errors import DomainError

HS = (4e-3, 2e-3, 1e-3)
NOISE_FLOOR = 1e-9


def paraboloid(n=2):
    return builtin(Family.PARABOLOID, FamilyParams(n))


def product_degenerate(n=3, r=1, alpha=None):
    return builtin(Family.PRODUCT_DEGENERATE, FamilyParams(n, r=r, alpha=alpha))


def random_symmetric(rng, n, unit=True):
    M = rng.standard_normal((n, n))
    A = 0.5 * (M + M.T)
    if unit:
        A /= np.linalg.norm(A, 2)
    return A


def assert_second_order(residuals, hs=HS):
    """Every halving of h below the noise floor cuts the residual by about 4."""
    for (h0, e0), (h1, e1) in zip(zip(hs, residuals), zip(hs[1:], residuals[1:])):
        if e1 <= NOISE_FLOOR:
            continue
        assert observed_order(e0, e1, h0 / h1) >= 1.8, residuals


# --- Frame -----------------------------------------------------------------

def test_paraboloid_frame_at_origin():
    frame = graph_frame(jet2(paraboloid(), (0.0, 0.0)))
    assert frame.W == 1.0
    np.testing.assert_allclose(frame.normal, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(frame.metric, np.eye(2))
    np.testing.assert_allclose(frame.shape, 2.0 * np.eye(2))
    np.testing.assert_allclose(frame.principal_curvatures, [2.0, 2.0])


def test_parabola_curvature_matches_plane_curve_formula():
    frame = graph_frame(jet2(paraboloid(1), (1.0,)))
    assert frame.W == pytest.approx(math.sqrt(5.0))
    assert frame.principal_curvatures[0] == pytest.approx(2.0 * 5.0 ** -1.5, rel=1e-12)


def test_affine_frame_is_flat():
    expr = builtin(Family.AFFINE, FamilyParams(3, V=(1.0, -2.0, 0.5), b=3.0))
    frame = graph_frame(jet2(expr, (0.3, 0.1, -2.0)))
    assert not np.any(frame.shape)
    assert not np.any(frame.principal_curvatures)


def test_frame_and_stack_invariants_on_random_jets():
    rng = np.random.default_rng(10)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        g = rng.standard_normal(n)
        H = random_symmetric(rng, n, unit=False)
        frame = graph_frame(Jet2(np.zeros(n), 0.0, g, H))

        assert frame.W ** 2 == pytest.approx(1.0 + g @ g, rel=1e-14)
        assert abs(np.linalg.norm(frame.normal) - 1.0) <= 1e-12
        np.testing.assert_allclose(frame.metric, np.eye(n) + np.outer(g, g))
        GA = frame.metric @ frame.shape
        assert np.max(np.abs(GA - GA.T)) <= 1e-10 * max(1.0, np.max(np.abs(H)))
        assert np.all(np.diff(frame.principal_curvatures) >= 0.0)

        stack = newton_stack(frame.shape, frame.principal_curvatures)
        residuals = stack_identities(frame.shape, stack)
        assert residuals["polynomial_form"] <= 1e-10
        for name in ("trace_P", "trace_AP", "trace_A2P", "P_n_vanishes"):
            assert residuals[name] <= 1e-9, name


def test_tangent_map_lifts_chart_vectors():
    frame = graph_frame(jet2(paraboloid(), (1.0, 0.5)))
    lifted = frame.tangent_map @ np.array([0.3, -0.7])
    assert abs(lifted @ frame.normal) <= 1e-14


# --- Newton stack -----------------------------------------------------------

def test_diagonal_newton_stack():
    A = np.diag([1.0, 2.0, 3.0])
    stack = newton_stack(A, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(stack.S, [1.0, 6.0, 11.0, 6.0])
    np.testing.assert_allclose(stack.P[1], np.diag([5.0, 4.0, 3.0]))
    np.testing.assert_allclose(stack.P[2], np.diag([6.0, 3.0, 2.0]))
    assert np.trace(A @ stack.P[1]) == pytest.approx(22.0)
    assert np.trace(A @ A @ stack.P[1]) == pytest.approx(48.0)
    assert not np.any(stack.P[3])


def test_zero_operator_stack():
    stack = newton_stack(np.zeros((3, 3)), np.zeros(3))
    np.testing.assert_array_equal(stack.S, [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(stack.P[0], np.eye(3))
    assert not np.any(stack.P[1:])
    assert stack.s(4) == 0.0 and stack.s(-1) == 0.0


def test_polynomial_form_and_characteristic_polynomial():
    rng = np.random.default_rng(11)
    for _ in range(20):
        A = random_symmetric(rng, 5)
        lam = np.linalg.eigvalsh(A)
        stack = newton_stack(A, lam)
        coeffs = np.poly(A)
        for k in range(6):
            assert stack.S[k] == pytest.approx((-1) ** k * coeffs[k], abs=1e-10)
        for r in range(6):
            np.testing.assert_allclose(newton_polynomial(A, stack.S, r), stack.P[r], atol=1e-10)


def test_stack_identities_on_random_operators():
    rng = np.random.default_rng(12)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        A = random_symmetric(rng, n)
        stack = newton_stack(A, np.linalg.eigvalsh(A))
        residuals = stack_identities(A, stack)
        assert residuals["polynomial_form"] <= 1e-10
        assert max(residuals["trace_P"], residuals["trace_AP"], residuals["trace_A2P"]) <= 1e-9
        assert residuals["P_n_vanishes"] <= 1e-9


def test_norm_bound_dominates_every_newton_transformation():
    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        A = random_symmetric(rng, n)
        stack = newton_stack(A, np.linalg.eigvalsh(A))
        assert normbound_excess(stack, rng.standard_normal(n)) <= 1e-12


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=6))
def test_elementary_symmetric_matches_brute_force(lam):
    S = elementary_symmetric(lam)
    for k in range(len(lam) + 1):
        brute = sum(math.prod(c) for c in itertools.combinations(lam, k))
        scale = max(1.0, sum(math.prod(abs(x) for x in c) for c in itertools.combinations(lam, k)))
        assert abs(S[k] - brute) <= 1e-12 * scale


def test_curvature_summary_of_paraboloid():
    frame, stack, _ = point_geometry(paraboloid(), (0.0, 0.0))
    summary = curvature_summary(frame, stack)
    assert summary["mean_curvature"] == pytest.approx(2.0)
    assert summary["scalar_curvature"] == pytest.approx(4.0)
    assert summary["norm_A_squared"] == pytest.approx(8.0)
    frame1, stack1, _ = point_geometry(paraboloid(1), (0.0,))
    assert curvature_summary(frame1, stack1)["scalar_curvature"] is None


def test_scaling_rescales_curvatures():
    p = np.array([0.3, -0.4])
    frame = graph_frame(jet2(paraboloid(), p))
    scaled = graph_frame(jet2(parse("0.5*(x1^2 + x2^2)", 2), 2.0 * p))
    np.testing.assert_allclose(scaled.principal_curvatures, frame.principal_curvatures / 2.0,
                               rtol=1e-12)


def test_affine_curvatures_stay_zero_under_rescaling():
    for s in (0.1, 1.0, 7.5):
        expr = builtin(Family.AFFINE, FamilyParams(2, V=(s * 1.5, -s * 0.5)))
        _, stack, _ = point_geometry(expr, (s, -2.0 * s))
        assert not np.any(stack.S[1:])


def test_batch_frames_match_single_frames():
    expr = builtin(Family.AFFINE_PLUS_GAUSSIAN, FamilyParams(3, V=(0.5, -0.5, 1.0)))
    points = np.random.default_rng(14).uniform(-1.5, 1.5, size=(25, 3))
    batch = batch_frames(expr, points)
    for i, p in enumerate(points):
        frame, stack, _ = point_geometry(expr, p)
        np.testing.assert_allclose(batch.principal_curvatures[i], frame.principal_curvatures,
                                   atol=1e-10)
        np.testing.assert_allclose(batch.S[i], stack.S, atol=1e-10)
        np.testing.assert_allclose(batch.P[i], stack.P, atol=1e-10)


# --- Support functions -----------------------------------------------------

def test_support_at_paraboloid_origin():
    _, _, support = point_geometry(paraboloid(), (0.0, 0.0))
    np.testing.assert_array_equal(support.U, [0.0, 0.0, 1.0])
    assert support.f == 1.0
    assert support.g == 0.0
    np.testing.assert_allclose(support.utan_ambient, np.zeros(3), atol=1e-15)


def test_support_off_origin():
    frame, _, support = point_geometry(paraboloid(), (1.0, 0.0))
    assert frame.W == pytest.approx(math.sqrt(5.0))
    assert support.f == pytest.approx(1.0 / math.sqrt(5.0))
    assert support.g == pytest.approx(1.0)
    assert support.f_sign == 1


def test_support_of_affine_graph_with_its_own_vector():
    expr = builtin(Family.AFFINE, FamilyParams(2, V=(1.0, 0.0)))
    _, _, support = point_geometry(expr, (2.0, 0.0), V=(1.0, 0.0))
    assert support.f == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert support.g == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(support.utan_ambient, np.zeros(3), atol=1e-12)


def test_scaled_bound_fails_for_nonzero_V_but_plain_bound_holds():
    _, _, support = point_geometry(paraboloid(), (1.0, 0.0), V=(0.0, 1.0))
    assert support.utan_norm == pytest.approx(math.sqrt(1.8), rel=1e-12)
    assert support.scaled_bound == pytest.approx(1.0, rel=1e-12)
    assert not support.scaled_bound_holds
    assert support.plain_bound_holds


def test_support_invariants_on_random_points():
    rng = np.random.default_rng(15)
    expr = builtin(Family.AFFINE_PLUS_GAUSSIAN, FamilyParams(2, V=(0.4, -0.3)))
    for p in rng.uniform(-2, 2, size=(50, 2)):
        V = rng.uniform(-1, 1, size=2)
        frame, _, support = point_geometry(expr, p, V)
        assert abs(support.utan_ambient @ frame.normal) <= 1e-12
        assert support.plain_bound_holds
        np.testing.assert_allclose(frame.tangent_map @ support.utan_chart, support.utan_ambient,
                                   atol=1e-12)
        _, _, flat = point_geometry(expr, p)
        assert flat.f == pytest.approx(1.0 / frame.W, rel=1e-14)
        assert flat.f > 0.0 and flat.scaled_bound_holds


# --- Gradients of f and g ---------------------------------------------------

def test_gradient_of_g_is_tangential_part_of_U():
    expr = builtin(Family.AFFINE_PLUS_GAUSSIAN, FamilyParams(2))
    for p in np.random.default_rng(16).uniform(-1.5, 1.5, size=(10, 2)):
        frame, _, support = point_geometry(expr, p)
        result = gradients_fg(expr, frame, support)
        assert result.assignment is GradientAssignment.G_TANGENTIAL
        np.testing.assert_allclose(result.grad_g, frame.gradient / frame.W ** 2, atol=1e-12)
        np.testing.assert_allclose(result.grad_f, -frame.shape @ support.utan_chart, atol=1e-15)


def test_gradients_on_affine_graph_vanish():
    expr = builtin(Family.AFFINE, FamilyParams(2, V=(1.0, 0.0)))
    frame, _, support = point_geometry(expr, (3.0, 3.0), V=(1.0, 0.0))
    result = gradients_fg(expr, frame, support)
    assert result.assignment is GradientAssignment.AMBIGUOUS
    np.testing.assert_allclose(result.grad_f, 0.0, atol=1e-12)
    np.testing.assert_allclose(result.grad_g, 0.0, atol=1e-12)


def test_paraboloid_origin_is_ambiguous():
    frame, _, support = point_geometry(paraboloid(), (0.0, 0.0))
    assert gradients_fg(paraboloid(), frame, support).assignment is GradientAssignment.AMBIGUOUS


def test_gradient_of_g_against_arclength_difference():
    expr = paraboloid(1)
    frame, _, support = point_geometry(expr, (1.0,))
    result = gradients_fg(expr, frame, support)
    intrinsic = math.sqrt(result.grad_g @ frame.metric @ result.grad_g)

    def arclength(x):
        return 0.5 * x * math.sqrt(1.0 + 4.0 * x * x) + math.asinh(2.0 * x) / 4.0

    h = 1e-4
    oracle = ((1.0 + h) ** 2 - (1.0 - h) ** 2) / (arclength(1.0 + h) - arclength(1.0 - h))
    assert intrinsic == pytest.approx(oracle, abs=1e-6)
    assert intrinsic == pytest.approx(2.0 / math.sqrt(5.0), abs=1e-12)


@pytest.mark.parametrize("expr, V", [
    (paraboloid(2), None),
    (builtin(Family.AFFINE_PLUS_GAUSSIAN, FamilyParams(2, V=(0.5, -0.5))), (0.5, -0.5)),
    (product_degenerate(3, 1, (1.0, 1.0)), None),
])
def test_assignment_is_resolved_consistently(expr, V):
    points = np.random.default_rng(17).uniform(-1.0, 1.0, size=(20, expr.dimension))
    label, results = resolve_gradient_assignment(expr, points, V, h=1e-4)
    assert label is GradientAssignment.G_TANGENTIAL
    for result in results:
        assert result.residual <= 1e-5
        if result.assignment is not GradientAssignment.AMBIGUOUS:
            assert result.assignment is label
            assert result.rival_residual > result.residual


# --- L_r operators ----------------------------------------------------------

def test_lr_g_examples():
    frame, stack, support = point_geometry(paraboloid(), (0.0, 0.0))
    assert lr_g(frame, stack, support, 1) == pytest.approx(-8.0)
    assert lr_s(stack, 1) == pytest.approx(-4.0)
    affine = builtin(Family.AFFINE, FamilyParams(3, V=(1.0, 2.0, 3.0)))
    frame, stack, support = point_geometry(affine, (0.5, -1.0, 2.0))
    for r in range(3):
        assert lr_g(frame, stack, support, r) == 0.0


def test_lr_range_is_checked():
    frame, stack, support = point_geometry(paraboloid(), (0.0, 0.0))
    for r in (-1, 2):
        with pytest.raises(DomainError):
            lr_g(frame, stack, support, r)
        with pytest.raises(DomainError):
            lr_f(paraboloid(), frame, stack, support, r)


def test_product_degenerate_vanishes_on_the_slice():
    expr = product_degenerate(3, 1, (1.0, 1.0))
    frame, stack, support = point_geometry(expr, (0.0, 0.7, -0.2))
    assert abs(stack.s(2)) <= 1e-12 and abs(stack.s(3)) <= 1e-12
    assert lr_g(frame, stack, support, 1) == pytest.approx(0.0, abs=1e-12)


def test_product_degenerate_generic_point_keeps_next_curvature():
    expr = product_degenerate(3, 1, (1.0, 1.0))
    _, stack, _ = point_geometry(expr, (1.0, 1.0, 1.0))
    assert stack.s(2) == pytest.approx(-8.0 / 361.0, abs=1e-12)
    assert abs(stack.s(3)) <= 1e-12


def test_lr_f_examples():
    expr = paraboloid()
    frame, stack, support = point_geometry(expr, (0.0, 0.0))
    assert lr_f(expr, frame, stack, support, 0) == pytest.approx(-8.0)

    affine = builtin(Family.AFFINE, FamilyParams(2, V=(1.0, 0.0)))
    frame, stack, support = point_geometry(affine, (3.0, 3.0), V=(1.0, 0.0))
    assert lr_f(affine, frame, stack, support, 0) == 0.0
    frame, stack, support = point_geometry(affine, (3.0, 3.0), V=(0.0, 2.0))
    assert lr_f(affine, frame, stack, support, 1) == 0.0


def test_lr_f_agrees_with_divergence_on_parabola():
    check = lr_divergence_check(paraboloid(1), (1.0,), 0, "f", h=1e-3)
    frame, stack, support = point_geometry(paraboloid(1), (1.0,))
    assert lr_f(paraboloid(1), frame, stack, support, 0, 1e-3) == pytest.approx(check.discrete, abs=5e-4)


def test_divergence_check_examples():
    assert lr_divergence_check(paraboloid(), (0.0, 0.0), 0, "g", h=1e-3).residual <= 1e-4
    affine = builtin(Family.AFFINE, FamilyParams(2, V=(1.0, -1.0)))
    for r in (0, 1):
        assert lr_divergence_check(affine, (0.4, 2.0), r, "f", V=(0.5, 0.5)).residual <= 1e-10
    with pytest.raises(DomainError):
        lr_divergence_check(affine, (0.0, 0.0), 0, "h")


def test_divergence_residual_ratio_is_about_four():
    coarse = lr_divergence_check(paraboloid(), (0.5, 0.5), 1, "g", h=2e-3).residual
    fine = lr_divergence_check(paraboloid(), (0.5, 0.5), 1, "g", h=1e-3).residual
    assert coarse / fine == pytest.approx(4.0, rel=0.15)


@pytest.mark.parametrize("expr, point", [
    (paraboloid(1), (1.0,)),
    (paraboloid(2), (0.5, 0.5)),
    (paraboloid(2), (-0.3, 0.8)),
    (paraboloid(3), (0.3, -0.2, 0.4)),
    (product_degenerate(2, 1, (1.0,)), (0.6, 0.4)),
    (product_degenerate(3, 1, (1.0, 0.5)), (0.6, 0.4, -0.1)),
])
@pytest.mark.parametrize("which", ["f", "g"])
def test_divergence_identity_converges_at_second_order(expr, point, which):
    for r in range(expr.dimension):
        residuals = [lr_divergence_check(expr, point, r, which, h=h).residual for h in HS]
        assert residuals[-1] <= 1e-4
        assert_second_order(residuals)


def test_divergence_identity_with_parallel_vector():
    expr = builtin(Family.AFFINE_PLUS_GAUSSIAN, FamilyParams(2, V=(0.5, 0.0)))
    for which in ("f", "g"):
        residuals = [lr_divergence_check(expr, (0.4, -0.6), 1, which, h=h, V=(0.3, 0.2)).residual
                     for h in HS]
        assert_second_order(residuals)
