"""Curvature of graph hypersurfaces M = {(x, u(x))} in R^{n+1}.

Frame conventions: N = (-grad u, 1)/W is the upward unit normal, the shape
operator is A = -dN, the induced metric in graph coordinates is
G = I + grad u grad u^T and the second fundamental form is B = Hess u / W,
so that A = G^{-1} B. Tangent vectors are carried by their graph-chart
components xi in R^n; J = [I; grad u^T] maps them into R^{n+1}.

The L_r closed forms hold for the Newton transformations of dN = -A:
S_k enters them as (-1)^k S_k and L_r phi = div_M((-1)^r P_r grad phi).
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from models.jet import jet2, jet_batch
from utils.errors import DimensionError, DomainError, NumericFailure

logger = logging.getLogger(__name__)

DEFAULT_LR_STEP = 1e-3
LR_SIGN_CONVENTION = "dN = -A: S_k -> (-1)^k S_k, P_r -> (-1)^r P_r"
DEFAULT_ORACLE_STEP = 1e-4
EIGEN_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class GraphFrame:
    """Per-point geometry bundle of the graph (see module docstring)."""

    base_point: np.ndarray
    gradient: np.ndarray
    W: float
    normal: np.ndarray
    metric: np.ndarray
    second_ff: np.ndarray
    shape: np.ndarray
    principal_curvatures: np.ndarray
    eigen_residual: float

    @property
    def dimension(self):
        return len(self.base_point)

    @property
    def tangent_map(self):
        """J: graph-chart components -> R^{n+1}."""
        return np.vstack([np.eye(self.dimension), self.gradient[None, :]])


@dataclass(frozen=True)
class NewtonStack:
    """
    S_0..S_n and P_0..P_n of a shape operator.

    Args:
        S (np.ndarray): (n+1,) elementary symmetric functions, S[0] = 1.
        P (np.ndarray): (n+1, n, n) Newton transformations, P[0] = I.
        norm_bound (float): max_r of the operator 2-norm of P_r.
    """

    S: np.ndarray
    P: np.ndarray
    norm_bound: float

    @property
    def dimension(self):
        return len(self.S) - 1

    def s(self, k):
        """S_k with the conventions S_k = 0 for k > n or k < 0."""
        if k < 0 or k > self.dimension:
            return 0.0
        return float(self.S[k])


@dataclass(frozen=True)
class SupportData:
    """
    Support functions for U = (-V, 1).

    utan_ambient is U^T in R^{n+1}; utan_chart its graph-chart components.
    scaled_bound_holds reports |U^T| <= |grad u - V|/W, which can fail for
    V != 0; plain_bound_holds reports the always-valid |U^T| <= |grad u - V|.
    """

    U: np.ndarray
    V: np.ndarray
    f: float
    g: float
    utan_ambient: np.ndarray
    utan_chart: np.ndarray
    f_sign: int
    utan_norm: float
    scaled_bound: float
    scaled_bound_holds: bool
    plain_bound_holds: bool


class GradientAssignment(str, Enum):
    """Which candidate gradient the oracle matched to f and to g."""

    F_TANGENTIAL = "grad f = U^T, grad g = -A(U^T)"
    G_TANGENTIAL = "grad f = -A(U^T), grad g = U^T"
    AMBIGUOUS = "ambiguous (candidates coincide)"
    INCONSISTENT = "inconsistent across points"


@dataclass(frozen=True)
class FGGradients:
    """Intrinsic gradients of f and g in graph-chart components."""

    grad_f: np.ndarray
    grad_g: np.ndarray
    assignment: GradientAssignment
    residual: float
    rival_residual: float
    fd_grad_f: np.ndarray
    fd_grad_g: np.ndarray


@dataclass(frozen=True)
class DivergenceCheck:
    """Discretized div_M(P_r grad phi) against the closed form L_r phi."""

    discrete: float
    closed_form: float
    residual: float
    h: float


# --- Frame -----------------------------------------------------------------

def graph_frame(jet):
    """
    Builds the graph frame at the jet's base point.

    Args:
        jet (Jet2): Second-order jet of u.

    Returns:
        GraphFrame: W, N, G, B, A and ascending principal curvatures.

    Raises:
        NumericFailure: If the jet is not finite or the eigen-solve fails.
    """
    g = np.asarray(jet.gradient, dtype=float)
    H = np.asarray(jet.hessian, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise NumericFailure("jet is not finite")
    n = len(g)

    W = float(np.sqrt(1.0 + g @ g))
    normal = np.append(-g, 1.0) / W
    G = np.eye(n) + np.outer(g, g)
    B = H / W
    A = np.linalg.solve(G, B)

    try:
        lam, vecs = scipy.linalg.eigh(B, G)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"generalized eigen-solve failed: {exc}") from exc

    residual = float(max(
        (np.linalg.norm(B @ vecs[:, k] - lam[k] * (G @ vecs[:, k])) for k in range(n)),
        default=0.0,
    ))
    scale = max(1.0, float(np.linalg.norm(B, 2)), float(np.max(np.abs(lam), initial=0.0)) * W * W)
    if residual > EIGEN_RESIDUAL_TOL * scale:
        raise NumericFailure(f"eigen residual {residual:.3e} above tolerance")

    return GraphFrame(
        base_point=np.asarray(jet.point, dtype=float).copy(),
        gradient=g.copy(),
        W=W,
        normal=normal,
        metric=G,
        second_ff=B,
        shape=A,
        principal_curvatures=np.asarray(lam, dtype=float),
        eigen_residual=residual,
    )


# --- Newton transformations -------------------------------------------------

def elementary_symmetric(lam):
    """
    Elementary symmetric polynomials of the trailing axis of lam.

    Expands prod_i (t + lam_i) one factor at a time.

    Returns:
        np.ndarray: (..., n+1) array with S_0 = 1.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    S = np.zeros(lam.shape[:-1] + (n + 1,))
    S[..., 0] = 1.0
    for i in range(n):
        for k in range(i + 1, 0, -1):
            S[..., k] = S[..., k] + lam[..., i] * S[..., k - 1]
    return S


def newton_stack(A, lam):
    """
    All Newton transformations P_r = S_r I - A P_{r-1}.

    Args:
        A (np.ndarray): n x n shape operator.
        lam (array-like): Its eigenvalues.

    Returns:
        NewtonStack: S_0..S_n (from the eigenvalues) and P_0..P_n.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or len(lam) != n:
        raise DimensionError("shape operator and eigenvalues disagree in size")
    S = elementary_symmetric(lam)
    P = np.empty((n + 1, n, n))
    P[0] = np.eye(n)
    for r in range(1, n + 1):
        P[r] = S[r] * np.eye(n) - A @ P[r - 1]
    norm_bound = float(max(np.linalg.norm(P[r], 2) for r in range(n + 1)))
    return NewtonStack(S=S, P=P, norm_bound=norm_bound)


def newton_polynomial(A, S, r):
    """P_r as the polynomial sum_j (-1)^j S_{r-j} A^j."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    total = np.zeros((n, n))
    power = np.eye(n)
    for j in range(r + 1):
        total += (-1) ** j * S[r - j] * power
        power = power @ A
    return total


def stack_identities(A, stack):
    """
    Scaled residuals of every algebraic identity of the stack.

    Returns:
        dict: Max residual per identity, each divided by its natural scale.
    """
    A = np.asarray(A, dtype=float)
    n = stack.dimension
    A2 = A @ A
    out = {"polynomial_form": 0.0, "trace_P": 0.0, "trace_AP": 0.0, "trace_A2P": 0.0}
    for r in range(n + 1):
        P = stack.P[r]
        poly = newton_polynomial(A, stack.S, r)
        out["polynomial_form"] = max(
            out["polynomial_form"],
            float(np.max(np.abs(poly - P))) / max(1.0, float(np.max(np.abs(P)))),
        )
        checks = {
            "trace_P": (np.trace(P), (n - r) * stack.s(r)),
            "trace_AP": (np.trace(A @ P), (r + 1) * stack.s(r + 1)),
            "trace_A2P": (np.trace(A2 @ P),
                          stack.s(1) * stack.s(r + 1) - (r + 2) * stack.s(r + 2)),
        }
        for name, (lhs, rhs) in checks.items():
            scale = max(1.0, abs(lhs), abs(rhs))
            out[name] = max(out[name], abs(lhs - rhs) / scale)
    out["P_n_vanishes"] = float(np.max(np.abs(stack.P[n]))) / max(1.0, stack.norm_bound)
    return out


def normbound_excess(stack, v):
    """Largest |P_r v| - norm_bound |v| over r; never positive in exact arithmetic."""
    v = np.asarray(v, dtype=float)
    limit = stack.norm_bound * np.linalg.norm(v)
    return max(float(np.linalg.norm(P @ v)) - limit for P in stack.P)


def curvature_summary(frame, stack):
    """
    Mean curvature, scalar-curvature proxy and |A|^2 from Gauss' equation.

    Returns:
        dict: mean_curvature = S_1/n, scalar_curvature = 2 S_2/(n(n-1))
        (None when n = 1) and norm_A_squared = S_1^2 - 2 S_2.
    """
    n = frame.dimension
    s1, s2 = stack.s(1), stack.s(2)
    return {
        "mean_curvature": s1 / n,
        "scalar_curvature": 2.0 * s2 / (n * (n - 1)) if n >= 2 else None,
        "norm_A_squared": s1 * s1 - 2.0 * s2,
    }


# --- Support functions ------------------------------------------------------

def support_data(frame, p, u_value, V):
    """
    Support functions f = <N, U> and g = <x, U> for U = (-V, 1).

    Args:
        frame (GraphFrame): Frame at p.
        p (sequence[float]): Base point in R^n.
        u_value (float): u(p).
        V (sequence[float]): Parallel vector in R^n.

    Returns:
        SupportData: f, g, U^T and the bound diagnostics.
    """
    n = frame.dimension
    V = np.asarray(V, dtype=float)
    p = np.asarray(p, dtype=float)
    if V.shape != (n,) or p.shape != (n,):
        raise DimensionError(f"V and p must have {n} entries")

    U = np.append(-V, 1.0)
    f = float(frame.normal @ U)
    g_value = float(u_value - p @ V)
    diff = frame.gradient - V
    xi = np.linalg.solve(frame.metric, diff)
    utan = U - f * frame.normal
    utan_norm = float(np.linalg.norm(utan))
    scaled = float(np.linalg.norm(diff)) / frame.W
    return SupportData(
        U=U,
        V=V.copy(),
        f=f,
        g=g_value,
        utan_ambient=utan,
        utan_chart=xi,
        f_sign=int(np.sign(f)),
        utan_norm=utan_norm,
        scaled_bound=scaled,
        scaled_bound_holds=utan_norm <= scaled + 1e-12,
        plain_bound_holds=utan_norm <= float(np.linalg.norm(diff)) + 1e-12,
    )


def _f_chart_differential(gradient, hessian, W, V):
    """Coordinate partials of f = (1 + <grad u, V>)/W."""
    return hessian @ V / W - (1.0 + gradient @ V) * (hessian @ gradient) / W ** 3


def _g_norm(frame, xi):
    return float(np.sqrt(max(xi @ frame.metric @ xi, 0.0)))


def gradients_fg(expr, frame, support, h=DEFAULT_ORACLE_STEP):
    """
    Intrinsic gradients of f and g, matched to {U^T, -A(U^T)} by the oracle.

    The oracle differentiates f and g along the graph chart with central
    differences; whichever labelling of the two candidates fits better is
    returned together with its residual.

    Args:
        expr (ScalarFieldExpr): Field u.
        frame (GraphFrame): Frame at the point.
        support (SupportData): Support data at the same point.
        h (float): Oracle step.

    Returns:
        FGGradients: Assigned gradients (chart components) and the resolution.
    """
    n = frame.dimension
    p = frame.base_point
    V = support.V
    offsets = np.vstack([np.eye(n) * h, -np.eye(n) * h])
    jets = jet_batch(expr, p + offsets, order=1)
    W = np.sqrt(1.0 + np.sum(jets.gradients ** 2, axis=1))
    f_vals = (1.0 + jets.gradients @ V) / W
    g_vals = jets.values - (p + offsets) @ V
    df = (f_vals[:n] - f_vals[n:]) / (2.0 * h)
    dg = (g_vals[:n] - g_vals[n:]) / (2.0 * h)
    fd_f = np.linalg.solve(frame.metric, df)
    fd_g = np.linalg.solve(frame.metric, dg)

    utan = support.utan_chart
    minus_a_utan = -frame.shape @ utan
    f_tangential = max(_g_norm(frame, fd_f - utan), _g_norm(frame, fd_g - minus_a_utan))
    g_tangential = max(_g_norm(frame, fd_f - minus_a_utan), _g_norm(frame, fd_g - utan))

    if g_tangential <= f_tangential:
        assignment, grad_f, grad_g = GradientAssignment.G_TANGENTIAL, minus_a_utan, utan
        best, rival = g_tangential, f_tangential
    else:
        assignment, grad_f, grad_g = GradientAssignment.F_TANGENTIAL, utan, minus_a_utan
        best, rival = f_tangential, g_tangential
    gap = _g_norm(frame, utan - minus_a_utan)
    if gap <= 1e-8 * max(1.0, _g_norm(frame, utan)):
        assignment = GradientAssignment.AMBIGUOUS

    return FGGradients(grad_f=grad_f, grad_g=grad_g, assignment=assignment,
                       residual=best, rival_residual=rival, fd_grad_f=fd_f, fd_grad_g=fd_g)


def point_geometry(expr, p, V=None):
    """Frame, stack and support data at p (V defaults to zero)."""
    p = np.asarray(p, dtype=float)
    if V is None:
        V = np.zeros(expr.dimension)
    jet = jet2(expr, p)
    frame = graph_frame(jet)
    stack = newton_stack(frame.shape, frame.principal_curvatures)
    support = support_data(frame, p, jet.value, V)
    return frame, stack, support


def resolve_gradient_assignment(expr, points, V=None, h=DEFAULT_ORACLE_STEP):
    """
    Consensus gradient assignment over several points.

    Returns:
        tuple[GradientAssignment, list[FGGradients]]: The shared label of all
        non-ambiguous points (AMBIGUOUS if none, INCONSISTENT on disagreement)
        and the per-point results.
    """
    results = []
    for p in points:
        frame, _, support = point_geometry(expr, p, V)
        results.append(gradients_fg(expr, frame, support, h))
    labels = {r.assignment for r in results if r.assignment is not GradientAssignment.AMBIGUOUS}
    if not labels:
        return GradientAssignment.AMBIGUOUS, results
    if len(labels) > 1:
        logger.warning("[gradients] ⚠️ Assignment differs between points: %s", sorted(labels))
        return GradientAssignment.INCONSISTENT, results
    return labels.pop(), results


# --- L_r operators ----------------------------------------------------------

def _check_r(r, n):
    if not 0 <= r <= n - 1:
        raise DomainError(f"r must satisfy 0 <= r <= n-1 (n={n}), got {r}")


def lr_s(stack, k):
    """S_k of dN = -A, the operator the L_r closed forms are written for."""
    return (-1) ** k * stack.s(k)


def lr_g(frame, stack, support, r):
    """L_r g = -(r+1) S_{r+1} f, with S taken from lr_s."""
    _check_r(r, frame.dimension)
    return -(r + 1) * lr_s(stack, r + 1) * support.f


def _s_along(expr, p, direction, k, t):
    jet = jet2(expr, p + t * direction)
    frame = graph_frame(jet)
    return newton_stack(frame.shape, frame.principal_curvatures).s(k)


def directional_derivative_s(expr, p, direction, k, h=DEFAULT_LR_STEP, richardson=True):
    """
    Derivative of S_k along a chart direction by central differences.

    With richardson=True the steps h and h/2 are combined to O(h^4).
    """
    direction = np.asarray(direction, dtype=float)
    if not np.any(direction):
        return 0.0

    def central(step):
        return (_s_along(expr, p, direction, k, step)
                - _s_along(expr, p, direction, k, -step)) / (2.0 * step)

    coarse = central(h)
    if not richardson:
        return coarse
    return (4.0 * central(h / 2.0) - coarse) / 3.0


def lr_f(expr, frame, stack, support, r, h=DEFAULT_LR_STEP, richardson=True):
    """
    L_r f = -(S_1 S_{r+1} - (r+2) S_{r+2}) f + U^T(S_{r+1}), with S from lr_s.

    The derivative term differentiates S_{r+1} along U^T with step h in the
    graph chart; the other terms are closed-form.
    """
    if h <= 0:
        raise DomainError("step must be positive")
    _check_r(r, frame.dimension)
    closed = -(lr_s(stack, 1) * lr_s(stack, r + 1) - (r + 2) * lr_s(stack, r + 2)) * support.f
    drift = directional_derivative_s(expr, frame.base_point, support.utan_chart,
                                     r + 1, h, richardson)
    return closed + (-1) ** (r + 1) * drift


def _weighted_flux_field(expr, x, r, which, V):
    """W * P_r grad(phi) in chart components at x, for phi in {f, g}; P_r of dN = -A."""
    jet = jet2(expr, x)
    frame = graph_frame(jet)
    stack = newton_stack(frame.shape, frame.principal_curvatures)
    if which == "g":
        dphi = frame.gradient - V
    else:
        dphi = _f_chart_differential(frame.gradient, jet.hessian, frame.W, V)
    grad = np.linalg.solve(frame.metric, dphi)
    return (-1) ** r * frame.W * (stack.P[r] @ grad)


def chart_divergence(field, p, h):
    """
    Metric divergence (1/sqrt det G) d_i(sqrt det G Y^i) by central differences.

    Args:
        field (callable): x -> (sqrt det G(x) * Y(x)) in chart components.
        p (np.ndarray): Base point.
        h (float): Step.

    Returns:
        float: The un-normalized sum d_i(sqrt det G Y^i); divide by sqrt det G(p).
    """
    n = len(p)
    total = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        total += (field(p + e)[i] - field(p - e)[i]) / (2.0 * h)
    return total


def lr_divergence_check(expr, p, r, which, h=DEFAULT_LR_STEP, V=None):
    """
    Divergence-form check of L_r phi = div_M(P_r grad phi).

    Args:
        expr (ScalarFieldExpr): Field u.
        p (sequence[float]): Base point.
        r (int): Newton index, 0 <= r <= n-1.
        which (str): "f" or "g".
        h (float): Stencil step.
        V (sequence[float] | None): Parallel vector (zero by default).

    Returns:
        DivergenceCheck: Discretized divergence, closed form and residual.
    """
    if which not in ("f", "g"):
        raise DomainError(f"which must be 'f' or 'g', got {which!r}")
    p = np.asarray(p, dtype=float)
    n = expr.dimension
    _check_r(r, n)
    V = np.zeros(n) if V is None else np.asarray(V, dtype=float)

    frame, stack, support = point_geometry(expr, p, V)
    div = chart_divergence(lambda x: _weighted_flux_field(expr, x, r, which, V), p, h) / frame.W
    if which == "g":
        closed = lr_g(frame, stack, support, r)
    else:
        closed = lr_f(expr, frame, stack, support, r, h)
    return DivergenceCheck(discrete=float(div), closed_form=float(closed),
                           residual=float(abs(div - closed)), h=h)


# --- Batched frames ---------------------------------------------------------

@dataclass(frozen=True)
class FrameBatch:
    """Frame data at m points, stacked along the first axis."""

    points: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    W: np.ndarray
    metric: np.ndarray
    shape: np.ndarray
    principal_curvatures: np.ndarray
    S: np.ndarray
    P: np.ndarray


def batch_frames(expr, points):
    """
    Frames, S_r and P_r at many points.

    The generalized problem B v = lam G v is reduced with the Cholesky factor
    of each G, as in graph_frame.
    """
    jets = jet_batch(expr, points)
    g = jets.gradients
    m, n = g.shape
    W = np.sqrt(1.0 + np.sum(g * g, axis=1))
    G = np.eye(n)[None, :, :] + g[:, :, None] * g[:, None, :]
    B = jets.hessians / W[:, None, None]
    L = np.linalg.cholesky(G)
    left = np.linalg.solve(L, B)
    C = np.linalg.solve(L, np.swapaxes(left, 1, 2))
    C = 0.5 * (C + np.swapaxes(C, 1, 2))
    lam = np.linalg.eigvalsh(C)
    A = np.linalg.solve(G, B)
    S = elementary_symmetric(lam)
    P = np.empty((m, n + 1, n, n))
    P[:, 0] = np.eye(n)
    for r in range(1, n + 1):
        P[:, r] = S[:, r, None, None] * np.eye(n) - A @ P[:, r - 1]
    return FrameBatch(points=jets.points, values=jets.values, gradients=g, W=W,
                      metric=G, shape=A, principal_curvatures=lam, S=S, P=P)

