"""Explicit codimension-one foliations of space forms.

Three families are provided:

    graph-translates      leaves {y = u(x) + t} in R^{n+1}; N is the graph normal
    concentric-cylinders  leaves S^r_R x R^{n-r} in R^{n+1}; singular on {0} x R^{n-r}
    geodesic-spheres      distance spheres from the pole e_{n+2} of S^{n+1}

For each regular ambient point a FoliationSample carries the leaf normal N,
X = D_N N, an ambient basis of the leaf tangent space with its Gram matrix,
the shape operator in that basis, the Newton stack and the normal
derivatives N(S_k). Along the leaf, div_L(P_r X) is compared with

    sigma * a * tr P_r + tr(A^2 P_r) + <X, P_r X> - N(S_{r+1})

where a is the ambient curvature and sigma is fixed by calibrate_sigma.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy.linalg import null_space
from scipy.special import comb

from analysis.bounds import p1_definiteness
from analysis.nullity import operator_nullity
from models.curvature import chart_divergence, graph_frame, newton_stack
from models.jet import jet2, observed_order
from utils.errors import DimensionError, DomainError, NumericFailure

logger = logging.getLogger(__name__)

SINGULAR_GUARD = 1e-6
DEFAULT_NORMAL_STEP = 1e-3
DEFAULT_STENCIL_STEP = 1e-3
CALIBRATION_TIMES = (math.pi / 6, math.pi / 4, math.pi / 3)


class FoliationFamily(str, Enum):
    GRAPH_TRANSLATES = "graph-translates"
    CONCENTRIC_CYLINDERS = "concentric-cylinders"
    GEODESIC_SPHERES = "geodesic-spheres"


@dataclass(frozen=True)
class FoliationSpec:
    """
    A foliation family with its parameters.

    Args:
        family (FoliationFamily | str): Family name.
        n (int): Leaf dimension.
        expr (ScalarFieldExpr | None): Field u, graph-translates only.
        cylinder_r (int | None): Sphere factor dimension, concentric-cylinders only.
        orientation (int): +1 for N along the increasing leaf parameter, -1 otherwise.
    """

    family: FoliationFamily
    n: int
    expr: object = None
    cylinder_r: int = None
    orientation: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", FoliationFamily(self.family))
        if self.n < 1:
            raise DomainError("leaf dimension must be positive")
        if self.orientation not in (1, -1):
            raise DomainError("orientation must be +1 or -1")
        if self.family is FoliationFamily.GRAPH_TRANSLATES:
            if self.expr is None:
                raise DomainError("graph-translates needs a field")
            if self.expr.dimension != self.n:
                raise DimensionError(f"field has n={self.expr.dimension}, foliation has n={self.n}")
        if self.family is FoliationFamily.CONCENTRIC_CYLINDERS:
            if self.cylinder_r is None or not 1 <= self.cylinder_r <= self.n:
                raise DomainError(f"cylinders need 1 <= r <= n, got r={self.cylinder_r}")

    @property
    def ambient_curvature(self):
        return 1.0 if self.family is FoliationFamily.GEODESIC_SPHERES else 0.0

    @property
    def ambient_dimension(self):
        """Number of coordinates of an ambient point (n+2 for the sphere)."""
        return self.n + 2 if self.family is FoliationFamily.GEODESIC_SPHERES else self.n + 1

    def flipped(self):
        return FoliationSpec(self.family, self.n, self.expr, self.cylinder_r, -self.orientation)


@dataclass(frozen=True)
class FoliationSample:
    """
    Leaf data at one ambient point.

    normal_derivative_S[k] is N(S_k) for k = 0..n (entry 0 is zero);
    leaf_parameter_derivative_S[k] is the derivative of S_k in the leaf
    parameter. X = basis @ x_tangent.
    """

    point: np.ndarray
    leaf_parameter: float
    normal: np.ndarray
    X: np.ndarray
    x_tangent: np.ndarray
    basis: np.ndarray
    metric: np.ndarray
    shape: np.ndarray
    principal_curvatures: np.ndarray
    stack: object
    normal_derivative_S: np.ndarray
    leaf_parameter_derivative_S: np.ndarray
    ambient_curvature: float

    @property
    def dimension(self):
        return self.shape.shape[0]

    def newton_field(self, r):
        """P_r X as an ambient vector."""
        return self.basis @ (self.stack.P[r] @ self.x_tangent)

    def invariant_residuals(self):
        """(| |N| - 1 |, |<X, N>|)."""
        return abs(float(np.linalg.norm(self.normal)) - 1.0), abs(float(self.X @ self.normal))


# --- Points ------------------------------------------------------------------

def graph_leaf_point(expr, x, t):
    """Ambient point (x, u(x) + t) on the translate with parameter t."""
    x = np.asarray(x, dtype=float)
    return np.append(x, jet2(expr, x).value + t)


def cylinder_point(n, r, radius, direction=None, offset=None):
    """Point (radius * direction, offset) with direction a unit vector of R^{r+1}."""
    d = np.eye(r + 1)[0] if direction is None else np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    w = np.zeros(n - r) if offset is None else np.asarray(offset, dtype=float)
    return np.concatenate([radius * d, w])


def sphere_point(n, t, direction=None):
    """Point of S^{n+1} at geodesic distance t from the pole e_{n+2}."""
    v = np.eye(n + 1)[0] if direction is None else np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    return np.append(math.sin(t) * v, math.cos(t))


# --- Sampling ----------------------------------------------------------------

def _oriented_graph_geometry(expr, x, orientation):
    jet = jet2(expr, x)
    frame = graph_frame(jet)
    A = orientation * frame.shape
    lam = np.sort(orientation * frame.principal_curvatures)
    return jet, frame, A, lam


def _graph_S(expr, x, orientation):
    _, _, A, lam = _oriented_graph_geometry(expr, x, orientation)
    return newton_stack(A, lam).S


def _richardson_central(func, h):
    def central(step):
        return (func(step) - func(-step)) / (2.0 * step)

    coarse = central(h)
    return (4.0 * central(h / 2.0) - coarse) / 3.0


def _sample_graph(spec, z, derivatives, normal_step):
    n, o = spec.n, spec.orientation
    x, y = z[:n], z[n]
    jet, frame, A, lam = _oriented_graph_geometry(spec.expr, x, o)
    g, H, W = frame.gradient, jet.hessian, frame.W

    normal = o * frame.normal
    # Jacobian of the upward normal in x; X is quadratic in N so o drops out
    dN = np.vstack([-H / W + np.outer(g, H @ g) / W ** 3, -(H @ g)[None, :] / W ** 3])
    X = dN @ (-g / W)
    stack = newton_stack(A, lam)

    normal_d = np.zeros(n + 1)
    # leaves are vertical translates: S_k depends on x only
    param_d = np.zeros(n + 1)
    if derivatives:
        normal_d = _richardson_central(
            lambda s: _graph_S(spec.expr, x + s * normal[:n], o), normal_step)

    return FoliationSample(
        point=z.copy(),
        leaf_parameter=float(y - jet.value),
        normal=normal,
        X=X,
        x_tangent=X[:n].copy(),
        basis=frame.tangent_map,
        metric=frame.metric,
        shape=A,
        principal_curvatures=lam,
        stack=stack,
        normal_derivative_S=normal_d,
        leaf_parameter_derivative_S=param_d,
        ambient_curvature=0.0,
    )


def _closed_form_derivatives(n, mu, count, dmu):
    """d/ds of S_k = C(count, k) mu^k for k = 0..n, given dmu = d mu / ds."""
    out = np.zeros(n + 1)
    for k in range(1, min(count, n) + 1):
        out[k] = comb(count, k, exact=True) * k * mu ** (k - 1) * dmu
    return out


def _sample_cylinder(spec, z):
    n, r, o = spec.n, spec.cylinder_r, spec.orientation
    y, w = z[:r + 1], z[r + 1:]
    R = float(np.linalg.norm(y))
    if R <= SINGULAR_GUARD:
        raise DomainError(f"point within {SINGULAR_GUARD:g} of the cylinder axis plane")
    yhat = y / R
    normal = o * np.concatenate([yhat, np.zeros(n - r)])

    basis = np.zeros((n + 1, n))
    basis[:r + 1, :r] = null_space(yhat[None, :])
    basis[r + 1:, r:] = np.eye(n - r)

    mu = -o / R
    A = np.diag(np.concatenate([np.full(r, mu), np.zeros(n - r)]))
    lam = np.sort(np.diag(A))
    param_d = _closed_form_derivatives(n, mu, r, o / R ** 2)
    return FoliationSample(
        point=z.copy(),
        leaf_parameter=R,
        normal=normal,
        X=np.zeros(n + 1),
        x_tangent=np.zeros(n),
        basis=basis,
        metric=np.eye(n),
        shape=A,
        principal_curvatures=lam,
        stack=newton_stack(A, lam),
        normal_derivative_S=o * param_d,
        leaf_parameter_derivative_S=param_d,
        ambient_curvature=0.0,
    )


def _sample_sphere(spec, q):
    n, o = spec.n, spec.orientation
    if abs(float(np.linalg.norm(q)) - 1.0) > 1e-9:
        raise DomainError("sphere points must have unit norm")
    t = math.acos(max(-1.0, min(1.0, float(q[-1]))))
    if math.sin(t) <= SINGULAR_GUARD:
        raise DomainError(f"point within {SINGULAR_GUARD:g} of a pole")
    v = q[:-1] / math.sin(t)
    d_t = np.append(math.cos(t) * v, -math.sin(t))
    normal = o * d_t
    basis = null_space(np.vstack([q, d_t]))

    cot = math.cos(t) / math.sin(t)
    mu = -o * cot
    A = mu * np.eye(n)
    lam = np.full(n, mu)
    param_d = _closed_form_derivatives(n, mu, n, o / math.sin(t) ** 2)
    return FoliationSample(
        point=q.copy(),
        leaf_parameter=t,
        normal=normal,
        X=np.zeros(n + 2),
        x_tangent=np.zeros(n),
        basis=basis,
        metric=np.eye(n),
        shape=A,
        principal_curvatures=lam,
        stack=newton_stack(A, lam),
        normal_derivative_S=o * param_d,
        leaf_parameter_derivative_S=param_d,
        ambient_curvature=1.0,
    )


def sample(spec, point, derivatives=True, normal_step=DEFAULT_NORMAL_STEP):
    """
    Leaf data of the foliation at an ambient point.

    Args:
        spec (FoliationSpec): Foliation.
        point (sequence[float]): Ambient coordinates (n+1, or n+2 on the sphere).
        derivatives (bool): Compute N(S_k) (finite differences for graph-translates).
        normal_step (float): Step of the N(S_k) difference.

    Returns:
        FoliationSample: Normal, X, basis, shape operator and Newton data.

    Raises:
        DomainError: The point is within SINGULAR_GUARD of the singular set.
    """
    z = np.asarray(point, dtype=float)
    if z.shape != (spec.ambient_dimension,):
        raise DimensionError(f"{spec.family.value} points need {spec.ambient_dimension} coordinates")
    if spec.family is FoliationFamily.GRAPH_TRANSLATES:
        return _sample_graph(spec, z, derivatives, normal_step)
    if spec.family is FoliationFamily.CONCENTRIC_CYLINDERS:
        return _sample_cylinder(spec, z)
    return _sample_sphere(spec, z)


# --- Divergence identities -----------------------------------------------------

def _check_r(r, n):
    if not 0 <= r <= n - 1:
        raise DomainError(f"r must satisfy 0 <= r <= n-1 (n={n}), got {r}")


@lru_cache(maxsize=None)
def calibrate_sigma(n=3):
    """
    Sign of the ambient-curvature term, fixed on the geodesic-sphere family.

    On those leaves X = 0, so leaf_identity_rhs must vanish; exactly one of +1, -1
    does so for both orientations, every r and CALIBRATION_TIMES.

    Raises:
        NumericFailure: Neither sign (or both) balances the identity.
    """
    passing = []
    for sigma in (1, -1):
        worst = 0.0
        for orientation in (1, -1):
            spec = FoliationSpec(FoliationFamily.GEODESIC_SPHERES, n, orientation=orientation)
            for t in CALIBRATION_TIMES:
                s = sample(spec, sphere_point(n, t))
                for r in range(n):
                    worst = max(worst, abs(leaf_identity_rhs(s, r, sigma)))
        if worst <= 1e-9:
            passing.append(sigma)
    if len(passing) != 1:
        raise NumericFailure(f"sign calibration inconclusive: {passing}")
    logger.info("[foliation] calibrated sigma = %+d", passing[0])
    return passing[0]


def leaf_identity_rhs(sample_point, r, sigma=None):
    """
    sigma * a * tr P_r + tr(A^2 P_r) + <X, P_r X> - N(S_{r+1}).

    The ambient term <X, div_L P_r> vanishes in constant curvature.
    """
    s = sample_point
    _check_r(r, s.dimension)
    if sigma is None:
        sigma = calibrate_sigma()
    P = s.stack.P[r]
    curvature = sigma * s.ambient_curvature * float(np.trace(P))
    second = float(np.trace(s.shape @ s.shape @ P))
    accel = float(s.x_tangent @ s.metric @ P @ s.x_tangent)
    return curvature + second + accel - float(s.normal_derivative_S[r + 1])


def _retract(spec, sample_point, z):
    """Projects an ambient point back onto the leaf of sample_point."""
    if spec.family is FoliationFamily.CONCENTRIC_CYLINDERS:
        r = spec.cylinder_r
        y = z[:r + 1]
        norm = np.linalg.norm(y)
        if norm <= SINGULAR_GUARD:
            raise DomainError("stencil reaches the cylinder axis plane")
        return np.concatenate([sample_point.leaf_parameter * y / norm, z[r + 1:]])
    t = sample_point.leaf_parameter
    v = z[:-1]
    norm = np.linalg.norm(v)
    if norm <= SINGULAR_GUARD:
        raise DomainError("stencil reaches a pole")
    return np.append(math.sin(t) * v / norm, math.cos(t))


def leaf_divergence(spec, sample_point, r, h=DEFAULT_STENCIL_STEP):
    """
    div_L(P_r X) by central differences on the leaf.

    Graph-translates use the graph chart of the leaf; the closed-form
    families step along an orthonormal leaf frame and retract onto the leaf.

    Args:
        spec (FoliationSpec): Foliation the sample belongs to.
        sample_point (FoliationSample): Base sample.
        r (int): Newton index.
        h (float): Stencil step.

    Returns:
        float: Discretized leaf divergence.
    """
    if h <= 0:
        raise DomainError("step must be positive")
    _check_r(r, spec.n)
    s = sample_point
    if spec.family is FoliationFamily.GRAPH_TRANSLATES:
        n, t = spec.n, s.leaf_parameter

        def weighted(x):
            leaf = sample(spec, graph_leaf_point(spec.expr, x, t), derivatives=False)
            W = math.sqrt(float(np.linalg.det(leaf.metric)))
            return W * (leaf.stack.P[r] @ leaf.x_tangent)

        W0 = math.sqrt(float(np.linalg.det(s.metric)))
        return chart_divergence(weighted, s.point[:n], h) / W0

    total = 0.0
    for i in range(spec.n):
        e = s.basis[:, i]
        plus = sample(spec, _retract(spec, s, s.point + h * e), derivatives=False)
        minus = sample(spec, _retract(spec, s, s.point - h * e), derivatives=False)
        total += float(e @ (plus.newton_field(r) - minus.newton_field(r))) / (2.0 * h)
    return total


def ambient_divergence(spec, sample_point, r, h=DEFAULT_STENCIL_STEP):
    """
    Ambient divergence of P_r X extended by the foliation.

    On the sphere the field is extended 0-homogeneously to R^{n+2}, whose
    flat divergence then equals the spherical one.
    """
    z = sample_point.point
    dim = len(z)
    total = 0.0
    for a in range(dim):
        e = np.zeros(dim)
        e[a] = h
        plus, minus = z + e, z - e
        if spec.family is FoliationFamily.GEODESIC_SPHERES:
            plus, minus = plus / np.linalg.norm(plus), minus / np.linalg.norm(minus)
        fp = sample(spec, plus, derivatives=False).newton_field(r)
        fm = sample(spec, minus, derivatives=False).newton_field(r)
        total += (fp[a] - fm[a]) / (2.0 * h)
    return total


@dataclass(frozen=True)
class AmbientIdentityCheck:
    ambient: float
    leaf: float
    acceleration: float
    residual: float


def ambient_identity_check(spec, sample_point, r, h=DEFAULT_STENCIL_STEP):
    """
    Compares div_ambient(P_r X) with div_L(P_r X) - <P_r X, X>.

    Returns:
        AmbientIdentityCheck: Both divergences, the <P_r X, X> term and the residual.
    """
    _check_r(r, spec.n)
    ambient = ambient_divergence(spec, sample_point, r, h)
    leaf = leaf_divergence(spec, sample_point, r, h)
    accel = float(sample_point.newton_field(r) @ sample_point.X)
    return AmbientIdentityCheck(ambient, leaf, accel, abs(ambient - (leaf - accel)))


# --- Audits ------------------------------------------------------------------

@dataclass(frozen=True)
class AuditRow:
    point: tuple
    radius: float
    S_r: float
    S_r_plus_1: float
    x_norm: float
    shape_norm: float
    trace_A2_P_r: float
    nullity: int
    P_r_semidefinite: bool
    passed: bool


@dataclass(frozen=True)
class AuditReport:
    r: int
    rows: tuple
    S_r_single_signed: bool
    passed: bool


def _semidefinite(P, tol=1e-12):
    eig = np.linalg.eigvalsh(0.5 * (P + P.T))
    return bool(np.all(eig >= -tol) or np.all(eig <= tol))


def r_minimal_audit(spec, r, sample_points, tol=1e-12):
    """
    Checks the r-minimal leaf conditions on concentric cylinders.

    Per sample: S_{r+1} = 0, X = 0, ||A|| = 1/R, tr(A^2 P_r) = 0,
    nullity n - r and P_r semi-definite; across samples S_r single-signed.

    Returns:
        AuditReport: Per-sample rows and the overall verdict.
    """
    if spec.family is not FoliationFamily.CONCENTRIC_CYLINDERS or spec.cylinder_r != r:
        raise DomainError("r_minimal_audit needs the concentric-cylinders family with index r")
    if r > spec.n - 1:
        raise DomainError(f"r must satisfy r <= n-1 (n={spec.n}), got {r}")
    rows = []
    for p in sample_points:
        s = sample(spec, p)
        R = s.leaf_parameter
        S = s.stack
        shape_norm = float(np.linalg.norm(s.shape, 2))
        trace = float(np.trace(s.shape @ s.shape @ S.P[r]))
        _, nullity = operator_nullity(s.shape)
        semidefinite = _semidefinite(S.P[r])
        x_norm = float(np.linalg.norm(s.X))
        passed = (abs(S.s(r + 1)) <= tol and x_norm <= tol
                  and abs(shape_norm - 1.0 / R) <= tol * max(1.0, 1.0 / R)
                  and abs(trace) <= tol and nullity == spec.n - r and semidefinite)
        rows.append(AuditRow(tuple(float(c) for c in s.point), R, S.s(r), S.s(r + 1), x_norm,
                             shape_norm, trace, nullity, semidefinite, passed))
    signs = {int(np.sign(row.S_r)) for row in rows}
    single = len(signs) == 1 and 0 not in signs
    return AuditReport(r, tuple(rows), single, single and all(row.passed for row in rows))


@dataclass(frozen=True)
class SpherePositivity:
    S2: float
    p1: object
    quantity: float
    positive: bool


def sphere_positivity_core(spec, point):
    """
    On a geodesic-sphere leaf, oriented so that S_1 > 0: S_2, P_1 definiteness
    and tr(P_1) + tr(A^2 P_1) + <X, P_1 X>, which must be positive.
    """
    if spec.family is not FoliationFamily.GEODESIC_SPHERES or spec.n < 2:
        raise DomainError("sphere_positivity_core needs geodesic spheres with n >= 2")
    s = sample(spec, point)
    if s.stack.s(1) < 0:
        s = sample(spec.flipped(), point)
    P1 = s.stack.P[1]
    quantity = (float(np.trace(P1)) + float(np.trace(s.shape @ s.shape @ P1))
                + float(s.x_tangent @ s.metric @ P1 @ s.x_tangent))
    p1 = p1_definiteness(s.principal_curvatures)
    return SpherePositivity(s.stack.s(2), p1, quantity, quantity > 0)


def residual_sweep(spec, point, r, hs, sigma=None):
    """
    Leaf identity residuals over a sequence of stencil steps.

    Returns:
        pandas.DataFrame: Columns family, point, r, h, lhs, rhs, residual,
        order-estimate (NaN on the first row).
    """
    s = sample(spec, point)
    rhs = leaf_identity_rhs(s, r, sigma)
    label = ",".join(format(float(c), ".17g") for c in s.point)
    rows, previous = [], None
    for h in hs:
        lhs = leaf_divergence(spec, s, r, h)
        residual = abs(lhs - rhs)
        order = float("nan")
        if previous is not None:
            order = observed_order(previous[1], residual, previous[0] / h)
        rows.append({"family": spec.family.value, "point": label, "r": r, "h": h,
                     "lhs": lhs, "rhs": rhs, "residual": residual, "order-estimate": order})
        previous = (h, residual)
    return pd.DataFrame(rows, columns=["family", "point", "r", "h", "lhs", "rhs",
                                       "residual", "order-estimate"])
