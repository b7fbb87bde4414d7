"""Second-order jets of scalar fields.

Exact jets come from pushing dense (value, gradient, Hessian) triples through
the expression tree with the sum, product and chain rules. All propagation
is batched over an (m, n) array of points; jet2 is the single-point view.
A central finite-difference estimator serves as the oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from models.field_expr import Add, Const, Dot, Exp, Mul, Pow, Var, evaluate
from utils.errors import DimensionError, DomainError

DEFAULT_FD_STEP = 1e-4


@dataclass(frozen=True)
class Jet2:
    """
    Second-order jet of u at a point.

    The Hessian is stored as a full matrix; every propagation rule produces
    it exactly symmetric.
    """

    point: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    @property
    def dimension(self):
        return len(self.point)


@dataclass(frozen=True)
class JetBatch:
    """Jets at m points: values (m,), gradients (m, n), Hessians (m, n, n) or None."""

    points: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray = None

    def __len__(self):
        return len(self.values)

    def at(self, i):
        """Returns the Jet2 of the i-th point."""
        if self.hessians is None:
            raise DomainError("batch was propagated without Hessians")
        return Jet2(self.points[i].copy(), float(self.values[i]),
                    self.gradients[i].copy(), self.hessians[i].copy())


def _outer(a, b):
    return a[:, :, None] * b[:, None, :]


def _propagate(node, X, order):
    """Returns (value, gradient, Hessian) arrays for node over the points X."""
    m, n = X.shape

    def zeros():
        grad = np.zeros((m, n))
        hess = np.zeros((m, n, n)) if order >= 2 else None
        return grad, hess

    if isinstance(node, Const):
        grad, hess = zeros()
        return np.full(m, node.value), grad, hess

    if isinstance(node, Var):
        grad, hess = zeros()
        grad[:, node.index - 1] = 1.0
        return X[:, node.index - 1].copy(), grad, hess

    if isinstance(node, Dot):
        c = np.asarray(node.coeffs, dtype=float)
        value = c[0] * X[:, 0]
        for j in range(1, n):
            value = value + c[j] * X[:, j]
        _, hess = zeros()
        return value, np.broadcast_to(c, (m, n)).copy(), hess

    if isinstance(node, Add):
        av, ag, ah = _propagate(node.left, X, order)
        bv, bg, bh = _propagate(node.right, X, order)
        return av + bv, ag + bg, (ah + bh if order >= 2 else None)

    if isinstance(node, Mul):
        av, ag, ah = _propagate(node.left, X, order)
        bv, bg, bh = _propagate(node.right, X, order)
        value = av * bv
        grad = ag * bv[:, None] + bg * av[:, None]
        hess = None
        if order >= 2:
            hess = (ah * bv[:, None, None] + bh * av[:, None, None]
                    + (_outer(ag, bg) + _outer(bg, ag)))
        return value, grad, hess

    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            grad, hess = zeros()
            return np.ones(m), grad, hess
        fv, fg, fh = _propagate(node.base, X, order)
        if k == 1:
            return fv, fg, fh
        d1 = k * fv ** (k - 1)
        d2 = k * (k - 1) * fv ** (k - 2)
        grad = fg * d1[:, None]
        hess = None
        if order >= 2:
            hess = fh * d1[:, None, None] + _outer(fg, fg) * d2[:, None, None]
        return fv ** k, grad, hess

    if isinstance(node, Exp):
        fv, fg, fh = _propagate(node.arg, X, order)
        e = np.exp(fv)
        grad = fg * e[:, None]
        hess = None
        if order >= 2:
            hess = (fh + _outer(fg, fg)) * e[:, None, None]
        return e, grad, hess

    raise TypeError(f"unknown node {node!r}")


def _as_points(expr, points):
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != expr.dimension:
        raise DimensionError(
            f"points have {X.shape[1]} coordinates, field has n={expr.dimension}"
        )
    return X


def jet_batch(expr, points, order=2):
    """
    Exact jets at many points.

    Args:
        expr (ScalarFieldExpr): Field.
        points (array-like): (m, n) array of points.
        order (int): 1 for value and gradient only, 2 to include Hessians.

    Returns:
        JetBatch: Stacked jets in input order.
    """
    X = _as_points(expr, points)
    value, grad, hess = _propagate(expr.root, X, order)
    return JetBatch(X, value, grad, hess if order >= 2 else None)


def jet2(expr, p):
    """
    Exact second-order jet of the field at p.

    Args:
        expr (ScalarFieldExpr): Field.
        p (sequence[float]): Point in R^n.

    Returns:
        Jet2: Value, gradient and Hessian at p.
    """
    point = np.asarray(p, dtype=float)
    if point.ndim != 1 or len(point) != expr.dimension:
        raise DimensionError(
            f"point has {point.size} coordinates, field has n={expr.dimension}"
        )
    return jet_batch(expr, point[None, :]).at(0)


def fd_jet2(expr, p, h=DEFAULT_FD_STEP):
    """
    Central finite-difference estimate of the jet (the oracle).

    Args:
        expr (ScalarFieldExpr): Field.
        p (sequence[float]): Point in R^n.
        h (float): Step, > 0.

    Returns:
        Jet2: Value, O(h^2) gradient and Hessian estimates.
    """
    if h <= 0:
        raise DomainError("finite-difference step must be positive")
    point = np.asarray(p, dtype=float)
    n = expr.dimension
    if point.ndim != 1 or len(point) != n:
        raise DimensionError(f"point has {point.size} coordinates, field has n={n}")

    def u(shift):
        return evaluate(expr, point + shift)

    eye = np.eye(n) * h
    centre = u(np.zeros(n))
    grad = np.empty(n)
    hess = np.empty((n, n))
    for i in range(n):
        plus, minus = u(eye[i]), u(-eye[i])
        grad[i] = (plus - minus) / (2.0 * h)
        hess[i, i] = (plus - 2.0 * centre + minus) / (h * h)
        for j in range(i + 1, n):
            mixed = (u(eye[i] + eye[j]) - u(eye[i] - eye[j])
                     - u(-eye[i] + eye[j]) + u(-eye[i] - eye[j])) / (4.0 * h * h)
            hess[i, j] = hess[j, i] = mixed
    return Jet2(point.copy(), centre, grad, hess)


def jet_distance(a, b):
    """Max-norm distance between the gradients and Hessians of two jets."""
    return max(float(np.max(np.abs(a.gradient - b.gradient))),
               float(np.max(np.abs(a.hessian - b.hessian))))


def observed_order(coarse_error, fine_error, ratio):
    """
    Convergence order implied by two errors at steps h and h/ratio.

    Returns:
        float: log(coarse/fine)/log(ratio), inf when the fine error vanished.
    """
    if fine_error == 0.0:
        return math.inf
    if coarse_error == 0.0:
        return 0.0
    return math.log(coarse_error / fine_error) / math.log(ratio)


def richardson_check(expr, p, h=DEFAULT_FD_STEP):
    """
    Compares the oracle at h and h/2 against the exact jet.

    Returns:
        dict: Errors at both steps and the observed order.
    """
    exact = jet2(expr, p)
    coarse = jet_distance(exact, fd_jet2(expr, p, h))
    fine = jet_distance(exact, fd_jet2(expr, p, h / 2.0))
    return {"h": h, "error_h": coarse, "error_half_h": fine,
            "order": observed_order(coarse, fine, 2.0)}
