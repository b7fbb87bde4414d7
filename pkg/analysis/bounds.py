"""Growth and definiteness checks: Hessian growth, P_1 definiteness, |P_r| bounds."""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from models.curvature import elementary_symmetric, newton_stack, normbound_excess
from models.jet import jet_batch
from utils.errors import DimensionError, DomainError, NumericFailure

logger = logging.getLogger(__name__)

MAX_GRID_POINTS = 200_000
GRID_SEED = 7
STABILITY_TOL = 1e-2


class HessianVerdict(str, Enum):
    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class SampleBox:
    """
    Cube [-half_width, half_width]^n sampled on a uniform grid.

    Args:
        half_width (float): Half the side length of the first level.
        grid (int): Grid points per axis on the first level (odd keeps the origin).
    """

    half_width: float = 2.0
    grid: int = 9


@dataclass(frozen=True)
class HessianBoundReport:
    sup_ratio: float
    level_sups: tuple
    verdict: HessianVerdict
    c: float
    candidate_c: float
    candidate_holds: bool


@dataclass(frozen=True)
class P1Definiteness:
    """
    Outcome of the P_1 definiteness test.

    witness is min_i(S_1 - lambda_i), the smallest eigenvalue of P_1 after
    the orientation that makes S_1 >= 0.
    """

    is_positive_definite: bool
    witness: float
    S1: float
    S2: float
    flipped: bool


def _grid(n, half_width, per_axis):
    if per_axis ** n <= MAX_GRID_POINTS:
        axis = np.linspace(-half_width, half_width, per_axis)
        mesh = np.meshgrid(*([axis] * n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    rng = np.random.default_rng(GRID_SEED)
    points = rng.uniform(-half_width, half_width, size=(MAX_GRID_POINTS, n))
    # keep the coordinate axes, where growth usually shows first
    axis = np.linspace(-half_width, half_width, per_axis)
    on_axes = np.zeros((n * per_axis, n))
    for i in range(n):
        on_axes[i * per_axis:(i + 1) * per_axis, i] = axis
    return np.vstack([on_axes, points])


def hessian_ratio(expr, points):
    """||Hess u||_F^2 / (1 + |grad u|^2) at each point."""
    jets = jet_batch(expr, points)
    num = np.sum(jets.hessians ** 2, axis=(1, 2))
    return num / (1.0 + np.sum(jets.gradients ** 2, axis=1))


def hessian_bound(expr, box=SampleBox(), candidate_c=None, levels=3):
    """
    Sup of ||Hess u||^2 / (1 + |grad u|^2) over nested expanding boxes.

    Level k covers the cube of half-width box.half_width * 2^k at the spacing
    of level 0. The verdict is bounded when the last level does not raise
    the sup by more than STABILITY_TOL relative.

    Args:
        expr (ScalarFieldExpr): Field u.
        box (SampleBox): First sampling level.
        candidate_c (float | None): Constant to test against the sup.
        levels (int): Number of levels, at least 2.

    Returns:
        HessianBoundReport: Sup, per-level sups, verdict and constants.
    """
    if levels < 2:
        raise DomainError("hessian_bound needs at least two levels")
    if box.grid < 2 or box.half_width <= 0:
        raise DomainError("sample box needs grid >= 2 and positive half-width")
    n = expr.dimension
    level_sups = []
    for k in range(levels):
        per_axis = (box.grid - 1) * 2 ** k + 1
        points = _grid(n, box.half_width * 2 ** k, per_axis)
        level_sups.append(float(np.max(hessian_ratio(expr, points))))

    sup = max(level_sups)
    stable = level_sups[-1] <= level_sups[-2] * (1.0 + STABILITY_TOL) + 1e-12
    verdict = HessianVerdict.BOUNDED if stable else HessianVerdict.UNBOUNDED
    holds = None if candidate_c is None else sup <= candidate_c
    logger.info("[hessian] level sups %s -> %s", level_sups, verdict.value)
    return HessianBoundReport(
        sup_ratio=sup,
        level_sups=tuple(level_sups),
        verdict=verdict,
        c=sup if stable else None,
        candidate_c=candidate_c,
        candidate_holds=holds,
    )


def p1_definiteness(lam, orientation_sign=1):
    """
    Whether P_1 = S_1 I - A is positive definite once S_1 >= 0.

    When S_2 > 0, S_1^2 = |A|^2 + 2 S_2 > lambda_i^2 forces a positive answer.

    Args:
        lam (sequence[float]): Principal curvatures, not all zero.
        orientation_sign (int): +1 or -1, the orientation they were taken in.

    Returns:
        P1Definiteness: Verdict, witness and the oriented S_1, S_2.

    Raises:
        DomainError: All curvatures vanish or the sign is not +-1.
        NumericFailure: S_1 = 0 while S_2 > 0.
    """
    if orientation_sign not in (1, -1):
        raise DomainError("orientation sign must be +1 or -1")
    lam = orientation_sign * np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DimensionError("eigenvalues must be a non-empty vector")
    scale = float(np.max(np.abs(lam)))
    if scale == 0.0:
        raise DomainError("eigenvalue vector must be nonzero")

    flipped = lam.sum() < 0
    if flipped:
        lam = -lam
    S = elementary_symmetric(lam)
    s1 = float(S[1])
    s2 = float(S[2]) if lam.size >= 2 else 0.0
    tol = 1e-12 * max(1.0, scale * scale)
    if abs(s1) <= tol and s2 > tol:
        raise NumericFailure(f"S_1 = {s1:.3e} with S_2 = {s2:.3e} > 0")
    witness = float(np.min(s1 - lam))
    return P1Definiteness(witness > 0, witness, s1, s2, bool(flipped))


def normbound_check(A, v):
    """
    Checks |P_r v| <= max_r ||P_r|| |v| for every r, for a shape operator A.

    Returns:
        tuple[bool, float]: Whether it holds within 1e-12 and the worst excess.
    """
    A = np.asarray(A, dtype=float)
    lam = np.sort(np.linalg.eigvals(A).real)
    stack = newton_stack(A, lam)
    excess = normbound_excess(stack, v)
    return excess <= 1e-12, excess
