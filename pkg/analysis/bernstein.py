"""Bernstein-type classification of an entire graph."""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from analysis.bounds import HessianVerdict, SampleBox, hessian_bound
from analysis.integrability import DEFAULT_ORDER, DEFAULT_RADII, Verdict, l1_integrability
from analysis.nullity import DEFAULT_TOL_RANK, nullity_report

logger = logging.getLogger(__name__)


class Classification(str, Enum):
    HYPERPLANE = "hyperplane-orthogonal-to-(-V,1)"
    NULLITY_BOUND_ONLY = "nullity-bound-only"
    HYPOTHESES_NOT_MET = "hypotheses-not-met"


@dataclass(frozen=True)
class BernsteinConfig:
    """
    Knobs of the classification pipeline.

    Args:
        radii (tuple): L1 radius schedule.
        quadrature_order (int): Gauss-Legendre order for the L1 integrals.
        box (SampleBox): First level of the Hessian-growth sampling.
        sample_count (int): Random curvature samples (the origin is added).
        sample_half_width (float): Cube the samples are drawn from.
        tol_rank (float): Relative rank tolerance.
        seed (int): Sampling seed.
    """

    radii: tuple = DEFAULT_RADII
    quadrature_order: int = DEFAULT_ORDER
    box: SampleBox = field(default_factory=SampleBox)
    sample_count: int = 64
    sample_half_width: float = 2.0
    tol_rank: float = DEFAULT_TOL_RANK
    seed: int = 11


@dataclass(frozen=True)
class BernsteinReport:
    classification: Classification
    normal: tuple
    reasons: tuple
    integrability: object
    hessian: object
    nullity: object


def curvature_samples(n, config):
    rng = np.random.default_rng(config.seed)
    points = rng.uniform(-config.sample_half_width, config.sample_half_width,
                         size=(config.sample_count, n))
    return np.vstack([np.zeros((1, n)), points])


def bernstein_classify(expr, V=None, config=None):
    """
    Runs every hypothesis check and classifies the graph.

    Hypotheses: |grad u - V| in L1, ||Hess u||^2 <= c(1 + |grad u|^2), and
    S_1 = nH, S_2 = n(n-1)R/2 without observed sign change. If they pass and
    every sample has nullity n, the graph is reported as the hyperplane
    orthogonal to (-V, 1).

    Args:
        expr (ScalarFieldExpr): Field u.
        V (sequence[float] | None): Parallel vector (zero by default).
        config (BernsteinConfig | None): Pipeline settings.

    Returns:
        BernsteinReport: Classification, hyperplane normal when classified,
        the failed hypotheses and the sub-reports.
    """
    config = config or BernsteinConfig()
    n = expr.dimension
    V = np.zeros(n) if V is None else np.asarray(V, dtype=float)

    integ = l1_integrability(expr, V, config.radii, config.quadrature_order)
    hess = hessian_bound(expr, config.box)
    nullity = nullity_report(expr, curvature_samples(n, config), config.tol_rank)
    survey = nullity.sign_survey

    reasons = []
    if integ.verdict is not Verdict.CONVERGED:
        reasons.append(f"|grad u - V| not integrable ({integ.verdict.value})")
    if hess.verdict is not HessianVerdict.BOUNDED:
        reasons.append("Hessian growth unbounded")
    for j in (1, 2):
        if j <= n and survey.entry(j).sign_change:
            reasons.append(survey.statement(j))

    if reasons:
        classification, normal = Classification.HYPOTHESES_NOT_MET, None
    elif all(row.nullity == n for row in nullity.samples):
        U = np.append(-V, 1.0)
        classification = Classification.HYPERPLANE
        normal = tuple(float(c) for c in U / np.linalg.norm(U))
    else:
        classification, normal = Classification.NULLITY_BOUND_ONLY, None
        reasons.append(f"least observed nullity {nullity.verdict_nullity_lower_bound} < n={n}")

    logger.info("[bernstein] %s", classification.value)
    return BernsteinReport(classification, normal, tuple(reasons), integ, hess, nullity)
