"""Relative nullity, the S_j vanishing cascade and sign censuses of S_j."""

import logging
from dataclasses import dataclass

import numpy as np

from models.curvature import batch_frames
from utils.errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_TOL_RANK = 1e-8
DEFAULT_CASCADE_TOL = 1e-12
CASCADE_SLACK = 1e3


@dataclass(frozen=True)
class CascadeCheck:
    """
    triggered: |S_{r+1}|, |S_{r+2}| <= tol.
    holds: |S_j| <= tol' for every j >= r+1, tol' = 1e3 * tol * max(1, norm_bound).
    """

    triggered: bool
    holds: bool
    tolerance: float


@dataclass(frozen=True)
class NullitySample:
    point: tuple
    rank: int
    nullity: int
    cascade_index: int
    S: tuple
    cascade_triggered: bool = None
    cascade_holds: bool = None


@dataclass(frozen=True)
class SignCensus:
    index: int
    positive: int
    negative: int
    zero: int

    @property
    def sign_change(self):
        return self.positive > 0 and self.negative > 0


@dataclass(frozen=True)
class SignSurvey:
    """Per-index S_j sign counts; sampling can only falsify sign-constancy."""

    sample_count: int
    census: tuple

    def entry(self, j):
        return self.census[j - 1]

    def statement(self, j):
        if self.entry(j).sign_change:
            return f"S_{j} changes sign on {self.sample_count} samples"
        return f"no sign change observed on {self.sample_count} samples"


@dataclass(frozen=True)
class NullityReport:
    samples: tuple
    verdict_nullity_lower_bound: int
    sign_survey: SignSurvey


def operator_nullity(A, tol_rank=DEFAULT_TOL_RANK):
    """
    Rank and nullity of A from its singular values.

    Singular values at or below tol_rank * max(1, ||A||_2) count as zero.

    Returns:
        tuple[int, int]: (rank, nullity) with rank + nullity = n.
    """
    if tol_rank <= 0:
        raise DomainError("rank tolerance must be positive")
    A = np.asarray(A, dtype=float)
    sv = np.linalg.svd(A, compute_uv=False)
    threshold = tol_rank * max(1.0, float(sv[0]) if sv.size else 0.0)
    rank = int(np.sum(sv > threshold))
    return rank, A.shape[0] - rank


def cascade_index(S, tol=DEFAULT_CASCADE_TOL):
    """Least j >= 1 with |S_k| <= tol for every k >= j (n+1 when S_n is nonzero)."""
    S = np.asarray(S, dtype=float)
    n = len(S) - 1
    j = n + 1
    while j > 1 and abs(S[j - 1]) <= tol:
        j -= 1
    return j


def vanishing_cascade(S, r, tol=DEFAULT_CASCADE_TOL, norm_bound=1.0):
    """
    Checks that S_{r+1} = S_{r+2} = 0 drags every later S_j to zero.

    Args:
        S (sequence[float]): S_0..S_n.
        r (int): Index with 0 <= r <= n-1.
        tol (float): Threshold for S_{r+1} and S_{r+2}.
        norm_bound (float): max_r ||P_r||, scales the tolerance on later S_j.

    Returns:
        CascadeCheck: Whether the premise held and whether the cascade did.
    """
    S = np.asarray(S, dtype=float)
    n = len(S) - 1
    if not 0 <= r <= n - 1:
        raise DomainError(f"r must satisfy 0 <= r <= n-1 (n={n}), got {r}")

    def s(k):
        return S[k] if k <= n else 0.0

    loose = CASCADE_SLACK * tol * max(1.0, norm_bound)
    triggered = abs(s(r + 1)) <= tol and abs(s(r + 2)) <= tol
    holds = all(abs(S[j]) <= loose for j in range(r + 1, n + 1))
    return CascadeCheck(triggered, holds, loose)


def _census(S, scale, tol):
    m, width = S.shape
    census = []
    for j in range(1, width):
        zero_at = tol * np.maximum(1.0, scale) ** j
        values = S[:, j]
        zero = np.abs(values) <= zero_at
        census.append(SignCensus(
            index=j,
            positive=int(np.sum((values > 0) & ~zero)),
            negative=int(np.sum((values < 0) & ~zero)),
            zero=int(np.sum(zero)),
        ))
    return SignSurvey(sample_count=m, census=tuple(census))


def sign_survey(expr, samples, tol=DEFAULT_CASCADE_TOL):
    """
    Sign census of S_1..S_n over sample points.

    Values with |S_j| <= tol * max(1, max|lambda|)^j count as zero.

    Returns:
        SignSurvey: Counts per index.
    """
    frames = batch_frames(expr, samples)
    scale = np.max(np.abs(frames.principal_curvatures), axis=1)
    return _census(frames.S, scale, tol)


def nullity_report(expr, samples, tol_rank=DEFAULT_TOL_RANK, r=None,
                   cascade_tol=DEFAULT_CASCADE_TOL):
    """
    Relative nullity of the graph at each sample.

    Args:
        expr (ScalarFieldExpr): Field u.
        samples (array-like): (m, n) sample points.
        tol_rank (float): Relative rank tolerance, > 0.
        r (int | None): If given, the cascade premise S_{r+1} = S_{r+2} = 0
            is checked at every sample.
        cascade_tol (float): Zero threshold for S_j.

    Returns:
        NullityReport: Per-sample rank, nullity and cascade data, the least
        observed nullity and a sign census.
    """
    frames = batch_frames(expr, samples)
    n = frames.gradients.shape[1]
    if r is not None and not 0 <= r <= n - 1:
        raise DomainError(f"r must satisfy 0 <= r <= n-1 (n={n}), got {r}")
    rows = []
    for i in range(len(frames.points)):
        rank, nullity = operator_nullity(frames.shape[i], tol_rank)
        S = frames.S[i]
        triggered = holds = None
        if r is not None:
            norm_bound = max(float(np.linalg.norm(P, 2)) for P in frames.P[i])
            check = vanishing_cascade(S, r, cascade_tol, norm_bound)
            triggered, holds = check.triggered, check.holds
        rows.append(NullitySample(
            point=tuple(float(x) for x in frames.points[i]),
            rank=rank,
            nullity=nullity,
            cascade_index=cascade_index(S, cascade_tol),
            S=tuple(float(s) for s in S),
            cascade_triggered=triggered,
            cascade_holds=holds,
        ))
    scale = np.max(np.abs(frames.principal_curvatures), axis=1)
    lower = min(row.nullity for row in rows)
    logger.info("[nullity] %d samples, least nullity %d", len(rows), lower)
    return NullityReport(samples=tuple(rows), verdict_nullity_lower_bound=lower,
                         sign_survey=_census(frames.S, scale, cascade_tol))
