"""Integrals over expanding balls: L1 integrability of |grad u - V| and the Yau flux test.

Up to n = 4 the ball B_R is cut into radial shells of width at most
SHELL_WIDTH and each shell is integrated with a tensor-product Gauss-Legendre
rule in hyperspherical coordinates. For 5 <= n <= 8 shells are sampled by
Monte Carlo with a fixed seed.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gamma, roots_legendre

from models.curvature import batch_frames
from models.jet import jet_batch
from utils.errors import DimensionError, DomainError
from utils.workers import ordered_sum, run_ordered

logger = logging.getLogger(__name__)

DEFAULT_RADII = (1.0, 2.0, 4.0, 6.0)
DEFAULT_ORDER = 12
SHELL_WIDTH = 0.5
POLAR_PIECES = 2
AZIMUTH_PIECES = 4
MAX_GAUSS_DIMENSION = 4
MAX_MC_DIMENSION = 8
MC_SEED = 1729
MC_SAMPLES = 20000
MC_DIRECTIONS = 2048
CHUNK = 20000
INCREMENT_TOL = 1e-6
FLUX_TOL = 1e-6


class Verdict(str, Enum):
    CONVERGED = "converged"
    DIVERGING = "diverging"
    INCONCLUSIVE = "inconclusive"


class YauVerdict(str, Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    HYPOTHESIS_NOT_MET = "hypothesis-not-met"


@dataclass(frozen=True)
class IntegrabilityReport:
    """
    Truncated integrals of |grad u - V| over B_R for each R of the schedule.

    fitted_decay_exponent is minus the log-log slope of sup_{|x|=R}|grad u - V|
    over the last three radii (None when the integrand vanishes there).
    """

    radii: tuple
    truncated_integrals: tuple
    fitted_decay_exponent: float
    verdict: Verdict
    limit_estimate: float
    mode: str
    sphere_sups: tuple = field(default=())


@dataclass(frozen=True)
class YauReport:
    """Boundary fluxes and L1 norms of X = P_r grad g over B_R."""

    radii: tuple
    fluxes: tuple
    l1_norms: tuple
    boundary_norms: tuple
    l1_verdict: Verdict
    verdict: YauVerdict


def _gauss(a, b, order):
    x, w = roots_legendre(order)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def _composite(a, b, pieces, order):
    edges = np.linspace(a, b, pieces + 1)
    parts = [_gauss(lo, hi, order) for lo, hi in zip(edges[:-1], edges[1:])]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def unit_sphere_rule(n, order):
    """
    Nodes on S^{n-1} and weights summing to its area.

    Returns:
        tuple[np.ndarray, np.ndarray]: (m, n) unit vectors and (m,) weights.
    """
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    grids = [_composite(0.0, math.pi, POLAR_PIECES, order) for _ in range(n - 2)]
    grids.append(_composite(0.0, 2.0 * math.pi, AZIMUTH_PIECES, order))
    angles = [a.ravel() for a in np.meshgrid(*(g[0] for g in grids), indexing="ij")]
    weights = [w.ravel() for w in np.meshgrid(*(g[1] for g in grids), indexing="ij")]

    X = np.empty((angles[0].size, n))
    w = np.ones(angles[0].size)
    sin_prod = np.ones(angles[0].size)
    for k, (phi, wk) in enumerate(zip(angles, weights)):
        X[:, k] = sin_prod * np.cos(phi)
        w *= wk * np.sin(phi) ** (n - 2 - k)
        sin_prod = sin_prod * np.sin(phi)
    X[:, n - 1] = sin_prod
    return X, w


def unit_ball_volume(n):
    return math.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


def check_schedule(radii):
    """Validates a radius schedule: at least 3 entries, positive, increasing."""
    radii = tuple(float(R) for R in radii)
    if len(radii) < 3:
        raise DomainError(f"radius schedule needs at least 3 entries, got {len(radii)}")
    if radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise DomainError("radius schedule must be positive and strictly increasing")
    return radii


def _chunked(func, points):
    if len(points) <= CHUNK:
        return func(points)
    return np.concatenate([func(points[i:i + CHUNK]) for i in range(0, len(points), CHUNK)])


@dataclass
class BallQuadrature:
    """
    Integration over balls and spheres centred at the origin of R^n.

    Args:
        n (int): Dimension, 1 <= n <= 8.
        order (int): Gauss-Legendre points per sub-interval.
        seed (int): Monte Carlo seed (used for n >= 5).
        mc_samples (int): Monte Carlo points per shell.
        max_workers (int | None): Worker cap for the radial cells.
    """

    n: int
    order: int = DEFAULT_ORDER
    seed: int = MC_SEED
    mc_samples: int = MC_SAMPLES
    max_workers: int = None

    def __post_init__(self):
        if not 1 <= self.n <= MAX_MC_DIMENSION:
            raise DomainError(f"ball integrals support 1 <= n <= {MAX_MC_DIMENSION}, got n={self.n}")
        if self.order < 1:
            raise DomainError("quadrature order must be positive")
        if self.mode == "gauss":
            self._sphere = unit_sphere_rule(self.n, self.order)
        else:
            rng = np.random.default_rng(self.seed + 1)
            d = rng.standard_normal((MC_DIRECTIONS, self.n))
            d /= np.linalg.norm(d, axis=1)[:, None]
            area = self.n * unit_ball_volume(self.n)
            self._sphere = (d, np.full(MC_DIRECTIONS, area / MC_DIRECTIONS))

    @property
    def mode(self):
        return "gauss" if self.n <= MAX_GAUSS_DIMENSION else "monte-carlo"

    def sphere(self, R):
        """Nodes and weights on the sphere of radius R."""
        X, w = self._sphere
        return R * X, w * R ** (self.n - 1)

    def _cell(self, integrand, a, b):
        rho, w_rho = _gauss(a, b, self.order)
        X, w_s = self._sphere
        points = (rho[:, None, None] * X[None, :, :]).reshape(-1, self.n)
        weights = ((w_rho * rho ** (self.n - 1))[:, None] * w_s[None, :]).ravel()
        return float(np.dot(_chunked(integrand, points), weights))

    def shell_integrals(self, integrand, radii):
        """
        Integral of integrand over each shell R_{k-1} <= |x| <= R_k (R_0 = 0).

        Args:
            integrand (callable): (m, n) points -> (m,) values.
            radii (sequence[float]): Increasing radii.

        Returns:
            list[float]: One value per radius, reduced in cell order.
        """
        bounds = list(zip((0.0,) + tuple(radii[:-1]), radii))
        if self.mode == "monte-carlo":
            rng = np.random.default_rng(self.seed)
            return [self._mc_shell(integrand, a, b, rng) for a, b in bounds]

        cells = []
        for shell, (a, b) in enumerate(bounds):
            pieces = max(1, math.ceil((b - a) / SHELL_WIDTH))
            edges = np.linspace(a, b, pieces + 1)
            cells.extend((shell, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
        values = run_ordered(lambda cell: self._cell(integrand, cell[1], cell[2]),
                             cells, self.max_workers)
        return [ordered_sum(v for (s, _, _), v in zip(cells, values) if s == shell)
                for shell in range(len(bounds))]

    def _mc_shell(self, integrand, a, b, rng):
        d = rng.standard_normal((self.mc_samples, self.n))
        d /= np.linalg.norm(d, axis=1)[:, None]
        u = rng.random(self.mc_samples)
        rho = (a ** self.n + u * (b ** self.n - a ** self.n)) ** (1.0 / self.n)
        volume = unit_ball_volume(self.n) * (b ** self.n - a ** self.n)
        return float(volume * np.mean(_chunked(integrand, rho[:, None] * d)))

    def cumulative(self, integrand, radii):
        """Integrals over the balls B_R for each R, accumulated in shell order."""
        totals, running = [], 0.0
        for value in self.shell_integrals(integrand, radii):
            running += value
            totals.append(running)
        return totals


def classify_growth(radii, integrals, exponent, n):
    """
    Verdict on a sequence of truncated integrals.

    converged: the last increment is below INCREMENT_TOL*max(1, I) and the
    integrand decays faster than |x|^{-n} (or vanishes).
    diverging: the growth per unit radius does not decrease over the last
    three radii.
    """
    last = integrals[-1]
    increment = integrals[-1] - integrals[-2]
    if increment <= INCREMENT_TOL * max(1.0, abs(last)) and (exponent is None or exponent > n):
        return Verdict.CONVERGED
    slope_prev = (integrals[-2] - integrals[-3]) / (radii[-2] - radii[-3])
    slope_last = increment / (radii[-1] - radii[-2])
    if slope_last > 0 and slope_last >= slope_prev * (1.0 - 1e-9):
        return Verdict.DIVERGING
    return Verdict.INCONCLUSIVE


def fit_decay_exponent(radii, sups):
    """Minus the log-log slope of sups against radii, over the last three entries."""
    R = np.asarray(radii[-3:], dtype=float)
    s = np.asarray(sups[-3:], dtype=float)
    keep = s > 1e-300
    if keep.sum() < 2:
        return None
    slope = np.polyfit(np.log(R[keep]), np.log(s[keep]), 1)[0]
    return float(-slope)


def _parallel_vector(expr, V):
    n = expr.dimension
    if V is None:
        return np.zeros(n)
    V = np.asarray(V, dtype=float)
    if V.shape != (n,):
        raise DimensionError(f"V has {V.size} entries, field has n={n}")
    return V


def l1_integrability(expr, V=None, radii=DEFAULT_RADII, quadrature_order=DEFAULT_ORDER,
                     max_workers=None):
    """
    Truncated L1 norms of |grad u - V| with a convergence verdict.

    Args:
        expr (ScalarFieldExpr): Field u.
        V (sequence[float] | None): Candidate limit of grad u (zero by default).
        radii (sequence[float]): Increasing schedule, at least 3 entries.
        quadrature_order (int): Gauss-Legendre points per sub-interval.
        max_workers (int | None): Worker cap.

    Returns:
        IntegrabilityReport: Integrals, decay exponent, verdict and limit.

    Raises:
        DomainError: Short schedule or n > 8.
    """
    radii = check_schedule(radii)
    V = _parallel_vector(expr, V)
    quad = BallQuadrature(expr.dimension, quadrature_order, max_workers=max_workers)

    def integrand(points):
        jets = jet_batch(expr, points, order=1)
        return np.linalg.norm(jets.gradients - V, axis=1)

    integrals = quad.cumulative(integrand, radii)
    sups = [float(np.max(integrand(quad.sphere(R)[0]))) for R in radii]
    exponent = fit_decay_exponent(radii, sups)
    verdict = classify_growth(radii, integrals, exponent, expr.dimension)
    logger.info("[quadrature] L1 verdict %s after R=%g (I=%.6g)", verdict.value, radii[-1], integrals[-1])
    return IntegrabilityReport(
        radii=radii,
        truncated_integrals=tuple(integrals),
        fitted_decay_exponent=exponent,
        verdict=verdict,
        limit_estimate=integrals[-1] if verdict is Verdict.CONVERGED else None,
        mode=quad.mode,
        sphere_sups=tuple(sups),
    )


def _x_field(expr, V, r, points):
    """W, G and chart components of X = P_r G^{-1}(grad u - V) at points."""
    frames = batch_frames(expr, points)
    grad_g = np.linalg.solve(frames.metric, (frames.gradients - V)[:, :, None])[:, :, 0]
    X = np.einsum("mij,mj->mi", frames.P[:, r], grad_g)
    return frames.W, frames.metric, X


def yau_flux_diagnostic(expr, V=None, r=0, radii=DEFAULT_RADII,
                        quadrature_order=DEFAULT_ORDER, max_workers=None):
    """
    Flux of X = P_r grad g through the graph over the spheres |x| = R.

    The flux equals the integral of div X = L_r g over the graph of B_R. The
    report never asserts div X = 0; it only checks whether the fluxes vanish
    when the L1 norms of |X| converge.

    Returns:
        YauReport: Fluxes, L1 norms, boundary norms and verdicts.
    """
    radii = check_schedule(radii)
    V = _parallel_vector(expr, V)
    n = expr.dimension
    if not 0 <= r <= n - 1:
        raise DomainError(f"r must satisfy 0 <= r <= n-1 (n={n}), got {r}")
    quad = BallQuadrature(n, quadrature_order, max_workers=max_workers)

    def norm_density(points):
        W, G, X = _x_field(expr, V, r, points)
        return W * np.sqrt(np.maximum(np.einsum("mi,mij,mj->m", X, G, X), 0.0))

    fluxes, boundary = [], []
    for R in radii:
        nodes, weights = quad.sphere(R)
        W, G, X = _x_field(expr, V, r, nodes)
        outward = np.einsum("mi,mi->m", X, nodes / R)
        fluxes.append(float(np.dot(W * outward, weights)))
        boundary.append(float(np.dot(norm_density(nodes), weights)))

    l1 = quad.cumulative(norm_density, radii)
    l1_verdict = classify_growth(radii, l1, None, n)
    if l1_verdict is not Verdict.CONVERGED:
        verdict = YauVerdict.HYPOTHESIS_NOT_MET
    elif abs(fluxes[-1]) <= FLUX_TOL * max(1.0, abs(l1[-1])):
        verdict = YauVerdict.CONSISTENT
    else:
        verdict = YauVerdict.INCONSISTENT
    logger.info("[yau] r=%d flux(R=%g)=%.3e, verdict %s", r, radii[-1], fluxes[-1], verdict.value)
    return YauReport(
        radii=radii,
        fluxes=tuple(fluxes),
        l1_norms=tuple(l1),
        boundary_norms=tuple(boundary),
        l1_verdict=l1_verdict,
        verdict=verdict,
    )
