"""Command-line entry point of the curvature lab.

Parses the run configuration, dispatches to the geometry and analysis
modules and writes the report as JSON, CSV or text.
"""

import logging
import os
import sys

import numpy as np
from dotenv import load_dotenv

from analysis.bernstein import BernsteinConfig, bernstein_classify, curvature_samples
from analysis.bounds import SampleBox, hessian_bound
from analysis.integrability import DEFAULT_ORDER, DEFAULT_RADII, l1_integrability, yau_flux_diagnostic
from analysis.nullity import DEFAULT_TOL_RANK, nullity_report
from models.curvature import (
    DEFAULT_LR_STEP,
    LR_SIGN_CONVENTION,
    curvature_summary,
    gradients_fg,
    lr_divergence_check,
    lr_f,
    lr_g,
    point_geometry,
    resolve_gradient_assignment,
    stack_identities,
)
from models.foliation import (
    FoliationFamily,
    FoliationSpec,
    calibrate_sigma,
    cylinder_point,
    leaf_divergence,
    leaf_identity_rhs,
    ambient_identity_check,
    r_minimal_audit,
    residual_sweep,
    sample,
)
from utils.config import load_config
from utils.errors import ConfigError, DimensionError, DomainError, ExprSyntaxError, NumericFailure
from utils.reporting import SCHEMA_VERSION, Command, CurvatureOntology, dump_json

logger = logging.getLogger("curvlab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
ASSIGNMENT_SEED = 5
ASSIGNMENT_PROBES = 3


def _V(config):
    return np.zeros(config.n) if config.V is None else np.asarray(config.V)


def _r(config, default=None):
    if config.r is None:
        if default is None:
            raise ConfigError(f"{config.command.value} needs --r")
        return default
    return config.r


def run_frame(config):
    frame, stack, support = point_geometry(config.expr, config.point, _V(config))
    summary = curvature_summary(frame, stack)
    if config.format == "text":
        print(f"[frame] ✅ W = {frame.W:.6g}, lambda = {np.round(frame.principal_curvatures, 6)}",
              file=sys.stderr)
    return CurvatureOntology.format_frame(frame, stack, summary,
                                          support if config.V is not None else None)


def run_newton(config):
    frame, stack, _ = point_geometry(config.expr, config.point)
    return CurvatureOntology.format_newton(stack, stack_identities(frame.shape, stack))


def run_lr(config):
    r = _r(config, 0)
    h = config.h or DEFAULT_LR_STEP
    frame, stack, support = point_geometry(config.expr, config.point, _V(config))
    gradients = gradients_fg(config.expr, frame, support)
    return CurvatureOntology.format_lr(
        r, lr_f(config.expr, frame, stack, support, r, h), lr_g(frame, stack, support, r),
        support, gradients)


def run_check_lr(config):
    check = lr_divergence_check(config.expr, config.point, _r(config, 0), config.which,
                                config.h or DEFAULT_LR_STEP, _V(config))
    return {"which": config.which, "r": _r(config, 0), **CurvatureOntology.as_payload(check)}


def run_integrability(config):
    report = l1_integrability(config.expr, _V(config), config.radii or DEFAULT_RADII,
                              config.quadrature_order or DEFAULT_ORDER)
    return CurvatureOntology.format_integrability(report)


def run_hessian_bound(config):
    box = SampleBox(config.box or SampleBox.half_width, config.grid or SampleBox.grid)
    return CurvatureOntology.as_payload(hessian_bound(config.expr, box, config.candidate_c))


def run_yau(config):
    report = yau_flux_diagnostic(config.expr, _V(config), _r(config, 0),
                                 config.radii or DEFAULT_RADII,
                                 config.quadrature_order or DEFAULT_ORDER)
    return CurvatureOntology.format_yau(report)


def run_nullity(config):
    if config.r is not None and not 0 <= config.r <= config.n - 1:
        raise ConfigError(f"r must satisfy 0 <= r <= n-1 (n={config.n}), got {config.r}")
    points = config.points
    if points is None:
        points = curvature_samples(config.n, BernsteinConfig())
    report = nullity_report(config.expr, np.asarray(points), config.tol_rank or DEFAULT_TOL_RANK,
                            config.r)
    return CurvatureOntology.format_nullity(report)


def run_bernstein(config):
    settings = BernsteinConfig(
        radii=config.radii or DEFAULT_RADII,
        quadrature_order=config.quadrature_order or DEFAULT_ORDER,
    )
    return CurvatureOntology.format_bernstein(bernstein_classify(config.expr, config.V, settings))


def _foliation_spec(config, family=None):
    family = family or config.foliation
    cylinder_r = config.cylinder_r
    if family is FoliationFamily.CONCENTRIC_CYLINDERS and cylinder_r is None:
        cylinder_r = config.r
    return FoliationSpec(family, config.n, config.expr, cylinder_r, config.orientation)


def run_foliation(config):
    spec = _foliation_spec(config)
    r = _r(config, 0)
    h = config.h or DEFAULT_LR_STEP
    leaf = sample(spec, config.point)
    ambient = ambient_identity_check(spec, leaf, r, h)
    result = {
        "family": spec.family,
        "r": r,
        "h": h,
        "sample": CurvatureOntology.format_foliation_sample(leaf),
        "leaf_divergence": leaf_divergence(spec, leaf, r, h),
        "leaf_identity_rhs": leaf_identity_rhs(leaf, r),
        "ambient_identity": ambient,
    }
    if config.hs:
        sweep = residual_sweep(spec, config.point, r, config.hs)
        result["sweep"] = sweep.to_dict(orient="records")
    return result


def run_audit(config):
    spec = _foliation_spec(config, config.foliation or FoliationFamily.CONCENTRIC_CYLINDERS)
    if spec.family is not FoliationFamily.CONCENTRIC_CYLINDERS:
        raise DomainError(f"audit runs on concentric-cylinders, not {spec.family.value}")
    r = _r(config, spec.cylinder_r)
    points = config.points
    if points is None:
        radii = config.radii or (0.5, 1.0, 2.0)
        points = [cylinder_point(config.n, spec.cylinder_r, R) for R in radii]
    report = r_minimal_audit(spec, r, points)
    payload = CurvatureOntology.as_payload(report)
    if config.format == "text":
        status = "✅" if report.passed else "❌"
        print(f"[audit] {status} r-minimal audit over {len(report.rows)} samples", file=sys.stderr)
    return payload


HANDLERS = {
    Command.FRAME: run_frame,
    Command.NEWTON: run_newton,
    Command.LR: run_lr,
    Command.CHECK_LR: run_check_lr,
    Command.INTEGRABILITY: run_integrability,
    Command.HESSIAN_BOUND: run_hessian_bound,
    Command.YAU: run_yau,
    Command.NULLITY: run_nullity,
    Command.BERNSTEIN: run_bernstein,
    Command.FOLIATION: run_foliation,
    Command.AUDIT: run_audit,
}


def metadata(config):
    """Schema version and the resolved conventions of the run."""
    assignment = None
    if config.expr is not None:
        rng = np.random.default_rng(ASSIGNMENT_SEED)
        probes = list(rng.uniform(-1.0, 1.0, size=(ASSIGNMENT_PROBES, config.n)))
        if config.point is not None and len(config.point) == config.n:
            probes.insert(0, np.asarray(config.point))
        assignment, _ = resolve_gradient_assignment(config.expr, probes, _V(config))
    return {
        "schema_version": SCHEMA_VERSION,
        "command": config.command,
        "source": config.source,
        "n": config.n,
        "orientation": config.orientation,
        "sigma": calibrate_sigma(),
        "gradient_assignment": assignment,
        "lr_sign_convention": LR_SIGN_CONVENTION,
    }


def run(config):
    """
    Executes one command and writes its report.

    Args:
        config (RunConfig): Validated configuration.

    Returns:
        dict: The full report (metadata and result).
    """
    logger.info("[run] %s on %s", config.command.value, config.source or config.foliation.value)
    result = HANDLERS[config.command](config)
    report = {"metadata": metadata(config), "result": result}
    write_report(config, report)
    if config.metrics:
        CurvatureOntology.log_metric(config.metrics, config.command.value.upper(),
                                     config.source or config.foliation.value,
                                     "n", config.n, f"format={config.format}")
    return report


def _text(payload, prefix=""):
    lines = []
    for key, value in payload.items():
        if isinstance(value, dict):
            lines.extend(_text(value, f"{prefix}{key}."))
        else:
            lines.append(f"{prefix}{key}: {value}")
    return lines


def write_report(config, report):
    if config.format == "json":
        text = dump_json(report)
    elif config.format == "csv":
        table = CurvatureOntology.table(CurvatureOntology.as_payload(report["result"]))
        text = table.to_csv(index=False)
    else:
        plain = CurvatureOntology.as_payload(report)
        text = f"--- 📐 CURVLAB {config.command.value.upper()} ---\n" + "\n".join(_text(plain)) + "\n"
    if config.output:
        with open(config.output, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info("[run] report written to %s", config.output)
    else:
        sys.stdout.write(text)


def main(argv=None):
    """
    Runs the CLI.

    Returns:
        int: 0 on success, 2 on configuration errors, 3 on numeric failures.
    """
    load_dotenv()
    try:
        config, verbose = load_config(argv)
    except (ConfigError, ExprSyntaxError, DimensionError, DomainError) as exc:
        print(f"❌ Error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    name = "INFO" if verbose else os.getenv("CURVLAB_LOG_LEVEL", "WARNING")
    level = getattr(logging, name.upper(), logging.WARNING)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(message)s")

    try:
        run(config)
    except (ConfigError, ExprSyntaxError, DimensionError, DomainError) as exc:
        print(f"❌ Error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, np.linalg.LinAlgError) as exc:
        print(f"❌ Numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
