"""Report vocabulary for the lab.

Defines the CLI command names, helpers that turn computation results into
JSON-ready dictionaries, the JSON writer and the optional CSV run ledger.
"""

import dataclasses
import datetime
import json
import math
from enum import Enum

import numpy as np
import pandas as pd

SCHEMA_VERSION = "1.0"


class Command(str, Enum):
    """Commands understood by main.py."""
    FRAME = "frame"
    NEWTON = "newton"
    LR = "lr"
    CHECK_LR = "check-lr"
    INTEGRABILITY = "integrability"
    HESSIAN_BOUND = "hessian-bound"
    YAU = "yau"
    NULLITY = "nullity"
    BERNSTEIN = "bernstein"
    FOLIATION = "foliation"
    AUDIT = "audit"


class CurvatureOntology:
    """
    Helper functions for report payloads and logging.
    Centralizes the shape of every report so the JSON schema stays in one place.
    """

    @staticmethod
    def as_payload(obj):
        """
        Converts results into plain JSON-ready values.
        Dataclasses become dicts, enums their values, arrays nested lists.

        Args:
            obj: Any result object.

        Returns:
            dict | list | float | int | str | bool | None: Plain data.
        """
        if isinstance(obj, Enum):
            return obj.value
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: CurvatureOntology.as_payload(getattr(obj, f.name))
                    for f in dataclasses.fields(obj)}
        if isinstance(obj, dict):
            return {str(k): CurvatureOntology.as_payload(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [CurvatureOntology.as_payload(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return CurvatureOntology.as_payload(obj.tolist())
        if isinstance(obj, np.generic):
            return obj.item()
        return obj

    @staticmethod
    def format_frame(frame, stack, summary, support=None):
        """
        Formats the frame command report.
        Args:
            frame (GraphFrame): Frame at the point.
            stack (NewtonStack): Its Newton stack.
            summary (dict): curvature_summary output.
            support (SupportData | None): Support data when V was given.

        Returns:
            dict: Structured content for frame.
        """
        return {
            "point": frame.base_point,
            "W": frame.W,
            "normal": frame.normal,
            "metric": frame.metric,
            "second_ff": frame.second_ff,
            "shape": frame.shape,
            "principal_curvatures": frame.principal_curvatures,
            "eigen_residual": frame.eigen_residual,
            "S": stack.S,
            "summary": summary,
            "support": CurvatureOntology.format_support(support) if support else None,
        }

    @staticmethod
    def format_support(support):
        return {
            "U": support.U,
            "f": support.f,
            "g": support.g,
            "f_sign": support.f_sign,
            "utan_ambient": support.utan_ambient,
            "utan_chart": support.utan_chart,
            "utan_norm": support.utan_norm,
            "scaled_bound": support.scaled_bound,
            "scaled_bound_holds": support.scaled_bound_holds,
            "plain_bound_holds": support.plain_bound_holds,
        }

    @staticmethod
    def format_newton(stack, identities):
        """
        Formats the newton command report.
        Args:
            stack (NewtonStack): Stack to report.
            identities (dict): stack_identities output.

        Returns:
            dict: S, P, normBound and identity residuals.
        """
        return {"S": stack.S, "P": stack.P, "normBound": stack.norm_bound,
                "identity_residuals": identities}

    @staticmethod
    def format_lr(r, lr_f, lr_g, support, gradients):
        return {
            "r": r,
            "L_r_f": lr_f,
            "L_r_g": lr_g,
            "support": CurvatureOntology.format_support(support),
            "grad_f": gradients.grad_f,
            "grad_g": gradients.grad_g,
            "oracle_residual": gradients.residual,
            "rival_residual": gradients.rival_residual,
        }

    @staticmethod
    def format_integrability(report):
        """
        Formats an IntegrabilityReport with the documented field names.
        Args:
            report (IntegrabilityReport): L1 report.

        Returns:
            dict: Structured content for integrability.
        """
        return {
            "radii": report.radii,
            "truncatedIntegrals": report.truncated_integrals,
            "fittedDecayExponent": report.fitted_decay_exponent,
            "verdict": report.verdict,
            "limitEstimate": report.limit_estimate,
            "mode": report.mode,
            "sphereSups": report.sphere_sups,
        }

    @staticmethod
    def format_yau(report):
        return {
            "radii": report.radii,
            "fluxes": report.fluxes,
            "l1Norms": report.l1_norms,
            "boundaryNorms": report.boundary_norms,
            "l1Verdict": report.l1_verdict,
            "verdict": report.verdict,
        }

    @staticmethod
    def format_nullity(report):
        survey = report.sign_survey
        return {
            "samples": [
                {"point": s.point, "rank": s.rank, "nu": s.nullity,
                 "cascadeIndex": s.cascade_index, "S": s.S,
                 "cascadeTriggered": s.cascade_triggered, "cascadeHolds": s.cascade_holds}
                for s in report.samples
            ],
            "verdictNullityLowerBound": report.verdict_nullity_lower_bound,
            "signCensus": [
                {"index": c.index, "positive": c.positive, "negative": c.negative,
                 "zero": c.zero, "statement": survey.statement(c.index)}
                for c in survey.census
            ],
        }

    @staticmethod
    def format_bernstein(report):
        return {
            "classification": report.classification,
            "normal": report.normal,
            "reasons": report.reasons,
            "integrability": CurvatureOntology.format_integrability(report.integrability),
            "hessian": report.hessian,
            "verdictNullityLowerBound": report.nullity.verdict_nullity_lower_bound,
        }

    @staticmethod
    def format_foliation_sample(sample_point):
        """
        Formats the leaf data of one foliation sample.
        Args:
            sample_point (FoliationSample): Sample to report.

        Returns:
            dict: Leaf data without the Newton matrices.
        """
        return {
            "point": sample_point.point,
            "leafParameter": sample_point.leaf_parameter,
            "N": sample_point.normal,
            "X": sample_point.X,
            "principal_curvatures": sample_point.principal_curvatures,
            "S": sample_point.stack.S,
            "normalDerivativeS": sample_point.normal_derivative_S,
            "ambientCurvature": sample_point.ambient_curvature,
        }

    @staticmethod
    def table(result):
        """
        Tabular view of a report for CSV output.
        Reports with a list of rows use it; other reports become key/value rows.

        Args:
            result (dict): Payload of a command.

        Returns:
            pandas.DataFrame: Table to write.
        """
        for key in ("sweep", "samples", "rows"):
            rows = result.get(key)
            if isinstance(rows, list) and rows and isinstance(rows[0], dict):
                return pd.DataFrame(rows)
        if "radii" in result:
            columns = {k: v for k, v in result.items()
                       if isinstance(v, list) and len(v) == len(result["radii"])}
            return pd.DataFrame(columns)
        flat = _flatten(result)
        return pd.DataFrame({"key": list(flat), "value": list(flat.values())})

    @staticmethod
    def log_metric(path, metric_type, source, target, value, extra_info=""):
        """
        Logs a metric to the run ledger.
        Format: TIMESTAMP, TYPE, SOURCE, TARGET, VALUE, EXTRA

        Args:
            path (str): Ledger file (appended to).
            metric_type (str): Metric type (e.g. BERNSTEIN).
            source (str): Field or foliation the run was about.
            target (str): Quantity reported.
            value (str | int | float): Main metric value.
            extra_info (str, optional): Free text additional info.
        """
        try:
            with open(path, "a", encoding="utf-8") as f:
                timestamp = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
                line = (
                    f"{timestamp},{metric_type},{source},"
                    f"{target},{value},{extra_info}\n"
                )
                f.write(line)
        except OSError as e:
            print(f"Error writing metric: {e}")


def _flatten(payload, prefix=""):
    out = {}
    if isinstance(payload, dict):
        for key, value in payload.items():
            out.update(_flatten(value, f"{prefix}{key}."))
        return out
    out[prefix[:-1]] = payload
    return out


def _float17(value):
    return format(value, ".17g") if math.isfinite(value) else "null"


class ReportEncoder(json.JSONEncoder):
    """
    JSON encoder for reports.

    Floats are written with 17 significant digits and non-finite values as
    null; numpy values, enums and dataclasses go through as_payload.
    """

    def default(self, o):
        payload = CurvatureOntology.as_payload(o)
        if payload is o:
            return super().default(o)
        return payload

    def iterencode(self, o, _one_shot=False):
        encoder = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        # stock pure-Python encoder loop with _float17 as the float formatter
        return json.encoder._make_iterencode(
            {} if self.check_circular else None, self.default, encoder, self.indent, _float17,
            self.key_separator, self.item_separator, self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


def dump_json(payload, indent=2):
    """
    Serializes a report with every float written to 17 significant digits.

    Non-finite floats become null.

    Returns:
        str: JSON text ending with a newline.
    """
    return json.dumps(CurvatureOntology.as_payload(payload), cls=ReportEncoder, indent=indent,
                      ensure_ascii=False) + "\n"
