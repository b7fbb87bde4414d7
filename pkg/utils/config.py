"""Run configuration: command-line flags merged over an optional key=value file."""

import argparse
import os
from dataclasses import dataclass

from dotenv import dotenv_values

from models.field_expr import Family, FamilyParams, builtin, parse
from models.foliation import FoliationFamily
from utils.errors import ConfigError
from utils.reporting import Command

FIELD_COMMANDS = {
    Command.FRAME, Command.NEWTON, Command.LR, Command.CHECK_LR, Command.INTEGRABILITY,
    Command.HESSIAN_BOUND, Command.YAU, Command.NULLITY, Command.BERNSTEIN,
}
POINT_COMMANDS = {Command.FRAME, Command.NEWTON, Command.LR, Command.CHECK_LR, Command.FOLIATION}
FORMATS = ("json", "csv", "text")

# flag name -> help text; every option is read as text and converted once below
OPTIONS = {
    "builtin": "builtin family: " + ", ".join(f.value for f in Family),
    "expr": "field expression over x1..xn",
    "n": "dimension",
    "V": "parallel vector, comma separated",
    "b": "offset of the affine family",
    "alpha": "product-degenerate coefficients alpha_{k+1}..alpha_n",
    "family-r": "split index k of the product-degenerate family (default n - len(alpha))",
    "r": "Newton index",
    "point": "point, comma separated (use --point=-1,0 for a leading minus)",
    "points": "points separated by ';'",
    "radii": "radius schedule, comma separated",
    "hs": "stencil steps for a residual sweep",
    "h": "stencil step",
    "which": "f or g (check-lr)",
    "foliation": "foliation family: " + ", ".join(f.value for f in FoliationFamily),
    "cylinder-r": "sphere factor dimension of the cylinders",
    "orientation": "+1 or -1",
    "quadrature-order": "Gauss-Legendre points per sub-interval",
    "box": "half-width of the first Hessian sampling box",
    "grid": "grid points per axis of the first box",
    "candidate-c": "constant tested by hessian-bound",
    "tol-rank": "relative rank tolerance",
    "output": "output file (stdout if omitted)",
    "format": "json, csv or text",
    "metrics": "append a line to this CSV run ledger",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (see docs/cli.md)."""

    command: Command
    expr: object = None
    source: str = None
    n: int = None
    V: tuple = None
    r: int = None
    point: tuple = None
    points: tuple = None
    radii: tuple = None
    hs: tuple = None
    h: float = None
    which: str = "g"
    foliation: FoliationFamily = None
    cylinder_r: int = None
    orientation: int = 1
    quadrature_order: int = None
    box: float = None
    grid: int = None
    candidate_c: float = None
    tol_rank: float = None
    output: str = None
    format: str = "json"
    metrics: str = None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="curvlab", description="Higher-order mean curvature laboratory.")
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--config", help="key=value file; flags override its entries")
    parser.add_argument("--verbose", action="store_true", help="log progress at INFO level")
    for name, text in OPTIONS.items():
        parser.add_argument(f"--{name}", help=text)
    return parser


def _key(name):
    return name.replace("-", "_")


def _floats(text, what):
    try:
        values = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{what} is empty")
    return values


def _number(text, kind, what):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be {kind.__name__}, got {text!r}") from None


def merge_sources(args):
    """
    Flags over file values.

    Returns:
        dict: Option name (underscored) -> raw text.
    """
    values = {}
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file {args.config!r} not found")
        for key, value in dotenv_values(args.config).items():
            if value is not None:
                values[_key(key)] = value
    for name in OPTIONS:
        flag = getattr(args, _key(name))
        if flag is not None:
            values[_key(name)] = flag
    unknown = set(values) - {_key(name) for name in OPTIONS}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return values


def _split_index(values, family, n, alpha):
    """Split index of product-degenerate: --family-r, else n - len(alpha). Never the Newton r."""
    if family is not Family.PRODUCT_DEGENERATE:
        if "family_r" in values:
            raise ConfigError(f"--family-r applies to product-degenerate, not {family.value}")
        return None
    if "family_r" in values:
        return _number(values["family_r"], int, "family-r")
    if alpha is not None:
        return n - len(alpha)
    raise ConfigError("product-degenerate needs --family-r (or --alpha to infer it)")


def _field(values, n):
    has_builtin, has_expr = "builtin" in values, "expr" in values
    if has_builtin and has_expr:
        raise ConfigError("give exactly one field source: --builtin or --expr, not both")
    if has_expr:
        return parse(values["expr"], n), values["expr"]
    if has_builtin:
        try:
            family = Family(values["builtin"])
        except ValueError:
            raise ConfigError(f"unknown builtin {values['builtin']!r}") from None
        alpha = _floats(values["alpha"], "alpha") if "alpha" in values else None
        params = FamilyParams(
            n=n,
            r=_split_index(values, family, n, alpha),
            alpha=alpha,
            V=_floats(values["V"], "V") if "V" in values else None,
            b=_number(values.get("b", 0.0), float, "b"),
        )
        return builtin(family, params), family.value
    return None, None


def config_from_values(command, values):
    """
    Builds and validates a RunConfig from merged raw values.

    Raises:
        ConfigError: Missing or inconsistent settings.
    """
    command = Command(command)
    if "n" not in values:
        raise ConfigError("--n is required")
    n = _number(values["n"], int, "n")
    if n < 1:
        raise ConfigError("n must be positive")

    foliation = None
    if "foliation" in values:
        try:
            foliation = FoliationFamily(values["foliation"])
        except ValueError:
            raise ConfigError(f"unknown foliation {values['foliation']!r}") from None
    elif command is Command.AUDIT:
        foliation = FoliationFamily.CONCENTRIC_CYLINDERS
    elif command is Command.FOLIATION:
        raise ConfigError("foliation needs --foliation")

    expr, source = _field(values, n)
    needs_field = command in FIELD_COMMANDS or foliation is FoliationFamily.GRAPH_TRANSLATES
    if needs_field and expr is None:
        raise ConfigError(f"{command.value} needs a field source (--builtin or --expr)")
    if not needs_field and expr is not None:
        raise ConfigError(f"{command.value} with {foliation.value} takes no field source")

    V = _floats(values["V"], "V") if "V" in values else None
    if V is not None and len(V) != n:
        raise ConfigError(f"V has {len(V)} entries, expected n={n}")

    ambient = n
    if command is Command.FOLIATION:
        ambient = n + 2 if foliation is FoliationFamily.GEODESIC_SPHERES else n + 1
    if command is Command.AUDIT:
        ambient = n + 1
    point = _floats(values["point"], "point") if "point" in values else None
    if point is not None and len(point) != ambient:
        raise ConfigError(f"point has {len(point)} coordinates, expected {ambient}")
    if command in POINT_COMMANDS and point is None:
        raise ConfigError(f"{command.value} needs --point")

    points = None
    if "points" in values:
        points = tuple(_floats(chunk, "points") for chunk in values["points"].split(";") if chunk.strip())
        if any(len(p) != ambient for p in points):
            raise ConfigError(f"every point needs {ambient} coordinates")

    orientation = _number(values.get("orientation", 1), int, "orientation")
    if orientation not in (1, -1):
        raise ConfigError("orientation must be +1 or -1")
    fmt = values.get("format", "json")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
    which = values.get("which", "g")
    if which not in ("f", "g"):
        raise ConfigError("which must be f or g")

    def optional(key, kind):
        return _number(values[key], kind, key) if key in values else None

    return RunConfig(
        command=command,
        expr=expr,
        source=source,
        n=n,
        V=V,
        r=optional("r", int),
        point=point,
        points=points,
        radii=_floats(values["radii"], "radii") if "radii" in values else None,
        hs=_floats(values["hs"], "hs") if "hs" in values else None,
        h=optional("h", float),
        which=which,
        foliation=foliation,
        cylinder_r=optional("cylinder_r", int),
        orientation=orientation,
        quadrature_order=optional("quadrature_order", int),
        box=optional("box", float),
        grid=optional("grid", int),
        candidate_c=optional("candidate_c", float),
        tol_rank=optional("tol_rank", float),
        output=values.get("output"),
        format=fmt,
        metrics=values.get("metrics") or os.getenv("CURVLAB_METRICS"),
    )


def load_config(argv=None):
    """
    Parses argv into (RunConfig, verbose flag).

    Raises:
        ConfigError: On any validation failure, including argparse errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise ConfigError("invalid command line") from None
    return config_from_values(args.command, merge_sources(args)), args.verbose
