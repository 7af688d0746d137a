"""Command-line front end: reproducible batch jobs over the service layer.

One JSON config file per run (sole positional argument), CSV or JSON
output on stdout or --output, diagnostics on stderr.  Exit codes:
0 success, 1 acceptance failure, 2 config error, 3 numerical failure.
Every output starts with a header carrying the tool version and a
digest of the config, so a result file identifies the run that made
it; reruns with the same config produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .errors import (
    ConvergenceError,
    DegenerateEndpointsError,
    DegenerateMetricError,
    DomainError,
    NoSolutionError,
    QuadratureError,
)
from .schemas import (
    CurvatureConfig,
    DensityConfig,
    GeodesicConfig,
    SmileConfig,
    ValidateConfig,
)
from .service import (
    config_digest,
    run_curvature,
    run_density,
    run_geodesic,
    run_smile,
    run_validate,
)

_CONFIG_MODELS = {
    "curvature": CurvatureConfig,
    "geodesic": GeodesicConfig,
    "density": DensityConfig,
    "smile": SmileConfig,
    "validate": ValidateConfig,
}

_NUMERICAL_ERRORS = (
    DomainError,
    DegenerateMetricError,
    ConvergenceError,
    QuadratureError,
    NoSolutionError,
)


def _fmt(value) -> str:
    return "" if value is None else "%.17g" % value


def _csv_bytes(digest: str, columns, rows, comments=()) -> bytes:
    lines = [f"# sabrgeo {__version__} config={digest}"]
    lines.extend(comments)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sabrgeo",
        description="Half-plane heat-kernel toolkit: curvature, geodesic, "
        "density, smile and validate batch jobs.",
    )
    parser.add_argument(
        "--version", action="version", version=f"sabrgeo {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("curvature", "scalar/Ricci curvature over a point grid"),
        ("geodesic", "sampled geodesic with closed-form parameters"),
        ("density", "heat-kernel density table over a grid"),
        ("smile", "strike ladder: prices and implied vols"),
        ("validate", "Monte Carlo cross-check report (JSON)"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="path to the JSON config file")
        sp.add_argument("--output", "-o", help="output file (default stdout)")
        sp.add_argument(
            "--verbose", action="store_true", help="extra diagnostics on stderr"
        )
        if name == "density":
            sp.add_argument(
                "--normalize",
                action="store_true",
                help="also report the grid integral of the density",
            )
    return parser


def _dispatch(ns, model, digest: str):
    """Returns (output bytes, exit code)."""
    if ns.command == "curvature":
        res = run_curvature(model)
        return _csv_bytes(digest, res.columns, res.rows), 0
    if ns.command == "geodesic":
        res = run_geodesic(model)
        params = " ".join(f"{k}={_fmt(v)}" for k, v in res.params.items())
        comments = [f"# kind={res.kind} {params}"]
        return _csv_bytes(digest, res.columns, res.rows, comments), 0
    if ns.command == "density":
        res = run_density(model, normalize=ns.normalize)
        comments = []
        if res.integral is not None:
            comments.append(f"# integral={_fmt(res.integral)}")
        return _csv_bytes(digest, res.columns, res.rows, comments), 0
    if ns.command == "smile":
        res = run_smile(model)
        if res.warnings:
            print(
                f"warning: {res.warnings} strike(s) had no implied volatility",
                file=sys.stderr,
            )
        return _csv_bytes(digest, res.columns, res.rows), 0
    if ns.command == "validate":
        report = run_validate(model, digest)
        blob = json.dumps(report.model_dump(), indent=2) + "\n"
        return blob.encode("utf-8"), 0 if report.all_passed else 1
    raise AssertionError(f"unhandled command {ns.command!r}")


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        raw = json.loads(Path(ns.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    digest = config_digest(raw)
    try:
        model = _CONFIG_MODELS[ns.command].model_validate(raw)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if ns.verbose:
        print(
            f"sabrgeo {__version__}: {ns.command} config={digest}",
            file=sys.stderr,
        )
    try:
        payload, code = _dispatch(ns, model, digest)
    except (DegenerateEndpointsError, ValueError) as exc:
        # Bad endpoints or grids are defects of the request, not of
        # the numerics.
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if ns.output:
        Path(ns.output).write_bytes(payload)
    else:
        try:
            sys.stdout.buffer.write(payload)
            sys.stdout.buffer.flush()
        except BrokenPipeError:
            # Downstream consumer (head, less) closed the pipe early.
            return code
    return code


if __name__ == "__main__":
    sys.exit(main())
