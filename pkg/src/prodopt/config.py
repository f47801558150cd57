"""Experiment configuration: INI-style files, schema-checked per application.

A config is a key = value file with sections [experiment], [problem],
[solver], [linesearch], [stopping], [data] and [output].  Validation
errors name the offending field as section.key so misconfigured runs fail
before any computation.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .solvers import CgParams, LineSearchParams, StoppingCriteria

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]

APPLICATIONS = ("cca", "tsvd", "trcomp", "ellipsoid", "spectrum")
SOLVERS = ("rgd", "rcg", "gn")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    application: str
    seed: int = 0
    repeat: int = 1
    out_dir: str = "out"
    problem: dict = field(default_factory=dict)
    solver: str = "rgd"
    beta_rule: str = "hestenes_stiefel"
    linesearch: LineSearchParams = field(default_factory=LineSearchParams)
    stopping: StoppingCriteria = field(default_factory=StoppingCriteria)
    data: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def cg_params(self) -> CgParams:
        return CgParams(beta_rule=self.beta_rule)


def _get(parser, section, key, cast, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError(f"{section}.{key}: required field is missing")
        return default
    text = parser.get(section, key)
    try:
        if cast is bool:
            return parser.getboolean(section, key)
        return cast(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(
            f"{section}.{key}: cannot parse {text!r} as {cast.__name__}"
        ) from exc


def _positive_int(parser, section, key, default=None, required=False):
    value = _get(parser, section, key, int, default, required)
    if value is not None and value <= 0:
        raise ConfigError(f"{section}.{key}: must be a positive integer")
    return value


def _positive_float(parser, section, key, default=None, required=False):
    value = _get(parser, section, key, float, default, required)
    if value is not None and value <= 0:
        raise ConfigError(f"{section}.{key}: must be positive")
    return value


_PROBLEM_SCHEMAS = {
    "cca": {
        "dx": ("int+", False), "dy": ("int+", False), "n": ("int+", False),
        "m": ("int+", True), "lambda_x": ("float0", False),
        "lambda_y": ("float0", False), "delta": ("float+", False),
        "metric": ("str", False),
    },
    "tsvd": {
        "m": ("int+", False), "n": ("int+", False), "p": ("int+", True),
        "gamma": ("gamma", False), "delta": ("float+", False),
        "metric": ("str", False),
    },
    "trcomp": {
        "dims": ("ints", False), "ranks": ("ints", True),
        "rate": ("rate", False), "delta": ("float+", False),
        "test_count": ("int+", False),
    },
    "ellipsoid": {
        "b_diag": ("floats", False), "b": ("floats", False),
        "lambda_min": ("float", False), "lambda_max": ("float", False),
        "lambda_step": ("float+", False),
    },
    "spectrum": {
        "target": ("str", True), "dx": ("int+", False), "dy": ("int+", False),
        "m": ("int+", False), "n": ("int+", False), "p": ("int+", False),
        "gamma": ("gamma", False), "delta": ("float+", False),
        "numerical": ("bool", False),
    },
}


def _parse_problem(parser, application: str) -> dict:
    schema = _PROBLEM_SCHEMAS[application]
    section = "problem"
    out: dict = {}
    if parser.has_section(section):
        for key in parser.options(section):
            if key not in schema:
                raise ConfigError(f"{section}.{key}: unknown field for "
                                  f"application {application!r}")
    for key, (kind, required) in schema.items():
        if kind == "int+":
            value = _positive_int(parser, section, key, required=required)
        elif kind == "float+":
            value = _positive_float(parser, section, key, required=required)
        elif kind in ("float", "float0"):
            value = _get(parser, section, key, float, required=required)
            if kind == "float0" and value is not None and value < 0:
                raise ConfigError(f"{section}.{key}: must be nonnegative")
        elif kind == "gamma":
            value = _get(parser, section, key, float, required=required)
            if value is not None and not (0.0 < value < 1.0):
                raise ConfigError(f"{section}.{key}: must lie in (0, 1)")
        elif kind == "rate":
            value = _get(parser, section, key, float, required=required)
            if value is not None and not (0.0 < value <= 1.0):
                raise ConfigError(f"{section}.{key}: must lie in (0, 1]")
        elif kind == "ints":
            text = _get(parser, section, key, str, required=required)
            if text is None:
                value = None
            else:
                try:
                    value = tuple(int(t) for t in text.replace(",", " ").split())
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: expected a list "
                                      f"of integers") from exc
                if any(v <= 0 for v in value):
                    raise ConfigError(f"{section}.{key}: entries must be "
                                      f"positive")
        elif kind == "floats":
            text = _get(parser, section, key, str, required=required)
            if text is None:
                value = None
            else:
                try:
                    value = tuple(float(t)
                                  for t in text.replace(",", " ").split())
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: expected a list "
                                      f"of numbers") from exc
        elif kind == "bool":
            value = _get(parser, section, key, bool, required=required)
        else:
            value = _get(parser, section, key, str, required=required)
        if value is not None:
            out[key] = value
    return out


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser.read(path)
    if not parser.has_section("experiment"):
        raise ConfigError("experiment: section is missing")
    application = _get(parser, "experiment", "application", str, required=True)
    if application not in APPLICATIONS:
        raise ConfigError(
            f"experiment.application: must be one of {APPLICATIONS}")

    problem = _parse_problem(parser, application)
    if application == "ellipsoid":
        for key in ("b_diag", "b"):
            if key not in problem:
                raise ConfigError(f"problem.{key}: required field is missing")

    solver = _get(parser, "solver", "method", str, default="rgd")
    if solver not in SOLVERS:
        raise ConfigError(f"solver.method: must be one of {SOLVERS}")
    beta_rule = _get(parser, "solver", "beta_rule", str,
                     default="hestenes_stiefel")
    try:
        CgParams(beta_rule=beta_rule)
    except ValueError as exc:
        raise ConfigError(f"solver.beta_rule: {exc}") from exc

    try:
        linesearch = LineSearchParams(
            s0=_positive_float(parser, "linesearch", "s0", 1.0),
            rho=_get(parser, "linesearch", "rho", float, 0.5),
            sufficient_decrease=_get(parser, "linesearch",
                                     "sufficient_decrease", float, 1e-4),
            max_backtracks=_positive_int(parser, "linesearch",
                                         "max_backtracks", 60),
            warm_start=_get(parser, "linesearch", "warm_start", bool, True),
        )
    except ValueError as exc:
        raise ConfigError(f"linesearch: {exc}") from exc

    try:
        stopping = StoppingCriteria(
            gnorm_tol=_get(parser, "stopping", "gnorm_tol", float, 1e-6),
            max_iters=_get(parser, "stopping", "max_iters", int, 10000),
            rel_change_tol=_get(parser, "stopping", "rel_change_tol",
                                float, 0.0),
            min_stepsize=_get(parser, "stopping", "min_stepsize", float, 0.0),
            cost_tol=_get(parser, "stopping", "cost_tol", float, 0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"stopping: {exc}") from exc

    data = {}
    if parser.has_section("data"):
        for key in parser.options("data"):
            data[key] = parser.get("data", key)

    raw = {section: dict(parser.items(section))
           for section in parser.sections()}
    return ExperimentConfig(
        application=application,
        seed=_get(parser, "experiment", "seed", int, 0),
        repeat=_positive_int(parser, "experiment", "repeat", 1),
        out_dir=_get(parser, "output", "directory", str, "out"),
        problem=problem,
        solver=solver,
        beta_rule=beta_rule,
        linesearch=linesearch,
        stopping=stopping,
        data=data,
        raw=raw,
    )
