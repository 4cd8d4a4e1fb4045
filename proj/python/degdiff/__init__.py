"""Degenerate diffusion simulation with projection fields, stochastic flows
and Malliavin-type derivatives, plus Monte Carlo checkers for the associated
martingale-representation identities and functional inequalities."""

import json as _json

from ._degdiff import (
    ConfigError,
    EvalDomainError,
    Expr,
    ParseError,
    check_registry,
    group_product,
    heisenberg_field,
    path_csv,
    projection,
    simulate,
)
from ._degdiff import run_check as _run_check_raw

__all__ = [
    "ConfigError",
    "EvalDomainError",
    "Expr",
    "ParseError",
    "check_registry",
    "group_product",
    "heisenberg_field",
    "path_csv",
    "projection",
    "run_check",
    "simulate",
]


def run_check(config, name):
    """Run a named check and return the report as a dict.

    `config` maps CLI/config keys to values (e.g. {"model": "heisenberg",
    "paths": 2000, "f": "x1"}); model parameters use a "model." prefix.
    """
    return _json.loads(_run_check_raw({k: str(v) for k, v in config.items()}, name))
