"""Approximate dynamic programming benchmark for energy storage."""

import json

from . import _core
from ._core import (
    NumericalError,
    ValidationError,
    expected_max_improvement,
    fit_ar1,
    fit_jump_diffusion,
    kgcp,
    percent_of_optimal,
    policy_value,
    problem_ids,
    solve_bellman,
    solve_iv_regression,
    value_iteration,
)

__version__ = _core.__version__


def problem_definition(problem_id, scale=1.0):
    return json.loads(_core.problem_definition(str(problem_id), scale))


def config_hash(config):
    return _core.config_hash(json.dumps(config))


def run_experiment(config):
    """Run one configured experiment; returns the report as a dict."""
    return json.loads(_core.run_experiment(json.dumps(config)))


def summarize(reports):
    """Summary and M/N sweep tables, as CSV text, for a list of report dicts."""
    return _core.summarize([json.dumps(r) for r in reports])


__all__ = [
    "NumericalError",
    "ValidationError",
    "config_hash",
    "expected_max_improvement",
    "fit_ar1",
    "fit_jump_diffusion",
    "kgcp",
    "percent_of_optimal",
    "policy_value",
    "problem_definition",
    "problem_ids",
    "run_experiment",
    "solve_bellman",
    "solve_iv_regression",
    "summarize",
    "value_iteration",
]
