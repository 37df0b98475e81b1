"""Python bindings for the plapsde core.

Thin wrappers: array-level kernels come straight from the extension, the
JSON-producing entry points are decoded into dicts here.
"""

import json
import os

from ._core import (
    SCHEMA_VERSION,
    ConvergenceError,
    DomainError,
    Error,
    __version__,
    check_ellipticity,
    default_workers,
    div_adjoint,
    eval_h,
    eval_hL,
    eval_potential,
    eval_S,
    grad,
    implicit_step,
    keyed_normal,
    moser_ladder,
    philox4x32,
)
from . import _core

COMMANDS = ("simulate", "eps-study", "convergence", "moser", "hl-check", "bounds-check")


def certify_lemma(alpha, L, plateau=1.5, n_grid=10000, n_pairs=10000):
    """Certification report of the truncated family as a dict."""
    return json.loads(_core._certify_lemma(alpha, L, plateau, n_grid, n_pairs))


def parse_config(text):
    """Parse INI text into the resolved configuration (dict)."""
    return json.loads(_core._parse_config(text))


def run_command(command, config_text, out_dir, workers=None):
    """Run one experiment command; returns (exit_code, summary dict)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    if workers is None:
        workers = default_workers()
    code, summary = _core._run_command(command, config_text, os.fspath(out_dir), int(workers))
    return code, json.loads(summary)


__all__ = [
    "SCHEMA_VERSION", "ConvergenceError", "DomainError", "Error", "__version__",
    "check_ellipticity", "certify_lemma", "default_workers", "div_adjoint", "eval_h",
    "eval_hL", "eval_potential", "eval_S", "grad", "implicit_step", "keyed_normal",
    "moser_ladder", "parse_config", "philox4x32", "run_command", "COMMANDS",
]
