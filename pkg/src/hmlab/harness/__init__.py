"""Config-driven experiment runner and command line interface."""

from hmlab.harness.config import Config, ParseError, load, parse
from hmlab.harness.runner import RunResult, refinement_study, run_experiment, suite

__all__ = ["Config", "ParseError", "RunResult", "load", "parse", "refinement_study",
           "run_experiment", "suite"]
