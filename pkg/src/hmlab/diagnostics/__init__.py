"""Identities, inequalities and bounds evaluated on discretized maps."""

from hmlab.diagnostics.bounds import (FAIL, NA, PASS, UNCONVERGED, BoundCheck,
                                      ball_bound_sequence, gradient_bound_ball,
                                      gradient_bound_energy2, liouville_flow_experiment,
                                      liouville_integrals)
from hmlab.diagnostics.local import (bochner_p_lemma, bochner_residual, bochner_terms, jet,
                                     kato_check, p_function, stress_energy)
from hmlab.diagnostics.monotonicity import (MonotonicityTable, ball_volume,
                                            calibrate_quadrature, energy_in_ball,
                                            monotonicity_table)
from hmlab.diagnostics.report import DiagnosticsReport, basic_report, full_report

__all__ = [
    "PASS", "FAIL", "NA", "UNCONVERGED", "BoundCheck", "DiagnosticsReport", "MonotonicityTable",
    "ball_bound_sequence", "ball_volume", "basic_report", "bochner_p_lemma", "bochner_residual",
    "bochner_terms", "calibrate_quadrature", "full_report", "gradient_bound_ball",
    "gradient_bound_energy2", "jet", "kato_check", "liouville_flow_experiment",
    "liouville_integrals", "monotonicity_table", "energy_in_ball", "p_function", "stress_energy",
]
