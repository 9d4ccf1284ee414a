"""Assemble every diagnostic of a field snapshot into one report."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from hmlab.diagnostics.local import (bochner_p_lemma, bochner_residual, jet, kato_check,
                                     p_function, stress_energy)
from hmlab.diagnostics.monotonicity import monotonicity_table
from hmlab.fields import MapField
from hmlab.flow import energy
from hmlab.potentials import Potential


@dataclass
class DiagnosticsReport:
    energy: float
    sup_dphi: float
    p_field_extrema: dict | None = None
    bochner_residual_norms: dict | None = None
    stress_energy_div_norms: dict | None = None
    monotonicity_table: dict | None = None
    bound_checks: list = dc_field(default_factory=list)
    liouville_integrals: dict | None = None
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "energy": self.energy,
            "sup_dphi": self.sup_dphi,
            "p_field_extrema": self.p_field_extrema,
            "bochner_residual_norms": self.bochner_residual_norms,
            "stress_energy_div_norms": self.stress_energy_div_norms,
            "monotonicity_table": self.monotonicity_table,
            "bound_checks": [b.to_dict() for b in self.bound_checks],
            "liouville_integrals": self.liouville_integrals,
            "extra": self.extra,
        }


def basic_report(field: MapField, potential: Potential) -> DiagnosticsReport:
    J = jet(field)
    return DiagnosticsReport(energy(field, potential), float(np.sqrt(np.max(J.dphi_sq))))


def full_report(field: MapField, potential: Potential, radii=None, center=None,
                modica_slack: float = 1e-4) -> DiagnosticsReport:
    """Every pointwise diagnostic plus the monotonicity table when ``radii`` are given."""
    rep = basic_report(field, potential)
    rep.p_field_extrema = p_function(field, potential, modica_slack).to_dict()
    rep.bochner_residual_norms = bochner_residual(field, potential).to_dict()
    rep.stress_energy_div_norms = stress_energy(field, potential).to_dict()
    rep.extra["kato"] = kato_check(field)
    rep.extra["bochner_p"] = bochner_p_lemma(field, potential)
    if radii:
        rep.monotonicity_table = monotonicity_table(field, potential, radii, center).to_dict()
    return rep
