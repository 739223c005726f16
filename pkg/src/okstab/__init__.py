"""okstab: desk-scale stability analysis of sharp-interface configurations.

Library layout:

* :mod:`okstab.domain` -- containers (rectangle / torus) and their grids
* :mod:`okstab.interface` -- polyline interfaces, measures, perturbations
* :mod:`okstab.field` -- rasterization, Poisson solves, traces, splatting
* :mod:`okstab.energy` -- total energy and criticality residuals
* :mod:`okstab.secondvar` -- second-variation form, spectrum, dispersion
* :mod:`okstab.probe` -- descent flow, minimality probes, threshold search
* :mod:`okstab.diffuse` -- phase-field companion energy and conserved flow
* :mod:`okstab.cli` -- scenario-driven batch front-end
"""

__version__ = "0.1.0"

from .domain import DomainSpec, Grid, build_grid, boundary_curvature
from .interface import (
    Interface,
    RegionState,
    make_circle,
    make_lamella,
    measures,
    normal_graph_perturb,
    resample,
)
from .field import ScalarField, dirichlet_energy, solve_potential
from .energy import CriticalityReport, criticality, lipschitz_gap, total_energy
from .secondvar import (
    QuadraticFormMatrix,
    StabilityReport,
    assemble_form,
    general_second_variation,
    lamella_dispersion,
    min_eig_zero_mean,
    stability_report,
)
from .probe import (
    ProbeReport,
    gamma_threshold_search,
    lambda_minimality_check,
    minimality_probe,
    volume_preserving_flow,
)
from .diffuse import DiffuseState, conserved_gradient_flow, diffuse_energy

__all__ = [
    "__version__",
    "DomainSpec", "Grid", "build_grid", "boundary_curvature",
    "Interface", "RegionState", "make_circle", "make_lamella", "measures",
    "normal_graph_perturb", "resample",
    "ScalarField", "dirichlet_energy", "solve_potential",
    "CriticalityReport", "criticality", "lipschitz_gap", "total_energy",
    "QuadraticFormMatrix", "StabilityReport", "assemble_form",
    "general_second_variation", "lamella_dispersion", "min_eig_zero_mean",
    "stability_report",
    "ProbeReport", "gamma_threshold_search", "lambda_minimality_check",
    "minimality_probe", "volume_preserving_flow",
    "DiffuseState", "conserved_gradient_flow", "diffuse_energy",
]
