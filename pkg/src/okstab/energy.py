"""Total energy, Lagrange multiplier, and the criticality residual.

The configuration energy is the relative perimeter plus ``gamma`` times the
Dirichlet energy of the indicator potential.  A configuration is critical
when the signed curvature plus ``4 gamma`` times the potential trace is
constant along the interface; the constant is the volume-constraint
multiplier.  The residual of that balance, in sup and L2(M) norms, is the
criticality diagnostic used by the stability verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import dirichlet_energy, trace_on_curve
from .interface import (
    CHORD,
    RegionState,
    curvature,
    orthogonality_residual,
    perimeter,
    quadrature_weights,
    symmetric_difference_area,
)


@dataclass
class CriticalityReport:
    """Energy split and first-order balance residuals of a configuration."""

    J: float
    P: float
    NL: float
    lam: float
    residual_sup: float
    residual_l2: float
    ortho_residual: tuple[float, ...]
    residual_nodes: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "P": self.P,
            "NL": self.NL,
            "lambda": self.lam,
            "residual_sup": self.residual_sup,
            "residual_l2": self.residual_l2,
            "ortho_residual": list(self.ortho_residual),
        }


def nonlocal_energy(state: RegionState) -> float:
    """``gamma`` times the Dirichlet energy of the configuration potential."""
    if state.gamma == 0.0:
        return 0.0
    return state.gamma * dirichlet_energy(state.v)


def total_energy(state: RegionState) -> float:
    """Perimeter plus coupled nonlocal energy."""
    return perimeter(state.interface) + nonlocal_energy(state)


def multiplier_and_residual(state: RegionState):
    """Per-node balance field, its arclength mean, and the residual."""
    H = curvature(state.interface)
    if state.gamma != 0.0:
        balance = H + 4.0 * state.gamma * trace_on_curve(state.v, state.interface)
    else:
        balance = H.astype(float)
    w = quadrature_weights(state.interface)
    lam = float((w * balance).sum() / w.sum())
    r = balance - lam
    return lam, r, w


def criticality(state: RegionState) -> CriticalityReport:
    """Evaluate the first-order balance of a configuration.

    The multiplier is the arclength-weighted mean of the balance field, the
    L2-optimal constant; for critical configurations the residual vanishes
    up to discretization error.
    """
    lam, r, w = multiplier_and_residual(state)
    P = perimeter(state.interface)
    NL = nonlocal_energy(state)
    if state.interface.topology == CHORD:
        ortho = orthogonality_residual(state.interface, state.domain)
    else:
        ortho = ()
    return CriticalityReport(
        J=P + NL,
        P=P,
        NL=NL,
        lam=lam,
        residual_sup=float(np.max(np.abs(r))),
        residual_l2=float(np.sqrt((w * r * r).sum())),
        ortho_residual=tuple(ortho),
        residual_nodes=r,
    )


def lipschitz_gap(state_e: RegionState, state_f: RegionState) -> tuple[float, float]:
    """Nonlocal energy gap and symmetric-difference area of two states.

    Both sides of the Lipschitz estimate for the nonlocal part: the gap is
    ``|NL(F) - NL(E)|`` and the second entry is ``|F symm-diff E|`` from the
    exact polygon boolean (pixel fallback for degenerate geometry).
    """
    if state_e.domain != state_f.domain:
        raise ValueError("states live on different domains")
    if state_e.gamma != state_f.gamma:
        raise ValueError("states carry different couplings")
    gap = abs(nonlocal_energy(state_f) - nonlocal_energy(state_e))
    sd = symmetric_difference_area(state_e.interface, state_f.interface, state_e.domain)
    return gap, sd
