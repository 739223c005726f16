"""Diffuse-interface companion: phase-field energy and conserved descent.

The phase field u lives on cell centers with values near +/-1.  Its energy
is the gradient penalty ``eps * int |grad u|^2`` plus the double well
``(1/eps) * int (u^2 - 1)^2`` plus the same nonlocal term as the sharp
model, ``gamma0 * int |grad v|^2`` with ``-lap v = u - m``.  The flow is
plain L2 descent with the spatial mean re-projected every step, so the
conserved mean is preserved to round-off while the energy decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import DomainSpec
from .field import ScalarField, apply_operator, dirichlet_energy, solve_potential
from .interface import RegionState


@dataclass
class DiffuseState:
    """Phase field with interface width, nonlocal coupling, conserved mean."""

    field: ScalarField
    epsilon: float
    gamma0: float = 0.0
    m: float | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("interface width must be positive")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be nonnegative")
        if self.m is None:
            self.m = self.field.mean

    @property
    def spec(self) -> DomainSpec:
        return self.field.spec


def constant_state(spec: DomainSpec, m: float, epsilon: float, gamma0: float = 0.0) -> DiffuseState:
    values = np.full((spec.nx, spec.ny), float(m))
    return DiffuseState(ScalarField(spec, values), epsilon, gamma0, m)


def step_state(spec: DomainSpec, a: float, epsilon: float, gamma0: float = 0.0) -> DiffuseState:
    """Sharp lamella-like step data u = +1 for x < a, -1 beyond (cell fractions)."""
    x = (np.arange(spec.nx) + 0.5) * spec.hx
    frac = np.clip((a - (x - 0.5 * spec.hx)) / spec.hx, 0.0, 1.0)
    values = np.tile((2.0 * frac - 1.0)[:, None], (1, spec.ny))
    return DiffuseState(ScalarField(spec, values), epsilon, gamma0)


def energy_parts(ds: DiffuseState) -> tuple[float, float, float]:
    """(gradient, double-well, nonlocal) contributions, cell quadrature."""
    cell = ds.spec.hx * ds.spec.hy
    grad = ds.epsilon * dirichlet_energy(ds.field)
    u = ds.field.values
    well = float(((u * u - 1.0) ** 2).sum()) * cell / ds.epsilon
    nl = 0.0
    if ds.gamma0 > 0.0:
        nl = ds.gamma0 * dirichlet_energy(solve_potential(ds.field, ds.spec))
    return grad, well, nl


def diffuse_energy(ds: DiffuseState) -> float:
    return sum(energy_parts(ds))


def _l2_gradient(ds: DiffuseState) -> np.ndarray:
    u = ds.field.values
    g = 2.0 * ds.epsilon * apply_operator(u, ds.spec)
    g += (4.0 / ds.epsilon) * u * (u * u - 1.0)
    if ds.gamma0 > 0.0:
        g += 2.0 * ds.gamma0 * solve_potential(ds.field, ds.spec).values
    return g


def step_cap(ds: DiffuseState, c: float = 0.1) -> float:
    """Explicit-step heuristic dt <= c * eps * h^2."""
    h = min(ds.spec.hx, ds.spec.hy)
    return c * ds.epsilon * h * h


@dataclass
class DiffuseFlowResult:
    state: DiffuseState
    log: np.ndarray          # rows: t, E, mass
    dt_final: float


def conserved_gradient_flow(
    ds: DiffuseState, dt: float, steps: int, record_every: int = 100
) -> DiffuseFlowResult:
    """Mean-projected explicit L2 descent on the phase-field energy.

    The spatial mean of the update is removed and the mean re-pinned each
    step, so mass is conserved to round-off.  A step that raises the energy
    is retried with a halved dt (at most 8 halvings).
    """
    if dt > step_cap(ds):
        raise ValueError(f"dt {dt:.3e} exceeds the explicit-step cap {step_cap(ds):.3e}")
    u = ds.field.values.copy()
    m = ds.m
    state = DiffuseState(ScalarField(ds.spec, u), ds.epsilon, ds.gamma0, m)
    E = diffuse_energy(state)
    rows = [(0.0, E, float(u.mean()))]
    t = 0.0
    for step in range(steps):
        g = _l2_gradient(state)
        g -= g.mean()
        halvings = 0
        while True:
            u_new = u - dt * g
            u_new += m - u_new.mean()
            cand = DiffuseState(ScalarField(ds.spec, u_new), ds.epsilon, ds.gamma0, m)
            E_new = diffuse_energy(cand)
            if not math.isfinite(E_new):
                raise RuntimeError("non-finite phase field during descent")
            if E_new <= E + 1e-12 * max(1.0, abs(E)):
                break
            halvings += 1
            if halvings > 8:
                raise RuntimeError("descent step size underflow (8 halvings exhausted)")
            dt *= 0.5
        u, state, E = u_new, cand, E_new
        t += dt
        if record_every and ((step + 1) % record_every == 0 or step + 1 == steps):
            rows.append((t, E, float(u.mean())))
    if len(rows) == 1:
        rows.append((t, E, float(u.mean())))
    return DiffuseFlowResult(state=state, log=np.array(rows), dt_final=dt)


def sharp_limit_compare(ds: DiffuseState, state: RegionState) -> float:
    """L1 distance between the positive phase {u > 0} and the sharp region."""
    if ds.spec != state.domain:
        raise ValueError("phase field and region live on different grids")
    chi = (ds.field.values > 0.0).astype(float)
    frac = 0.5 * (state.u.values + 1.0)
    return float(np.abs(chi - frac).sum() * ds.spec.hx * ds.spec.hy)


def interface_width(ds: DiffuseState, lo: float = -0.8, hi: float = 0.8) -> float:
    """10-90 transition length of the row-averaged profile along x.

    Assumes a single monotone transition (lamella-like states); crossing
    positions are linearly interpolated between cell centers.
    """
    prof = ds.field.values.mean(axis=1)
    x = (np.arange(ds.spec.nx) + 0.5) * ds.spec.hx
    if prof[0] < prof[-1]:
        lo_x = _first_crossing(x, prof, lo)
        hi_x = _first_crossing(x, prof, hi)
    else:
        lo_x = _first_crossing(x, -prof, lo)
        hi_x = _first_crossing(x, -prof, hi)
    return abs(hi_x - lo_x)


def _first_crossing(x: np.ndarray, f: np.ndarray, level: float) -> float:
    above = f >= level
    idx = np.nonzero(above[1:] != above[:-1])[0]
    if len(idx) == 0:
        raise ValueError(f"profile never crosses level {level}")
    i = int(idx[0])
    t = (level - f[i]) / (f[i + 1] - f[i])
    return float(x[i] + t * (x[i + 1] - x[i]))
