"""Second-variation quadratic form, constrained spectrum, and dispersion.

The energy Hessian at a configuration acts on scalar normal velocities
``phi`` living on interface nodes.  Its discrete matrix is assembled as

    A = S - K - Bd + 8 gamma N + 4 gamma V

with S the 1D arclength stiffness (free ends: no boundary condition is
imposed on phi), K the squared-curvature mass term, Bd the endpoint point
masses weighted by the wall curvature (zero on rectangles, exercised through
the constant-curvature test hook), N the nonlocal coupling assembled one
potential solve per nodal hat function, and V the mass term weighted by the
normal derivative of the configuration potential.

The stability quantity is the smallest eigenvalue of ``A phi = mu M phi``
restricted to the arclength-zero-mean subspace (M is the lumped arclength
mass), i.e. an L2(M)-normalized Rayleigh quotient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import domain as dom_mod
from .domain import RECTANGLE, DomainSpec
from .energy import CriticalityReport, criticality, total_energy
from .field import (
    _bilinear,
    gradient_on_curve,
    solve_line_source,
    trace_line_potential,
    trace_on_curve,
)
from .interface import (
    CHORD,
    Interface,
    RegionState,
    arclengths,
    curvature,
    normals,
    orthogonality_residual,
    quadrature_weights,
    segment_lengths,
    tangents,
    validate_interface,
)

TOL_POS_DEFAULT = 1e-3 * math.pi**2
TOL_CRIT_DEFAULT = 1e-2


@dataclass
class QuadraticFormMatrix:
    """Discrete energy Hessian over interface-node values.

    ``A`` is the assembled symmetric matrix at the stored coupling; the
    gamma-independent parts are kept so the same assembly can be rescaled
    cheaply (used by the threshold search).  ``Wq`` doubles as quadrature
    mass and zero-mean constraint functional.
    """

    A: np.ndarray
    Wq: np.ndarray
    gamma: float
    n_nodes: int
    domain_kind: str
    S: np.ndarray
    K: np.ndarray
    Bd: np.ndarray
    N: np.ndarray
    V: np.ndarray
    nonlocal_asymmetry: float = 0.0

    @property
    def mean_vec(self) -> np.ndarray:
        return self.Wq

    @property
    def mass(self) -> np.ndarray:
        return np.diag(self.Wq)

    def with_gamma(self, gamma: float) -> "QuadraticFormMatrix":
        A = self.S - self.K - self.Bd + 8.0 * gamma * self.N + 4.0 * gamma * self.V
        A = 0.5 * (A + A.T)
        return QuadraticFormMatrix(
            A, self.Wq, gamma, self.n_nodes, self.domain_kind,
            self.S, self.K, self.Bd, self.N, self.V, self.nonlocal_asymmetry,
        )

    def value(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(phi @ self.A @ phi)


def _stiffness(iface: Interface) -> np.ndarray:
    """P1 stiffness along arclength with natural (free) ends."""
    n = iface.n
    ell = segment_lengths(iface)
    S = np.zeros((n, n))
    if iface.closed:
        pairs = [(i, (i + 1) % n, ell[i]) for i in range(n)]
    else:
        pairs = [(i, i + 1, ell[i]) for i in range(n - 1)]
    for i, j, l in pairs:
        w = 1.0 / l
        S[i, i] += w
        S[j, j] += w
        S[i, j] -= w
        S[j, i] -= w
    return S


def _endpoint_point_masses(iface: Interface, spec: DomainSpec) -> np.ndarray:
    n = iface.n
    Bd = np.zeros((n, n))
    if iface.topology != CHORD:
        return Bd
    Bd[0, 0] = dom_mod.boundary_curvature(spec, iface.nodes[0])
    Bd[-1, -1] = dom_mod.boundary_curvature(spec, iface.nodes[-1])
    return Bd


def _fourier_basis(iface: Interface, n_modes: int) -> np.ndarray:
    """Zero-mean-ish arclength Fourier profiles for truncated assembly."""
    s = arclengths(iface)
    L = float(segment_lengths(iface).sum())
    sig = s / L
    cols = []
    if iface.closed:
        for k in range(1, n_modes // 2 + 1):
            cols.append(np.cos(2 * math.pi * k * sig))
            cols.append(np.sin(2 * math.pi * k * sig))
    else:
        for k in range(1, n_modes + 1):
            cols.append(np.cos(math.pi * k * sig))
    return np.column_stack(cols)


def _nonlocal_matrix(state: RegionState, n_modes: int | None) -> tuple[np.ndarray, float]:
    """Assemble the curve-to-curve coupling via one solve per column.

    Full assembly uses nodal hat functions; with ``n_modes`` set, a Galerkin
    compression onto leading arclength Fourier profiles is used instead
    (one solve per profile), suitable for fast coupling scans.
    """
    iface = state.interface
    spec = state.domain
    Wq = quadrature_weights(iface)
    n = iface.n

    if n_modes is not None:
        Phi = _fourier_basis(iface, n_modes)
        sq = np.sqrt(Wq)
        Q, _ = np.linalg.qr(sq[:, None] * Phi)
        Phi = Q / sq[:, None]          # orthonormal in the Wq inner product
        traces = np.column_stack([
            trace_line_potential(solve_line_source(Phi[:, p], iface, spec), iface)
            for p in range(Phi.shape[1])
        ])
        C = (Wq[:, None] * Phi).T @ traces
        asym = float(np.max(np.abs(C - C.T)))
        C = 0.5 * (C + C.T)
        D_Phi = Wq[:, None] * Phi
        return D_Phi @ C @ D_Phi.T, asym

    cols = np.empty((n, n))
    e = np.zeros(n)
    for b in range(n):
        e[:] = 0.0
        e[b] = 1.0
        w = solve_line_source(e, iface, spec)
        cols[:, b] = Wq * trace_line_potential(w, iface)
    asym = float(np.max(np.abs(cols - cols.T)))
    return 0.5 * (cols + cols.T), asym


def assemble_form(state: RegionState, n_modes: int | None = None) -> QuadraticFormMatrix:
    """Assemble the discrete energy Hessian of a configuration.

    One potential solve per interface node (or per Fourier profile when
    ``n_modes`` truncation is requested).  The nonlocal block is symmetrized
    and the pre-symmetrization discrepancy recorded as a discretization
    diagnostic.
    """
    iface = state.interface
    validate_interface(iface, state.domain)
    Wq = quadrature_weights(iface)
    H = curvature(iface)
    S = _stiffness(iface)
    K = np.diag(H * H * Wq)
    Bd = _endpoint_point_masses(iface, state.domain)
    N, asym = _nonlocal_matrix(state, n_modes)
    V = np.diag(gradient_on_curve(state.v, iface) * Wq)
    gamma = state.gamma
    A = S - K - Bd + 8.0 * gamma * N + 4.0 * gamma * V
    A = 0.5 * (A + A.T)
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries in the assembled form")
    return QuadraticFormMatrix(
        A, Wq, gamma, iface.n, state.domain.kind, S, K, Bd, N, V, asym,
    )


def apply_form(state: RegionState, phi) -> float:
    """Quadratic form value at one profile by direct term-by-term quadrature.

    Needs a single potential solve, so it is the cheap path for evaluating
    the Hessian at a handful of profiles (dispersion checks, flows).
    """
    iface = state.interface
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (iface.n,):
        raise ValueError("phi must supply one value per node")
    Wq = quadrature_weights(iface)
    ell = segment_lengths(iface)
    if iface.closed:
        dphi = np.roll(phi, -1) - phi
        stiff = float((dphi * dphi / ell).sum())
    else:
        dphi = np.diff(phi)
        stiff = float((dphi * dphi / ell).sum())
    H = curvature(iface)
    curv_term = float((Wq * H * H * phi * phi).sum())
    bd_term = 0.0
    if iface.topology == CHORD:
        bd_term += dom_mod.boundary_curvature(state.domain, iface.nodes[0]) * phi[0] ** 2
        bd_term += dom_mod.boundary_curvature(state.domain, iface.nodes[-1]) * phi[-1] ** 2
    w = solve_line_source(phi, iface, state.domain)
    nl = float((Wq * phi * trace_line_potential(w, iface)).sum())
    grad_term = float((Wq * gradient_on_curve(state.v, iface) * phi * phi).sum())
    g = state.gamma
    return stiff - curv_term - bd_term + 8.0 * g * nl + 4.0 * g * grad_term


def _zero_mean_basis(c: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane ``c . phi = 0`` (Householder)."""
    u = c / np.linalg.norm(c)
    w = u.copy()
    w[0] -= 1.0
    nw = np.linalg.norm(w)
    H = np.eye(len(c))
    if nw > 1e-14:
        H -= 2.0 * np.outer(w, w) / (nw * nw)
    return H[:, 1:]


def min_eig_zero_mean(form: QuadraticFormMatrix) -> tuple[float, np.ndarray]:
    """Smallest constrained eigenpair of the form.

    Solves ``A phi = mu M phi`` on the subspace ``sum(Wq * phi) = 0`` by
    explicit orthogonal projection; the mode is returned with unit L2(M)
    norm and a deterministic sign.
    """
    Z = _zero_mean_basis(form.Wq)
    B = Z.T @ form.A @ Z
    Mz = Z.T @ (form.Wq[:, None] * Z)
    B = 0.5 * (B + B.T)
    Mz = 0.5 * (Mz + Mz.T)
    try:
        vals, vecs = sla.eigh(B, Mz, subset_by_index=[0, 0])
    except sla.LinAlgError as err:
        raise RuntimeError(f"constrained eigensolve failed: {err}") from err
    mode = Z @ vecs[:, 0]
    mode /= math.sqrt(float((form.Wq * mode * mode).sum()))
    if mode[int(np.argmax(np.abs(mode)))] < 0:
        mode = -mode
    return float(vals[0]), mode


# ---------------------------------------------------------------------------
# general (non-critical) second variation
# ---------------------------------------------------------------------------

@dataclass
class SecondVariationParts:
    total: float
    form_part: float
    extra_surface_term: float
    extra_divergence_term: float

    @property
    def extra(self) -> float:
        return self.extra_surface_term + self.extra_divergence_term


def _as_vector_field(X) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[0] != 2:
        raise ValueError("X must be a (2, nx, ny) cell-centered vector field")
    return X[0], X[1]


def check_tangential(X, spec: DomainSpec, tol: float = 1e-3) -> float:
    """Max wall-normal component of X, linearly extrapolated to the walls."""
    if spec.kind != RECTANGLE:
        return 0.0
    Xx, Xy = _as_vector_field(X)
    scale = max(float(np.max(np.abs(Xx))), float(np.max(np.abs(Xy))), 1e-300)
    worst = max(
        float(np.max(np.abs(1.5 * Xx[0, :] - 0.5 * Xx[1, :]))),
        float(np.max(np.abs(1.5 * Xx[-1, :] - 0.5 * Xx[-2, :]))),
        float(np.max(np.abs(1.5 * Xy[:, 0] - 0.5 * Xy[:, 1]))),
        float(np.max(np.abs(1.5 * Xy[:, -1] - 0.5 * Xy[:, -2]))),
    )
    if worst > tol * scale:
        raise ValueError(
            f"vector field violates the wall-tangency condition ({worst:.3e} > {tol:.1e} * scale)"
        )
    return worst / scale


def _arclength_derivative(f: np.ndarray, iface: Interface) -> np.ndarray:
    s = arclengths(iface)
    if iface.closed:
        L = float(segment_lengths(iface).sum())
        fp = np.roll(f, -1) - np.roll(f, 1)
        ds = np.roll(s, -1) - np.roll(s, 1)
        ds[ds <= 0] += L
        return fp / ds
    return np.gradient(f, s)


def general_second_variation_parts(
    state: RegionState, X, ortho_tol: float = 5e-2, tangent_tol: float = 1e-3
) -> SecondVariationParts:
    """Second energy derivative along the flow of a wall-tangent field.

    Valid for configurations meeting the walls orthogonally (within
    ``ortho_tol`` radians); others are refused.  The value decomposes into
    the quadratic form at the normal velocity plus two non-critical terms
    that vanish for critical configurations under admissible fields.
    """
    Xx, Xy = _as_vector_field(X)
    spec = state.domain
    check_tangential(X, spec, tangent_tol)
    iface = state.interface
    if iface.topology == CHORD:
        res = orthogonality_residual(iface, spec)
        if max(res) > ortho_tol:
            raise ValueError(
                f"configuration violates wall orthogonality ({max(res):.3f} rad)"
            )
    nu = normals(iface)
    tau = tangents(iface)
    Xx_n = _bilinear(Xx, iface.nodes, spec)
    Xy_n = _bilinear(Xy, iface.nodes, spec)
    phi = Xx_n * nu[:, 0] + Xy_n * nu[:, 1]
    Xt = Xx_n * tau[:, 0] + Xy_n * tau[:, 1]

    form_part = apply_form(state, phi)

    H = curvature(iface)
    balance = H + 4.0 * state.gamma * trace_on_curve(state.v, iface)
    Wq = quadrature_weights(iface)

    div_grid = (np.gradient(Xx, spec.hx, axis=0) + np.gradient(Xy, spec.hy, axis=1))
    div_n = _bilinear(div_grid, iface.nodes, spec)
    surf = -float((Wq * balance * _arclength_derivative(Xt * phi, iface)).sum())
    dive = float((Wq * balance * div_n * phi).sum())
    return SecondVariationParts(form_part + surf + dive, form_part, surf, dive)


def general_second_variation(state: RegionState, X, **kw) -> float:
    return general_second_variation_parts(state, X, **kw).total


def flow_second_difference(
    state: RegionState, X, t_step: float = 1e-2, substeps: int = 8
) -> float:
    """Centered second difference of the energy along the flow of X.

    Interface nodes are integrated with RK4 through the bilinear-sampled
    field to ``+/- t_step``; chord endpoints are re-projected onto their
    walls after every substep.  This is the independent check of the
    assembled second variation.
    """
    Xx, Xy = _as_vector_field(X)
    spec = state.domain

    def velocity(pts):
        return np.column_stack([_bilinear(Xx, pts, spec), _bilinear(Xy, pts, spec)])

    def flowed(t_final: float) -> RegionState:
        pts = state.interface.nodes.copy()
        dt = t_final / substeps
        walls = None
        if state.interface.topology == CHORD:
            eps = 1e-8 * min(spec.Lx, spec.Ly)
            walls = (
                dom_mod.on_wall(spec, pts[0], tol=eps),
                dom_mod.on_wall(spec, pts[-1], tol=eps),
            )
        for _ in range(substeps):
            k1 = velocity(pts)
            k2 = velocity(pts + 0.5 * dt * k1)
            k3 = velocity(pts + 0.5 * dt * k2)
            k4 = velocity(pts + dt * k3)
            pts = pts + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if walls is not None:
                pts[0] = dom_mod.project_to_wall(spec, pts[0], walls[0])
                pts[-1] = dom_mod.project_to_wall(spec, pts[-1], walls[1])
        return RegionState(Interface(pts, state.interface.topology), spec, state.gamma)

    J0 = total_energy(state)
    Jp = total_energy(flowed(t_step))
    Jm = total_energy(flowed(-t_step))
    return (Jp - 2.0 * J0 + Jm) / t_step**2


# ---------------------------------------------------------------------------
# lamella dispersion oracle
# ---------------------------------------------------------------------------

def lamella_dispersion(a: float, gamma: float, k: int) -> float:
    """Closed-form Hessian value of the unit-square lamella on cosine modes.

    For the straight interface at x = a perturbed by ``cos(k pi y)``, the
    transverse potential profile separates and the Hessian value is

        mu(k) = k^2 pi^2 / 2
                + 4 gamma [cosh(k pi a) cosh(k pi (1-a)) / (k pi sinh(k pi))
                           - a (1 - a)].
    """
    if not (0.0 < a < 1.0):
        raise ValueError("lamella position must lie in (0, 1)")
    if k < 1:
        raise ValueError("mode index must be >= 1 (constants violate zero mean)")
    kp = k * math.pi
    # cosh(x)cosh(y)/sinh(x+y) computed stably for large arguments
    w = _coshcosh_over_sinh(kp * a, kp * (1.0 - a)) / kp
    return 0.5 * k**2 * math.pi**2 + 4.0 * gamma * (w - a * (1.0 - a))


def _coshcosh_over_sinh(x: float, y: float) -> float:
    # cosh(x)cosh(y)/sinh(x+y) = (1+e^-2x)(1+e^-2y) / (2(1-e^-2(x+y)))
    ex = math.exp(-2.0 * x)
    ey = math.exp(-2.0 * y)
    return (1.0 + ex) * (1.0 + ey) / (2.0 * (1.0 - ex * ey))


def lamella_mode_coefficient(a: float, k: int) -> float:
    """Coupling coefficient of mode k: mu(k) = k^2 pi^2/2 + 4 gamma coeff."""
    kp = k * math.pi
    return _coshcosh_over_sinh(kp * a, kp * (1.0 - a)) / kp - a * (1.0 - a)


def lamella_gamma_star(a: float, k: int) -> float:
    """Coupling at which mode k of the lamella loses stability."""
    b = lamella_mode_coefficient(a, k)
    if b >= 0.0:
        raise ValueError(f"mode {k} has nonnegative coupling coefficient; no root")
    return -0.5 * k**2 * math.pi**2 / (4.0 * b)


# ---------------------------------------------------------------------------
# stability verdict
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    """Constrained spectral certificate bundled with the criticality check."""

    mu_min: float
    mode: np.ndarray
    criticality: CriticalityReport
    verdict: str
    gap_estimate: float
    tol_pos: float
    tol_crit: float

    def to_dict(self) -> dict:
        return {
            "mu_min": self.mu_min,
            "verdict": self.verdict,
            "gap_estimate": self.gap_estimate,
            "tol_pos": self.tol_pos,
            "tol_crit": self.tol_crit,
            "criticality": self.criticality.to_dict(),
        }


def stability_report(
    state: RegionState,
    tol_pos: float = TOL_POS_DEFAULT,
    tol_crit: float = TOL_CRIT_DEFAULT,
    n_modes: int | None = None,
) -> StabilityReport:
    """Criticality plus constrained minimal eigenvalue, with a verdict.

    ``stable`` needs a positive spectral gap and a small criticality
    residual; a clearly negative eigenvalue is ``unstable`` regardless of
    criticality; everything else is ``inconclusive``.
    """
    crit = criticality(state)
    form = assemble_form(state, n_modes=n_modes)
    mu_min, mode = min_eig_zero_mean(form)
    if mu_min > tol_pos and crit.residual_sup < tol_crit:
        verdict = "stable"
    elif mu_min < -tol_pos:
        verdict = "unstable"
    else:
        verdict = "inconclusive"
    h1 = float(mode @ form.S @ mode) + 1.0  # mode has unit L2(M) norm
    return StabilityReport(
        mu_min=mu_min,
        mode=mode,
        criticality=crit,
        verdict=verdict,
        gap_estimate=mu_min / h1,
        tol_pos=tol_pos,
        tol_crit=tol_crit,
    )
