"""Grid fields and the Poisson machinery.

Everything grid-related lives here: exact rasterization of region polygons
into per-cell coverage fractions, the zero-mean Poisson solve with Neumann
walls or periodic wrapping, the discrete Dirichlet energy that is exactly
consistent with the 5-point operator, curve traces, and the splatting of
arclength measures used for the nonlocal part of the second variation.

Solver notes
------------
The 5-point operator restricted to zero-mean fields is symmetric positive
definite.  ``solve_potential`` accepts three methods:

* ``"lu"`` (default for ``"auto"``): a cached sparse LU factorization of the
  pinned operator; the relative residual is verified against the 1e-10
  contract after every solve.
* ``"cg"``: matrix-free conjugate gradients on the zero-mean subspace with
  an iteration cap of ``20 * (nx + ny)``.
* ``"auto"``: LU, with CG refinement if the verified residual is ever above
  tolerance.

Both paths implement exactly the same discrete operator; tests assert this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import TORUS, DomainSpec
from .interface import Interface, normals, region_polygons

SOLVE_TOL = 1e-10


class SolverError(RuntimeError):
    """Poisson solve failed to reach the residual contract."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class ScalarField:
    """One value per cell center on the domain grid."""

    spec: DomainSpec
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.nx, self.spec.ny):
            raise ValueError("field shape does not match the grid")
        if self.mean_zero:
            scale = float(np.max(np.abs(self.values))) or 1.0
            if abs(self.values.mean()) > 1e-10 * scale:
                raise ValueError("field flagged mean_zero has a nonzero cell average")

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def copy(self) -> "ScalarField":
        return ScalarField(self.spec, self.values.copy(), self.mean_zero)


# ---------------------------------------------------------------------------
# exact coverage rasterization
# ---------------------------------------------------------------------------

def coverage_fractions(polys, spec: DomainSpec) -> np.ndarray:
    """Exact per-cell area fractions of a winding-summed polygon collection.

    Each polygon contributes its winding number (+1 inside counterclockwise
    rings, -1 inside clockwise rings); the usual cases are a single positive
    region polygon, or a container box plus a clockwise hole.  The algorithm
    integrates, per polygon edge and per grid row, the exact horizontal
    clamp integral, so the summed cell areas reproduce the shoelace area to
    round-off -- no sampling is involved.
    """
    nx, ny, hx, hy = spec.nx, spec.ny, spec.hx, spec.hy
    area = np.zeros((nx, ny))
    fulldelta = np.zeros((nx + 1, ny))
    for poly in polys:
        P = np.asarray(poly, dtype=float)
        Q = np.roll(P, -1, axis=0)
        for (x0, y0), (x1, y1) in zip(P, Q):
            if y0 == y1:
                continue
            s = 1.0 if y1 > y0 else -1.0
            ylo, yhi = (y0, y1) if y0 < y1 else (y1, y0)
            j_lo = max(0, int(math.floor(ylo / hy)))
            j_hi = min(ny - 1, int(math.ceil(yhi / hy)) - 1)
            inv_dy = 1.0 / (y1 - y0)
            for j in range(j_lo, j_hi + 1):
                c = max(ylo, j * hy)
                d = min(yhi, (j + 1) * hy)
                if d <= c:
                    continue
                xc = x0 + (c - y0) * inv_dy * (x1 - x0)
                xd = x0 + (d - y0) * inv_dy * (x1 - x0)
                dy = d - c
                xlo, xhi = (xc, xd) if xc <= xd else (xd, xc)
                i_lo = min(nx - 1, max(0, int(math.floor(xlo / hx))))
                if xhi - xlo < 1e-14 * hx:
                    val = min(max(xlo - i_lo * hx, 0.0), hx)
                    area[i_lo, j] += s * dy * val
                    fulldelta[i_lo, j] += s * dy * hx
                    continue
                i_hi = min(nx - 1, max(i_lo, int(math.ceil(xhi / hx)) - 1))
                inv_dx = 1.0 / (xhi - xlo)
                for i in range(i_lo, i_hi + 1):
                    A = i * hx
                    B = A + hx
                    area[i, j] += s * dy * (_clamp_int(xhi, A, B, hx)
                                            - _clamp_int(xlo, A, B, hx)) * inv_dx
                fulldelta[i_lo, j] += s * dy * hx
    suffix = np.cumsum(fulldelta[::-1, :], axis=0)[::-1, :]
    area += suffix[1:, :]
    return np.clip(area / (hx * hy), 0.0, 1.0)


def _clamp_int(x: float, A: float, B: float, hx: float) -> float:
    """Antiderivative of x -> clamp(x - A, 0, hx) with breakpoints A, B."""
    if x <= A:
        return 0.0
    if x >= B:
        return hx * (x - B) + 0.5 * hx * hx
    return 0.5 * (x - A) * (x - A)


def rasterize_indicator(state) -> ScalarField:
    """Phase indicator on cells: +1 inside E, -1 outside, exact fractions.

    Straddled cells get ``2 * fraction - 1``; the cell average therefore
    reproduces the mean phase of the state to round-off.
    """
    fr = coverage_fractions(region_polygons(state.interface, state.domain), state.domain)
    return ScalarField(state.domain, 2.0 * fr - 1.0)


# ---------------------------------------------------------------------------
# 5-point operator, CG and cached LU solves
# ---------------------------------------------------------------------------

def apply_operator(values: np.ndarray, spec: DomainSpec) -> np.ndarray:
    """Matrix-free 5-point negative Laplacian with the domain's closure."""
    mode = "wrap" if spec.periodic else "edge"
    p = np.pad(values, 1, mode=mode)
    return ((2.0 * values - p[:-2, 1:-1] - p[2:, 1:-1]) / spec.hx**2
            + (2.0 * values - p[1:-1, :-2] - p[1:-1, 2:]) / spec.hy**2)


def _neumann_1d(n: int) -> sp.csr_matrix:
    e = np.ones(n)
    T = sp.diags([-e[:-1], 2.0 * e, -e[:-1]], [-1, 0, 1], format="lil")
    T[0, 0] = 1.0
    T[n - 1, n - 1] = 1.0
    return T.tocsr()


def _periodic_1d(n: int) -> sp.csr_matrix:
    e = np.ones(n)
    T = sp.diags([-e[:-1], 2.0 * e, -e[:-1]], [-1, 0, 1], format="lil")
    T[0, n - 1] -= 1.0
    T[n - 1, 0] -= 1.0
    return T.tocsr()


@lru_cache(maxsize=8)
def _factorized(key) -> spla.SuperLU:
    kind, nx, ny, hx, hy = key
    one_d = _periodic_1d if kind == TORUS else _neumann_1d
    A = (sp.kron(one_d(nx) / hx**2, sp.eye(ny, format="csr"))
         + sp.kron(sp.eye(nx, format="csr"), one_d(ny) / hy**2)).tolil()
    A[0, 0] += 1.0  # pin the constant mode; harmless for zero-mean sources
    return spla.splu(A.tocsc())


def _cg_zero_mean(b: np.ndarray, spec: DomainSpec, x0: np.ndarray | None,
                  tol: float, maxiter: int) -> tuple[np.ndarray, float, int]:
    nb = math.sqrt(float((b * b).sum()))
    if nb == 0.0:
        return np.zeros_like(b), 0.0, 0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_operator(x, spec)
    p = r.copy()
    rs = float((r * r).sum())
    it = 0
    while math.sqrt(rs) > tol * nb and it < maxiter:
        Ap = apply_operator(p, spec)
        alpha = rs / float((p * Ap).sum())
        x += alpha * p
        r -= alpha * Ap
        rs_new = float((r * r).sum())
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    return x, math.sqrt(rs) / nb, it


def solve_potential(source, spec: DomainSpec | None = None, method: str = "auto") -> ScalarField:
    """Solve the zero-mean Poisson problem ``-lap v = source - mean(source)``.

    Neumann ghost cells on rectangles, periodic wrapping on tori.  The mean
    of the source is removed internally (solvability), and the returned
    field has zero mean.  The relative residual is required to be at most
    1e-10; a :class:`SolverError` carrying the residual is raised otherwise.
    """
    if isinstance(source, ScalarField):
        spec = source.spec
        b = source.values - source.values.mean()
    else:
        if spec is None:
            raise ValueError("spec required when source is a bare array")
        b = np.asarray(source, dtype=float)
        b = b - b.mean()
    nb = math.sqrt(float((b * b).sum()))
    if nb == 0.0:
        return ScalarField(spec, np.zeros_like(b), mean_zero=True)
    maxiter = 20 * (spec.nx + spec.ny)

    if method == "cg":
        v, res, it = _cg_zero_mean(b, spec, None, SOLVE_TOL, maxiter)
        if res > SOLVE_TOL:
            raise SolverError(f"CG hit the {maxiter}-iteration cap", res)
    elif method in ("auto", "lu"):
        key = (spec.kind, spec.nx, spec.ny, spec.hx, spec.hy)
        v = _factorized(key).solve(b.ravel()).reshape(spec.nx, spec.ny)
        res = float(np.linalg.norm(apply_operator(v, spec) - b)) / nb
        if res > SOLVE_TOL:
            if method == "lu":
                raise SolverError("LU residual above tolerance", res)
            v, res, _ = _cg_zero_mean(b, spec, v, SOLVE_TOL, maxiter)
            if res > SOLVE_TOL:
                raise SolverError(f"CG refinement hit the {maxiter}-iteration cap", res)
    else:
        raise ValueError(f"unknown method {method!r}")
    v = v - v.mean()
    if not np.all(np.isfinite(v)):
        raise SolverError("non-finite solve output", math.inf)
    return ScalarField(spec, v, mean_zero=True)


def dirichlet_energy(v: ScalarField) -> float:
    """Face-gradient quadrature of the squared gradient.

    This is the discrete energy consistent with the 5-point operator: for a
    converged solve it equals ``sum(source * v) * cell_area`` to round-off.
    """
    spec = v.spec
    w = v.values
    if spec.periodic:
        gx = (np.roll(w, -1, axis=0) - w) / spec.hx
        gy = (np.roll(w, -1, axis=1) - w) / spec.hy
    else:
        gx = (w[1:, :] - w[:-1, :]) / spec.hx
        gy = (w[:, 1:] - w[:, :-1]) / spec.hy
    return float(((gx**2).sum() + (gy**2).sum()) * spec.hx * spec.hy)


# ---------------------------------------------------------------------------
# curve traces
# ---------------------------------------------------------------------------

def _bilinear(values: np.ndarray, pts: np.ndarray, spec: DomainSpec,
              origin=(0.5, 0.5), shape=None) -> np.ndarray:
    """Bilinear interpolation on a lattice with given half-cell origin.

    Rectangle lattices clamp the sample coordinates (constant wall-normal
    extrapolation, matching the Neumann reflection); torus lattices wrap.
    """
    nx, ny = shape if shape is not None else (spec.nx, spec.ny)
    gx = pts[:, 0] / spec.hx - origin[0]
    gy = pts[:, 1] / spec.hy - origin[1]
    if spec.periodic:
        gx = np.mod(gx, nx)
        gy = np.mod(gy, ny)
        ix = np.floor(gx).astype(int)
        iy = np.floor(gy).astype(int)
        fx = gx - ix
        fy = gy - iy
        ix1 = np.mod(ix + 1, nx)
        iy1 = np.mod(iy + 1, ny)
        ix = np.mod(ix, nx)
        iy = np.mod(iy, ny)
    else:
        gx = np.clip(gx, 0.0, nx - 1.0)
        gy = np.clip(gy, 0.0, ny - 1.0)
        ix = np.clip(np.floor(gx).astype(int), 0, nx - 2)
        iy = np.clip(np.floor(gy).astype(int), 0, ny - 2)
        fx = gx - ix
        fy = gy - iy
        ix1 = ix + 1
        iy1 = iy + 1
    return (values[ix, iy] * (1 - fx) * (1 - fy)
            + values[ix1, iy] * fx * (1 - fy)
            + values[ix, iy1] * (1 - fx) * fy
            + values[ix1, iy1] * fx * fy)


def _require_inside_closure(pts: np.ndarray, spec: DomainSpec) -> None:
    if spec.periodic:
        return
    tol = 1e-12 * max(spec.Lx, spec.Ly)
    if (np.any(pts[:, 0] < -tol) or np.any(pts[:, 0] > spec.Lx + tol)
            or np.any(pts[:, 1] < -tol) or np.any(pts[:, 1] > spec.Ly + tol)):
        raise ValueError("trace node outside the domain closure")


def trace_on_curve(v: ScalarField, iface: Interface) -> np.ndarray:
    """Bilinear trace of a cell-centered field at the interface nodes."""
    _require_inside_closure(iface.nodes, v.spec)
    return _bilinear(v.values, iface.nodes, v.spec)


def _face_gradients(v: ScalarField):
    """Face-centered gradient lattices, including the wall faces."""
    spec = v.spec
    w = v.values
    if spec.periodic:
        gx = (w - np.roll(w, 1, axis=0)) / spec.hx     # face i at x = i*hx
        gy = (w - np.roll(w, 1, axis=1)) / spec.hy
        return gx, gy
    gx = np.zeros((spec.nx + 1, spec.ny))
    gx[1:-1, :] = (w[1:, :] - w[:-1, :]) / spec.hx     # zero flux at walls
    gy = np.zeros((spec.nx, spec.ny + 1))
    gy[:, 1:-1] = (w[:, 1:] - w[:, :-1]) / spec.hy
    return gx, gy


def gradient_on_curve(v: ScalarField, iface: Interface) -> np.ndarray:
    """Normal component of the field gradient at the interface nodes."""
    spec = v.spec
    _require_inside_closure(iface.nodes, spec)
    gx, gy = _face_gradients(v)
    nu = normals(iface)
    if spec.periodic:
        gxs = _bilinear(gx, iface.nodes, spec, origin=(0.0, 0.5), shape=gx.shape)
        gys = _bilinear(gy, iface.nodes, spec, origin=(0.5, 0.0), shape=gy.shape)
    else:
        gxs = _bilinear(gx, iface.nodes, spec, origin=(0.0, 0.5), shape=gx.shape)
        gys = _bilinear(gy, iface.nodes, spec, origin=(0.5, 0.0), shape=gy.shape)
    return gxs * nu[:, 0] + gys * nu[:, 1]


# ---------------------------------------------------------------------------
# arclength measure sources
# ---------------------------------------------------------------------------

def splat_line_density(phi, iface: Interface, spec: DomainSpec) -> np.ndarray:
    """Deposit ``phi dH^1`` along the polyline onto cell centers.

    Each segment is subdivided into pieces no longer than half a cell; each
    piece deposits its exact linear-interpolant mass onto the four nearest
    cell centers with bilinear weights.  Total deposited mass equals the
    polyline integral of phi exactly; the result is a density (mass divided
    by cell area).
    """
    phi = np.asarray(phi, dtype=float)
    nx, ny, hx, hy = spec.nx, spec.ny, spec.hx, spec.hy
    nodes = iface.nodes
    if iface.closed:
        p0 = nodes
        p1 = np.roll(nodes, -1, axis=0)
        f0 = phi
        f1 = np.roll(phi, -1)
    else:
        p0, p1 = nodes[:-1], nodes[1:]
        f0, f1 = phi[:-1], phi[1:]
    L = np.linalg.norm(p1 - p0, axis=1)
    h_sub = 0.5 * min(hx, hy)
    m = np.maximum(1, np.ceil(L / h_sub).astype(int))
    idx = np.repeat(np.arange(len(L)), m)
    cum = np.concatenate([[0], np.cumsum(m)])
    r = np.arange(cum[-1]) - np.repeat(cum[:-1], m)
    t = (r + 0.5) / m[idx]
    pts = p0[idx] + t[:, None] * (p1 - p0)[idx]
    vals = f0[idx] + t * (f1 - f0)[idx]
    mass = vals * (L / m)[idx]

    src = np.zeros((nx, ny))
    gx = pts[:, 0] / hx - 0.5
    gy = pts[:, 1] / hy - 0.5
    if spec.periodic:
        ix = np.floor(gx).astype(int)
        iy = np.floor(gy).astype(int)
        fx = gx - ix
        fy = gy - iy
        ix0, ix1 = np.mod(ix, nx), np.mod(ix + 1, nx)
        iy0, iy1 = np.mod(iy, ny), np.mod(iy + 1, ny)
    else:
        gx = np.clip(gx, 0.0, nx - 1.0)
        gy = np.clip(gy, 0.0, ny - 1.0)
        ix0 = np.clip(np.floor(gx).astype(int), 0, nx - 2)
        iy0 = np.clip(np.floor(gy).astype(int), 0, ny - 2)
        fx = gx - ix0
        fy = gy - iy0
        ix1, iy1 = ix0 + 1, iy0 + 1
    np.add.at(src, (ix0, iy0), mass * (1 - fx) * (1 - fy))
    np.add.at(src, (ix1, iy0), mass * fx * (1 - fy))
    np.add.at(src, (ix0, iy1), mass * (1 - fx) * fy)
    np.add.at(src, (ix1, iy1), mass * fx * fy)
    return src / (hx * hy)


def solve_line_source(phi, iface: Interface, spec: DomainSpec,
                      method: str = "auto") -> ScalarField:
    """Potential of the arclength source ``phi dH^1`` minus its domain mean.

    The compensating constant makes the source zero-mean, so the solve is
    well posed for any phi; the gauge is fixed by a zero-mean solution.
    """
    src = splat_line_density(phi, iface, spec)
    return solve_potential(src, spec, method=method)


def trace_line_potential(w: ScalarField, iface: Interface,
                         offset: float = 2.2, step: float = 1.0) -> np.ndarray:
    """Trace of a line-source potential on its own source curve.

    The potential has a normal-derivative jump across the curve and its
    splatted source occupies a one-cell band around it, so a direct bilinear
    read-off there carries an O(h) error.  Instead the values are recovered
    by quadratic extrapolation toward the curve from three sample points on
    each side (offsets ``offset, offset+step, offset+2*step`` in units of
    ``max(hx, hy)``, all outside the splat band) and the two one-sided limits
    are averaged; the potential is continuous across the curve.
    """
    spec = w.spec
    h = max(spec.hx, spec.hy)
    nu = normals(iface)
    offs = (offset + step * np.arange(3)) * h
    t = offs
    l0 = (0 - t[1]) * (0 - t[2]) / ((t[0] - t[1]) * (t[0] - t[2]))
    l1 = (0 - t[0]) * (0 - t[2]) / ((t[1] - t[0]) * (t[1] - t[2]))
    l2 = (0 - t[0]) * (0 - t[1]) / ((t[2] - t[0]) * (t[2] - t[1]))
    out = np.zeros(iface.n)
    for sgn in (1.0, -1.0):
        samp = [
            _bilinear(w.values, iface.nodes + sgn * o * nu, spec) for o in offs
        ]
        out += 0.5 * (l0 * samp[0] + l1 * samp[1] + l2 * samp[2])
    return out
