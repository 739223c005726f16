"""Polyline interfaces and region states.

An :class:`Interface` is an ordered polyline representing the part of the
phase boundary lying inside the container.  Orientation convention used
throughout: the enclosed phase E lies to the LEFT of the direction of node
traversal, so the outward unit normal (pointing out of E) is the tangent
rotated by -90 degrees, and the signed curvature is positive where E is
locally convex (a counterclockwise circle enclosing E reports +1/R).

Chords start and end on the container walls; loops are closed simple
polylines strictly inside the container.  A :class:`RegionState` bundles an
interface with its domain and the nonlocal coupling, and lazily caches the
derived quantities (area, mean phase, indicator and potential fields).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from shapely.geometry import LinearRing, LineString, Polygon

from . import domain as dom_mod
from .domain import RECTANGLE, DomainSpec

CHORD = "chord"
LOOP = "loop"

MIN_NODES = 16


@dataclass
class Interface:
    """Oriented polyline boundary; E lies to the left of the node order."""

    nodes: np.ndarray
    topology: str

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError("nodes must be an (n, 2) array")
        if self.topology not in (CHORD, LOOP):
            raise ValueError(f"unknown topology {self.topology!r}")
        if len(self.nodes) < MIN_NODES:
            raise ValueError(f"node count {len(self.nodes)} below minimum {MIN_NODES}")
        d = np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)
        if np.any(d == 0.0):
            raise ValueError("repeated consecutive nodes")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def closed(self) -> bool:
        return self.topology == LOOP

    def copy(self) -> "Interface":
        return Interface(self.nodes.copy(), self.topology)

    def reversed(self) -> "Interface":
        """Same polyline, opposite traversal (flips which side is E)."""
        return Interface(self.nodes[::-1].copy(), self.topology)


# ---------------------------------------------------------------------------
# basic differential geometry of the polyline
# ---------------------------------------------------------------------------

def segment_vectors(iface: Interface) -> np.ndarray:
    """Edge vectors; loops include the closing edge."""
    if iface.closed:
        return np.roll(iface.nodes, -1, axis=0) - iface.nodes
    return np.diff(iface.nodes, axis=0)


def segment_lengths(iface: Interface) -> np.ndarray:
    return np.linalg.norm(segment_vectors(iface), axis=1)


def perimeter(iface: Interface) -> float:
    return float(segment_lengths(iface).sum())


def arclengths(iface: Interface) -> np.ndarray:
    """Cumulative arclength per node, starting at 0."""
    ell = segment_lengths(iface)
    if iface.closed:
        return np.concatenate([[0.0], np.cumsum(ell[:-1])])
    return np.concatenate([[0.0], np.cumsum(ell)])


def tangents(iface: Interface) -> np.ndarray:
    """Unit tangents per node (central differences, one-sided at chord ends)."""
    p = iface.nodes
    if iface.closed:
        t = np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
    else:
        t = np.empty_like(p)
        t[1:-1] = p[2:] - p[:-2]
        t[0] = p[1] - p[0]
        t[-1] = p[-1] - p[-2]
    return t / np.linalg.norm(t, axis=1)[:, None]


def normals(iface: Interface) -> np.ndarray:
    """Outward unit normals (pointing out of E): tangent rotated by -90 deg."""
    t = tangents(iface)
    return np.column_stack([t[:, 1], -t[:, 0]])


def quadrature_weights(iface: Interface) -> np.ndarray:
    """Trapezoid arclength weights per node; they sum to the perimeter."""
    ell = segment_lengths(iface)
    n = iface.n
    w = np.zeros(n)
    if iface.closed:
        w = 0.5 * (ell + np.roll(ell, 1))
    else:
        w[:-1] += 0.5 * ell
        w[1:] += 0.5 * ell
    return w


def _menger(p, q, r):
    """Signed circumcircle curvature of a node triple (positive = left turn)."""
    a = q - p
    b = r - q
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    la = np.linalg.norm(a, axis=-1)
    lb = np.linalg.norm(b, axis=-1)
    lc = np.linalg.norm(r - p, axis=-1)
    denom = la * lb * lc
    if np.any(denom == 0.0):
        raise ValueError("degenerate node triple (repeated points)")
    return 2.0 * cross / denom


def _one_sided_curvature(p0, p1, p2, s0, s1, s2):
    """Curvature at p0 from a one-sided quadratic fit in arclength."""
    d1 = (p1 - p0) / (s1 - s0)
    d2 = ((p2 - p1) / (s2 - s1) - d1) / (s2 - s0)
    rp = d1 - (s1 - s0) * d2   # r'(s0)
    rpp = 2.0 * d2             # r''(s0)
    cross = rp[0] * rpp[1] - rp[1] * rpp[0]
    return float(cross / np.linalg.norm(rp) ** 3)


def curvature(iface: Interface) -> np.ndarray:
    """Signed curvature per node; positive where E is locally convex.

    Interior nodes use the circumscribed-circle formula on node triples;
    chord endpoints use one-sided second differences in arclength.  The
    squared second fundamental form is ``curvature(...)**2`` in 2D.
    """
    p = iface.nodes
    if iface.closed:
        return _menger(np.roll(p, 1, axis=0), p, np.roll(p, -1, axis=0))
    kappa = np.empty(iface.n)
    kappa[1:-1] = _menger(p[:-2], p[1:-1], p[2:])
    s = arclengths(iface)
    kappa[0] = _one_sided_curvature(p[0], p[1], p[2], s[0], s[1], s[2])
    kappa[-1] = _one_sided_curvature(p[-1], p[-2], p[-3], s[-1], s[-2], s[-3])
    return kappa


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def resample_count(iface: Interface, n_nodes: int) -> Interface:
    """Redistribute exactly ``n_nodes`` nodes uniformly in arclength.

    Linear interpolation along the existing polyline; chord endpoints stay
    fixed, loops keep their first node as anchor so repeated resampling is
    deterministic.
    """
    if n_nodes < MIN_NODES:
        raise ValueError(f"node count {n_nodes} below minimum {MIN_NODES}")
    L = perimeter(iface)
    if L <= 0.0 or not np.isfinite(L):
        raise ValueError("degenerate interface with zero length")
    if iface.closed:
        pts = np.vstack([iface.nodes, iface.nodes[:1]])
        s_new = np.arange(n_nodes) * (L / n_nodes)
    else:
        pts = iface.nodes
        s_new = np.linspace(0.0, L, n_nodes)
    ell = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(ell)])
    s[-1] = L  # guard against roundoff at the far end
    x = np.interp(s_new, s, pts[:, 0])
    y = np.interp(s_new, s, pts[:, 1])
    return Interface(np.column_stack([x, y]), iface.topology)


def resample(iface: Interface, h_target: float) -> Interface:
    """Resample to uniform spacing close to ``h_target`` (at most P/16)."""
    L = perimeter(iface)
    if L <= 0.0 or not np.isfinite(L):
        raise ValueError("degenerate interface with zero length")
    if h_target > L / MIN_NODES:
        raise ValueError("h_target too coarse for the minimum node count")
    if iface.closed:
        n_nodes = max(MIN_NODES, int(round(L / h_target)))
    else:
        n_nodes = max(MIN_NODES, int(round(L / h_target)) + 1)
    return resample_count(iface, n_nodes)


# ---------------------------------------------------------------------------
# region closure, measures, validity
# ---------------------------------------------------------------------------

def shoelace(poly: np.ndarray) -> float:
    q = np.roll(poly, -1, axis=0)
    return 0.5 * float(np.sum(poly[:, 0] * q[:, 1] - q[:, 0] * poly[:, 1]))


def _wall_parameter(spec: DomainSpec, p, wall: int) -> float:
    """Counterclockwise perimeter parameter of a wall point."""
    x, y = float(p[0]), float(p[1])
    Lx, Ly = spec.Lx, spec.Ly
    if wall == dom_mod.WALL_BOTTOM:
        return x
    if wall == dom_mod.WALL_RIGHT:
        return Lx + y
    if wall == dom_mod.WALL_TOP:
        return Lx + Ly + (Lx - x)
    return 2 * Lx + Ly + (Ly - y)


def close_chord_polygon(iface: Interface, spec: DomainSpec) -> np.ndarray:
    """Close a chord into the region polygon of E along the container walls.

    The walk continues counterclockwise (interior on the left, matching the
    chord orientation), so the result always has positive signed area equal
    to |E|.
    """
    if iface.topology != CHORD:
        raise ValueError("not a chord")
    if spec.kind != RECTANGLE:
        raise ValueError("chords require a rectangle domain")
    Lx, Ly = spec.Lx, spec.Ly
    per = 2.0 * (Lx + Ly)
    w_end = dom_mod.on_wall(spec, iface.nodes[-1], tol=1e-8 * min(Lx, Ly))
    w_start = dom_mod.on_wall(spec, iface.nodes[0], tol=1e-8 * min(Lx, Ly))
    t = _wall_parameter(spec, iface.nodes[-1], w_end)
    target = _wall_parameter(spec, iface.nodes[0], w_start)
    if target <= t + 1e-15 * per:
        target += per
    corner_ts = np.array([Lx, Lx + Ly, 2 * Lx + Ly, per])
    corner_pts = np.array([[Lx, 0.0], [Lx, Ly], [0.0, Ly], [0.0, 0.0]])
    pts = [iface.nodes]
    extra = []
    for lap in (0.0, per):
        for ct, cp in zip(corner_ts + lap, np.vstack([corner_pts, corner_pts])[:4]):
            if t + 1e-12 * per < ct < target - 1e-12 * per:
                extra.append(cp)
    if extra:
        pts.append(np.array(extra))
    return np.vstack(pts)


def region_polygons(iface: Interface, spec: DomainSpec) -> list[np.ndarray]:
    """Polygon(s) whose winding sum is the indicator of E.

    Chords close along the walls into one positive polygon.  A loop traversed
    counterclockwise (E inside) is returned as-is; a clockwise loop means E
    is the complement, represented as the full container plus the clockwise
    hole.
    """
    if iface.topology == CHORD:
        return [close_chord_polygon(iface, spec)]
    s = shoelace(iface.nodes)
    if s > 0:
        return [iface.nodes]
    box = np.array(
        [[0.0, 0.0], [spec.Lx, 0.0], [spec.Lx, spec.Ly], [0.0, spec.Ly]]
    )
    return [box, iface.nodes]


def region_area(iface: Interface, spec: DomainSpec) -> float:
    if iface.topology == CHORD:
        return shoelace(close_chord_polygon(iface, spec))
    s = shoelace(iface.nodes)
    return s if s > 0 else spec.area + s


def measures(iface: Interface, spec: DomainSpec) -> tuple[float, float]:
    """Relative perimeter and enclosed area (P(E, Omega), |E|).

    The perimeter counts only the polyline itself; wall portions of the
    region boundary are excluded.  The area comes from the shoelace formula
    on the closed region polygon.
    """
    validate_interface(iface, spec)
    return perimeter(iface), region_area(iface, spec)


def region_shapely(iface: Interface, spec: DomainSpec) -> Polygon:
    """Shapely polygon of E (used for boolean area computations)."""
    if iface.topology == CHORD:
        return Polygon(close_chord_polygon(iface, spec))
    s = shoelace(iface.nodes)
    if s > 0:
        return Polygon(iface.nodes)
    box = Polygon(
        [(0.0, 0.0), (spec.Lx, 0.0), (spec.Lx, spec.Ly), (0.0, spec.Ly)]
    )
    return box.difference(Polygon(iface.nodes))


def symmetric_difference_area(a: Interface, b: Interface, spec: DomainSpec) -> float:
    """|A symm-diff B| via exact polygon booleans, pixel-count fallback.

    The fallback rasterizes both regions at 4x the domain grid and sums
    absolute coverage differences; it only triggers when the polygon boolean
    reports an invalid geometry.
    """
    try:
        pa = region_shapely(a, spec)
        pb = region_shapely(b, spec)
        if pa.is_valid and pb.is_valid:
            return float(pa.symmetric_difference(pb).area)
    except Exception:
        pass
    from .field import coverage_fractions

    fine = DomainSpec(
        spec.kind, spec.Lx, spec.Ly, 4 * spec.nx, 4 * spec.ny,
        corner_margin=spec.corner_margin,
    )
    fa = coverage_fractions(region_polygons(a, spec), fine)
    fb = coverage_fractions(region_polygons(b, spec), fine)
    return float(np.abs(fa - fb).sum() * fine.hx * fine.hy)


def is_simple(iface: Interface) -> bool:
    if iface.closed:
        try:
            return LinearRing(iface.nodes).is_valid and LineString(iface.nodes).is_simple
        except Exception:
            return False
    return LineString(iface.nodes).is_simple


def validate_interface(iface: Interface, spec: DomainSpec) -> None:
    """Check the placement invariants of an interface inside its domain."""
    eps = 1e-8 * min(spec.Lx, spec.Ly)
    x, y = iface.nodes[:, 0], iface.nodes[:, 1]
    if iface.topology == CHORD:
        if spec.kind != RECTANGLE:
            raise ValueError("chord interfaces require a rectangle domain")
        for p in (iface.nodes[0], iface.nodes[-1]):
            dom_mod.on_wall(spec, p, tol=eps)
            if dom_mod.corner_distance(spec, p) < spec.corner_margin:
                raise ValueError("chord endpoint inside corner margin")
        interior = iface.nodes[1:-1]
        if np.any(interior[:, 0] <= 0) or np.any(interior[:, 0] >= spec.Lx) \
                or np.any(interior[:, 1] <= 0) or np.any(interior[:, 1] >= spec.Ly):
            raise ValueError("chord interior nodes must lie strictly inside")
    else:
        if np.any(x <= 0) or np.any(x >= spec.Lx) or np.any(y <= 0) or np.any(y >= spec.Ly):
            raise ValueError("loop nodes must lie strictly inside the domain")
    if not is_simple(iface):
        raise ValueError("interface is self-intersecting")


def orthogonality_residual(iface: Interface, spec: DomainSpec) -> tuple[float, float]:
    """Deviation (radians) from a right-angle wall meeting, per endpoint.

    At each chord endpoint the outward co-normal is the polyline tangent
    pointing out of the curve; the residual is |pi/2 - angle(co-normal, wall
    tangent)|, zero when the interface meets the wall orthogonally.
    """
    if iface.topology != CHORD:
        raise ValueError("no boundary intersection: loop topology")
    res = []
    for idx, sgn in ((0, -1.0), (-1, 1.0)):
        if idx == 0:
            conormal = iface.nodes[0] - iface.nodes[1]
        else:
            conormal = iface.nodes[-1] - iface.nodes[-2]
        conormal = conormal / np.linalg.norm(conormal)
        wall = dom_mod.on_wall(spec, iface.nodes[idx], tol=1e-8 * min(spec.Lx, spec.Ly))
        tau = dom_mod.wall_tangent(wall)
        ang = math.acos(min(1.0, abs(float(np.dot(conormal, tau)))))
        res.append(abs(math.pi / 2.0 - ang))
    return res[0], res[1]


# ---------------------------------------------------------------------------
# canonical constructions
# ---------------------------------------------------------------------------

def make_lamella(a: float, n_nodes: int = 128, spec: DomainSpec | None = None) -> Interface:
    """Vertical chord x = a with E = {x < a}; Ly defaults to the unit square."""
    Ly = spec.Ly if spec is not None else 1.0
    y = np.linspace(0.0, Ly, n_nodes)
    return Interface(np.column_stack([np.full(n_nodes, a), y]), CHORD)


def make_circle(center, radius: float, n_nodes: int = 128) -> Interface:
    """Counterclockwise circle loop with E = inside."""
    th = np.linspace(0.0, 2.0 * math.pi, n_nodes, endpoint=False)
    pts = np.column_stack(
        [center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)]
    )
    return Interface(pts, LOOP)


def make_graph_chord(fn, n_nodes: int = 128, Ly: float = 1.0) -> Interface:
    """Chord given as a graph x = fn(y) over the full wall-to-wall span."""
    y = np.linspace(0.0, Ly, n_nodes)
    return Interface(np.column_stack([np.asarray(fn(y), float), y]), CHORD)


def make_tilted_chord(a: float, tilt: float, n_nodes: int = 128, Ly: float = 1.0) -> Interface:
    """Straight chord tilted by ``tilt`` radians from vertical around (a, Ly/2)."""
    y = np.linspace(0.0, Ly, n_nodes)
    return Interface(
        np.column_stack([a + (y - Ly / 2.0) * math.tan(tilt), y]), CHORD
    )


# ---------------------------------------------------------------------------
# region state
# ---------------------------------------------------------------------------

@dataclass
class RegionState:
    """A configuration: interface + domain + coupling, with cached fields.

    The caches (area, indicator, potential, energies) are filled on first
    use; states are treated as immutable after construction.
    """

    interface: Interface
    domain: DomainSpec
    gamma: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        validate_interface(self.interface, self.domain)
        area = region_area(self.interface, self.domain)
        if not (0.0 < area < self.domain.area):
            raise ValueError("enclosed area must lie strictly between 0 and |Omega|")

    @property
    def area(self) -> float:
        if "area" not in self._cache:
            self._cache["area"] = region_area(self.interface, self.domain)
        return self._cache["area"]

    @property
    def m(self) -> float:
        """Mean phase: |E| = (m + 1)/2 * |Omega| exactly."""
        return 2.0 * self.area / self.domain.area - 1.0

    @property
    def u(self):
        """Indicator field (+1 inside E, -1 outside, exact cell fractions)."""
        if "u" not in self._cache:
            from .field import rasterize_indicator

            self._cache["u"] = rasterize_indicator(self)
        return self._cache["u"]

    @property
    def v(self):
        """Zero-mean potential sourced by the indicator."""
        if "v" not in self._cache:
            from .field import solve_potential

            self._cache["v"] = solve_potential(self.u, self.domain)
        return self._cache["v"]

    def with_interface(self, iface: Interface) -> "RegionState":
        return RegionState(iface, self.domain, self.gamma)

    def node_spacing(self) -> float:
        ell = segment_lengths(self.interface)
        return float(np.median(ell))


# ---------------------------------------------------------------------------
# normal graph perturbations
# ---------------------------------------------------------------------------

def _endpoint_walls(iface: Interface, spec: DomainSpec) -> tuple[int, int]:
    eps = 1e-8 * min(spec.Lx, spec.Ly)
    return (
        dom_mod.on_wall(spec, iface.nodes[0], tol=eps),
        dom_mod.on_wall(spec, iface.nodes[-1], tol=eps),
    )


def _wall_coordinate_ok(spec: DomainSpec, p, wall: int) -> bool:
    t = p[0] if wall in (dom_mod.WALL_BOTTOM, dom_mod.WALL_TOP) else p[1]
    span = spec.Lx if wall in (dom_mod.WALL_BOTTOM, dom_mod.WALL_TOP) else spec.Ly
    return spec.corner_margin <= t <= span - spec.corner_margin


def normal_graph_perturb(
    state: RegionState, phi, fix_volume: bool = True, target_area: float | None = None
) -> Interface:
    """Move the interface to its normal graph x -> x + phi(x) nu(x).

    ``phi`` gives per-node normal offsets.  Chord endpoints are moved along
    the normal and re-projected onto their wall.  The result is resampled at
    the input's spacing.  With ``fix_volume`` a constant shift is added to
    phi (bracketing root solve on the enclosed area, resampling included) so
    the perturbed area matches ``target_area`` (the input area by default)
    to ``1e-10 * |Omega|``.
    """
    iface = state.interface
    spec = state.domain
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (iface.n,):
        raise ValueError("phi must supply one value per node")
    kap = curvature(iface)
    kmax = float(np.max(np.abs(kap)))
    if kmax > 0 and float(np.max(np.abs(phi))) > 0.25 / kmax:
        raise ValueError("perturbation exceeds the graph-injectivity bound")
    nu = normals(iface)
    n_keep = iface.n
    walls = _endpoint_walls(iface, spec) if iface.topology == CHORD else None
    area0 = state.area if target_area is None else float(target_area)

    def build(shift: float) -> Interface:
        pts = iface.nodes + (phi + shift)[:, None] * nu
        if iface.topology == CHORD:
            pts[0] = dom_mod.project_to_wall(spec, pts[0], walls[0])
            pts[-1] = dom_mod.project_to_wall(spec, pts[-1], walls[1])
        return resample_count(Interface(pts, iface.topology), n_keep)

    if fix_volume:
        def area_misfit(shift: float) -> float:
            return region_area(build(shift), spec) - area0

        span = float(np.max(np.abs(phi))) + 0.05 * min(spec.Lx, spec.Ly)
        lo, hi = -span, span
        for _ in range(8):
            if area_misfit(lo) < 0.0 < area_misfit(hi):
                break
            lo *= 2.0
            hi *= 2.0
        else:
            raise ValueError("volume fix failed to bracket the target area")
        shift = brentq(area_misfit, lo, hi, xtol=1e-14, rtol=1e-15)
        out = build(shift)
        if abs(region_area(out, spec) - area0) > 1e-10 * spec.area:
            raise ValueError("volume fix did not reach the area tolerance")
    else:
        out = build(0.0)

    if iface.topology == CHORD:
        for p, w in zip((out.nodes[0], out.nodes[-1]), walls):
            if not _wall_coordinate_ok(spec, p, w):
                raise ValueError("endpoint left its wall segment or entered the corner margin")
    validate_interface(out, spec)
    return out
