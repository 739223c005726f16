"""Container geometry: rectangles with Neumann walls and flat tori.

A :class:`DomainSpec` fixes the box dimensions and the uniform cell grid used
by every field computation.  Rectangles carry flat walls (zero boundary
curvature away from the corners); tori have no boundary at all.  Both kinds
are immutable and hashable so solver factorizations can be cached per spec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RECTANGLE = "rectangle"
TORUS = "torus"

# walls of a rectangle, counterclockwise
WALL_BOTTOM = 0
WALL_RIGHT = 1
WALL_TOP = 2
WALL_LEFT = 3


@dataclass(frozen=True)
class DomainSpec:
    """Immutable description of the container and its uniform cell grid.

    ``corner_margin`` (rectangle only) is the exclusion distance around the
    four corners: interface endpoints and boundary-curvature queries must stay
    at least this far from every corner.  ``kappa_override`` is a test hook
    that makes every wall report a constant signed curvature instead of the
    flat-wall value 0 (positive means the container is locally convex).
    """

    kind: str
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 64
    ny: int = 64
    corner_margin: float | None = None
    kappa_override: float | None = None

    def __post_init__(self):
        if self.kind not in (RECTANGLE, TORUS):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("domain lengths must be positive")
        if self.nx < 16 or self.ny < 16:
            raise ValueError(f"grid resolution {self.nx}x{self.ny} below minimum 16")
        hx, hy = self.Lx / self.nx, self.Ly / self.ny
        if max(hx, hy) / min(hx, hy) > 2.0:
            raise ValueError("cell aspect ratio exceeds 2")
        if self.kind == RECTANGLE:
            margin = self.corner_margin
            if margin is None:
                margin = 2.0 * max(hx, hy)
                object.__setattr__(self, "corner_margin", margin)
            if margin < 2.0 * max(hx, hy):
                raise ValueError("corner_margin below 2 cells")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def periodic(self) -> bool:
        return self.kind == TORUS


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid over a domain; values live at cell centers."""

    spec: DomainSpec

    @property
    def cell_area(self) -> float:
        return self.spec.hx * self.spec.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.nx, self.spec.ny)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates along x and y."""
        s = self.spec
        x = (np.arange(s.nx) + 0.5) * s.hx
        y = (np.arange(s.ny) + 0.5) * s.hy
        return x, y

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")

    def wrap_index(self, i, axis: int = 0):
        """Periodic index wrap (torus); identity range check otherwise."""
        n = self.shape[axis]
        if self.spec.periodic:
            return np.mod(i, n)
        return i


def build_grid(spec: DomainSpec) -> Grid:
    """Build the uniform grid for a validated spec.

    Total cell area reproduces ``Lx*Ly`` exactly since the grid is uniform.
    """
    return Grid(spec)


def on_wall(spec: DomainSpec, p, tol: float | None = None) -> int:
    """Return the wall index a point lies on, or raise if it is on none.

    Tolerance defaults to ``1e-9 * min(Lx, Ly)``.
    """
    if spec.kind != RECTANGLE:
        raise ValueError("no boundary: domain is a torus")
    if tol is None:
        tol = 1e-9 * min(spec.Lx, spec.Ly)
    x, y = float(p[0]), float(p[1])
    if abs(y) <= tol:
        return WALL_BOTTOM
    if abs(x - spec.Lx) <= tol:
        return WALL_RIGHT
    if abs(y - spec.Ly) <= tol:
        return WALL_TOP
    if abs(x) <= tol:
        return WALL_LEFT
    raise ValueError(f"point {(x, y)} is not on the boundary")


def corner_distance(spec: DomainSpec, p) -> float:
    """Distance from p to the nearest rectangle corner."""
    corners = np.array(
        [[0.0, 0.0], [spec.Lx, 0.0], [spec.Lx, spec.Ly], [0.0, spec.Ly]]
    )
    return float(np.min(np.linalg.norm(corners - np.asarray(p, float), axis=1)))


def boundary_curvature(spec: DomainSpec, p) -> float:
    """Signed curvature of the container wall at a boundary point.

    Sign convention: positive where the container is locally convex (a disk
    of radius R would report +1/R everywhere).  Flat rectangle walls return
    0.  Points inside ``corner_margin`` of a corner are rejected, as is any
    query on a torus.
    """
    if spec.kind == TORUS:
        raise ValueError("no boundary: domain is a torus")
    on_wall(spec, p)  # raises if p is off the boundary
    if corner_distance(spec, p) < spec.corner_margin:
        raise ValueError("corner proximity")
    if spec.kappa_override is not None:
        return float(spec.kappa_override)
    return 0.0


def wall_tangent(wall: int) -> np.ndarray:
    """Unit tangent of a wall in the counterclockwise traversal sense."""
    return np.array(
        [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]][wall]
    )


def wall_outward_normal(wall: int) -> np.ndarray:
    """Outward unit normal of the container on a given wall."""
    return np.array(
        [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]][wall]
    )


def project_to_wall(spec: DomainSpec, p, wall: int) -> np.ndarray:
    """Project a point onto a wall line (rectangles have axis-aligned walls)."""
    q = np.array([float(p[0]), float(p[1])])
    if wall == WALL_BOTTOM:
        q[1] = 0.0
    elif wall == WALL_TOP:
        q[1] = spec.Ly
    elif wall == WALL_LEFT:
        q[0] = 0.0
    else:
        q[0] = spec.Lx
    return q
