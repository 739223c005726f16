import numpy as np
import pytest

from okstab.domain import (
    RECTANGLE,
    TORUS,
    DomainSpec,
    boundary_curvature,
    build_grid,
    corner_distance,
    on_wall,
)


def test_grid_counts_and_cell_area():
    spec = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64)
    g = build_grid(spec)
    assert g.shape == (64, 64)
    assert g.cell_area == pytest.approx(1.0 / 4096, abs=0.0)
    x, y = g.axes()
    assert len(x) == 64 and len(y) == 64
    # total area is exact, not approximate
    assert g.cell_area * 64 * 64 == 1.0


def test_total_area_exact_for_uneven_lengths():
    spec = DomainSpec(RECTANGLE, 0.7, 1.3, 32, 48)
    g = build_grid(spec)
    assert g.cell_area * spec.nx * spec.ny == pytest.approx(0.7 * 1.3, rel=1e-15)


def test_torus_periodic_neighbor_wraps():
    spec = DomainSpec(TORUS, 1.0, 1.0, 64, 64)
    g = build_grid(spec)
    assert g.wrap_index(63 + 1) == 0
    assert g.wrap_index(-1) == 63


def test_periodic_wrap_composition_is_additive():
    g = build_grid(DomainSpec(TORUS, 1.0, 1.0, 32, 32))
    rng = np.random.default_rng(0)
    idx = rng.integers(-100, 100, size=50)
    off1 = rng.integers(-100, 100, size=50)
    off2 = rng.integers(-100, 100, size=50)
    twice = g.wrap_index(g.wrap_index(idx + off1) + off2)
    once = g.wrap_index(idx + off1 + off2)
    assert np.array_equal(twice, once)


def test_resolution_below_minimum_rejected():
    with pytest.raises(ValueError):
        DomainSpec(RECTANGLE, 1.0, 1.0, 8, 64)


def test_aspect_ratio_guard():
    with pytest.raises(ValueError):
        DomainSpec(RECTANGLE, 1.0, 1.0, 128, 32)  # hx/hy = 4


def test_corner_margin_default_and_floor():
    spec = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64)
    assert spec.corner_margin == pytest.approx(2.0 / 64)
    with pytest.raises(ValueError):
        DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64, corner_margin=1.0 / 64)


def test_flat_wall_curvature_is_zero():
    spec = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64)
    assert boundary_curvature(spec, (0.0, 0.5)) == 0.0
    assert boundary_curvature(spec, (0.3, 1.0)) == 0.0


def test_corner_proximity_rejected():
    spec = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64)
    hx = spec.hx
    with pytest.raises(ValueError, match="corner"):
        boundary_curvature(spec, (0.5 * hx, 0.0))


def test_off_boundary_point_rejected():
    spec = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64)
    with pytest.raises(ValueError):
        boundary_curvature(spec, (0.5, 0.5))


def test_torus_has_no_boundary():
    spec = DomainSpec(TORUS, 1.0, 1.0, 64, 64)
    with pytest.raises(ValueError, match="no boundary"):
        boundary_curvature(spec, (0.0, 0.5))


def test_curvature_override_hook():
    spec = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64, kappa_override=2.0)
    assert boundary_curvature(spec, (0.0, 0.5)) == 2.0
    assert boundary_curvature(spec, (0.7, 0.0)) == 2.0


def test_wall_classification():
    spec = DomainSpec(RECTANGLE, 2.0, 1.0, 64, 32)
    assert on_wall(spec, (0.5, 0.0)) == 0
    assert on_wall(spec, (2.0, 0.5)) == 1
    assert on_wall(spec, (1.0, 1.0)) == 2
    assert on_wall(spec, (0.0, 0.5)) == 3
    assert corner_distance(spec, (0.0, 0.0)) == 0.0
