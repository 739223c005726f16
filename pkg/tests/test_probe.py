import math

import numpy as np
import pytest

from okstab.domain import RECTANGLE, TORUS, DomainSpec
from okstab.energy import criticality
from okstab.interface import (
    RegionState,
    make_circle,
    make_lamella,
    make_tilted_chord,
    perimeter,
    region_area,
    symmetric_difference_area,
)
from okstab.probe import (
    _draw_sample,
    flow_step_cap,
    gamma_threshold_search,
    lambda_minimality_check,
    minimality_probe,
    volume_preserving_flow,
)
from okstab.secondvar import lamella_gamma_star

SQ64 = DomainSpec(RECTANGLE, 1.0, 1.0, 64, 64)
SQ128 = DomainSpec(RECTANGLE, 1.0, 1.0, 128, 128)
SQ256 = DomainSpec(RECTANGLE, 1.0, 1.0, 256, 256)


# --------------------------------------------------------------------- flow

def test_flow_keeps_critical_lamella_fixed():
    st = RegionState(make_lamella(0.5, 48, SQ64), SQ64, gamma=1.0)
    res = volume_preserving_flow(st, 0.5 * flow_step_cap(st), 200)
    dev = np.max(np.abs(res.final.interface.nodes - st.interface.nodes))
    assert dev < 1e-4
    assert np.all(np.diff(res.log[:, 1]) <= 1e-6 * res.log[0, 1])


def test_flow_area_drift_per_step():
    st = RegionState(make_lamella(0.4, 48, SQ64), SQ64, gamma=2.0)
    res = volume_preserving_flow(st, 0.5 * flow_step_cap(st), 50)
    drift = np.abs(res.log[:, 3] - st.area)
    assert np.max(drift) <= 1e-9 * SQ64.area


def test_flow_step_cap_enforced():
    st = RegionState(make_lamella(0.5, 48, SQ64), SQ64, gamma=1.0)
    with pytest.raises(ValueError, match="cap"):
        volume_preserving_flow(st, 10 * flow_step_cap(st), 5)


def test_flow_straightens_tilted_chord():
    # basin regression: a slightly tilted chord descends to the lamella
    st = RegionState(make_tilted_chord(0.5, math.radians(2.0), 48), SQ64, gamma=1.0)
    res = volume_preserving_flow(st, 0.5 * flow_step_cap(st), 5000)
    assert res.log[-1, 2] < 1e-2
    x = res.final.interface.nodes[:, 0]
    assert x.max() - x.min() < 0.2 * (2 * 0.5 * math.tan(math.radians(2.0)))
    assert res.log[-1, 1] <= res.log[0, 1]


def test_flow_circle_is_fixed_point_at_gamma_zero():
    spec = DomainSpec(TORUS, 1.0, 1.0, 64, 64)
    st = RegionState(make_circle((0.5, 0.5), 0.2, 64), spec, gamma=0.0)
    res = volume_preserving_flow(st, 0.5 * flow_step_cap(st), 40)
    # volume fix keeps the area, curvature flow + correction leaves the
    # circle invariant: a genuine fixed point up to discretization
    assert abs(region_area(res.final.interface, spec) - st.area) < 1e-9
    radii = np.linalg.norm(res.final.interface.nodes - [0.5, 0.5], axis=1)
    assert np.max(np.abs(radii - 0.2)) < 1e-3


# -------------------------------------------------------------------- probe

def test_probe_requires_enough_samples():
    st = RegionState(make_lamella(0.5, 48, SQ64), SQ64, gamma=1.0)
    with pytest.raises(ValueError, match="50"):
        minimality_probe(st, n=10, seed=0)


def test_probe_criticality_gate():
    st = RegionState(make_tilted_chord(0.5, math.radians(10), 48), SQ64, gamma=1.0)
    with pytest.raises(ValueError, match="criticality gate"):
        minimality_probe(st, n=50, seed=0)


def test_probe_deterministic():
    st = RegionState(make_lamella(0.5, 64, SQ128), SQ128, gamma=1.0)
    r1 = minimality_probe(st, n=50, seed=11)
    r2 = minimality_probe(st, n=50, seed=11)
    assert np.array_equal(r1.samples, r2.samples)
    assert r1.fitted_c == r2.fitted_c
    assert r1.min_ratio == r2.min_ratio
    r3 = minimality_probe(st, n=50, seed=12)
    assert not np.array_equal(r1.samples, r3.samples)


def test_probe_samples_conserve_volume():
    st = RegionState(make_lamella(0.5, 64, SQ128), SQ128, gamma=1.0)
    rng = np.random.default_rng(0)
    for amp in (1e-3, 1e-2, 5e-2):
        sample = _draw_sample(st, rng, amp, 8)
        assert abs(sample.area - st.area) <= 1e-10 * SQ128.area
        assert symmetric_difference_area(st.interface, sample.interface, SQ128) > 0


def test_probe_stable_lamella_positive_excess():
    # amplitudes at or above grid scale so the quadratic signal dominates
    st = RegionState(make_lamella(0.5, 128, SQ256), SQ256, gamma=1.0)
    rep = minimality_probe(st, n=60, amplitudes=(3e-3, 1e-2, 3e-2), seed=5)
    assert rep.min_ratio > 0
    assert rep.fitted_c > 0
    assert rep.n == 60 and len(rep.samples) == 60


def test_probe_fitted_c_seed_stable():
    st = RegionState(make_lamella(0.5, 128, SQ256), SQ256, gamma=1.0)
    cs = [
        minimality_probe(st, n=50, amplitudes=(3e-3, 1e-2, 3e-2), seed=s).fitted_c
        for s in (1, 2, 3)
    ]
    assert max(cs) / min(cs) < 2.0


def test_probe_unstable_lamella_finds_descent():
    st = RegionState(make_lamella(0.5, 128, SQ256), SQ256, gamma=30.0)
    rep = minimality_probe(st, n=50, amplitudes=(1e-2, 3e-2, 5e-2), seed=5)
    assert np.min(rep.samples[:, 1]) < 0.0


# ----------------------------------------------------------- lambda ratios

def test_lambda_ratio_zero_for_translated_lamella():
    e = make_lamella(0.3, 64)
    f = make_lamella(0.31, 64)
    ratio = (perimeter(e) - perimeter(f)) / symmetric_difference_area(e, f, SQ128)
    assert ratio == 0.0


def test_lambda_ratio_lamella_small_and_seed_stable():
    st = RegionState(make_lamella(0.5, 64, SQ128), SQ128, gamma=1.0)
    vals = [lambda_minimality_check(st, n=50, seed=s) for s in (1, 2, 3)]
    # graphs over a straight line never beat its perimeter
    assert all(v <= 1e-12 for v in vals)
    assert all(abs(v) < 0.1 for v in vals)
    med = np.median(vals)
    assert all(abs(v - med) <= 0.5 * abs(med) + 1e-3 for v in vals)


def test_lambda_ratio_circle_bounded_by_curvature():
    spec = DomainSpec(TORUS, 1.0, 1.0, 128, 128)
    st = RegionState(make_circle((0.5, 0.5), 0.2, 128), spec, gamma=0.0)
    val = lambda_minimality_check(st, n=50, seed=1)
    assert val <= 5.0 + 0.5  # sup |H| + O(h)


# -------------------------------------------------------- threshold search

def test_gamma_threshold_matches_oracle_a_half():
    gs = gamma_threshold_search(0.5, 3, 1e-2, spec=SQ128, n_nodes=64)
    assert gs == pytest.approx(lamella_gamma_star(0.5, 1), rel=0.02)


def test_gamma_threshold_matches_min_mode_oracle_a_03():
    oracle = min(lamella_gamma_star(0.3, k) for k in (1, 2, 3, 4))
    gs = gamma_threshold_search(0.3, 3, 1e-2, bracket=(0.0, 60.0), spec=SQ128, n_nodes=64)
    assert gs == pytest.approx(oracle, rel=0.02)


def test_gamma_threshold_requires_sign_change():
    with pytest.raises(ValueError, match="no sign change"):
        gamma_threshold_search(0.5, 3, 1e-2, bracket=(0.0, 1.0), spec=SQ128, n_nodes=64)


def test_gamma_threshold_truncated_assembly():
    gs = gamma_threshold_search(0.5, 3, 1e-2, spec=SQ128, n_nodes=64, truncated=True)
    assert gs == pytest.approx(lamella_gamma_star(0.5, 1), rel=0.02)
