import math

import numpy as np
import pytest

from telegraphnet.carleman import (
    build_weights,
    check_assumption1,
    check_d1_geometry,
    compatibility_errors,
    default_s_grid,
    evaluate_estimate,
)
from telegraphnet.dynamics import CoefficientField, FieldTrajectory, GridSpec, TravelingWave, manufacture_homogeneous_field
from telegraphnet.errors import AssumptionError, ConfigurationError
from telegraphnet import families
from telegraphnet.network import five_edge_network, single_edge, star_network

from oracles import assumption1_grid_min, carleman_terms


def test_weights_at_branching_vertex():
    topo = star_network((1.0, 1.0, 1.0))
    w = build_weights(topo, 1.0, -1.0, 0.5, 1.0)
    assert w.xstar[2] == w.xstar[3] == 0.0
    assert w.alpha[2] == w.alpha[3] == 4.0
    assert w.spatial(1, 1.0) == 4.0 == w.spatial(2, 1.0)
    assert 2 * w.phi_x(1, 1.0) == 8.0 == w.phi_x(2, 1.0)


def test_weights_pass_through_and_single_edge():
    w = build_weights(star_network((1.0, 2.0)), 0.7, -0.3, 0.1, 1.0)
    assert w.alpha[2] == 0.7 and w.xstar[2] == -0.3
    w = build_weights(single_edge(), 2.0, -0.5, 0.1, 1.0)
    assert w.alpha == {1: 2.0} and w.xstar == {1: -0.5}


def test_weights_compatible_on_five_edge():
    topo = five_edge_network()
    cont, slope = compatibility_errors(build_weights(topo, 1.3, -0.7, 0.2, 1.0), topo)
    assert cont <= 1e-12 and slope <= 1e-12


def test_weight_parameter_errors():
    topo = single_edge()
    with pytest.raises(ConfigurationError):
        build_weights(topo, 0.0, -1.0, 0.1, 1.0)
    with pytest.raises(ConfigurationError):
        build_weights(topo, 1.0, 0.5, 0.1, 1.0)


def _unit_edge(T, beta):
    topo = single_edge(1.0)
    grid = GridSpec.build(topo, 50, T)
    coef = CoefficientField.constant(topo, grid, (1, 1, 0, 0))
    return topo, grid, coef, build_weights(topo, 1.0, -1.0, beta, T)


def test_assumption1_examples():
    topo, grid, coef, w = _unit_edge(0.5, 1.0)
    res = check_assumption1(w, coef, grid)
    oracle = assumption1_grid_min(1.0, 1.0, -1.0, 1.0, grid.x[1], grid.times())
    assert res.passed and res.min_abs == 3.0 == oracle
    assert res.location[1] == 0.0 and abs(res.location[2]) == 0.5
    assert res.sufficient[1]
    topo, grid, coef, w = _unit_edge(2.0, 1.0)
    res = check_assumption1(w, coef, grid)
    assert not res.passed and res.min_abs == 0.0
    assert "Assumption 1" in res.message()
    topo, grid, coef, w = _unit_edge(1.0, 0.0)
    res = check_assumption1(w, coef, grid)
    assert res.passed and res.sign == -1


def test_d1_geometry():
    topo = five_edge_network()
    ok = check_d1_geometry(build_weights(topo, 1.0, -0.05, 12.0, 3.0), topo)
    assert ok.ok and ok.beta_T2 == pytest.approx(108.0)
    bad = check_d1_geometry(build_weights(topo, 1.0, -0.05, 0.5, 1.0), topo)
    assert not bad.ok
    # phi(x, 0) >= phi(x, t) pointwise
    w = build_weights(topo, 1.0, -0.05, 12.0, 3.0)
    x = np.linspace(0, 1, 11)
    assert np.all(w.phi(1, x, 0.0) >= w.phi(1, x, 1.7))


def _carleman_setup(cells=60):
    topo = five_edge_network()
    grid = GridSpec.build(topo, cells, 1.0)
    coef = CoefficientField.constant(topo, grid, (1, 1, 0.1, 0.1))
    w = build_weights(topo, 0.02, -1.0, 0.01, 1.0)
    field = manufacture_homogeneous_field(topo, grid)
    return topo, grid, coef, w, field


def test_zero_field_gives_zero_entries():
    topo, grid, coef, w, field = _carleman_setup(20)
    traj = field.sample(grid, coef)
    zero = {j: 0 * traj.u1[j] for j in traj.edge_ids}
    z = FieldTrajectory(traj.t, traj.x, zero, zero, zero, zero)
    rep = evaluate_estimate(z, topo, w, coef, grid, s_grid=[5, 10])
    assert np.all(np.exp(rep.lhs_log) == 0) and np.all(np.exp(rep.rhs_source_log) == 0)
    assert np.all(rep.ratio == 0)


def test_lhs_monotone_in_s_and_matches_oracle():
    topo, grid, coef, w, field = _carleman_setup(60)
    s = [2.0, 5.0, 10.0, 20.0, 40.0]
    rep = evaluate_estimate(field.sample(grid, coef), topo, w, coef, grid, s_grid=s)
    assert np.all(np.diff(rep.lhs_log) >= 0)
    ref = carleman_terms(field, topo, w, (1, 1, 0.1, 0.1), s, 60, 2 * grid.nt, order=2)
    # trapezoid error grows like (s dx)^2; the coarse grid is compared up to s = 20
    for i, si in enumerate(s[:-1]):
        assert math.exp(rep.lhs_log[i] - ref[si][0]) == pytest.approx(1.0, rel=3e-2)
        assert math.exp(rep.rhs_source_log[i] - ref[si][1]) == pytest.approx(1.0, rel=3e-2)
    # doubling s: LHS ratio is 4 times the ratio of weighted integrals
    for a, b in ((1, 2), (2, 3)):
        lhs_ratio = math.exp(rep.lhs_log[b] - rep.lhs_log[a])
        integral_ratio = math.exp((ref[s[b]][0] - 2 * math.log(s[b])) - (ref[s[a]][0] - 2 * math.log(s[a])))
        assert lhs_ratio == pytest.approx(4 * integral_ratio, rel=2e-2)


def test_estimate_requires_assumption1_and_source():
    topo, grid, coef, w, field = _carleman_setup(20)
    traj = field.sample(grid, coef)
    bad = build_weights(topo, 1.0, -1.0, 1.0, 1.0)
    with pytest.raises(AssumptionError, match="Assumption 1"):
        evaluate_estimate(traj, topo, bad, coef, grid)
    with pytest.raises(ConfigurationError):
        evaluate_estimate(field.sample(grid), topo, w, coef)


def test_inhomogeneous_field_warns():
    topo = single_edge(1.0)
    grid = GridSpec.build(topo, 40, 0.5)
    coef = CoefficientField.constant(topo, grid, (1, 1, 0, 0))
    traj = TravelingWave(families.GaussianBump(1.0, 0.5, 0.1)).sample(grid, coef)
    with pytest.warns(UserWarning, match="homogeneous"):
        evaluate_estimate(traj, topo, build_weights(topo, 1.0, -1.0, 0.1, 0.5), coef, s_grid=[1.0])


def test_default_s_grid_scales_with_weight():
    topo, grid, coef, w, field = _carleman_setup(20)
    traj = field.sample(grid)
    s = default_s_grid(w, traj)
    assert s[1] / s[0] == 2.0 and s[-1] / s[0] == 8.0
