import numpy as np
from hypothesis import given, settings, strategies as st

from telegraphnet.carleman import build_weights, compatibility_errors
from telegraphnet.dynamics import BoundaryTraces, GridSpec, CoefficientField, couple_vertex
from telegraphnet.inverse import (
    MeasurementSet,
    assumption2_matrix,
    default_experiments,
    direct_reconstruct_t0,
    relative_l2_error,
    t0_forward_map,
)
from telegraphnet.network import EdgeDescriptor, build_network, conserved_flows, five_edge_network

finite = st.floats(-3.0, 3.0, allow_nan=False)
positive = st.floats(0.2, 5.0)


@st.composite
def trees(draw):
    """Random rooted trees with the root of degree one, random orientation and order."""
    n = draw(st.integers(1, 7))
    parents = [0] + [draw(st.integers(1, v - 1)) for v in range(2, n + 1)]
    lengths = draw(st.lists(st.floats(0.3, 2.0), min_size=n, max_size=n))
    flips = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    edges = []
    for j, (a, l, f) in enumerate(zip(parents, lengths, flips)):
        tail, head = a, j + 1
        edges.append(EdgeDescriptor(j + 1, head, tail, l) if f else EdgeDescriptor(j + 1, tail, head, l))
    order = draw(st.permutations(range(n)))
    return [edges[i] for i in order]


@settings(max_examples=40, deadline=None)
@given(trees(), st.randoms(use_true_random=False))
def test_network_independent_of_listing_order(edges, rnd):
    ref = build_network(edges)
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    topo = build_network(shuffled)
    assert topo.coordinates == ref.coordinates and topo.S_I == ref.S_I and topo.S_T == ref.S_T
    for e in topo.edges:
        assert topo.coordinates[e.head] > topo.coordinates[e.tail]
    g = conserved_flows(topo)
    for k in topo.Pi2:
        assert abs(sum(g[j] for j in topo.S_I[k]) - sum(g[j] for j in topo.S_T[k])) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(trees(), st.floats(0.1, 3.0), st.floats(-2.0, -0.01), st.floats(0.01, 2.0))
def test_weights_always_compatible(edges, alpha, xstar, beta):
    topo = build_network(edges)
    cont, slope = compatibility_errors(build_weights(topo, alpha, xstar, beta, 1.0), topo)
    assert cont <= 1e-12 and slope <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.data())
def test_junction_balances_current_and_shares_voltage(n_out, data):
    topo = build_network([EdgeDescriptor(1, 0, 1, 1.0)] +
                         [EdgeDescriptor(j, 1, j, 1.0) for j in range(2, n_out + 2)])
    ids = topo.edge_ids
    Z = {j: data.draw(positive) for j in ids}
    inc = {j: data.draw(finite) for j in ids}
    V, cur, out = couple_vertex(topo, 1, inc, Z)
    assert abs(cur[1] - sum(cur[j] for j in ids[1:])) <= 1e-10 * (1 + max(map(abs, cur.values())))
    # each end: incoming + outgoing amplitude reproduces the shared voltage
    for j in ids:
        assert abs(inc[j] + out[j] - V) <= 1e-10 * (1 + abs(V))


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=16, max_size=16))
def test_determinant_is_product_of_two_blocks(v):
    z = [(v[0], v[1]), (v[2], v[3])]
    dz = [(v[4], v[5]), (v[6], v[7])]
    det = np.linalg.det(assumption2_matrix(z, dz))
    b1 = dz[0][1] * z[1][0] - z[0][0] * dz[1][1]
    b2 = dz[0][0] * z[1][1] - z[0][1] * dz[1][0]
    assert abs(det - b1 * b2) <= 1e-9 * (1 + abs(b1 * b2))


_TOPO = five_edge_network()
_GRID = GridSpec.build(_TOPO, 12, 0.1)
_EXPS = default_experiments(_TOPO)
_Z = [d.sample_initial(_GRID) for d in _EXPS]
_DZ = [d.sample_initial_derivative(_GRID) for d in _EXPS]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=4, max_size=4), st.integers(0, 2**31))
def test_t0_algebra_round_trip(base, seed):
    p = CoefficientField.constant(_TOPO, _GRID, (1.0, 0.8, 0.2, 0.1))
    rng = np.random.default_rng(seed)
    rho = {j: np.array(base)[:, None] + rng.uniform(-0.1, 0.1, size=(4, 13)) for j in _GRID.x}
    q = p.perturbed(rho)
    dtw = t0_forward_map(p.values, q.values, _Z, _DZ)
    rec = direct_reconstruct_t0(dtw, _EXPS, _GRID, p, piecewise=False)
    if any(abs(r).max() > 0 for r in rho.values()):
        assert relative_l2_error(rec.profile, rho, _GRID) <= 1e-9


def _traces(rng, t, leaves):
    return BoundaryTraces(t, {j: rng.normal(size=(3, len(t))) for j in leaves}, {j: j for j in leaves})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 10.0))
def test_measurement_norm_symmetries(seed, c):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, 21)
    a, b = _traces(rng, t, [2, 4, 5]), _traces(rng, t, [2, 4, 5])
    m = MeasurementSet(t, {1: a, 2: b})
    swapped = MeasurementSet(t, {1: b, 2: a})
    assert np.isclose(m.norm(), swapped.norm(), rtol=1e-14)
    assert np.isclose(np.sum(m.vector() ** 2), m.norm(), rtol=1e-12)
    scaled = MeasurementSet(t, {k: BoundaryTraces(t, {j: c * v for j, v in tr.values.items()}, tr.vertex)
                                for k, tr in m.traces.items()})
    assert np.isclose(scaled.norm(), c * c * m.norm(), rtol=1e-12)
    assert m.norm() >= 0
