import itertools
import warnings

import pytest

from telegraphnet.errors import StructuralError
from telegraphnet.network import (
    EdgeDescriptor,
    build_network,
    classify_vertex,
    conserved_flows,
    five_edge_network,
    load_network,
    network_to_dict,
    save_network,
    single_edge,
    star_network,
)

L = (1.0, 0.8, 1.0, 0.6, 0.7)


def test_five_edge_sets_and_coordinates():
    topo = five_edge_network(L)
    assert topo.Pi1 == {0, 2, 4, 5}
    assert topo.Pi2 == {1, 3}
    assert topo.S_I[1] == {2, 3}
    assert topo.S_T[3] == {3}
    assert topo.coordinates[4] == pytest.approx(L[0] + L[2] + L[3], abs=1e-15)
    assert topo.vertex_count == topo.edge_count + 1 == 6


def test_single_edge():
    topo = single_edge(1.0)
    assert topo.Pi1 == {0, 1} and topo.Pi2 == set()
    assert topo.S_I[0] == {1} and topo.S_T[1] == {1}
    assert topo.coordinates[1] == 1.0


def test_triangle_is_rejected():
    edges = [EdgeDescriptor(1, 0, 1, 1.0), EdgeDescriptor(2, 1, 2, 1.0), EdgeDescriptor(3, 2, 0, 1.0)]
    with pytest.raises(StructuralError, match="cycle detected"):
        build_network(edges)


def test_disconnected_and_bad_root():
    with pytest.raises(StructuralError, match="disconnected"):
        build_network([EdgeDescriptor(1, 0, 1, 1.0), EdgeDescriptor(2, 2, 3, 1.0)])
    with pytest.raises(StructuralError, match="degree 1"):
        build_network([EdgeDescriptor(1, 0, 1, 1.0), EdgeDescriptor(2, 0, 2, 1.0)], root=0)
    with pytest.raises(StructuralError):
        EdgeDescriptor(1, 0, 1, 0.0)
    with pytest.raises(StructuralError):
        EdgeDescriptor(1, 2, 2, 1.0)


def test_orientation_is_normalised():
    # edges listed head-to-tail and out of order
    edges = [EdgeDescriptor(3, 3, 1, 1.0), EdgeDescriptor(1, 1, 0, 1.0), EdgeDescriptor(2, 2, 1, 0.8),
             EdgeDescriptor(5, 5, 3, 0.7), EdgeDescriptor(4, 4, 3, 0.6)]
    topo = build_network(edges)
    ref = five_edge_network(L)
    assert topo.coordinates == ref.coordinates
    assert topo.S_I == ref.S_I and topo.S_T == ref.S_T
    for e in topo.edges:
        assert topo.coordinates[e.tail] < topo.coordinates[e.head]


def test_root_relabel():
    topo = build_network([EdgeDescriptor(1, 0, 1, 1.0), EdgeDescriptor(2, 1, 2, 2.0)], root=2)
    assert topo.root == 0
    assert topo.relabel == {2: 0, 0: 2}
    assert topo.coordinates[2] == 3.0


def test_classify_vertex():
    topo = five_edge_network(L)
    c = classify_vertex(topo, 1)
    assert c.kind == "interior" and c.S_I == {2, 3} and c.S_T == {1}
    c = classify_vertex(topo, 0)
    assert c.kind == "boundary" and c.S_I == {1} and c.S_T == set()
    assert classify_vertex(single_edge(), 1).S_T == {1}
    with pytest.raises(KeyError):
        classify_vertex(topo, 9)


def test_leaf_terminals_exclude_root():
    assert five_edge_network(L).leaf_terminals() == [(2, 2), (4, 4), (5, 5)]


def test_short_edge_warns():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        single_edge(1e-8)
    assert any("very short" in str(w.message) for w in rec)


def test_conserved_flows_balance():
    topo = five_edge_network(L)
    g = conserved_flows(topo, 1.0)
    assert g == {1: 3.0, 2: 1.0, 3: 2.0, 4: 1.0, 5: 1.0}
    for k in topo.Pi2:
        assert sum(g[j] for j in topo.S_I[k]) == sum(g[j] for j in topo.S_T[k])


def test_network_file_round_trip(tmp_path):
    topo = five_edge_network(L)
    save_network(topo, tmp_path / "net.yaml")
    back = load_network(tmp_path / "net.yaml")
    assert network_to_dict(back) == network_to_dict(topo)


def test_permutation_independence():
    base = [EdgeDescriptor(j + 1, a, b, l) for j, ((a, b), l) in
            enumerate(zip([(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)], L))]
    ref = build_network(base)
    for perm in itertools.islice(itertools.permutations(base), 0, 120, 7):
        topo = build_network(perm)
        assert topo.coordinates == ref.coordinates
        assert topo.S_I == ref.S_I and topo.Pi1 == ref.Pi1


def test_star_network():
    topo = star_network((1.0, 1.0, 1.0, 1.0))
    assert topo.S_I[1] == {2, 3, 4}
    assert topo.Pi2 == {1}
