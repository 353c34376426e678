"""Tree-shaped networks: coordinates, orientation and incidence sets.

Vertices are dense integers ``0..N`` with ``0`` the root. Every edge is
oriented away from the root, so ``x(I_j) < x(T_j)`` and
``x(I_j) + l_j = x(T_j)``.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import yaml

from .errors import StructuralError

SHORT_EDGE_WARNING = 1e-6


@dataclass(frozen=True)
class EdgeDescriptor:
    id: int
    tail: int
    head: int
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise StructuralError(f"edge {self.id}: length must be positive, got {self.length}")
        if self.tail == self.head:
            raise StructuralError(f"edge {self.id}: tail and head coincide (vertex {self.tail})")


class VertexClass(NamedTuple):
    kind: str  # "boundary" | "interior"
    S_I: frozenset
    S_T: frozenset


@dataclass(frozen=True)
class NetworkTopology:
    """An oriented metric tree.

    ``edges`` holds the oriented descriptors (``tail`` is ``I_j``, ``head``
    is ``T_j``) sorted by id. ``relabel`` maps user vertex ids to internal
    ones when the requested root was not vertex 0.
    """

    edges: tuple
    root: int
    coordinates: dict
    S_I: dict
    S_T: dict
    Pi1: frozenset
    Pi2: frozenset
    relabel: dict = field(default_factory=dict)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def vertex_count(self) -> int:
        return len(self.edges) + 1

    @property
    def edge_ids(self) -> list:
        return [e.id for e in self.edges]

    def edge(self, j: int) -> EdgeDescriptor:
        for e in self.edges:
            if e.id == j:
                return e
        raise KeyError(f"unknown edge id {j}")

    def x_start(self, j: int) -> float:
        return self.coordinates[self.edge(j).tail]

    def x_end(self, j: int) -> float:
        return self.coordinates[self.edge(j).head]

    def leaf_terminals(self) -> list:
        """``(k, j)`` for every ``k`` in Pi1 minus the root and ``j`` in ``S_T[k]``."""
        out = []
        for k in sorted(self.Pi1 - {self.root}):
            for j in sorted(self.S_T[k]):
                out.append((k, j))
        return out

    def incident(self, k: int) -> list:
        """Incident edge ends of vertex k as ``(edge id, end)`` with end in {"I", "T"}."""
        return [(j, "T") for j in sorted(self.S_T[k])] + [(j, "I") for j in sorted(self.S_I[k])]

    def parent_edge(self, k: int):
        (j,) = self.S_T[k] or (None,)
        return j

    def check_point_set_conditions(self) -> None:
        """Assert every structural identity a rooted tree must satisfy."""
        N = self.edge_count
        if self.S_T[self.root]:
            raise StructuralError("S_T of the root must be empty")
        for k in self.Pi1 - {self.root}:
            if self.S_I[k]:
                raise StructuralError(f"S_I of boundary vertex {k} must be empty")
        for k in range(1, N + 1):
            if len(self.S_T[k]) != 1:
                raise StructuralError(f"|S_T| of vertex {k} must be 1")
        for k in self.Pi2 | {self.root}:
            if len(self.S_I[k]) < 1:
                raise StructuralError(f"|S_I| of vertex {k} must be at least 1")
        if self.Pi1 | self.Pi2 != set(range(N + 1)) or self.Pi1 & self.Pi2:
            raise StructuralError("Pi1 and Pi2 must partition the vertex set")
        for e in self.edges:
            xi, xt = self.coordinates[e.tail], self.coordinates[e.head]
            if not xi < xt:
                raise StructuralError(f"edge {e.id} is not oriented away from the root")


def build_network(edges: Iterable[EdgeDescriptor], root: int = 0) -> NetworkTopology:
    edges = list(edges)
    if not edges:
        raise StructuralError("edge list is empty")
    ids = [e.id for e in edges]
    if len(set(ids)) != len(ids):
        raise StructuralError("duplicate edge ids")

    # union-find for cycles and connectivity
    parent = {}

    def find(v):
        parent.setdefault(v, v)
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for e in edges:
        a, b = find(e.tail), find(e.head)
        if a == b:
            raise StructuralError(f"cycle detected at edge {e.id}")
        parent[a] = b
    vertices = set(parent)
    if len({find(v) for v in vertices}) > 1:
        raise StructuralError("network is disconnected")
    N = len(edges)
    if len(vertices) != N + 1:
        raise StructuralError(f"vertex count {len(vertices)} != edge count + 1 = {N + 1}")
    if vertices != set(range(N + 1)):
        raise StructuralError(f"vertex ids must be the dense range 0..{N}")
    if root not in vertices:
        raise StructuralError(f"root {root} is not a vertex")

    degree = {v: 0 for v in vertices}
    for e in edges:
        degree[e.tail] += 1
        degree[e.head] += 1
    if degree[root] != 1:
        raise StructuralError(f"root {root} must have degree 1, has {degree[root]}")

    relabel = {}
    if root != 0:
        relabel = {root: 0, 0: root}
    lab = lambda v: relabel.get(v, v)

    adjacency = {v: [] for v in vertices}
    for e in edges:
        adjacency[lab(e.tail)].append((e, lab(e.head)))
        adjacency[lab(e.head)].append((e, lab(e.tail)))

    coords = {0: 0.0}
    oriented = []
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for e, w in sorted(adjacency[v], key=lambda item: item[0].id):
            if w in coords:
                continue
            coords[w] = coords[v] + e.length
            oriented.append(EdgeDescriptor(e.id, v, w, e.length))
            queue.append(w)
    oriented.sort(key=lambda e: e.id)

    S_I = {k: set() for k in vertices}
    S_T = {k: set() for k in vertices}
    for e in oriented:
        S_I[e.tail].add(e.id)
        S_T[e.head].add(e.id)
        if e.length < SHORT_EDGE_WARNING:
            warnings.warn(f"edge {e.id} is very short ({e.length:g})", stacklevel=2)
    deg = {k: len(S_I[k]) + len(S_T[k]) for k in vertices}
    topo = NetworkTopology(
        edges=tuple(oriented),
        root=0,
        coordinates=coords,
        S_I={k: frozenset(v) for k, v in S_I.items()},
        S_T={k: frozenset(v) for k, v in S_T.items()},
        Pi1=frozenset(k for k in vertices if deg[k] == 1),
        Pi2=frozenset(k for k in vertices if deg[k] > 1),
        relabel=relabel,
    )
    topo.check_point_set_conditions()
    return topo


def classify_vertex(topology: NetworkTopology, k: int) -> VertexClass:
    if k not in topology.coordinates:
        raise KeyError(f"unknown vertex id {k}")
    kind = "boundary" if k in topology.Pi1 else "interior"
    return VertexClass(kind, topology.S_I[k], topology.S_T[k])


def conserved_flows(topology: NetworkTopology, leaf_flow: float = 1.0) -> dict:
    """Per-edge constants that balance current at every interior vertex.

    Leaf edges carry ``leaf_flow``; every other edge carries the sum over
    its children.
    """
    flows = {}

    def visit(j):
        head = topology.edge(j).head
        children = topology.S_I[head]
        flows[j] = leaf_flow if not children else sum(visit(c) for c in sorted(children))
        return flows[j]

    for j in topology.S_I[topology.root]:
        visit(j)
    return flows


def five_edge_network(lengths=(1.0, 0.8, 1.0, 0.6, 0.7)) -> NetworkTopology:
    """The five-edge example tree: V0-V1, V1-V2, V1-V3, V3-V4, V3-V5."""
    pairs = [(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)]
    return build_network(
        [EdgeDescriptor(j + 1, a, b, float(l)) for j, ((a, b), l) in enumerate(zip(pairs, lengths))]
    )


def single_edge(length: float = 1.0) -> NetworkTopology:
    return build_network([EdgeDescriptor(1, 0, 1, float(length))])


def star_network(lengths=(1.0, 1.0, 1.0)) -> NetworkTopology:
    """Root edge feeding ``len(lengths) - 1`` outgoing edges at vertex 1."""
    edges = [EdgeDescriptor(1, 0, 1, float(lengths[0]))]
    for i, l in enumerate(lengths[1:], start=2):
        edges.append(EdgeDescriptor(i, 1, i, float(l)))
    return build_network(edges)


# -- network description files -------------------------------------------------

def network_to_dict(topology: NetworkTopology) -> dict:
    return {
        "root": topology.root,
        "edges": [
            {"id": e.id, "tail": e.tail, "head": e.head, "length": e.length}
            for e in topology.edges
        ],
    }


def network_from_dict(doc: dict) -> NetworkTopology:
    try:
        edges = [
            EdgeDescriptor(int(d["id"]), int(d["tail"]), int(d["head"]), float(d["length"]))
            for d in doc["edges"]
        ]
    except (KeyError, TypeError) as exc:
        raise StructuralError(f"malformed network description: {exc}") from exc
    return build_network(edges, int(doc.get("root", 0)))


def load_network(path) -> NetworkTopology:
    with open(path) as fh:
        return network_from_dict(yaml.safe_load(fh))


def save_network(topology: NetworkTopology, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(network_to_dict(topology), fh, sort_keys=False)
