"""Directed communication graphs and their cycle structure.

Edges follow the adjacency convention: ``(i, j)`` is an edge from node ``j``
to node ``i`` and its weight ``a_ij`` sits at row ``i``, column ``j``.  Node
labels are 1-based in every public structure; matrices are ordinary 0-based
numpy arrays.  Self-loops are regular edges and cycles of length one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .exceptions import (
    CombinatorialBudgetExceeded,
    GraphGenerationFailed,
    InvalidModelParameters,
    PreconditionError,
    SearchBudgetExceeded,
)

DEFAULT_ENUMERATION_BUDGET = 10**7
DEFAULT_SEARCH_BUDGET = 10**6


@dataclass(frozen=True)
class Digraph:
    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError("a digraph needs at least one node")
        edges = tuple(sorted({(int(i), int(j)) for i, j in self.edges}))
        if len(edges) != len(list(self.edges)):
            raise PreconditionError("duplicate edges")
        for i, j in edges:
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise PreconditionError(f"edge ({i}, {j}) outside nodes 1..{self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n, edges, self_loops=()):
        """Build from an edge list plus optional per-node self-loop flags."""
        edges = {tuple(e) for e in edges}
        if self_loops is True:
            self_loops = [True] * n
        for node, flag in enumerate(self_loops, start=1):
            if flag:
                edges.add((node, node))
        return cls(n, tuple(edges))

    @classmethod
    def from_pattern(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls(mask.shape[0], tuple((int(i) + 1, int(j) + 1) for i, j in zip(rows, cols)))

    @classmethod
    def complete(cls, n):
        return cls.from_pattern(np.ones((n, n), dtype=bool))

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def has_self_loop(self):
        loops = {i for i, j in self.edges if i == j}
        return tuple(node in loops for node in range(1, self.n + 1))

    @property
    def links(self):
        """Edges that are not self-loops."""
        return tuple(e for e in self.edges if e[0] != e[1])

    def index(self, edge):
        return self._index[tuple(edge)]

    @property
    def _index(self):
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {e: p for p, e in enumerate(self.edges)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def __contains__(self, edge):
        return tuple(edge) in self._index

    def pattern(self):
        mask = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            mask[i - 1, j - 1] = True
        return mask

    def is_complete(self):
        return self.num_edges == self.n * self.n

    def out_degrees(self):
        """Number of distinct out-neighbours of each node (self-loops excluded)."""
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.links:
            deg[j - 1] += 1
        return deg

    def without(self, removed):
        removed = {tuple(e) for e in removed}
        return Digraph(self.n, tuple(e for e in self.edges if e not in removed))

    def with_edges(self, added):
        return Digraph(self.n, tuple(set(self.edges) | {tuple(e) for e in added}))

    def to_networkx(self):
        """Arc graph with ``j -> i`` for every edge ``(i, j)``."""
        G = nx.DiGraph()
        G.add_nodes_from(range(1, self.n + 1))
        G.add_edges_from((j, i) for i, j in self.edges)
        return G

    def to_json(self):
        return {
            "n": self.n,
            "edges": [list(e) for e in self.links],
            "self_loops": list(self.has_self_loop),
        }

    @classmethod
    def from_json(cls, data):
        n = int(data["n"])
        return cls.from_edges(n, [tuple(e) for e in data.get("edges", [])], data.get("self_loops", ()))


def read_graph(path):
    return Digraph.from_json(json.loads(Path(path).read_text()))


def write_graph(path, graph):
    Path(path).write_text(json.dumps(graph.to_json(), sort_keys=True) + "\n")


@dataclass(frozen=True)
class EdgeParameters:
    """A real weight for every edge; realizes a graph-consistent matrix."""

    graph: Digraph
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.graph.num_edges:
            raise PreconditionError(
                f"{values.shape[0]} values for {self.graph.num_edges} edges"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, graph, mapping, default=None):
        vals = []
        for e in graph.edges:
            if e in mapping:
                vals.append(mapping[e])
            elif default is not None:
                vals.append(default)
            else:
                raise PreconditionError(f"no value for edge {e}")
        extra = set(mapping) - set(graph.edges)
        if extra:
            raise PreconditionError(f"values for non-edges {sorted(extra)}")
        return cls(graph, np.array(vals, dtype=float))

    @classmethod
    def from_matrix(cls, graph, A):
        A = np.asarray(A, dtype=float)
        return cls(graph, np.array([A[i - 1, j - 1] for i, j in graph.edges]))

    def __getitem__(self, edge):
        return float(self.values[self.graph.index(edge)])

    def as_dict(self):
        return {e: float(v) for e, v in zip(self.graph.edges, self.values)}

    def matrix(self):
        return realize(self.graph, self.values)


def realize(graph, values):
    """The matrix with ``values`` on the graph's edges and zeros elsewhere."""
    A = np.zeros((graph.n, graph.n))
    if graph.num_edges:
        rows = np.fromiter((i - 1 for i, _ in graph.edges), dtype=int, count=graph.num_edges)
        cols = np.fromiter((j - 1 for _, j in graph.edges), dtype=int, count=graph.num_edges)
        A[rows, cols] = values
    return A


def is_strongly_connected(graph):
    return nx.is_strongly_connected(graph.to_networkx())


# --------------------------------------------------------------------------
# cycles and Hamiltonian decompositions


@dataclass(frozen=True)
class Cycle:
    edges: tuple  # sorted
    nodes: frozenset

    @property
    def length(self):
        return len(self.edges)


@dataclass(frozen=True, order=True)
class HamiltonianDecomposition:
    """Node-disjoint cycles whose lengths sum to ``total_length``."""

    edges: tuple = field(compare=True)
    cycles: tuple = field(compare=False)

    @property
    def total_length(self):
        return len(self.edges)

    @property
    def d(self):
        return len(self.cycles)

    @property
    def nodes(self):
        return frozenset().union(*(c.nodes for c in self.cycles)) if self.cycles else frozenset()

    def __contains__(self, edge):
        return tuple(edge) in self.edges

    def edge_set(self):
        return frozenset(self.edges)


def simple_cycles(graph, max_length=None, budget=DEFAULT_ENUMERATION_BUDGET):
    """All simple cycles (self-loops included) of length at most ``max_length``.

    Cycle enumeration is Johnson's algorithm as implemented by networkx.
    """
    out = []
    for nodes in nx.simple_cycles(graph.to_networkx(), length_bound=max_length):
        m = len(nodes)
        # arc nodes[p] -> nodes[p+1] is edge (nodes[p+1], nodes[p])
        edges = tuple(sorted((nodes[(p + 1) % m], nodes[p]) for p in range(m)))
        out.append(Cycle(edges, frozenset(nodes)))
        if len(out) > budget:
            raise CombinatorialBudgetExceeded(f"more than {budget} cycles")
    out.sort(key=lambda c: c.edges)
    return out


def enumerate_decompositions(graph, l_max=None, budget=DEFAULT_ENUMERATION_BUDGET):
    """Every Hamiltonian l-decomposition for l = 1..l_max.

    Returns a dict mapping each length to a list of decompositions sorted
    lexicographically by their sorted edge lists.
    """
    n = graph.n
    if l_max is None:
        l_max = n
    if not 0 <= l_max <= n:
        raise PreconditionError(f"l_max must lie in [0, {n}]")
    result = {ell: [] for ell in range(1, l_max + 1)}
    if l_max == 0:
        return result
    cycles = simple_cycles(graph, l_max, budget)
    masks = [sum(1 << (v - 1) for v in c.nodes) for c in cycles]
    count = 0

    def extend(start, used, length, chosen):
        nonlocal count
        for idx in range(start, len(cycles)):
            c = cycles[idx]
            if masks[idx] & used or length + c.length > l_max:
                continue
            picked = chosen + (c,)
            total = length + c.length
            edges = tuple(sorted(e for cc in picked for e in cc.edges))
            result[total].append(HamiltonianDecomposition(edges, picked))
            count += 1
            if count > budget:
                raise CombinatorialBudgetExceeded(f"more than {budget} decompositions")
            extend(idx + 1, used | masks[idx], total, picked)

    extend(0, 0, 0, ())
    for ell in result:
        result[ell].sort()
    return result


def charpoly_coefficients(params, upto=None, budget=DEFAULT_ENUMERATION_BUDGET):
    """Coefficients ``p_1..p_upto`` of ``det(lambda I - A)`` from cycle families.

    Each ``p_l`` sums, over the Hamiltonian l-decompositions, the product of
    the edge weights signed by ``(-1)^(number of cycles)``.
    """
    graph = params.graph
    if upto is None:
        upto = graph.n
    decomps = enumerate_decompositions(graph, upto, budget)
    weights = params.as_dict()
    coeffs = []
    for ell in range(1, upto + 1):
        total = 0.0
        for xi in decomps[ell]:
            total += (-1) ** xi.d * math.prod(weights[e] for e in xi.edges)
        coeffs.append(total)
    return coeffs


# --------------------------------------------------------------------------
# structural feasibility


@dataclass(frozen=True)
class NecessaryCondition:
    holds: bool
    edge_count: int
    bound: int
    max_k: int


def check_necessary(graph, k):
    """Edge-count test ``|E| >= k n`` (self-loops counted)."""
    if not 1 <= k <= graph.n:
        raise PreconditionError(f"k must lie in [1, {graph.n}]")
    m = graph.num_edges
    return NecessaryCondition(m >= k * graph.n, m, k * graph.n, m // graph.n)


@dataclass(frozen=True)
class SufficientPartition:
    """Outcome of the edge-partition search.

    ``a_v[l-1]`` is the designated edge of length ``l`` and ``witnesses[l-1]``
    the decomposition containing it.  ``found = False`` means no partition
    exists among the enumerated decompositions; it does not prove that the
    graph is infeasible.
    """

    found: bool
    a_v: tuple = ()
    a_c: tuple = ()
    witnesses: tuple = ()
    meets_edge_hypothesis: bool = True
    explored: int = 0


def partition_violations(graph, k, a_v, witnesses, decompositions=None):
    """Reasons the partition fails the three conditions; empty when it is valid.

    ``a_c`` is every edge of ``graph`` outside ``a_v``.
    """
    L = graph.n - k
    a_v = tuple(tuple(e) for e in a_v)
    problems = []
    if len(a_v) != L or len(witnesses) != L:
        return [f"need {L} designated edges and witnesses, got {len(a_v)} and {len(witnesses)}"]
    if len(set(a_v)) != L:
        problems.append("designated edges are not distinct")
    if any(e not in graph for e in a_v):
        problems.append("designated edge not in graph")
    if decompositions is None:
        decompositions = enumerate_decompositions(graph, L)
    va = set(a_v)
    for ell, (a, star) in enumerate(zip(a_v, witnesses), start=1):
        if star.total_length != ell or star not in decompositions[ell]:
            problems.append(f"witness {ell} is not a Hamiltonian {ell}-decomposition of the graph")
            continue
        if a not in star:
            problems.append(f"(i) a_{ell} = {a} not in its witness")
        if any(e in va for e in star.edges if e != a):
            problems.append(f"(ii) witness {ell} has another designated edge")
        star_edges = star.edge_set()
        for xi in decompositions[ell]:
            if xi == star or not (xi.edge_set() & va):
                continue
            if not any(e not in va and e not in star_edges for e in xi.edges):
                problems.append(f"(iii) decomposition {xi.edges} has no free edge outside witness {ell}")
    return problems


def find_sufficient_partition(graph, k, zeroed=(), budget=DEFAULT_SEARCH_BUDGET,
                              enumeration_budget=DEFAULT_ENUMERATION_BUDGET):
    """Backtracking search for an edge partition meeting the sufficient conditions.

    Parameters
    ----------
    graph : Digraph
    k : int
        Agreement dimension, ``1 <= k < n``.
    zeroed : iterable of edges
        Edges fixed to zero for the search (their decompositions vanish).
        The edge-count hypothesis is still assessed on the full graph.
    budget : int
        Cap on visited search nodes.

    Raises
    ------
    SearchBudgetExceeded
        When the cap is hit; the verdict is then unknown.
    """
    n = graph.n
    if not 1 <= k < n:
        raise PreconditionError(f"k must lie in [1, {n - 1}]")
    hypothesis = graph.num_edges >= n * k + n - k
    reduced = graph.without(zeroed)
    L = n - k
    decomps = enumerate_decompositions(reduced, L, enumeration_budget)
    explored = 0

    def search(ell, a_v, stars, reserved):
        nonlocal explored
        explored += 1
        if explored > budget:
            raise SearchBudgetExceeded(f"visited more than {budget} search nodes")
        if ell > L:
            if not partition_violations(reduced, k, a_v, stars, decomps):
                return a_v, stars
            return None
        va = set(a_v)
        for star in decomps[ell]:
            if any(e in va for e in star.edges):
                continue
            for a in star.edges:
                if a in reserved:
                    continue
                found = search(ell + 1, a_v + (a,), stars + (star,),
                               reserved | {e for e in star.edges if e != a})
                if found:
                    return found
        return None

    hit = search(1, (), (), frozenset())
    if hit is None:
        return SufficientPartition(False, meets_edge_hypothesis=hypothesis, explored=explored)
    a_v, stars = hit
    a_c = tuple(e for e in reduced.edges if e not in set(a_v))
    return SufficientPartition(True, a_v, a_c, stars, hypothesis, explored)


# --------------------------------------------------------------------------
# generators

GRAPH_MODELS = ("complete", "ring_onedir", "circulant", "line", "erdos_renyi", "barabasi_albert")
MAX_RETRIES = 200


def _neighbour_offsets(alpha):
    # -1, +1, -2, +2, ... truncated to alpha entries
    offsets = []
    m = 1
    while len(offsets) < alpha:
        offsets.append(-m)
        if len(offsets) < alpha:
            offsets.append(m)
        m += 1
    return offsets


def _from_undirected(n, G):
    edges = {(i + 1, i + 1) for i in range(n)}
    for u, v in G.edges():
        if u != v:
            edges.add((u + 1, v + 1))
            edges.add((v + 1, u + 1))
    return Digraph(n, tuple(edges))


def generate_graph(model, n, *, alpha=None, p=None, m=None, seed=0, max_retries=MAX_RETRIES):
    """Standard topologies, each with a self-loop on every node.

    ``circulant(alpha)`` gives node ``i`` the in-neighbours ``i-1, i+1, i-2,
    i+2, ...`` (first ``alpha`` of them, indices mod n); ``alpha = 1`` is the
    one-directional ring.  ``line(alpha)`` uses the same offsets without
    wrap-around.  Random models are drawn undirected, symmetrized, and redrawn
    from offset seeds until strongly connected.
    """
    if n < 1:
        raise InvalidModelParameters("n must be positive")
    if model == "complete":
        return Digraph.complete(n)
    if model == "ring_onedir":
        model, alpha = "circulant", 1
    if model in ("circulant", "line"):
        if alpha is None or not 1 <= alpha < n:
            raise InvalidModelParameters(f"{model} needs 1 <= alpha < n, got {alpha}")
        edges = {(i, i) for i in range(1, n + 1)}
        for i in range(n):
            for off in _neighbour_offsets(alpha):
                j = i + off
                if model == "circulant":
                    edges.add((i + 1, j % n + 1))
                elif 0 <= j < n:
                    edges.add((i + 1, j + 1))
        return Digraph(n, tuple(edges))
    if model == "erdos_renyi":
        if p is None or not 0 <= p <= 1:
            raise InvalidModelParameters(f"erdos_renyi needs 0 <= p <= 1, got {p}")
        draw = lambda s: nx.gnp_random_graph(n, p, seed=s)
    elif model == "barabasi_albert":
        if m is None or not 1 <= m < n:
            raise InvalidModelParameters(f"barabasi_albert needs 1 <= m < n, got {m}")
        draw = lambda s: nx.barabasi_albert_graph(n, m, seed=s)
    else:
        raise InvalidModelParameters(f"unknown model {model!r}; choose from {GRAPH_MODELS}")
    for attempt in range(max_retries):
        g = _from_undirected(n, draw(seed + 7919 * attempt))
        if is_strongly_connected(g):
            return g
    raise GraphGenerationFailed(f"no strongly connected {model} graph after {max_retries} draws")


def _from_listing(n, entries):
    return Digraph(n, tuple(entries))


# Worked instances used throughout the docs and tests.
FIG2_GRAPH = _from_listing(4, [(1, 1), (1, 3), (2, 1), (2, 3), (3, 2), (3, 4), (4, 2)])
EXAMPLE3_GRAPH = _from_listing(5, [
    (1, 1), (1, 2), (1, 3), (1, 5), (2, 1), (2, 2), (3, 2), (3, 3),
    (3, 4), (4, 3), (4, 4), (5, 1), (5, 4), (5, 5),
])
EXAMPLE3_ZEROED = ((2, 2), (3, 3), (4, 4), (5, 5))
FIG4B_GRAPH = EXAMPLE3_GRAPH.with_edges([(2, 3)])
