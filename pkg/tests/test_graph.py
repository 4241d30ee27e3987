import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bayeslingam import graph, kernels
from bayeslingam.graph import Cpdag, CycleError, Dag, Family


def recurrence(n, memo={0: 1}):
    if n not in memo:
        memo[n] = sum((-1) ** (k + 1) * comb(n, k) * 2 ** (k * (n - k)) * recurrence(n - k) for k in range(1, n + 1))
    return memo[n]


def brute_force_dags(n):
    """All acyclic digraphs on n nodes, found by trying every edge subset."""
    pairs = [(j, i) for j in range(n) for i in range(n) if i != j]
    out = set()
    for bits in range(1 << len(pairs)):
        edges = [pairs[k] for k in range(len(pairs)) if bits >> k & 1]
        A = np.zeros((n, n), dtype=int)
        for j, i in edges:
            A[j, i] = 1
        # acyclic iff the adjacency matrix is nilpotent
        if not np.linalg.matrix_power(A, n).any():
            out.add(frozenset(edges))
    return out


def skeleton_and_colliders(edges):
    skel = frozenset(frozenset(e) for e in edges)
    coll = set()
    for (a, c), (b, c2) in itertools.permutations(edges, 2):
        if c == c2 and a != b and frozenset((a, b)) not in skel:
            coll.add((min(a, b), c, max(a, b)))
    return skel, frozenset(coll)


@pytest.mark.parametrize("n,expected", [(1, 1), (2, 3), (3, 25), (4, 543), (5, 29281)])
def test_enumeration_counts(n, expected):
    assert recurrence(n) == expected
    assert graph.count_dags(n) == expected
    assert len(graph.enumerate_dags(n)) == expected


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_enumeration_matches_brute_force(n):
    got = {d.edges for d in graph.enumerate_dags(n)}
    assert got == brute_force_dags(n)


def test_enumeration_is_unique_and_ordered():
    dags = graph.enumerate_dags(4)
    codes = [d.code for d in dags]
    assert codes == sorted(codes)
    assert len(set(codes)) == len(codes)
    assert [d.to_text() for d in graph.enumerate_dags(2)] == ["2", "2;1->2", "2;2->1"]


def test_enumeration_cap():
    with pytest.raises(ValueError, match="6"):
        graph.enumerate_dags(7)
    with pytest.raises(ValueError):
        graph.enumerate_dags(0)


def test_dag_list_lookup():
    dags = graph.enumerate_dags(3)
    for k, d in enumerate(dags):
        assert dags.index(d) == k
        assert d in dags
    assert Dag.from_text("4") not in dags


@pytest.mark.parametrize("n,expected", [(2, 4), (3, 12), (6, 192)])
def test_family_counts(n, expected):
    fams = graph.enumerate_families(n)
    assert len(fams) == expected == n * 2 ** (n - 1)
    assert len(set(fams)) == expected


def test_dag_to_families_examples():
    assert graph.dag_to_families(Dag.empty(3)) == [Family(i, frozenset()) for i in range(3)]
    assert graph.dag_to_families(Dag.from_text("2;1->2")) == [Family(0, frozenset()), Family(1, frozenset({0}))]
    chain = graph.dag_to_families(Dag.from_text("3;1->2;2->3"))
    assert chain == [Family(0, frozenset()), Family(1, frozenset({0})), Family(2, frozenset({1}))]


def test_dag_to_families_is_injective():
    seen = {tuple(graph.dag_to_families(d)) for d in graph.enumerate_dags(4)}
    assert len(seen) == 543


def test_topological_order_examples():
    assert graph.topological_order(Dag.from_text("2;1->2")) == (0, 1)
    assert graph.topological_order(Dag.empty(3)) == (0, 1, 2)
    assert graph.topological_order(Dag.from_text("2;2->1")) == (1, 0)


def test_cycles_and_bad_edges_rejected():
    with pytest.raises(CycleError):
        Dag.from_text("2;1->2;2->1")
    with pytest.raises(CycleError):
        graph.topological_order(Dag.from_masks(2, (2, 1), check=False))
    with pytest.raises(ValueError):
        Dag.from_edges(2, [(0, 0)])
    with pytest.raises(ValueError):
        Dag.from_edges(2, [(0, 2)])
    with pytest.raises(ValueError):
        Dag.from_edges(2, [(0, 1), (0, 1)])
    with pytest.raises(ValueError):
        Family(1, frozenset({1}))


def test_text_round_trip_all_four_node_dags():
    for d in graph.enumerate_dags(4):
        assert Dag.from_text(d.to_text()) == d


def test_cpdag_examples():
    a = graph.to_cpdag(Dag.from_text("2;1->2"))
    assert a == graph.to_cpdag(Dag.from_text("2;2->1"))
    assert a.to_text() == "2;1--2"
    coll = graph.to_cpdag(Dag.from_text("3;1->3;2->3"))
    assert coll.directed == {(0, 2), (1, 2)} and not coll.undirected
    chain = graph.to_cpdag(Dag.from_text("3;1->2;2->3"))
    assert chain.undirected == {(0, 1), (1, 2)} and not chain.directed
    assert Cpdag.from_text(chain.to_text()) == chain


@pytest.mark.parametrize("n", [2, 3, 4])
def test_cpdag_partition_matches_brute_force(n):
    dags = list(graph.enumerate_dags(n))
    by_cpdag, by_brute = {}, {}
    for d in dags:
        by_cpdag.setdefault(graph.to_cpdag(d), set()).add(d)
        by_brute.setdefault(skeleton_and_colliders(d.edges), set()).add(d)
    assert sorted(map(sorted_texts, by_cpdag.values())) == sorted(map(sorted_texts, by_brute.values()))


def sorted_texts(group):
    return tuple(sorted(d.to_text() for d in group))


@pytest.mark.parametrize("n", [3, 4])
def test_cpdag_orientations_are_exactly_the_compelled_edges(n):
    """Directed CPDAG edges are the ones every class member orients the same way."""
    classes = {}
    for d in graph.enumerate_dags(n):
        classes.setdefault(skeleton_and_colliders(d.edges), []).append(d)
    for members in classes.values():
        cp = graph.to_cpdag(members[0])
        common = frozenset.intersection(*(m.edges for m in members))
        assert cp.directed == common
        union = frozenset.union(*(m.edges for m in members))
        assert {(min(e), max(e)) for e in union - common} == set(cp.undirected)


def test_class_keys_agree_with_cpdag():
    dags = graph.enumerate_dags(4)
    keys = graph.class_keys(dags.masks)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    texts = [graph.to_cpdag(d).to_text() for d in dags]
    pairs = set(zip(inv.tolist(), texts))
    assert len(pairs) == len(set(inv.tolist())) == len(set(texts))


def test_numpy_enumeration_matches_active_backend():
    for n in range(1, 5):
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
        m1, c1 = kernels.numpy_backend.enumerate_dag_masks(n, perms, graph.count_dags(n))
        o = np.argsort(c1)
        assert np.array_equal(c1[o], graph.enumerate_dags(n).codes)
        assert np.array_equal(m1[o], graph.enumerate_dags(n).masks)


dag_strategy = st.integers(2, 5).flatmap(
    lambda n: st.tuples(st.just(n), st.permutations(range(n)), st.lists(st.booleans(), min_size=n * n, max_size=n * n)))


def _build(args):
    n, order, bits = args
    edges = [(order[a], order[b]) for a in range(n) for b in range(a + 1, n) if bits[a * n + b]]
    return Dag.from_edges(n, edges)


@given(dag_strategy)
def test_topological_order_respects_edges(args):
    d = _build(args)
    pos = {v: k for k, v in enumerate(graph.topological_order(d))}
    assert all(pos[j] < pos[i] for j, i in d.edges)


@given(dag_strategy)
def test_neighbors_are_valid_single_moves(args):
    d = _build(args)
    nb = d.neighbors()
    assert [x.to_text() for x in nb] == sorted(x.to_text() for x in nb)
    assert len(set(nb)) == len(nb) and d not in nb
    for x in nb:
        diff = d.edges ^ x.edges
        undirected = {frozenset(e) for e in diff}
        assert len(undirected) == 1  # add, remove, or reverse one edge
    # every acyclic single-edge addition is present
    for j in range(d.n):
        for i in range(d.n):
            if i != j and not d.has_edge(j, i) and not d.has_edge(i, j):
                added = d.with_edge(j, i)
                assert (added is None) == _creates_cycle(d, j, i)
                if added is not None:
                    assert added in nb


def _creates_cycle(d, j, i):
    # j -> i closes a cycle iff i already reaches j
    stack, seen = [i], set()
    while stack:
        v = stack.pop()
        if v == j:
            return True
        for c in range(d.n):
            if d.has_edge(v, c) and c not in seen:
                seen.add(c)
                stack.append(c)
    return False


@given(dag_strategy)
def test_cpdag_invariant_within_class(args):
    d = _build(args)
    cp = graph.to_cpdag(d)
    # reversing a non-compelled edge that keeps the v-structures stays in the class
    for j, i in d.edges:
        r = d.reversed_edge(j, i)
        if r is not None and graph.v_structures(r) == graph.v_structures(d):
            assert graph.to_cpdag(r) == cp
