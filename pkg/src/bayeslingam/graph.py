"""DAGs, families and Markov equivalence classes.

A :class:`Dag` over ``n`` variables is stored as one parent bitmask per node,
i.e. the columns of the adjacency bit-matrix ``A[j, i] = 1 iff j -> i``.
Text forms use 1-based labels: ``"3;1->2;2->3"`` for DAGs and
``"3;1->3;1--2"`` for CPDAGs.
"""

from __future__ import annotations

import functools
import itertools
from collections.abc import Sequence
from dataclasses import dataclass
from math import comb

import numpy as np

from . import kernels

MAX_ENUMERATION_NODES = 6


class CycleError(ValueError):
    """Raised when a graph that should be acyclic contains a directed cycle."""


def _bits(mask: int):
    j = 0
    while mask:
        if mask & 1:
            yield j
        mask >>= 1
        j += 1


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph on nodes ``0..n-1``.

    Construct through :meth:`from_edges`, :meth:`from_masks` or
    :meth:`from_text`; all three validate acyclicity.
    """

    n: int
    parent_masks: tuple[int, ...]

    @classmethod
    def from_masks(cls, n: int, masks, check: bool = True) -> Dag:
        masks = tuple(int(m) for m in masks)
        dag = cls(int(n), masks)
        if check:
            dag._validate()
        return dag

    @classmethod
    def from_edges(cls, n: int, edges) -> Dag:
        masks = [0] * n
        seen = set()
        for j, i in edges:
            j, i = int(j), int(i)
            if not (0 <= j < n and 0 <= i < n):
                raise ValueError(f"edge {j}->{i} outside [0, {n})")
            if (j, i) in seen:
                raise ValueError(f"duplicate edge {j}->{i}")
            seen.add((j, i))
            masks[i] |= 1 << j
        return cls.from_masks(n, masks)

    @classmethod
    def empty(cls, n: int) -> Dag:
        return cls(n, (0,) * n)

    @classmethod
    def from_text(cls, text: str) -> Dag:
        parts = [p.strip() for p in text.strip().split(";") if p.strip()]
        if not parts:
            raise ValueError("empty DAG text")
        try:
            n = int(parts[0])
        except ValueError:
            raise ValueError(f"DAG text must start with the node count: {text!r}") from None
        edges = []
        for tok in parts[1:]:
            if "->" not in tok:
                raise ValueError(f"bad edge token {tok!r} in {text!r}")
            a, b = tok.split("->")
            edges.append((int(a) - 1, int(b) - 1))
        return cls.from_edges(n, edges)

    def _validate(self) -> None:
        if len(self.parent_masks) != self.n:
            raise ValueError("need one parent mask per node")
        full = (1 << self.n) - 1
        for i, m in enumerate(self.parent_masks):
            if m < 0 or m & ~full:
                raise ValueError(f"parent mask of node {i} has bits outside [0, {self.n})")
            if (m >> i) & 1:
                raise ValueError(f"self-loop on node {i}")
        topological_order(self)

    # -- views --------------------------------------------------------
    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((j, i) for i, m in enumerate(self.parent_masks) for j in _bits(m))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def parents(self, i: int) -> frozenset[int]:
        return frozenset(_bits(self.parent_masks[i]))

    def has_edge(self, j: int, i: int) -> bool:
        return bool((self.parent_masks[i] >> j) & 1)

    @property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for j, i in self.edges:
            A[j, i] = True
        return A

    @property
    def code(self) -> int:
        """Edge bit-matrix packed little-endian: edge j->i is bit ``j*n + i``."""
        c = 0
        for j, i in self.edges:
            c |= 1 << (j * self.n + i)
        return c

    @property
    def n_edges(self) -> int:
        return sum(bin(m).count("1") for m in self.parent_masks)

    def to_text(self) -> str:
        return ";".join([str(self.n)] + [f"{j + 1}->{i + 1}" for j, i in self.sorted_edges()])

    def __str__(self) -> str:
        return self.to_text()

    # -- local moves used by hill climbing -----------------------------
    def with_edge(self, j: int, i: int) -> Dag | None:
        """Add ``j -> i``; ``None`` if present, reversed-present or cyclic."""
        if j == i or self.has_edge(j, i) or self.has_edge(i, j):
            return None
        masks = list(self.parent_masks)
        masks[i] |= 1 << j
        return _acyclic_or_none(self.n, masks)

    def without_edge(self, j: int, i: int) -> Dag | None:
        if not self.has_edge(j, i):
            return None
        masks = list(self.parent_masks)
        masks[i] &= ~(1 << j)
        return Dag(self.n, tuple(masks))

    def reversed_edge(self, j: int, i: int) -> Dag | None:
        if not self.has_edge(j, i):
            return None
        masks = list(self.parent_masks)
        masks[i] &= ~(1 << j)
        masks[j] |= 1 << i
        return _acyclic_or_none(self.n, masks)

    def neighbors(self) -> list[Dag]:
        """All DAGs one add, remove or reverse away, in canonical text order."""
        out = {}
        for j in range(self.n):
            for i in range(self.n):
                if i == j:
                    continue
                for cand in (self.with_edge(j, i), self.without_edge(j, i), self.reversed_edge(j, i)):
                    if cand is not None:
                        out[cand.parent_masks] = cand
        return sorted(out.values(), key=Dag.to_text)


def _acyclic_or_none(n, masks):
    dag = Dag(n, tuple(masks))
    try:
        topological_order(dag)
    except CycleError:
        return None
    return dag


@dataclass(frozen=True)
class Family:
    """A node and its parent set: the unit of score caching."""

    node: int
    parents: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "parents", frozenset(int(p) for p in self.parents))
        if self.node in self.parents:
            raise ValueError(f"node {self.node} cannot be its own parent")
        if self.node < 0 or any(p < 0 for p in self.parents):
            raise ValueError("negative variable index")

    @classmethod
    def from_mask(cls, node: int, mask: int) -> Family:
        return cls(node, frozenset(_bits(mask)))

    @property
    def mask(self) -> int:
        m = 0
        for p in self.parents:
            m |= 1 << p
        return m

    @property
    def sorted_parents(self) -> list[int]:
        return sorted(self.parents)

    def __str__(self) -> str:
        pa = ",".join(str(p + 1) for p in self.sorted_parents)
        return f"{self.node + 1}|{pa}"


@dataclass(frozen=True)
class Cpdag:
    """Completed partially directed graph of one Markov equivalence class.

    ``undirected`` holds pairs ``(a, b)`` with ``a < b``.
    """

    n: int
    directed: frozenset[tuple[int, int]]
    undirected: frozenset[tuple[int, int]]

    def __post_init__(self):
        und = {(a, b) for a, b in self.undirected}
        if any(a >= b for a, b in und):
            raise ValueError("undirected pairs must be stored as (a, b) with a < b")
        if any(a == b for a, b in self.directed):
            raise ValueError("self-loop in CPDAG")
        if any((min(a, b), max(a, b)) in und for a, b in self.directed):
            raise ValueError("edge both directed and undirected")

    def to_text(self) -> str:
        toks = [f"{j + 1}->{i + 1}" for j, i in sorted(self.directed)]
        toks += [f"{a + 1}--{b + 1}" for a, b in sorted(self.undirected)]
        return ";".join([str(self.n)] + toks)

    @classmethod
    def from_text(cls, text: str) -> Cpdag:
        parts = [p.strip() for p in text.strip().split(";") if p.strip()]
        n = int(parts[0])
        directed, undirected = set(), set()
        for tok in parts[1:]:
            if "->" in tok:
                a, b = tok.split("->")
                directed.add((int(a) - 1, int(b) - 1))
            elif "--" in tok:
                a, b = (int(x) - 1 for x in tok.split("--"))
                undirected.add((min(a, b), max(a, b)))
            else:
                raise ValueError(f"bad CPDAG token {tok!r}")
        return cls(n, frozenset(directed), frozenset(undirected))

    def __str__(self) -> str:
        return self.to_text()


# ---------------------------------------------------------------------------
# enumeration


def count_dags(n: int) -> int:
    """Number of labelled DAGs on ``n`` nodes (Robinson's recurrence)."""
    a = [1]
    for m in range(1, n + 1):
        a.append(sum((-1) ** (k + 1) * comb(m, k) * 2 ** (k * (m - k)) * a[m - k] for k in range(1, m + 1)))
    return a[n]


class DagList(Sequence):
    """Read-only, lazily materialised list of every DAG on ``n`` nodes.

    Backed by a ``(count, n)`` array of parent bitmasks sorted by
    :attr:`Dag.code`; ``Dag`` objects are only built on access.
    """

    def __init__(self, n: int, masks: np.ndarray, codes: np.ndarray):
        self.n = n
        self.masks = masks
        self.codes = codes
        self.masks.setflags(write=False)
        self.codes.setflags(write=False)

    def __len__(self) -> int:
        return self.masks.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return [self[i] for i in range(*idx.indices(len(self)))]
        return Dag(self.n, tuple(int(m) for m in self.masks[idx]))

    def index(self, dag: Dag, *args) -> int:
        if dag.n != self.n:
            raise ValueError("DAG has a different node count")
        pos = int(np.searchsorted(self.codes, dag.code))
        if pos >= len(self) or self.codes[pos] != dag.code:
            raise ValueError(f"{dag} not in list")
        return pos

    def __contains__(self, dag) -> bool:
        try:
            self.index(dag)
        except (ValueError, AttributeError):
            return False
        return True


@functools.lru_cache(maxsize=None)
def _dag_list(n: int) -> DagList:
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    masks, codes = kernels.enumerate_dag_masks(n, perms, count_dags(n))
    order = np.argsort(codes, kind="stable")
    return DagList(n, np.ascontiguousarray(masks[order]), np.ascontiguousarray(codes[order]))


def enumerate_dags(n: int) -> DagList:
    """Every labelled DAG on ``n`` nodes, ordered by :attr:`Dag.code`.

    Raises
    ------
    ValueError
        If ``n`` is outside ``1..6``; larger problems need greedy search.
    """
    if not 1 <= n <= MAX_ENUMERATION_NODES:
        raise ValueError(
            f"exhaustive DAG enumeration supports 1 <= n <= {MAX_ENUMERATION_NODES}, got n={n}; "
            "use greedy search for larger graphs"
        )
    return _dag_list(n)


def enumerate_families(n: int) -> list[Family]:
    """All ``n * 2**(n-1)`` families, by node then by parent bitmask."""
    if n < 1:
        raise ValueError("need n >= 1")
    out = []
    for i in range(n):
        for mask in range(1 << n):
            if not (mask >> i) & 1:
                out.append(Family.from_mask(i, mask))
    return out


def dag_to_families(dag: Dag) -> list[Family]:
    return [Family.from_mask(i, m) for i, m in enumerate(dag.parent_masks)]


def topological_order(dag: Dag) -> tuple[int, ...]:
    """Kahn's algorithm, always taking the smallest available index."""
    remaining = (1 << dag.n) - 1
    order = []
    for _ in range(dag.n):
        for v in range(dag.n):
            if (remaining >> v) & 1 and dag.parent_masks[v] & remaining == 0:
                order.append(v)
                remaining &= ~(1 << v)
                break
        else:
            raise CycleError(f"graph {dag.parent_masks} contains a directed cycle")
    return tuple(order)


# ---------------------------------------------------------------------------
# equivalence classes


def _meek_closure(directed: np.ndarray, undirected: np.ndarray) -> None:
    """Apply Meek's rules R1-R4 in place until nothing changes."""
    n = directed.shape[0]

    def adj(a, b):
        return directed[a, b] or directed[b, a] or undirected[a, b]

    def orient(a, b):
        undirected[a, b] = undirected[b, a] = False
        directed[a, b] = True

    changed = True
    while changed:
        changed = False
        for a in range(n):
            for b in range(n):
                if not undirected[a, b]:
                    continue
                # R1: c -> a - b, c and b non-adjacent
                if any(directed[c, a] and not adj(c, b) for c in range(n) if c != b):
                    orient(a, b)
                    changed = True
                    continue
                # R2: a -> c -> b
                if any(directed[a, c] and directed[c, b] for c in range(n)):
                    orient(a, b)
                    changed = True
                    continue
                # R3: a - c -> b, a - d -> b, c and d non-adjacent
                cs = [c for c in range(n) if undirected[a, c] and directed[c, b]]
                if any(not adj(c, d) for c, d in itertools.combinations(cs, 2)):
                    orient(a, b)
                    changed = True
                    continue
                # R4: a ~ c -> d -> b, a ~ d, c and b non-adjacent
                hit = False
                for c in range(n):
                    if c in (a, b) or not adj(a, c) or adj(c, b):
                        continue
                    for d in range(n):
                        if directed[c, d] and directed[d, b] and adj(a, d):
                            hit = True
                            break
                    if hit:
                        break
                if hit:
                    orient(a, b)
                    changed = True


def v_structures(dag: Dag) -> frozenset[tuple[int, int, int]]:
    """Triples ``(a, c, b)`` with ``a < b``, ``a -> c <- b`` and a, b non-adjacent."""
    A = dag.adjacency
    out = set()
    for c in range(dag.n):
        pa = sorted(dag.parents(c))
        for a, b in itertools.combinations(pa, 2):
            if not (A[a, b] or A[b, a]):
                out.add((a, c, b))
    return frozenset(out)


def to_cpdag(dag: Dag) -> Cpdag:
    """Skeleton and v-structures of ``dag``, then Meek closure."""
    A = dag.adjacency
    n = dag.n
    directed = np.zeros((n, n), dtype=bool)
    undirected = A | A.T
    for a, c, b in v_structures(dag):
        for s in (a, b):
            directed[s, c] = True
            undirected[s, c] = undirected[c, s] = False
    _meek_closure(directed, undirected)
    d = frozenset((int(j), int(i)) for j, i in zip(*np.nonzero(directed)))
    u = frozenset((int(a), int(b)) for a, b in zip(*np.nonzero(np.triu(undirected))))
    return Cpdag(n, d, u)


def class_key_words(n: int) -> int:
    return 1 + -(-(n * comb(n, 2)) // 62) if n > 1 else 1


def class_keys(masks: np.ndarray) -> np.ndarray:
    """Row-wise Markov-equivalence keys for an array of parent bitmasks."""
    n = masks.shape[1]
    if comb(n, 2) > 62:
        raise ValueError("class keys support at most 11 nodes")
    return kernels.class_keys(np.ascontiguousarray(masks), class_key_words(n))
