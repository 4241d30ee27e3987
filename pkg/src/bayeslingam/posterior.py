"""DAG posteriors assembled from cached family scores.

Under parameter modularity a DAG's log marginal likelihood is the sum of its
families' scores, so all ``n * 2**(n-1)`` families are scored once and every
DAG score is a table lookup. With a uniform structure prior, posterior
probabilities are ``exp(score - logsumexp(scores))``.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import graph
from .density import DensitySpec
from .graph import Cpdag, Dag, Family
from .score import Dataset, FamilyScore, ScoreOptions, score_family


class MissingFamilyError(KeyError):
    def __init__(self, family):
        super().__init__(f"family (node {family.node + 1}, parents "
                         f"{[p + 1 for p in family.sorted_parents]}) is not in the score cache")
        self.family = family


def _score_one(args):
    family, data, spec, opts = args
    return score_family(family, data, spec, opts)


def score_families(families, data: Dataset, spec: DensitySpec, opts: ScoreOptions, jobs: int = 1) -> list[FamilyScore]:
    """Score ``families`` in order; ``jobs > 1`` uses worker processes.

    Every family draws from its own seeded stream, so the result does not
    depend on ``jobs`` or on scheduling.
    """
    families = list(families)
    if jobs <= 1 or len(families) < 2:
        return [score_family(f, data, spec, opts) for f in families]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_score_one, [(f, data, spec, opts) for f in families], chunksize=4))


class FamilyScoreCache:
    """Family -> :class:`FamilyScore` map tied to one (data, spec, opts)."""

    def __init__(self, data: Dataset, spec: DensitySpec, opts: ScoreOptions, jobs: int = 1):
        self.data = data
        self.spec = spec
        self.opts = opts
        self.jobs = jobs
        self.n = data.n
        h = hashlib.sha256(data.fingerprint().encode())
        h.update(repr(spec).encode())
        h.update(repr(opts).encode())
        self.fingerprint = h.hexdigest()
        self._scores: dict[Family, FamilyScore] = {}

    def __len__(self) -> int:
        return len(self._scores)

    def __contains__(self, family) -> bool:
        return family in self._scores

    def __getitem__(self, family: Family) -> FamilyScore:
        try:
            return self._scores[family]
        except KeyError:
            raise MissingFamilyError(family) from None

    def items(self):
        return sorted(self._scores.items(), key=lambda kv: (kv[0].node, kv[0].mask))

    def ensure(self, families) -> None:
        """Score whichever of ``families`` are not cached yet."""
        todo = []
        seen = set()
        for f in families:
            if f not in self._scores and f not in seen:
                seen.add(f)
                todo.append(f)
        todo.sort(key=lambda f: (f.node, f.mask))
        for f, s in zip(todo, score_families(todo, self.data, self.spec, self.opts, self.jobs)):
            self._scores[f] = s

    def table(self) -> np.ndarray:
        """``(n, 2**n)`` array of log marginal likelihoods (NaN where absent)."""
        t = np.full((self.n, 1 << self.n), np.nan)
        for f, s in self._scores.items():
            t[f.node, f.mask] = s.log_ml
        return t

    @property
    def n_unconverged(self) -> int:
        return sum(not s.converged for s in self._scores.values())


def build_cache(data: Dataset, spec: DensitySpec, opts: ScoreOptions | None = None,
                families="all", jobs: int = 1) -> FamilyScoreCache:
    """Family score cache; ``families="all"`` scores all ``n 2^(n-1)`` families,
    ``"on-demand"`` returns an empty cache that fills as DAGs are scored, and
    an iterable of :class:`Family` scores just those."""
    opts = opts or ScoreOptions()
    cache = FamilyScoreCache(data, spec, opts, jobs)
    if isinstance(families, str):
        if families == "all":
            cache.ensure(graph.enumerate_families(data.n))
        elif families != "on-demand":
            raise ValueError(f"families must be 'all', 'on-demand' or an iterable, got {families!r}")
    else:
        cache.ensure(families)
    return cache


def dag_log_score(dag: Dag, cache: FamilyScoreCache) -> float:
    """Sum of family log marginal likelihoods, added in node order."""
    total = 0.0
    for f in graph.dag_to_families(dag):
        total += cache[f].log_ml
    return total


# ---------------------------------------------------------------------------
# results


@dataclass
class PosteriorResult:
    """Posterior over a set of DAGs, sorted by descending probability.

    Rows are stored as arrays (``masks`` holds parent bitmasks) so the
    3.78M-entry result at ``n = 6`` stays compact; :attr:`entries` and
    :meth:`class_view` materialise objects on request.
    """

    n: int
    masks: np.ndarray
    log_scores: np.ndarray
    probs: np.ndarray
    mode: str
    log_normalizer: float
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.masks.shape[0]

    def dag(self, i: int) -> Dag:
        return Dag(self.n, tuple(int(m) for m in self.masks[i]))

    def top(self, k: int | None = None) -> list[tuple[Dag, float, float]]:
        k = len(self) if k is None else min(k, len(self))
        return [(self.dag(i), float(self.log_scores[i]), float(self.probs[i])) for i in range(k)]

    @property
    def entries(self) -> list[tuple[Dag, float, float]]:
        return self.top()

    @property
    def best(self) -> Dag:
        return self.dag(0)

    def _lookup(self):
        if "_lookup" not in self.diagnostics:
            self.diagnostics["_lookup"] = {tuple(int(v) for v in row): i for i, row in enumerate(self.masks)}
        return self.diagnostics["_lookup"]

    def prob_of(self, dag: Dag) -> float:
        """Posterior probability of ``dag``; 0 if it was never evaluated."""
        if len(self) > 100_000:
            hit = np.nonzero((self.masks == np.asarray(dag.parent_masks, dtype=self.masks.dtype)).all(axis=1))[0]
            return float(self.probs[hit[0]]) if hit.size else 0.0
        i = self._lookup().get(dag.parent_masks)
        return 0.0 if i is None else float(self.probs[i])

    def prob_vector(self) -> np.ndarray:
        """Probabilities indexed like :func:`graph.enumerate_dags` (n <= 6)."""
        dags = graph.enumerate_dags(self.n)
        codes = _codes(self.masks, self.n)
        idx = np.searchsorted(dags.codes, codes)
        out = np.zeros(len(dags))
        out[idx] = self.probs
        return out

    def _classes(self):
        if "_classes" not in self.diagnostics:
            n = self.n
            if n * (n - 1) // 2 <= 62:
                keys = graph.class_keys(self.masks.astype(np.uint8 if n <= 8 else np.int64))
                _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
                inverse = inverse.reshape(-1)
            else:
                cps = [graph.to_cpdag(self.dag(i)).to_text() for i in range(len(self))]
                uniq = {}
                inverse = np.array([uniq.setdefault(c, len(uniq)) for c in cps])
                first = np.array([cps.index(c) for c in uniq])
            mass = np.bincount(inverse, weights=self.probs, minlength=first.shape[0])
            order = np.lexsort((first, -mass))
            self.diagnostics["_classes"] = (first[order], mass[order])
        return self.diagnostics["_classes"]

    def class_view(self, top: int | None = None) -> list[tuple[Cpdag, float]]:
        """Equivalence classes with their summed probability, largest first."""
        first, mass = self._classes()
        k = len(first) if top is None else min(top, len(first))
        out = [(graph.to_cpdag(self.dag(int(first[i]))), float(mass[i])) for i in range(k)]
        # Exact mass ties: order by CPDAG text.
        out.sort(key=lambda cp: (-cp[1], cp[0].to_text()))
        return out

    @property
    def n_classes(self) -> int:
        return len(self._classes()[0])

    def to_json(self, top: int | None = None, top_classes: int | None = None) -> dict:
        return {
            "mode": self.mode,
            "log_normalizer": float(self.log_normalizer),
            "n_dags": len(self),
            "n_classes": self.n_classes,
            "dags": [{"dag": d.to_text(), "log_score": s, "prob": p} for d, s, p in self.top(top)],
            "classes": [{"cpdag": c.to_text(), "prob": p} for c, p in self.class_view(top_classes)],
        }


def _codes(masks, n):
    codes = np.zeros(masks.shape[0], np.int64)
    for i in range(n):
        m = masks[:, i].astype(np.int64)
        for j in range(n):
            codes |= ((m >> j) & 1) << (j * n + i)
    return codes


def make_result(n: int, masks: np.ndarray, log_scores: np.ndarray, mode: str, diagnostics=None) -> PosteriorResult:
    """Normalise ``log_scores`` and sort rows by descending probability.

    Ties in probability fall back to the log score and then to canonical
    DAG text order.
    """
    log_scores = np.asarray(log_scores, dtype=float)
    log_z = float(logsumexp(log_scores))
    probs = np.exp(log_scores - log_z)
    order = np.lexsort((-log_scores, -probs))
    ls_sorted = log_scores[order]
    pr_sorted = probs[order]
    tie = (np.diff(ls_sorted) == 0) & (np.diff(pr_sorted) == 0)
    if tie.any():
        order = order.copy()
        start = 0
        while start < len(order):
            end = start
            while end < len(tie) and tie[end]:
                end += 1
            if end > start:
                block = order[start:end + 1]
                texts = [Dag(n, tuple(int(v) for v in masks[i])).to_text() for i in block]
                order[start:end + 1] = block[np.argsort(texts, kind="stable")]
            start = end + 1
    return PosteriorResult(
        n=n,
        masks=np.ascontiguousarray(masks[order]),
        log_scores=log_scores[order],
        probs=probs[order],
        mode=mode,
        log_normalizer=log_z,
        diagnostics=dict(diagnostics or {}),
    )


# ---------------------------------------------------------------------------
# exhaustive and greedy


def exhaustive_posterior(data: Dataset, spec: DensitySpec, opts: ScoreOptions | None = None,
                         cache: FamilyScoreCache | None = None, jobs: int = 1) -> PosteriorResult:
    """Posterior over every DAG on ``data.n <= 6`` variables."""
    opts = opts or ScoreOptions()
    dags = graph.enumerate_dags(data.n)
    if cache is None:
        cache = build_cache(data, spec, opts, "all", jobs)
    else:
        cache.ensure(graph.enumerate_families(data.n))
    scores = exhaustive_scores(dags, cache.table())
    return make_result(data.n, dags.masks, scores, "exhaustive",
                       {"n_unconverged_families": cache.n_unconverged, "cache": cache})


def exhaustive_scores(dags: graph.DagList, table: np.ndarray) -> np.ndarray:
    if np.isnan(table[np.arange(dags.n)[:, None], dags.masks.T].T).any():
        raise ValueError("family table is incomplete")
    from . import kernels

    return kernels.dag_scores(dags.masks, np.ascontiguousarray(table))


def greedy_search(data: Dataset, spec: DensitySpec, opts: ScoreOptions | None = None,
                  cache: FamilyScoreCache | None = None, jobs: int = 1,
                  max_steps: int | None = None) -> PosteriorResult:
    """Hill climbing over add / remove / reverse moves from the empty graph.

    Each step scores every neighbour and moves to the best one if it beats
    the current DAG (ties go to the canonical-text-first neighbour). The
    final step has scored all neighbours of the returned DAG. Probabilities
    are normalised over the distinct DAGs evaluated during the run.
    """
    opts = opts or ScoreOptions()
    n = data.n
    if cache is None:
        cache = build_cache(data, spec, opts, "on-demand", jobs)
    evaluated: dict[tuple[int, ...], float] = {}

    def score_all(dags):
        cache.ensure(f for d in dags for f in graph.dag_to_families(d))
        out = []
        for d in dags:
            if d.parent_masks not in evaluated:
                evaluated[d.parent_masks] = dag_log_score(d, cache)
            out.append(evaluated[d.parent_masks])
        return out

    current = Dag.empty(n)
    (cur_score,) = score_all([current])
    path = [(current.to_text(), cur_score)]
    steps = 0
    while max_steps is None or steps < max_steps:
        nbrs = current.neighbors()
        if not nbrs:
            break
        scores = score_all(nbrs)
        best = int(np.argmax(scores))  # first maximum = canonical text order
        if scores[best] > cur_score:
            current, cur_score = nbrs[best], scores[best]
            path.append((current.to_text(), cur_score))
            steps += 1
        else:
            break
    masks = np.array(list(evaluated.keys()), dtype=np.uint8 if n <= 8 else np.int64).reshape(-1, n)
    return make_result(n, masks, np.array(list(evaluated.values())), "greedy",
                       {"path": path, "final": current.to_text(), "cache": cache,
                        "n_unconverged_families": cache.n_unconverged})
