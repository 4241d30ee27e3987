"""Gold-standard data: the synthetic q-nonlinearity protocol and residual
shuffling re-simulation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import graph
from ._rng import substream
from .graph import Dag
from .score import Dataset, standardize


@dataclass(frozen=True)
class SyntheticConfig:
    """Settings for :func:`generate_synthetic`.

    ``min_abs_coef`` rejects coefficient draws smaller than it in magnitude;
    the default 0 keeps plain uniform draws.
    """

    n: int = 2
    q: float = 1.0
    N: int = 1000
    coef_range: tuple[float, float] = (-3.0, 3.0)
    seed: int = 0
    dag: Dag | None = None
    min_abs_coef: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.q > 0:
            raise ValueError(f"q must be > 0, got {self.q}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2 (standardization needs two rows), got {self.N}")
        lo, hi = self.coef_range
        if not lo < hi:
            raise ValueError(f"coef_range must satisfy lower < upper, got {self.coef_range}")
        if self.min_abs_coef < 0 or self.min_abs_coef >= max(abs(lo), abs(hi)):
            raise ValueError("min_abs_coef must lie in [0, max |coef_range|)")
        if self.dag is not None and self.dag.n != self.n:
            raise ValueError(f"dag has {self.dag.n} nodes, config says n={self.n}")


@dataclass(eq=False)
class GeneratedCase:
    """A dataset together with the structure and coefficients that made it.

    ``raw`` is the data before standardization and ``disturbances`` the
    (transformed or shuffled) noise columns that entered the equations.
    """

    true_dag: Dag
    coefficients: dict[tuple[int, int], float]
    data: Dataset
    seed: int
    q: float | None = None
    raw: np.ndarray | None = field(default=None, repr=False)
    disturbances: np.ndarray | None = field(default=None, repr=False)

    def truth_json(self) -> dict:
        return {
            "dag": self.true_dag.to_text(),
            "coefficients": {f"{j + 1}->{i + 1}": float(b) for (j, i), b in sorted(self.coefficients.items())},
            "seed": self.seed,
            "q": self.q,
        }


def nonlinearity(e, q: float):
    """``sign(e) |e|**q``."""
    e = np.asarray(e, dtype=float)
    return np.sign(e) * np.abs(e) ** q


def random_dag(n: int, rng: np.random.Generator) -> Dag:
    """Uniform draw over labelled DAGs for ``n <= 6``.

    Larger ``n`` falls back to a random order with each forward edge present
    with probability 1/2, which is not uniform over DAGs.
    """
    if n <= graph.MAX_ENUMERATION_NODES:
        dags = graph.enumerate_dags(n)
        return dags[int(rng.integers(len(dags)))]
    order = rng.permutation(n)
    edges = [(int(order[a]), int(order[b])) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.5]
    return Dag.from_edges(n, edges)


def _draw_coef(rng, lo, hi, min_abs):
    while True:
        b = float(rng.uniform(lo, hi))
        if abs(b) >= min_abs:
            return b


def _generate(dag: Dag, coefs, E):
    X = np.zeros_like(E)
    for i in graph.topological_order(dag):
        X[:, i] = E[:, i]
        for j in sorted(dag.parents(i)):
            X[:, i] += coefs[(j, i)] * X[:, j]
    return X


def generate_synthetic(cfg: SyntheticConfig) -> GeneratedCase:
    """Draw a DAG, coefficients and transformed Gaussian disturbances, then
    generate and standardize the data. Bit-reproducible given ``cfg.seed``."""
    rng = substream(cfg.seed, "synthetic")
    dag = cfg.dag if cfg.dag is not None else random_dag(cfg.n, rng)
    lo, hi = cfg.coef_range
    coefs = {e: _draw_coef(rng, lo, hi, cfg.min_abs_coef) for e in dag.sorted_edges()}
    E = nonlinearity(rng.standard_normal((cfg.N, cfg.n)), cfg.q)
    X = _generate(dag, coefs, E)
    return GeneratedCase(dag, coefs, standardize(X), cfg.seed, cfg.q, raw=X, disturbances=E)


def resimulate(data: Dataset, dag: Dag, N_out: int | None = None, seed: int = 0) -> GeneratedCase:
    """Refit ``dag`` by OLS, shuffle each residual independently and regenerate.

    Raises
    ------
    ValueError
        If a node's parents are collinear, or ``N_out`` exceeds the sample size.
    """
    if dag.n != data.n:
        raise ValueError(f"dag has {dag.n} nodes but data has {data.n} columns")
    if not data.standardized:
        data = standardize(data.X, data.names)
    X = data.X
    N = data.N
    N_out = N if N_out is None else int(N_out)
    if not 2 <= N_out <= N:
        raise ValueError(f"N_out must be in [2, {N}], got {N_out}")
    rng = substream(seed, "resimulate")
    coefs = {}
    R = np.empty_like(X)
    for i in range(data.n):
        pa = sorted(dag.parents(i))
        r = X[:, i].copy()
        if pa:
            A = X[:, pa]
            if np.linalg.matrix_rank(A) < len(pa):
                names = ", ".join(data.names[j] for j in pa)
                raise ValueError(f"singular regression for {data.names[i]!r}: parents ({names}) are collinear")
            b, *_ = np.linalg.lstsq(A, r, rcond=None)
            for j, bj in zip(pa, b):
                coefs[(j, i)] = float(bj)
            r = r - A @ b
        R[:, i] = r
    for i in range(data.n):
        R[:, i] = R[rng.permutation(N), i]
    Xn = _generate(dag, coefs, R)
    if N_out < N:
        keep = np.sort(rng.choice(N, size=N_out, replace=False))
        Xn = Xn[keep]
    return GeneratedCase(dag, coefs, standardize(Xn, data.names), seed, None, raw=Xn, disturbances=R)


# ---------------------------------------------------------------------------
# files


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.names)
        for row in data.X:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    """Read a header-first numeric CSV. Raises ``ValueError`` on bad content."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    names = tuple(s.strip() for s in rows[0])
    body = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(names):
            raise ValueError(f"{path}:{lineno}: expected {len(names)} fields, got {len(r)}")
        try:
            body.append([float(s) for s in r])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if len(body) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    return np.array(body), names


def write_case(case: GeneratedCase, csv_path, truth_path) -> None:
    write_csv(case.data, csv_path)
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(case.truth_json(), fh, indent=2)
        fh.write("\n")


def read_truth(path) -> tuple[Dag, dict[tuple[int, int], float]]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    dag = Dag.from_text(obj["dag"])
    coefs = {}
    for k, v in obj.get("coefficients", {}).items():
        j, i = k.split("->")
        coefs[(int(j) - 1, int(i) - 1)] = float(v)
    return dag, coefs
