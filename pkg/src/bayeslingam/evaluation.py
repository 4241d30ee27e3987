"""Losses for probabilistic structure predictions, calibration tables and the
synthetic benchmark grid."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import graph
from ._rng import substream
from .datagen import SyntheticConfig, generate_synthetic
from .density import DensitySpec
from .graph import Cpdag, Dag
from .posterior import PosteriorResult, exhaustive_posterior, greedy_search, make_result
from .score import ScoreOptions

CSV_HEADER = ("q", "N", "rep", "method", "binary", "class", "log", "quadratic", "runtime_s", "error")
CALIBRATION_HEADER = ("bin_lo", "bin_hi", "mean_pred", "freq", "count")
INF_TOKEN = "inf"

DEFAULT_Q = tuple(float(q) for q in np.exp(np.linspace(-1.0, 1.0, 9)))
DEFAULT_N = (10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000)
DEFAULT_REPS = 100


@dataclass
class Prediction:
    """A posterior over DAGs produced by some method.

    ``class_aware`` predictions pick their best guess at the class level
    (largest summed class probability) in :func:`class_loss`.
    """

    posterior: PosteriorResult
    method: str = ""
    class_aware: bool = False

    def __post_init__(self):
        p = self.posterior.probs
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("prediction probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class LossReport:
    binary: int
    class_: int
    logarithmic: float
    quadratic: float

    def csv_fields(self) -> list[str]:
        return [str(self.binary), str(self.class_), format_real(self.logarithmic), format_real(self.quadratic)]


def format_real(x: float) -> str:
    if math.isinf(x):
        return INF_TOKEN if x > 0 else "-" + INF_TOKEN
    return repr(float(x))


def _as_pred(pred) -> Prediction:
    return pred if isinstance(pred, Prediction) else Prediction(pred)


def binary_loss(pred, truth: Dag) -> int:
    return int(_as_pred(pred).posterior.best != truth)


def class_loss(pred, truth: Dag) -> int:
    pred = _as_pred(pred)
    if pred.class_aware:
        guess = pred.posterior.class_view(top=1)[0][0]
    else:
        guess = graph.to_cpdag(pred.posterior.best)
    return int(guess != graph.to_cpdag(truth))


def log_loss(pred, truth: Dag) -> float:
    """``-ln P(truth)``; ``inf`` when the truth has zero probability."""
    p = _as_pred(pred).posterior.prob_of(truth)
    return math.inf if p <= 0.0 else 0.0 - math.log(p)  # avoids -0.0


def quadratic_loss(pred, truth: Dag) -> float:
    """Squared distance between the probability vector and the truth's indicator.

    DAGs that were never evaluated count as probability 0, so the sum over
    all DAGs is ``sum p_k**2 - 2 P(truth) + 1``.
    """
    post = _as_pred(pred).posterior
    p_t = post.prob_of(truth)
    val = float(np.dot(post.probs, post.probs)) - 2.0 * p_t + 1.0
    return min(max(val, 0.0), 2.0)


def evaluate(pred, truth: Dag) -> LossReport:
    return LossReport(binary_loss(pred, truth), class_loss(pred, truth), log_loss(pred, truth),
                      quadratic_loss(pred, truth))


@lru_cache(maxsize=8)
def _class_members(n: int):
    dags = graph.enumerate_dags(n)
    keys = graph.class_keys(dags.masks)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    members = {}
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(first) + 1))
    for c, f in enumerate(first):
        text = graph.to_cpdag(dags[int(f)]).to_text()
        members[text] = order[bounds[c]:bounds[c + 1]]
    return members


def class_members(cpdag: Cpdag) -> list[Dag]:
    """All DAGs in the equivalence class of ``cpdag`` (``n <= 6``)."""
    dags = graph.enumerate_dags(cpdag.n)
    return [dags[int(i)] for i in _class_members(cpdag.n)[cpdag.to_text()]]


def class_spread(class_probs, n: int | None = None, method: str = "") -> Prediction:
    """Spread class-level probabilities equally over each class's member DAGs.

    ``class_probs`` is a mapping or an iterable of ``(Cpdag, prob)`` pairs.
    """
    items = list(class_probs.items()) if isinstance(class_probs, dict) else list(class_probs)
    if not items:
        raise ValueError("no class probabilities given")
    n = items[0][0].n if n is None else n
    total = sum(p for _, p in items)
    if any(p < 0 for _, p in items) or abs(total - 1.0) > 1e-9:
        raise ValueError("class probabilities must be nonnegative and sum to 1")
    dags = graph.enumerate_dags(n)
    table = _class_members(n)
    probs = np.zeros(len(dags))
    for cp, p in items:
        idx = table[cp.to_text()]
        probs[idx] += p / len(idx)
    keep = probs > 0
    with np.errstate(divide="ignore"):
        post = make_result(n, dags.masks[keep], np.log(probs[keep]), "exhaustive")
    return Prediction(post, method, class_aware=True)


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    mean_pred: float
    freq: float
    count: int

    def csv_fields(self) -> list[str]:
        return [repr(self.lo), repr(self.hi), repr(self.mean_pred), repr(self.freq), str(self.count)]


def calibration_from_vectors(runs, bins: int = 10) -> list[CalibrationBin]:
    """``runs`` holds ``(prob_vector, truth_index)`` pairs over a full DAG list."""
    if bins < 2:
        raise ValueError("need at least two bins")
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run")
    probs = np.concatenate([np.asarray(p, dtype=float) for p, _ in runs])
    hit = np.concatenate([np.arange(len(p)) == t for p, t in runs]).astype(float)
    idx = np.minimum((probs * bins).astype(np.int64), bins - 1)
    count = np.bincount(idx, minlength=bins)
    psum = np.bincount(idx, weights=probs, minlength=bins)
    hsum = np.bincount(idx, weights=hit, minlength=bins)
    out = []
    for b in range(bins):
        c = int(count[b])
        out.append(CalibrationBin(b / bins, (b + 1) / bins, float(psum[b] / c) if c else math.nan,
                                  float(hsum[b] / c) if c else math.nan, c))
    return out


def calibration_table(runs, bins: int = 10) -> list[CalibrationBin]:
    """Bin every (DAG, run) probability; report mean prediction and hit rate.

    ``runs`` is a list of ``(Prediction, truth)`` pairs, all on ``n <= 6``.
    """
    vecs = []
    for pred, truth in runs:
        post = _as_pred(pred).posterior
        vecs.append((post.prob_vector(), graph.enumerate_dags(truth.n).index(truth)))
    return calibration_from_vectors(vecs, bins)


def write_calibration(table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CALIBRATION_HEADER)
        for b in table:
            w.writerow(b.csv_fields())


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class MethodConfig:
    name: str
    spec: DensitySpec = field(default_factory=lambda: DensitySpec("gl"))
    opts: ScoreOptions = field(default_factory=ScoreOptions)
    search: str = "exhaustive"


DEFAULT_METHODS = (MethodConfig("gl-laplace"),)


def standard_method(name: str, base: ScoreOptions | None = None, spec: DensitySpec | None = None,
                    search: str = "exhaustive") -> MethodConfig:
    """``gl-laplace``, ``gl-mcmc``, ``mog-laplace`` (and ``mog-mcmc``, rejected by the scorer)."""
    try:
        fam, how = name.split("-")
    except ValueError:
        raise ValueError(f"method name must look like 'gl-laplace', got {name!r}") from None
    if fam not in ("gl", "mog") or how not in ("laplace", "mcmc"):
        raise ValueError(f"unknown method {name!r}")
    base = base or ScoreOptions()
    if spec is None or spec.family != fam:
        spec = DensitySpec(fam) if spec is None else replace(spec, family=fam)
    return MethodConfig(name, spec, replace(base, method=how), search)


@dataclass(frozen=True)
class BenchmarkRow:
    q: float
    N: int
    rep: int
    method: str
    losses: LossReport | None
    runtime_s: float
    error: str = ""

    def csv_fields(self) -> list[str]:
        loss = self.losses.csv_fields() if self.losses else ["", "", "", ""]
        return [repr(float(self.q)), str(self.N), str(self.rep), self.method, *loss,
                repr(float(self.runtime_s)), self.error]


@dataclass
class BenchmarkResult:
    rows: list[BenchmarkRow]
    calibration_runs: list[tuple[np.ndarray, int]]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow(r.csv_fields())


def case_seed(seed: int, iq: int, iN: int, rep: int) -> int:
    return int(substream(seed, "case", iq, iN, rep).integers(2**63))


def run_method(method: MethodConfig, data, seed: int) -> PosteriorResult:
    opts = replace(method.opts, seed=seed)
    if method.search == "greedy":
        return greedy_search(data, method.spec, opts)
    return exhaustive_posterior(data, method.spec, opts)


def _run_case(args):
    q, N, rep, n, cseed, methods, timing = args
    case = generate_synthetic(SyntheticConfig(n=n, q=q, N=N, seed=cseed))
    truth_idx = graph.enumerate_dags(n).index(case.true_dag) if n <= graph.MAX_ENUMERATION_NODES else -1
    rows, calib = [], []
    for m in methods:
        t0 = time.perf_counter()
        try:
            post = run_method(m, case.data, cseed)
            losses = evaluate(Prediction(post, m.name), case.true_dag)
            err = ""
            if truth_idx >= 0:
                calib.append((post.prob_vector(), truth_idx))
        except Exception as exc:  # recorded per row; the grid keeps going
            losses, err = None, f"{type(exc).__name__}: {exc}".replace("\n", " ")
        dt = time.perf_counter() - t0 if timing else 0.0
        rows.append(BenchmarkRow(q, N, rep, m.name, losses, dt, err))
    return rows, calib


def benchmark_grid(q_values=DEFAULT_Q, N_values=DEFAULT_N, reps: int = DEFAULT_REPS,
                   methods=DEFAULT_METHODS, seed: int = 0, n: int = 2, jobs: int = 1,
                   timing: bool = True) -> BenchmarkResult:
    """Run every method on ``reps`` synthetic cases per (q, N) cell.

    Case seeds depend only on ``(seed, cell, rep)``; rows come back in grid
    order whatever ``jobs`` is. ``timing=False`` writes 0 runtimes so reruns
    are byte-identical.
    """
    q_values, N_values, methods = list(q_values), list(N_values), list(methods)
    if reps < 1 or not q_values or not N_values or not methods:
        raise ValueError("benchmark grid needs reps >= 1 and nonempty q, N and method lists")
    tasks = [(float(q), int(N), rep, n, case_seed(seed, iq, iN, rep), methods, timing)
             for iq, q in enumerate(q_values) for iN, N in enumerate(N_values) for rep in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_case, tasks))
    else:
        results = [_run_case(t) for t in tasks]
    rows, calib = [], []
    for r, c in results:
        rows.extend(r)
        calib.extend(c)
    return BenchmarkResult(rows, calib)
