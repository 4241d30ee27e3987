"""Command-line interface: ``bayeslingam {score,posterior,simulate,resimulate,benchmark}``.

Exit codes: 0 success, 1 computation error, 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from dataclasses import dataclass, field

from . import datagen, evaluation, graph
from .density import DensitySpec
from .graph import Dag
from .posterior import build_cache, exhaustive_posterior, greedy_search
from .score import ScoreOptions, standardize

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config, paths or input files (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration

_PRIORS = ("alpha_prior", "log_beta_prior", "gamma_prior", "mu_prior", "log_sigma_prior")
_SCORE_KEYS = {f.name: f.type for f in dataclasses.fields(ScoreOptions) if f.name != "seed"}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides the data; built from a ``key = value``
    file and command-line overrides."""

    density: DensitySpec = field(default_factory=DensitySpec)
    score: ScoreOptions = field(default_factory=ScoreOptions)
    search: str = "exhaustive"
    seed: int = 0
    jobs: int = 1
    top_dags: int = 1000
    top_classes: int = 1000
    structure_prior: str = "uniform"

    def __post_init__(self):
        if self.search not in ("exhaustive", "greedy"):
            raise UsageError(f"search must be 'exhaustive' or 'greedy', got {self.search!r}")
        if self.structure_prior != "uniform":
            raise UsageError("only the uniform structure prior is implemented")
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.top_dags < 0 or self.top_classes < 0:
            raise UsageError("top_dags and top_classes must be >= 0 (0 = all)")

    def check_n(self, n: int) -> None:
        if self.search == "exhaustive" and n > graph.MAX_ENUMERATION_NODES:
            raise UsageError(f"exhaustive mode supports at most {graph.MAX_ENUMERATION_NODES} variables, "
                             f"data has {n}; use search = greedy")


def _convert(key, raw, typ):
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None


def read_config_file(path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from None
    return dict(cp["run"])


def build_config(values: dict[str, object]) -> RunConfig:
    """Typed :class:`RunConfig` from flat string-or-typed values."""
    values = dict(values)
    dens_kw, score_kw, run_kw = {}, {}, {}
    for key, raw in values.items():
        if key == "family":
            dens_kw["family"] = _convert(key, raw, str)
        elif key == "mog_components":
            dens_kw[key] = _convert(key, raw, int)
        elif key.endswith(("_mean", "_sd")) and key.rsplit("_", 1)[0] in _PRIORS:
            dens_kw[key] = _convert(key, raw, float)
        elif key in _SCORE_KEYS:
            score_kw[key] = _convert(key, raw, _SCORE_KEYS[key])
        elif key in ("search", "structure_prior"):
            run_kw[key] = _convert(key, raw, str)
        elif key in ("seed", "jobs", "top_dags", "top_classes"):
            run_kw[key] = _convert(key, raw, int)
        else:
            raise UsageError(f"unknown config key {key!r}")
    for prior in _PRIORS:
        m, s = dens_kw.pop(prior + "_mean", None), dens_kw.pop(prior + "_sd", None)
        if m is not None or s is not None:
            default = getattr(DensitySpec(), prior)
            dens_kw[prior] = (default[0] if m is None else m, default[1] if s is None else s)
    try:
        density = DensitySpec(**dens_kw)
        score = ScoreOptions(seed=int(run_kw.get("seed", 0)), **score_kw)
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return RunConfig(density=density, score=score, **run_kw)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Config file values, then ``overrides`` (flags win; ``None`` values skipped)."""
    values = read_config_file(path) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


# ---------------------------------------------------------------------------
# helpers


def _load_data(path):
    try:
        X, names = datagen.read_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        return standardize(X, names)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _parse_dag(text, n=None):
    try:
        dag = Dag.from_text(text)
    except ValueError as exc:
        raise UsageError(f"bad --dag {text!r}: {exc}") from None
    if n is not None and dag.n != n:
        raise UsageError(f"--dag has {dag.n} nodes, data has {n} columns")
    return dag


def _open_out(path):
    if path in (None, "-"):
        return _Stdout()
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()


def _write_json(obj, path):
    with _open_out(path) as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _truth_path(out, truth):
    if truth:
        return truth
    stem = out[:-4] if out.endswith(".csv") else out
    return stem + ".truth.json"


def _run_config(args) -> RunConfig:
    overrides = {"seed": args.seed, "jobs": args.jobs}
    if getattr(args, "search", None):
        overrides["search"] = args.search
    if getattr(args, "method", None):
        overrides["method"] = args.method
    if getattr(args, "family", None):
        overrides["family"] = args.family
    return load_config(args.config, overrides)


# ---------------------------------------------------------------------------
# commands


def cmd_score(args) -> int:
    cfg = _run_config(args)
    data = _load_data(args.data)
    cfg.check_n(data.n)
    cache = build_cache(data, cfg.density, cfg.score, "all", cfg.jobs)
    out = {
        "names": list(data.names),
        "fingerprint": cache.fingerprint,
        "n_unconverged": cache.n_unconverged,
        "families": [s.to_json() for _, s in cache.items()],
    }
    _write_json(out, args.out)
    return EXIT_OK


def cmd_posterior(args) -> int:
    cfg = _run_config(args)
    data = _load_data(args.data)
    cfg.check_n(data.n)
    if cfg.search == "exhaustive":
        res = exhaustive_posterior(data, cfg.density, cfg.score, jobs=cfg.jobs)
    else:
        res = greedy_search(data, cfg.density, cfg.score, jobs=cfg.jobs)
    out = res.to_json(top=cfg.top_dags or None, top_classes=cfg.top_classes or None)
    out["names"] = list(data.names)
    out["n_unconverged_families"] = res.diagnostics["n_unconverged_families"]
    if res.mode == "greedy":
        out["path"] = [{"dag": d, "log_score": s} for d, s in res.diagnostics["path"]]
    _write_json(out, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not args.out or args.out == "-":
        raise UsageError("simulate needs --out PATH for the CSV file")
    dag = _parse_dag(args.dag, args.n) if args.dag else None
    try:
        cfg = datagen.SyntheticConfig(n=args.n, q=args.q, N=args.N, seed=args.seed or 0, dag=dag,
                                      coef_range=(args.coef_min, args.coef_max), min_abs_coef=args.min_abs_coef)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    case = datagen.generate_synthetic(cfg)
    _write_case(case, args.out, _truth_path(args.out, args.truth))
    return EXIT_OK


def cmd_resimulate(args) -> int:
    if not args.out or args.out == "-":
        raise UsageError("resimulate needs --out PATH for the CSV file")
    data = _load_data(args.data)
    dag = _parse_dag(args.dag, data.n)
    if args.N_out is not None and not 2 <= args.N_out <= data.N:
        raise UsageError(f"--N-out must be between 2 and {data.N}")
    case = datagen.resimulate(data, dag, args.N_out, args.seed or 0)
    _write_case(case, args.out, _truth_path(args.out, args.truth))
    return EXIT_OK


def _write_case(case, csv_path, truth_path):
    try:
        datagen.write_case(case, csv_path, truth_path)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from None


def cmd_benchmark(args) -> int:
    cfg = _run_config(args)
    try:
        methods = [evaluation.standard_method(m.strip(), cfg.score, cfg.density, cfg.search)
                   for m in args.methods.split(",") if m.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.n > graph.MAX_ENUMERATION_NODES and cfg.search == "exhaustive":
        raise UsageError(f"exhaustive mode supports at most {graph.MAX_ENUMERATION_NODES} variables")
    q_values = args.q if args.q else evaluation.DEFAULT_Q
    N_values = args.N if args.N else evaluation.DEFAULT_N
    if any(q <= 0 for q in q_values) or any(N < 2 for N in N_values) or args.reps < 1:
        raise UsageError("need q > 0, N >= 2 and reps >= 1")
    res = evaluation.benchmark_grid(q_values, N_values, args.reps, methods, cfg.seed, n=args.n,
                                    jobs=cfg.jobs, timing=not args.no_timing)
    try:
        res.write_csv(args.out)
        if args.calibration:
            table = evaluation.calibration_from_vectors(res.calibration_runs, args.bins)
            evaluation.write_calibration(table, args.calibration)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from None
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="key = value config file")
    shared.add_argument("--seed", type=_u64, help="global seed (default 0)")
    shared.add_argument("--jobs", type=_positive_int, help="worker processes (default 1)")
    shared.add_argument("--out", help="output path ('-' or omitted: stdout where allowed)")

    p = argparse.ArgumentParser(prog="bayeslingam", description="Bayesian linear non-Gaussian causal discovery.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("score", parents=[shared], help="score every family, write JSON diagnostics")
    s.add_argument("data")
    s.add_argument("--method", choices=["laplace", "mcmc"])
    s.add_argument("--family", choices=["gl", "mog"])
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("posterior", parents=[shared], help="posterior over DAGs as JSON")
    s.add_argument("data")
    s.add_argument("--search", choices=["exhaustive", "greedy"])
    s.add_argument("--method", choices=["laplace", "mcmc"])
    s.add_argument("--family", choices=["gl", "mog"])
    s.set_defaults(func=cmd_posterior)

    s = sub.add_parser("simulate", parents=[shared], help="synthetic dataset + truth JSON")
    s.add_argument("--n", type=_positive_int, default=2)
    s.add_argument("--q", type=float, default=1.0)
    s.add_argument("--N", type=_positive_int, default=1000)
    s.add_argument("--dag", help='fixed truth, e.g. "2;1->2"')
    s.add_argument("--coef-min", type=float, default=-3.0)
    s.add_argument("--coef-max", type=float, default=3.0)
    s.add_argument("--min-abs-coef", type=float, default=0.0)
    s.add_argument("--truth", help="truth JSON path (default: <out>.truth.json)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("resimulate", parents=[shared], help="refit a DAG and regenerate with shuffled residuals")
    s.add_argument("data")
    s.add_argument("--dag", required=True)
    s.add_argument("--N-out", dest="N_out", type=_positive_int)
    s.add_argument("--truth", help="truth JSON path (default: <out>.truth.json)")
    s.set_defaults(func=cmd_resimulate)

    s = sub.add_parser("benchmark", parents=[shared], help="synthetic loss grid as CSV")
    s.add_argument("--q", type=float, nargs="+", help="q values (default: 9 log-spaced in [1/e, e])")
    s.add_argument("--N", type=int, nargs="+", help="sample sizes (default: 10 ... 10000)")
    s.add_argument("--reps", type=_positive_int, default=evaluation.DEFAULT_REPS)
    s.add_argument("--n", type=_positive_int, default=2)
    s.add_argument("--methods", default="gl-laplace", help="comma list of gl-laplace, gl-mcmc, mog-laplace")
    s.add_argument("--search", choices=["exhaustive", "greedy"])
    s.add_argument("--calibration", help="also write a calibration CSV here")
    s.add_argument("--bins", type=int, default=10)
    s.add_argument("--no-timing", action="store_true", help="write runtime 0 so reruns are byte-identical")
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    if getattr(args, "bins", 10) < 2:
        parser.error("--bins must be >= 2")
    if args.command == "benchmark" and not args.out:
        parser.error("benchmark needs --out PATH")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bayeslingam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # computation failure
        print(f"bayeslingam: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
