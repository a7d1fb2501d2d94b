"""Command-line experiment runner.

Subcommands
-----------
``reproduce <ex1|ex2|ex3|ex4>``
    Run the reference algorithm on a benchmark experiment and write CSV data
    and a JSON summary.
``separate --config FILE [--jobs K]``
    Run one or more fully specified experiments from a JSON config.
``validate [--paper-table] [--list]``
    Run the oracle self-checks.

Exit status: 0 success, 1 usage / IO / configuration error, 2 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .checks import CHECKS, run_checks
from .errors import BSSError, DivergenceError
from .estimators import Algorithm, EstimatorConfig, HyperParams, RunResult, run_estimator
from .metrics import amari_index, best_match, histogram, phase_scatter
from .model import (
    DEFAULT_SAMPLE_PERIOD,
    MixingMatrix,
    NoiseSpec,
    mix,
    read_block_csv,
    write_block_csv,
    write_timeseries_csv,
)
from .priors import SpatialPriorSpec, TemporalPriorSpec, law_from_dict, prior_from_dict
from .signals import ExampleId, ExampleSpec, example_mixing, generate_sources

log = logging.getLogger("bayesbss")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2
EMIT_KINDS = ("timeseries", "scatter", "histogram", "summary")
HIST_BINS = 50
DEFAULT_OUT = "bss_out"


class UsageError(Exception):
    """Bad command line or configuration (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- experiment description ------------------------------------------------------

@dataclass
class ExperimentConfig:
    """One experiment: data origin, estimator, noise, outputs."""

    estimator: EstimatorConfig
    output_dir: str
    example_id: Optional[str] = None
    sources_path: Optional[str] = None
    mixing_path: Optional[str] = None
    observations_path: Optional[str] = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    emit: tuple = EMIT_KINDS
    name: str = "experiment"
    record_wall_time: bool = True

    def __post_init__(self):
        paths = any(p is not None for p in (self.sources_path, self.mixing_path, self.observations_path))
        if (self.example_id is None) == (not paths):
            raise UsageError("specify exactly one data origin: an example id or data file paths")
        if paths and self.observations_path is None and (self.sources_path is None or self.mixing_path is None):
            raise UsageError("file input needs 'observations', or both 'sources' and 'mixing'")
        bad = set(self.emit) - set(EMIT_KINDS)
        if bad:
            raise UsageError(f"unknown emit kinds {sorted(bad)}; valid: {', '.join(EMIT_KINDS)}")


_ESTIMATOR_KEYS = {
    "algorithm", "lambda", "lam", "mu", "sigma_eps", "gamma", "alpha_step", "beta_step", "mmap_step",
    "white_alpha", "white_beta", "max_iters", "tol", "init_seed", "n_sources", "init_A", "source_law",
    "mixing_prior", "spatial", "temporal", "g", "g_scale", "whiten", "per_sample", "temporal_method",
    "backtracking", "natural_gradient",
}
_EXPERIMENT_KEYS = {"name", "example", "sources", "mixing", "observations", "estimator", "noise", "output_dir", "emit"}


def estimator_from_dict(d: dict) -> EstimatorConfig:
    d = dict(d)
    unknown = set(d) - _ESTIMATOR_KEYS
    if unknown:
        raise UsageError(f"unknown estimator keys {sorted(unknown)}; valid: {', '.join(sorted(_ESTIMATOR_KEYS))}")
    hyper_keys = ("mu", "sigma_eps", "gamma", "alpha_step", "beta_step", "mmap_step", "white_alpha", "white_beta")
    hyper = {k: float(d.pop(k)) for k in hyper_keys if k in d}
    for key in ("lambda", "lam"):
        if key in d:
            hyper["lam"] = float(d.pop(key))
    kwargs = {}
    if "source_law" in d:
        kwargs["source_law"] = law_from_dict(d.pop("source_law"))
    if "mixing_prior" in d:
        kwargs["mixing_prior"] = prior_from_dict(d.pop("mixing_prior"))
    if "spatial" in d:
        kwargs["spatial"] = SpatialPriorSpec(**d.pop("spatial"))
    if "temporal" in d:
        t = d.pop("temporal")
        kwargs["temporal"] = TemporalPriorSpec(t["alphas"] if isinstance(t, dict) else t)
    if "init_A" in d:
        kwargs["init_A"] = MixingMatrix(d.pop("init_A"))
    kwargs.update(d)
    return EstimatorConfig(hyper=HyperParams(**hyper), **kwargs)


def experiment_from_dict(d: dict, base_dir: str, default_out: str) -> ExperimentConfig:
    unknown = set(d) - _EXPERIMENT_KEYS
    if unknown:
        raise UsageError(f"unknown experiment keys {sorted(unknown)}; valid: {', '.join(sorted(_EXPERIMENT_KEYS))}")

    def path(key):
        p = d.get(key)
        return None if p is None else os.path.join(base_dir, p)

    noise = d.get("noise", {})
    return ExperimentConfig(
        estimator=estimator_from_dict(d.get("estimator", {})),
        output_dir=d.get("output_dir", default_out),
        example_id=d.get("example"),
        sources_path=path("sources"),
        mixing_path=path("mixing"),
        observations_path=path("observations"),
        noise=NoiseSpec(float(noise.get("sigma_eps", 0.0)), int(noise.get("seed", 0))),
        emit=tuple(d.get("emit", EMIT_KINDS)),
        name=str(d.get("name", "experiment")),
    )


# --- pipeline ----------------------------------------------------------------------

def _load_data(exp: ExperimentConfig):
    """Return ``(S_true or None, A_true or None, X, times)``."""
    if exp.example_id is not None:
        spec = ExampleSpec(exp.example_id)
        S = generate_sources(spec)
        A = example_mixing(spec.example_id)
        X = mix(A, S, exp.noise)
        return S.data, A.data, X.data, spec.grid()
    S = read_block_csv(exp.sources_path) if exp.sources_path else None
    if exp.observations_path is not None:
        # a mixing file next to observations is ground truth for evaluation only
        X = read_block_csv(exp.observations_path)
        A = read_block_csv(exp.mixing_path) if exp.mixing_path else None
    else:
        A = read_block_csv(exp.mixing_path)
        X = mix(A, S, exp.noise).data
    if S is not None and S.shape[1] != X.shape[1]:
        raise UsageError(f"sources have {S.shape[1]} samples but observations have {X.shape[1]}")
    return S, A, X, np.arange(X.shape[1]) * DEFAULT_SAMPLE_PERIOD


def _write_signal_group(out, label, data, times, emit):
    n = data.shape[0]
    if "timeseries" in emit:
        write_timeseries_csv(os.path.join(out, f"{label}.csv"), data, times)
    if "scatter" in emit:
        for i in range(n):
            for j in range(i + 1, n):
                pairs = phase_scatter(data, i, j)
                _write_table(os.path.join(out, f"scatter_{label}_{i + 1}_{j + 1}.csv"), ("x", "y"), pairs)
    if "histogram" in emit:
        for i in range(n):
            counts, edges = histogram(data[i], HIST_BINS)
            _write_table(os.path.join(out, f"hist_{label}_{i + 1}.csv"), ("bin_left", "count"),
                         zip(edges[:-1], counts))


def _write_table(path, header, rows):
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for a, b in rows:
            b = int(b) if isinstance(b, (int, np.integer)) else repr(float(b))
            fh.write(f"{float(a)!r},{b}\n")


def _write_summary(path, summary):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _evaluate(result: RunResult, S_true, A_true, X) -> dict:
    out = {"residual": result.residual(X)}
    if S_true is None:
        out.update(correlations=None, permutation=None, signs=None, amari=None)
        return out
    amari = None
    if A_true is not None and result.B_hat is not None:
        G = result.B_hat.data @ A_true
        # B_hat A is n x n; it can only be a scaled permutation when m >= n
        if G.shape[0] == G.shape[1] and A_true.shape[0] >= A_true.shape[1]:
            amari = amari_index(G)
    rep = best_match(S_true, result.S_hat, amari)
    out.update(rep.to_dict())
    return out


def run_experiment(exp: ExperimentConfig) -> int:
    """Run one experiment end to end; returns the exit status."""
    os.makedirs(exp.output_dir, exist_ok=True)
    summary = {
        "example": exp.example_id or exp.name,
        "algorithm": exp.estimator.algorithm.value,
        "hyper": exp.estimator.hyper.to_dict(),
        "seed": exp.estimator.init_seed,
        "noise": {"sigma_eps": exp.noise.sigma_eps, "seed": exp.noise.seed},
    }
    t0 = time.perf_counter()
    S_true, A_true, X, times = _load_data(exp)
    config = exp.estimator
    if config.init_A is None and config.n_sources is None:
        n = S_true.shape[0] if S_true is not None else X.shape[0]
        config = config.with_(n_sources=n)
    status = EXIT_OK
    try:
        result = run_estimator(X, config)
    except DivergenceError as exc:
        log.error("divergence: %s", exc)
        summary.update(status="diverged", message=str(exc), iters=len(exc.trace), converged=False,
                       trace=[float(v) for v in exc.trace], correlations=None, amari=None, residual=None)
        status = EXIT_DIVERGED
        result = None
    if result is not None:
        summary.update(status="ok", iters=result.iters_run, converged=result.converged,
                       trace=list(result.criterion_trace))
        summary.update(_evaluate(result, S_true, A_true, X))
    if exp.record_wall_time:
        summary["wall_time"] = time.perf_counter() - t0
    if S_true is not None:
        _write_signal_group(exp.output_dir, "sources", S_true, times, exp.emit)
    _write_signal_group(exp.output_dir, "mixed", X, times, exp.emit)
    if result is not None:
        _write_signal_group(exp.output_dir, "separated", result.S_hat.data, times, exp.emit)
        if "timeseries" in exp.emit:
            write_block_csv(os.path.join(exp.output_dir, "mixing_hat.csv"), result.A_hat.data)
    if A_true is not None and "timeseries" in exp.emit:
        write_block_csv(os.path.join(exp.output_dir, "mixing.csv"), A_true)
    if "summary" in exp.emit or status != EXIT_OK:
        _write_summary(os.path.join(exp.output_dir, "summary.json"), summary)
    return status


# --- subcommands ---------------------------------------------------------------------

def _default_out(*parts):
    return os.path.join(os.environ.get("BSS_OUT", DEFAULT_OUT), *parts)


def cmd_reproduce(args) -> int:
    example = ExampleId(args.example)
    hyper = HyperParams(lam=args.lam, mu=args.mu)
    config = EstimatorConfig(Algorithm.USED_ALG, hyper, max_iters=args.iters, init_seed=args.seed)
    exp = ExperimentConfig(
        estimator=config,
        output_dir=args.out or _default_out(example.value),
        example_id=example.value,
        noise=NoiseSpec(args.sigma_eps, args.seed),
        record_wall_time=False,  # keeps the output byte-identical across runs
    )
    status = run_experiment(exp)
    print(f"wrote {exp.output_dir}")
    return status


def cmd_separate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
    base_dir = os.path.dirname(os.path.abspath(args.config))
    if isinstance(raw, dict) and "experiments" in raw:
        items = raw["experiments"]
        if not isinstance(items, list) or not items:
            raise UsageError("'experiments' must be a non-empty list")
        exps = [experiment_from_dict(d, base_dir, _default_out(d.get("name", f"exp{i + 1}")))
                for i, d in enumerate(items)]
        names = [e.output_dir for e in exps]
        if len(set(names)) != len(names):
            raise UsageError("batch experiments must write to distinct output directories")
    elif isinstance(raw, dict):
        exps = [experiment_from_dict(raw, base_dir, _default_out(raw.get("name", "experiment")))]
    else:
        raise UsageError("config must be a JSON object")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")

    def guarded(exp):
        try:
            return run_experiment(exp)
        except (BSSError, UsageError, OSError, ValueError, KeyError, TypeError) as exc:
            log.error("%s: %s", exp.name, exc)
            return EXIT_USAGE

    if args.jobs == 1 or len(exps) == 1:
        codes = [guarded(e) for e in exps]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(guarded, exps))
    for exp, code in zip(exps, codes):
        print(f"{exp.name}: {'ok' if code == 0 else 'failed'} -> {exp.output_dir}")
    if EXIT_USAGE in codes:
        return EXIT_USAGE
    return max(codes)


def cmd_validate(args) -> int:
    if args.list:
        for name, fn in CHECKS.items():
            print(f"{name}: {fn.__doc__}")
        return EXIT_OK
    results = run_checks(paper_table=args.paper_table)
    for name, passed, detail, secs in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail} [{secs:.2f}s]")
    failed = sum(not r[1] for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_USAGE


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bss", description="Bayesian blind source separation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    rep = sub.add_parser("reproduce", help="run a benchmark experiment with the reference algorithm")
    rep.add_argument("example", choices=[e.value for e in ExampleId])
    rep.add_argument("--iters", type=_positive_int, default=100, help="iteration count (max_iters >= 1)")
    rep.add_argument("--lambda", dest="lam", type=float, default=0.1)
    rep.add_argument("--mu", type=float, default=0.1)
    rep.add_argument("--sigma-eps", type=float, default=0.0, help="std of added sensor noise")
    rep.add_argument("--seed", type=int, default=0, help="seed for noise and initialization")
    rep.add_argument("--out", help="output directory (default $BSS_OUT/<example> or bss_out/<example>)")
    rep.set_defaults(func=cmd_reproduce)

    sep = sub.add_parser("separate", help="run experiments described in a JSON config")
    sep.add_argument("--config", required=True)
    sep.add_argument("--jobs", type=int, default=1, help="run batch experiments concurrently")
    sep.set_defaults(func=cmd_separate)

    val = sub.add_parser("validate", help="run the oracle self-checks")
    val.add_argument("--paper-table", action="store_true", help="use the tabulated score variants")
    val.add_argument("--list", action="store_true", help="list checks without running them")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bss: error: {exc}", file=sys.stderr)
    except (BSSError, ValueError) as exc:
        print(f"bss: error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"bss: error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
