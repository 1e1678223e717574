"""Command-line front end.

Subcommands: ``model`` (emit built-in rate matrices), ``sample`` (draw
endpoint-conditioned paths, with cost-model auto-selection), ``predict``
(cost prediction report), ``bench`` (timing grid plus fitted cost
coefficients), ``validate`` (statistical cross-sampler checks).

Reports go to standard output; logs, summaries, and the auto-selection cost
JSON go to standard error. Exit codes are stable API: 0 ok, 2 usage,
3 rejection budget exhausted, 4 unreachable endpoint, 5 complex spectrum,
6 insufficient variation, 7 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys

import numpy as np

from . import io as fmt
from .complexity import (
    CostCoefficients,
    calibrate_coefficients,
    measure_runs,
    predict_and_select,
)
from .core import EndpointProblem, RateMatrix, decompose_auto, stationary_distribution
from .errors import (
    ComplexSpectrum,
    CtmcError,
    InsufficientVariation,
    RejectionBudgetExceeded,
    UnreachableEndpoint,
)
from .models import (
    GyParams,
    HkyCpgParams,
    HkyParams,
    _load_data,
    build_gy,
    build_hky,
    build_hky_cpg,
    random_reversible,
    random_sparse_codon,
)
from .randomstream import RandomStream
from .samplers import RejectionConfig, sample_batch
from .validation import run_validation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REJECTION_BUDGET = 3
EXIT_UNREACHABLE = 4
EXIT_COMPLEX_SPECTRUM = 5
EXIT_INSUFFICIENT_VARIATION = 6
EXIT_VALIDATION_FAILURE = 7

MODEL_NAMES = ("hky", "gy", "hky-cpg", "random-reversible", "random-sparse-codon")


class UsageError(Exception):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _add_model_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--kappa", type=float, default=2.0, help="transition/transversion ratio")
    parser.add_argument("--freqs", type=_float_list, default=(0.25, 0.25, 0.25, 0.25),
                        help="base frequencies A,G,C,T (hky)")
    parser.add_argument("--omega", type=float, default=0.01, help="nonsynonymous multiplier (gy)")
    parser.add_argument("--codon-freqs", help="JSON file mapping codon to frequency (gy)")
    parser.add_argument("--nu", type=_float_list, default=(0.3, 0.3, 0.2, 0.2),
                        help="unnormalized base rates A,G,C,T (hky-cpg)")
    parser.add_argument("--gamma", type=float, default=20.0, help="CpG rate multiplier (hky-cpg)")
    parser.add_argument("--n", type=int, default=5, help="state count (random-reversible)")
    parser.add_argument("--calibrate", action="store_true",
                        help="rescale to one expected state change per unit time")
    parser.add_argument("--no-calibrate", action="store_true",
                        help="leave hky/gy matrices unscaled")


def _add_source_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--matrix", help="rate matrix file (CSV or JSON)")
    parser.add_argument("--model", choices=MODEL_NAMES, help="built-in model instead of a file")
    _add_model_flags(parser)


def _build_model(name: str, args, seed) -> RateMatrix:
    if name == "hky":
        calibrate = not args.no_calibrate
        q, _ = build_hky(HkyParams(kappa=args.kappa, base_freqs=args.freqs, calibrate=calibrate))
    elif name == "gy":
        calibrate = not args.no_calibrate
        if args.codon_freqs:
            from .models import SENSE_CODONS

            with open(args.codon_freqs) as fh:
                table = json.load(fh)
            freqs = tuple(float(table[c]) for c in SENSE_CODONS)
            q, _ = build_gy(GyParams(kappa=args.kappa, omega=args.omega,
                                     codon_freqs=freqs, calibrate=calibrate))
        else:
            q, _ = build_gy(GyParams(kappa=args.kappa, omega=args.omega, calibrate=calibrate))
    elif name == "hky-cpg":
        q, _ = build_hky_cpg(HkyCpgParams(kappa=args.kappa, nu=args.nu, gamma=args.gamma,
                                          calibrate=args.calibrate))
    elif name == "random-reversible":
        q, _ = random_reversible(args.n, RandomStream(seed))
    elif name == "random-sparse-codon":
        q, _ = random_sparse_codon(RandomStream(seed))
    else:
        raise UsageError(f"unknown model {name!r}")
    return q


def _load_matrix(args) -> RateMatrix:
    if args.matrix and args.model:
        raise UsageError("give either --matrix or --model, not both")
    if args.matrix:
        with open(args.matrix) as fh:
            return fmt.parse_matrix(fh.read())
    if args.model:
        return _build_model(args.model, args, getattr(args, "seed", 0))
    raise UsageError("a rate matrix is required (--matrix or --model)")


def _load_coefficients(spec: str, q: RateMatrix) -> CostCoefficients:
    """Bundled coefficient sets by name, auto-chosen by size, or a JSON file."""
    if spec == "auto":
        spec = "sparse61" if q.n == 61 else "dense4"
    if spec in ("dense4", "sparse61"):
        return CostCoefficients.from_dict(_load_data(f"coeffs_{spec}.json"))
    with open(spec) as fh:
        return CostCoefficients.from_dict(json.load(fh))


def _write_output(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_model(args) -> int:
    q = _build_model(args.name, args, args.seed)
    _write_output(fmt.emit_matrix(q, args.format) + ("" if args.format == "csv" else "\n"), args.output)
    return EXIT_OK


def _resolve_problem(args, q: RateMatrix) -> EndpointProblem:
    return EndpointProblem(q, args.a, args.b, args.T)


def cmd_sample(args) -> int:
    q = _load_matrix(args)
    problem = _resolve_problem(args, q)
    rng = RandomStream(args.seed)
    sampler = args.sampler
    if sampler == "auto":
        coeffs = _load_coefficients(args.coeffs, q)
        prediction = predict_and_select(coeffs, problem, exact=not args.large_t)
        print(prediction.to_json(), file=sys.stderr)
        sampler = prediction.selected
    cfg = RejectionConfig(max_attempts=args.max_attempts)
    result = sample_batch(sampler, problem, args.paths, rng, cfg=cfg)
    for index, error in result.failures:
        print(f"path {index} failed: {error}", file=sys.stderr)
    paths = result.paths
    _write_output(fmt.emit_paths(paths, q.states, args.format), args.output)
    attempts = sum(r.attempts for _, r in result.reports)
    mean_jumps = float(np.mean([p.n_jumps for p in paths])) if paths else float("nan")
    print(
        f"paths={len(paths)} attempts={attempts} mean_jumps={mean_jumps:.4g} sampler={sampler}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    q = _load_matrix(args)
    problem = _resolve_problem(args, q)
    coeffs = _load_coefficients(args.coeffs, q)
    prediction = predict_and_select(coeffs, problem, exact=(args.mode == "exact"))
    sys.stdout.write(prediction.to_json() + "\n")
    return EXIT_OK


def _parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for chunk in text.split(","):
        if ":" not in chunk:
            raise UsageError(f"endpoint pair {chunk!r} must look like a:b")
        a, b = chunk.split(":", 1)
        pairs.append((a.strip(), b.strip()))
    return pairs


def cmd_bench(args) -> int:
    q = _load_matrix(args)
    horizons = [float(t) for t in args.horizons.split(",") if t.strip()]
    if not horizons:
        raise UsageError("at least one horizon is required")
    pairs = _parse_pairs(args.pairs)
    samplers = [s.strip() for s in args.samplers.split(",") if s.strip()]
    problems = [EndpointProblem(q, a, b, T) for T in horizons for a, b in pairs]
    rng = RandomStream(args.seed)
    raw_buf = _io.StringIO()
    raw = csv.writer(raw_buf, lineterminator="\n")
    raw.writerow(["sampler", "a", "b", "T", "rep", "init_time", "sample_time",
                  "attempts", "recursion_steps"])
    coeff_buf = _io.StringIO()
    coeff = csv.writer(coeff_buf, lineterminator="\n")
    coeff.writerow(["sampler", "n", "alpha", "beta", "alpha_residual", "beta_residual"])
    for sampler in samplers:
        measurements = measure_runs(sampler, problems, args.reps, rng)
        for m in measurements:
            p = problems[m.problem_index]
            raw.writerow([
                sampler, q.states.labels[p.a], q.states.labels[p.b], repr(p.horizon), m.rep,
                repr(m.init_time), repr(m.sample_time), m.attempts, m.recursion_steps,
            ])
        fit = calibrate_coefficients(sampler, problems, args.reps, measurements=measurements)
        coeff.writerow([sampler, q.n, repr(fit.alpha), repr(fit.beta),
                        repr(fit.alpha_residual), repr(fit.beta_residual)])
    _write_output(raw_buf.getvalue(), args.out_raw)
    _write_output(coeff_buf.getvalue(), args.out_coeffs)
    return EXIT_OK


def cmd_validate(args) -> int:
    q = _load_matrix(args)
    horizons = [float(t) for t in args.horizons.split(",") if t.strip()]
    rng = RandomStream(args.seed)
    results = run_validation(q, horizons, args.paths, rng)
    failures = [r for r in results if not r.passed]
    for r in results:
        print(str(r))
    print(f"{len(results) - len(failures)}/{len(results)} checks passed")
    if failures:
        print(f"first failure: {failures[0].name} (stat={failures[0].statistic:.4g})",
              file=sys.stderr)
        return EXIT_VALIDATION_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctmcpath",
        description="Endpoint-conditioned CTMC path sampling with cost-model sampler selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="emit a built-in rate matrix")
    p_model.add_argument("name", choices=MODEL_NAMES)
    _add_model_flags(p_model)
    p_model.add_argument("--seed", type=int, default=0)
    p_model.add_argument("--format", choices=("csv", "json"), default="csv")
    p_model.add_argument("-o", "--output")
    p_model.set_defaults(func=cmd_model)

    p_sample = sub.add_parser("sample", help="draw endpoint-conditioned paths")
    _add_source_flags(p_sample)
    p_sample.add_argument("-a", required=True, help="start state label")
    p_sample.add_argument("-b", required=True, help="end state label")
    p_sample.add_argument("-T", type=float, required=True, help="horizon length")
    p_sample.add_argument("-k", "--paths", type=int, default=1)
    p_sample.add_argument("--sampler", choices=("auto", "rejection", "direct", "uniformization"),
                          default="auto")
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p_sample.add_argument("--max-attempts", type=int, default=1_000_000)
    p_sample.add_argument("--coeffs", default="auto",
                          help="'auto', 'dense4', 'sparse61', or path to a JSON file")
    p_sample.add_argument("--large-t", action="store_true",
                          help="use the moderately-large-T cost approximation for auto-selection")
    p_sample.add_argument("-o", "--output")
    p_sample.set_defaults(func=cmd_sample)

    p_predict = sub.add_parser("predict", help="predict sampler costs and pick the cheapest")
    _add_source_flags(p_predict)
    p_predict.add_argument("-a", required=True)
    p_predict.add_argument("-b", required=True)
    p_predict.add_argument("-T", type=float, required=True)
    p_predict.add_argument("--seed", type=int, default=0)
    p_predict.add_argument("--coeffs", default="auto")
    p_predict.add_argument("--mode", choices=("exact", "large-t"), default="exact")
    p_predict.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser("bench", help="time the samplers and fit cost coefficients")
    _add_source_flags(p_bench)
    p_bench.add_argument("--horizons", required=True, help="comma-separated horizon lengths")
    p_bench.add_argument("--pairs", required=True, help="comma-separated a:b endpoint pairs")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--samplers", default="rejection,direct,uniformization")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out-raw", help="raw per-run timing CSV (default stdout)")
    p_bench.add_argument("--out-coeffs", help="fitted coefficient CSV (default stdout)")
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate", help="statistical cross-sampler validation")
    _add_source_flags(p_val)
    p_val.add_argument("--horizons", default="0.5,2")
    p_val.add_argument("--paths", type=int, default=10_000)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RejectionBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REJECTION_BUDGET
    except UnreachableEndpoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except ComplexSpectrum as exc:
        print(f"error: {exc}; use the rejection or uniformization sampler explicitly",
              file=sys.stderr)
        return EXIT_COMPLEX_SPECTRUM
    except InsufficientVariation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_VARIATION
    except (CtmcError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
