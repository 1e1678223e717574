"""Benchmark the compiled kernels against the pure-Python fallback.

Runs each sampler on representative problems with both lanes, checks that
the lanes produce identical paths, and reports per-path times and the
speedup. Usage: ``python benchmarks/bench_lanes.py [--paths 2000]``.
"""

import argparse
import time

import ctmcpath as cp


def run_lane(sampler, problem, kernel, n_paths, seed, lane):
    rng = cp.RandomStream(seed)
    streams = rng.split(n_paths)
    t0 = time.perf_counter()
    reports = []
    for stream in streams:
        if sampler == "rejection":
            reports.append(cp.rejection_sample(problem, None, stream, lane=lane))
        elif sampler == "direct":
            reports.append(cp.direct_sample(kernel, problem, stream, lane=lane))
        else:
            reports.append(cp.uniformization_sample(kernel, problem, stream, lane=lane))
    elapsed = time.perf_counter() - t0
    return elapsed, reports


def build_cases():
    hky, hky_pi = cp.build_hky(cp.HkyParams(kappa=2.0, base_freqs=(0.2, 0.3, 0.3, 0.2)))
    cpg, cpg_pi = cp.build_hky_cpg(cp.HkyCpgParams(kappa=2.0, nu=(0.3, 0.3, 0.2, 0.2), gamma=20.0))
    gy, gy_pi = cp.build_gy(cp.GyParams(kappa=2.0, omega=0.01))
    cases = []
    for name, q, a, b, T in [
        ("hky 4-state", hky, "A", "G", 1.0),
        ("hky 4-state", hky, "A", "A", 2.0),
        ("hky+cpg (mu*T=40)", cpg, "T", "C", 2.0),
        ("gy 61-state", gy, "AAA", "AAG", 0.5),
    ]:
        problem = cp.EndpointProblem(q, a, b, T)
        d = cp.decompose_auto(q)
        cases.append((name, problem, d))
    return cases


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--paths", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=99)
    args = parser.parse_args()

    if not cp.kernels.have_compiled():
        raise SystemExit("compiled kernels are not available; build the extension first")

    print(f"{args.paths} paths per cell; times are per path\n")
    header = f"{'case':24s} {'sampler':15s} {'pure':>10s} {'compiled':>10s} {'speedup':>8s}  identical"
    print(header)
    print("-" * len(header))
    for name, problem, d in cases_iter():
        for sampler in ("rejection", "direct", "uniformization"):
            if sampler == "direct":
                kernel = lambda: cp.build_direct_kernel(problem.q, d)
            elif sampler == "uniformization":
                kernel = lambda: cp.build_uniformization_kernel(problem.q, d)
            else:
                kernel = lambda: None
            t_pure, rep_pure = run_lane(sampler, problem, kernel(), args.paths, args.seed, "pure")
            t_comp, rep_comp = run_lane(sampler, problem, kernel(), args.paths, args.seed, "compiled")
            same = all(
                a.path == b.path and a.attempts == b.attempts and a.recursion_steps == b.recursion_steps
                for a, b in zip(rep_pure, rep_comp)
            )
            print(
                f"{name:24s} {sampler:15s} "
                f"{1e6 * t_pure / args.paths:8.1f}us {1e6 * t_comp / args.paths:8.1f}us "
                f"{t_pure / t_comp:7.1f}x  {same}"
            )


def cases_iter():
    yield from build_cases()


if __name__ == "__main__":
    main()
