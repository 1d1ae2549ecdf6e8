"""Time the compiled and pure-Python lattice kernels on the same inputs.

    python benchmarks/bench_kernels.py --T 50 --M 10 40 100 --repeat 20
"""
import argparse
import time

import numpy as np

from elcrf import kernels


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench(T, M, repeat, rng):
    psi = rng.normal(size=(T, M))
    trans = rng.normal(size=(M, M))
    rows = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        alpha = kernels.forward(psi, trans)
        beta = kernels.backward(psi, trans)
        log_z = float(np.logaddexp.reduce(alpha[-1]))
        rows[name] = {
            "forward": time_call(lambda: kernels.forward(psi, trans), repeat),
            "backward": time_call(lambda: kernels.backward(psi, trans), repeat),
            "edges": time_call(lambda: kernels.edge_expectations(psi, trans, alpha, beta, log_z), repeat),
            "viterbi": time_call(lambda: kernels.viterbi(psi, trans), repeat),
        }
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--T", type=int, default=50, help="sequence length")
    ap.add_argument("--M", type=int, nargs="+", default=[10, 40, 100], help="state counts")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    previous = kernels.backend_name()
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}; T={args.T}; best of {args.repeat}, microseconds")
    header = f"{'M':>5} {'kernel':>9} " + " ".join(f"{b:>10}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>8}"
    print(header)
    for M in args.M:
        rows = bench(args.T, M, args.repeat, rng)
        for kernel in ("forward", "backward", "edges", "viterbi"):
            times = [rows[b][kernel] for b in backends]
            line = f"{M:>5} {kernel:>9} " + " ".join(f"{t * 1e6:10.1f}" for t in times)
            if len(backends) == 2:
                line += f" {times[1] / times[0]:7.1f}x"
            print(line)
    kernels.use_backend(previous)


if __name__ == "__main__":
    main()
