"""Time the numba and numpy backends on the three hot paths.

    python benchmarks/bench_kernels.py --rows 4000 --dim 64 --repeat 3

Each backend is warmed up once first so numba compile time is not counted.
Both backends are checked to return identical neighbor indices.
"""

import argparse
import time

import numpy as np

from marginmine import _kernels
from marginmine.margin import ScoringConfig, neighborhoods, score_all
from marginmine.retrieval import forward_candidates
from marginmine.simcore import knn
from marginmine.synthgen import SynthConfig, generate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000, help="rows per side")
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--pairs", type=int, default=200_000, help="pairs for the pair-scoring benchmark")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    half = args.rows // 2
    data = generate(SynthConfig(n_pairs=half, n_distractors=args.rows - half, dim=args.dim,
                                n_hubs=0, seed=0))
    src, tgt = data.src, data.tgt
    cfg = ScoringConfig(k=args.k)
    rng = np.random.default_rng(0)
    pairs = np.stack([rng.integers(0, src.rows, args.pairs), rng.integers(0, tgt.rows, args.pairs)], axis=1)

    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    results = {}
    indices = {}
    for name in backends:
        kw = dict(threads=args.threads, backend=name)
        indices[name] = knn(src, tgt, args.k, **kw).indices  # warm-up
        sims = neighborhoods(src, tgt, cfg, **kw)
        forward_candidates(src, tgt, cfg, sims=sims, full_rerank=True, **kw)
        score_all(src, tgt, pairs[:10], cfg, sims=sims, **kw)
        results[name] = {
            "knn": best_of(lambda: knn(src, tgt, args.k, **kw), args.repeat),
            "full rerank": best_of(lambda: forward_candidates(src, tgt, cfg, sims=sims, full_rerank=True, **kw),
                                   args.repeat),
            "pair scoring": best_of(lambda: score_all(src, tgt, pairs, cfg, sims=sims, **kw), args.repeat),
        }
    if len(backends) == 2:
        assert np.array_equal(indices["numpy"], indices["numba"]), "backends disagree"

    print(f"{args.rows} x {args.rows} rows, dim {args.dim}, k {args.k}, {args.threads} thread(s), "
          f"best of {args.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for kernel in results["numpy"]:
        row = f"{kernel:<14}" + "".join(f"{results[b][kernel]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            row += f"{results['numpy'][kernel] / results['numba'][kernel]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
