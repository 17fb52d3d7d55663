"""Compare the compiled and pure-Python synchronizer kernels.

    python benchmarks/bench_sync.py [--repeat 5]

Both kernels replay the same pre-sampled arrival events, so the timings
cover only the per-event synchronizer loop. Results must be identical;
the script exits non-zero if they are not.
"""

import argparse
import math
import sys
import time

import numpy as np

from latvar import fusion

CASES = {
    # name: (k, period_ms, duration_ms, latency models, queue sizes)
    "congested-30fps": (
        3, 33.333333, 120_000.0,
        [fusion.LatencyModel.lognormal(math.log(60), 0.3),
         fusion.LatencyModel.lognormal(math.log(120), 0.5),
         fusion.LatencyModel.lognormal(math.log(6000), 0.3)],
        (100, 1000),
    ),
    "five-streams-100fps": (
        5, 10.0, 60_000.0,
        [fusion.LatencyModel.lognormal(math.log(m), 0.4) for m in (20, 40, 80, 160, 900)],
        (100, 1000),
    ),
}


def bench(kernel, events, k, q, slop, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernel(*events, k, q, slop)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    if fusion.BACKEND != "compiled":
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    py = fusion.get_kernel("python")
    cc = fusion.get_kernel("compiled")
    print(f"{'case':<22}{'queue':>7}{'events':>8}{'fusions':>9}{'python ms':>11}{'compiled ms':>13}{'speedup':>9}")
    ok = True
    for name, (k, period, duration, lats, queues) in CASES.items():
        streams = [fusion.StreamSpec(period, lat) for lat in lats]
        for q in queues:
            cfg = fusion.SyncConfig(k, q, 100.0, duration, args.seed)
            t, x, s, _, _ = fusion.build_events(cfg, streams)
            tp, rp = bench(py, (t, x, s), k, q, cfg.slop_ms, args.repeat)
            tc, rc = bench(cc, (t, x, s), k, q, cfg.slop_ms, args.repeat)
            same = all(np.array_equal(a, b) for a, b in zip(rp, rc))
            ok &= same
            print(
                f"{name:<22}{q:>7}{t.size:>8}{rp[0].size:>9}{tp * 1e3:>11.2f}{tc * 1e3:>13.2f}"
                f"{tp / tc:>8.1f}x" + ("" if same else "  MISMATCH")
            )
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
