"""Compare the compiled and pure-Python Monte-Carlo backends.

Each estimator runs on the same seed and sample range with both backends;
the table shows the time per sample, the speed-up and the largest relative
difference between the accumulated sums (zero up to rounding).

    python3 benchmarks/bench_mc.py [--samples 2000] [--b 0.5] [--channel hh]
"""
import argparse
import time

import numpy as np

from nlcbs import montecarlo as mc
from nlcbs.core import MediumParams

ESTIMATORS = {
    "linear": lambda p, n, be: mc.mc_linear(p, n, 7, backend_name=be),
    "elastic scattering": lambda p, n, be: mc.mc_scattering(p, n, 7, elastic=True,
                                                             backend_name=be),
    "inelastic scattering": lambda p, n, be: mc.mc_scattering(p, n, 7, backend_name=be),
    "propagation": lambda p, n, be: mc.mc_propagation(p, n, 7, backend_name=be),
}


def run(fn, params, n, backend):
    t0 = time.perf_counter()
    m = fn(params, n, backend)
    return time.perf_counter() - t0, m


def main(argv=None):
    ap = argparse.ArgumentParser(description="compiled vs pure-Python Monte-Carlo kernels")
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--b", type=float, default=0.5)
    ap.add_argument("--channel", default="hh")
    args = ap.parse_args(argv)
    try:
        mc.get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation`")
    params = MediumParams(0.0, args.b, channel=args.channel)
    print(f"b={args.b} channel={args.channel} samples={args.samples}")
    print(f"{'estimator':22s} {'python us/sample':>17s} {'compiled us/sample':>19s} "
          f"{'speed-up':>9s} {'max rel diff':>13s}")
    for name, fn in ESTIMATORS.items():
        tp, mp = run(fn, params, args.samples, "python")
        tc, mcomp = run(fn, params, args.samples, "compiled")
        diff = np.max(np.abs(mp.sums - mcomp.sums) / np.maximum(np.abs(mp.sums), 1e-300))
        print(f"{name:22s} {1e6 * tp / args.samples:17.2f} {1e6 * tc / args.samples:19.3f} "
              f"{tp / tc:9.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()
