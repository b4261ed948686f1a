"""Compare the numba kernels with the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--sims 20] [--repeat 3]

Both paths must agree bit for bit; the script checks that before timing.
"""
import argparse
import time

import numpy as np

from stochfire import io
from stochfire.config import SimConfig
from stochfire.engine import initial_condition, run_simulation
from stochfire.kernels import step_arrays
from stochfire.rng import SplitMix64


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sims", type=int, default=20)
    ap.add_argument("--s-level", type=float, default=20.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    config = SimConfig(s_level=args.s_level)
    init = initial_condition(config)

    for accel in (True, False):
        a = run_simulation(config, 7, 61, initial=init, accelerated=accel)
        if accel:
            ref = a.states
        elif not np.array_equal(ref, a.states):
            raise SystemExit("numba and numpy traces differ")

    def sims(accel):
        return lambda: [run_simulation(config, k, 61, initial=init, accelerated=accel)
                        for k in range(args.sims)]

    def steps(accel):
        def go():
            rng = SplitMix64(1)
            s, h = init.states, init.heat
            for _ in range(100):
                s, h = step_arrays(s, h, config, rng, accelerated=accel)
        return go

    payload = np.random.default_rng(0).integers(0, 256, 1 << 20, dtype=np.uint8).tobytes()
    rows = [
        (f"simulate x{args.sims}", sims(True), sims(False)),
        ("step x100", steps(True), steps(False)),
        ("fnv1a 1 MiB", lambda: io.fnv1a64(payload, True), lambda: io.fnv1a64(payload, False)),
    ]
    print(f"{'case':<16}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, fast, slow in rows:
        fast()  # compile
        tf, ts = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<16}{tf:>10.4f}{ts:>10.4f}{ts / tf:>8.1f}x")


if __name__ == "__main__":
    main()
