"""Time the hot kernels under numba and under the pure-numpy fallback.

Each backend runs in a fresh interpreter (the backend is fixed at import time
by LINSEC_DISABLE_NUMBA). Results from both are compared for agreement.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = ("primal_dual", "subgradient", "boolean_bruteforce", "reg_prox_oct")


def _problem():
    from linsec.data import SynthSpec, generate

    data = generate(SynthSpec(seed=0, d=200, m_per_class=250, kind="boolean_text"))
    return np.ascontiguousarray(data.samples), np.ascontiguousarray(data.labels)


def _run_case(name):
    from linsec import _kernels as K

    if name in ("primal_dual", "subgradient"):
        X, y = _problem()
        fn = K.primal_dual_solve if name == "primal_dual" else K.subgradient_solve
        w, b, obj, it, _ = fn(X, y, 1.0, K.REG_OCT, 0.5, 2000, 1.0, 1e-12, 50)
        return float(obj)
    if name == "boolean_bruteforce":
        rng = np.random.default_rng(0)
        total = 0.0
        for _ in range(20):
            w = rng.normal(size=12)
            x0 = (rng.random(12) < 0.5).astype(float)
            total += K.min_boolean_flips(w, x0, 6)[1]
        return float(total)
    rng = np.random.default_rng(0)
    total = 0.0
    for _ in range(2000):
        total += float(K.reg_prox(K.REG_OCT, 0.5, rng.normal(size=200), 0.3).sum())
    return total


def child(repeat):
    from linsec import _kernels as K

    out = {"numba": K.USE_NUMBA}
    for name in CASES:
        _run_case(name)  # warm-up (compilation, or cache load)
        times = []
        for _ in range(repeat):
            t = time.perf_counter()
            value = _run_case(name)
            times.append(time.perf_counter() - t)
        out[name] = {"seconds": min(times), "value": value}
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.repeat)
        return
    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, LINSEC_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>9}  agree")
    for name in CASES:
        a, b = results["numba"][name], results["numpy"][name]
        agree = np.isclose(a["value"], b["value"], rtol=1e-6, atol=1e-9)
        print(f"{name:<22}{a['seconds']:>10.4f}{b['seconds']:>10.4f}"
              f"{b['seconds'] / a['seconds']:>8.1f}x  {'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
