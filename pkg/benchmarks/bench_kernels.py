"""Benchmark: compiled kernels vs the pure numpy fallback.

Micro benchmarks time the raw sweep kernels; the macro benchmark times a
complete parametric inference.  The backend is fixed at import, so the
driver re-invokes itself in a subprocess per backend.

Usage:
    python benchmarks/bench_kernels.py           # compare both backends
    python benchmarks/bench_kernels.py --backend pure    # one backend
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))


def _bench(fn, *args, repeat=30):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_micro():
    from siglass import kernels

    results = {}
    for n in (4_096, 65_536, 1_048_576):
        rng = np.random.default_rng(1)
        bias = rng.normal(size=n)
        coeff = rng.normal(size=n)
        ob = np.empty(n)
        oc = np.empty(n)
        flags = np.empty(n, dtype=np.uint8)
        results[f"two_piece_n{n}"] = _bench(
            kernels.two_piece_update, bias, coeff, 0.1, 0.0, -math.inf, math.inf, ob, oc
        )
        results[f"threshold_n{n}"] = _bench(
            kernels.threshold_update, bias, coeff, None, 0.1, 0.4, -math.inf, math.inf, flags
        )
        wb = np.ascontiguousarray(bias.reshape(-1, 4))
        wc = np.ascontiguousarray(coeff.reshape(-1, 4))
        owb = np.empty(n // 4)
        owc = np.empty(n // 4)
        results[f"maxpool_n{n}"] = _bench(
            kernels.maxpool_update, wb, wc, None, 0.1, -math.inf, math.inf, owb, owc
        )
    return results


def run_macro():
    import siglass
    from siglass.synthdata import SynthSpec, sample
    from conftest import conv_relu_conv

    results = {}
    for side, trials in ((8, 20), (16, 5)):
        graph = conv_relu_conv(seed=5, side=side, channels=4)
        config = siglass.HypothesisConfig(preset="BackMeanDiff", threshold=0.5)
        spec = SynthSpec(n_samples=trials, shape=(1, side, side), seed=42)
        t0 = time.perf_counter()
        done = 0
        for i in range(trials):
            x, _, _ = sample(spec, i)
            try:
                siglass.inference(graph, config, x, 1.0)
                done += 1
            except siglass.DegenerateHypothesis:
                pass
        if done:
            results[f"inference_{side}x{side}"] = (time.perf_counter() - t0) / done
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--backend", choices=["pure", "compiled"])
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    if args.backend:
        os.environ["SIGLASS_PURE"] = "1" if args.backend == "pure" else "0"
        from siglass import kernels

        if kernels.backend_name() != args.backend:
            print(json.dumps({"error": f"backend {args.backend} unavailable"}))
            return 1
        out = {**run_micro(), **run_macro()}
        print(json.dumps(out))
        return 0

    rows = {}
    for backend in ("pure", "compiled"):
        env = dict(os.environ, SIGLASS_PURE="1" if backend == "pure" else "0")
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--backend", backend],
            capture_output=True, text=True, env=env,
        )
        payload = json.loads(proc.stdout.strip().splitlines()[-1])
        if "error" in payload:
            print(f"{backend}: {payload['error']}")
            continue
        rows[backend] = payload

    if not rows:
        return 1
    keys = sorted(next(iter(rows.values())))
    print(f"{'benchmark':<24}" + "".join(f"{b:>14}" for b in rows) + f"{'speedup':>10}")
    for key in keys:
        line = f"{key:<24}"
        vals = []
        for backend in rows:
            v = rows[backend].get(key)
            vals.append(v)
            line += f"{v * 1e3:>12.3f}ms" if v is not None else f"{'n/a':>14}"
        if len(vals) == 2 and all(vals):
            line += f"{vals[0] / vals[1]:>9.2f}x"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
