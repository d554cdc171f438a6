"""Timing comparison of the compiled and fallback sampling backends.

Runs the random-walk kernels twice in subprocesses -- once as installed
(numba-compiled when available) and once with BRATTELI_NO_NUMBA=1 -- and
prints a table.  Both runs produce bit-identical trajectories; only the
wall time differs.

    python benchmarks/bench_walk.py [--trials N] [--steps N] [--depth N]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

_CHILD = r"""
import json, sys, time
import numpy as np
from bratteli import _accel
from bratteli import diagram as dg, markov as mk, laplacian as lp
from bratteli import cells as cl

trials, steps, depth = (int(x) for x in sys.argv[1:4])

d = dg.stationary_diagram([[1, 1], [1, 1]], depth)
level = {(w, v): 0.5 for w in (0, 1) for v in (0, 1)}
sysm = mk.MarkovSystem(d, np.array([0.5, 0.5]), (level,) * depth)
net = lp.build_network(mk.dual_kernels(sysm))

mats = ([[0.7, 0.3], [0.4, 0.6]], [[0.2, 0.8], [0.5, 0.5]],
        [[0.9, 0.1], [0.3, 0.7]])
ks = [cl.kernel_from(m) for m in mats]
spaces = [cl.CellSpace((0.5, 0.5))]
for k in ks:
    spaces.append(cl.CellSpace(tuple(spaces[-1].nu(False) @ k.array(False))))

# warm-up triggers jit compilation so it is not billed to the timings
lp.walk(net, (2, 0), steps=10, trials=10, seed=0)
lp.hitting_probability(net, (2, 0), trials=10, seed=0)
cl.path_measure_sample(spaces, ks, 0, 3, seed=0, trials=10)

def timed(fn):
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result

t_walk, st = timed(lambda: lp.walk(net, (2, 0), steps=steps, trials=trials,
                                   seed=42, record_trace=False))
t_hit, hit = timed(lambda: lp.hitting_probability(net, (2, 0), trials=trials,
                                                  seed=11))
t_samp, samp = timed(lambda: cl.path_measure_sample(spaces, ks, 0, 3, seed=0,
                                                    trials=trials))
print(json.dumps({
    "backend": _accel.backend(),
    "walk_s": t_walk, "hit_s": t_hit, "sample_s": t_samp,
    "walk_checksum": int(st.returns.sum()),
    "hit_top": hit.top_hits,
    "sample_checksum": int(samp.counts.sum() + (samp.counts ** 2).sum()),
}))
"""


def run_child(no_numba: bool, trials: int, steps: int, depth: int) -> dict:
    env = dict(os.environ)
    env.pop("BRATTELI_NO_NUMBA", None)
    if no_numba:
        env["BRATTELI_NO_NUMBA"] = "1"
    proc = subprocess.run(
        [sys.executable, "-c", _CHILD, str(trials), str(steps), str(depth)],
        capture_output=True, text=True, env=env)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(proc.returncode)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--depth", type=int, default=8)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    fast = run_child(False, args.trials, args.steps, args.depth)
    slow = run_child(True, args.trials, args.steps, args.depth)
    wall = time.perf_counter() - t0

    for key in ("walk_checksum", "hit_top", "sample_checksum"):
        if fast[key] != slow[key]:
            print(f"BACKEND MISMATCH on {key}: {fast[key]} != {slow[key]}")
            return 1

    print(f"{args.trials} trials, {args.steps} steps, depth {args.depth} "
          f"(identical results on both backends)")
    print(f"{'kernel':<10} {fast['backend']:>12} {slow['backend']:>12} "
          f"{'speedup':>9}")
    for label, key in (("walk", "walk_s"), ("hitting", "hit_s"),
                       ("sampler", "sample_s")):
        ratio = slow[key] / fast[key] if fast[key] > 0 else float("inf")
        print(f"{label:<10} {fast[key]:>11.4f}s {slow[key]:>11.4f}s "
              f"{ratio:>8.1f}x")
    print(f"total benchmark wall time {wall:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
