"""Time the EM kernels under numba and under the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time (CRABUN_NUMBA=0 forces numpy). Usage:

    python benchmarks/bench_kernels.py [--reps 20]
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from crabun import BACKEND, ModelSpec, fit, load_packaged, ratio_ci
from crabun.simulate import generate_population, scenario

reps = int(sys.argv[1])
data = load_packaged("synthetic_mhb.csv")
m = ModelSpec("Mhb", ("sex",))
fit(data, m, "pel")                                  # warm-up (JIT compile or cache load)
t = time.perf_counter()
for _ in range(reps):
    r = fit(data, m, "pel")
t_fit = (time.perf_counter() - t) / reps
t = time.perf_counter()
ratio_ci(r, data, m)
t_ci = time.perf_counter() - t
cfg = scenario("A", N0=200, K=6, seed=1)
sims = [generate_population(cfg, i)[0] for i in range(reps)]
t = time.perf_counter()
for d in sims:
    fit(d, cfg.model_fit, "pel")
t_sim = (time.perf_counter() - t) / reps
print(json.dumps({"backend": BACKEND, "fit_47": t_fit, "ratio_ci_47": t_ci, "fit_sim200": t_sim}))
"""


def run(flag, reps):
    env = dict(os.environ, CRABUN_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(reps)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()
    rows = [run("1", args.reps), run("0", args.reps)]
    print(f"{'backend':<8}{'fit n=47':>12}{'ratio CI':>12}{'fit n~160':>12}")
    for r in rows:
        print(f"{r['backend']:<8}{r['fit_47'] * 1e3:>10.2f}ms{r['ratio_ci_47'] * 1e3:>10.1f}ms"
              f"{r['fit_sim200'] * 1e3:>10.2f}ms")
    if rows[0]["backend"] == "numba":
        print(f"speed-up on simulated fits: {rows[1]['fit_sim200'] / rows[0]['fit_sim200']:.1f}x")


if __name__ == "__main__":
    main()
