"""Regenerate src/crabun/data/synthetic_mhb.csv.

The file is a simulated stand-in with the same shape as a small bear survey
(n = 47 seen, K = 8 weekly occasions, one 0/1 sex covariate). It is NOT
field data; it exists for the CLI examples and runtime checks.
"""
from pathlib import Path

import numpy as np

from crabun import _kernels
from crabun.dataset import CaptureDataset, serialize_dataset, summarize
from crabun.likelihood import chao_lower_bound

N0, K = 60, 8
BETA = (-1.6, 0.5, 0.6)  # intercept, sex, enduring behaviour
TARGET_N = 47


def draw(seed):
    rng = np.random.default_rng(seed)
    sex = rng.binomial(1, 0.5, N0).astype(float)
    eta = np.repeat((BETA[0] + BETA[1] * sex)[:, None], K, axis=1)
    d = _kernels.simulate_histories(np.ascontiguousarray(eta), BETA[2], True, rng.random((N0, K)))
    seen = d.sum(axis=1) > 0
    return CaptureDataset(d[seen], sex[seen, None], ("sex",),
                          tuple(f"w{k + 1}" for k in range(K)))


def main():
    for seed in range(10_000):
        data = draw(seed)
        s = summarize(data)
        if data.n == TARGET_N and s.m2 > 0:
            out = Path(__file__).resolve().parents[1] / "src" / "crabun" / "data" / "synthetic_mhb.csv"
            out.write_text(serialize_dataset(data))
            print(f"seed {seed}: n={data.n} m1={s.m1} m2={s.m2} "
                  f"chao={chao_lower_bound(s.n, s.m1, s.m2):.2f} -> {out}")
            return
    raise SystemExit("no seed produced the target size")


if __name__ == "__main__":
    main()
