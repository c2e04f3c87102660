"""Per-family, per-pattern breakdown of OOD MSE for a few activations."""

import sys
import time

import numpy as np

from actlab import datagen, nn, zoo
from actlab.tensor import SeededRng

names = sys.argv[1].split(",") if len(sys.argv) > 1 else ["relu", "gelu", "gelusine"]
n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 5

specs = datagen.family_suite(["poly1d", "sin_product"], 0)
samples = [datagen.realize(s) for s in specs]

t0 = time.perf_counter()
rows = []
for idx, (spec, data) in enumerate(zip(specs, samples)):
    pattern = "A" if spec.ood_range[0].lo == 0.5 else "B"
    target_range = float(np.max(np.abs(data.test_y)))
    cell = {"family": spec.family, "pattern": pattern, "ymax": target_range}
    for name in names:
        act = zoo.trainable_activation(zoo.builtin(name))
        mses = []
        for seed in range(n_seeds):
            cfg = nn.MlpConfig(input_dim=spec.input_dim)
            params, report = nn.train(cfg, act, data, SeededRng(seed).substream(f"eval/{idx}"))
            mse = 1e6 if report.diverged else nn.evaluate(params, act, data.test_x, data.test_y)
            mses.append(min(mse, 1e6))
        cell[name] = float(np.mean(mses))
    rows.append(cell)
    print(
        f"{idx:2d} {cell['family']:12s} {pattern} ymax={target_range:7.3f}  "
        + "  ".join(f"{n}={cell[n]:8.4f}" for n in names),
        flush=True,
    )

print(f"\nwall {time.perf_counter()-t0:.0f}s")
for fam in ["poly1d", "sin_product"]:
    for pat in ["A", "B"]:
        sel = [r for r in rows if r["family"] == fam and r["pattern"] == pat]
        if not sel:
            continue
        print(
            f"{fam:12s} {pat}: "
            + "  ".join(f"{n}={np.mean([r[n] for r in sel]):8.4f}" for n in names)
        )
print("\noverall:")
for n in names:
    print(f"  {n}: {np.mean([r[n] for r in rows]):.4f}")
