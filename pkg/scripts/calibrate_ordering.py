"""Calibration: does the activation ordering reproduce at desk scale?

Runs the exact computation behind the ordering check: poly1d + sin_product
families of the default suite, paired training seeds, mean OOD MSE per
(activation, seed), then one-sided sign tests.
"""

import json
import math
import sys
import time

import numpy as np

from actlab import datagen, nn, zoo
from actlab.tensor import SeededRng


def sign_test_p(wins: int, n: int) -> float:
    # P[X >= wins], X ~ Binomial(n, 0.5)
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n


def main() -> None:
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    suite_seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    names = ["relu", "gelu", "gelusine", "gelusinc", "gmtu"]

    specs = datagen.family_suite(["poly1d", "sin_product"], suite_seed)
    samples = [datagen.realize(s) for s in specs]
    print(f"{len(specs)} specs, {n_seeds} seeds", flush=True)

    t0 = time.perf_counter()
    per_seed = {name: [] for name in names}  # mean OOD MSE across specs, per seed
    for seed in range(n_seeds):
        for name in names:
            act = zoo.trainable_activation(zoo.builtin(name))
            mses = []
            for i, (spec, data) in enumerate(zip(specs, samples)):
                cfg = nn.MlpConfig(input_dim=spec.input_dim)
                rng = SeededRng(seed).substream(f"eval/{i}")
                params, report = nn.train(cfg, act, data, rng)
                mse = (
                    1e6
                    if report.diverged
                    else nn.evaluate(params, act, data.test_x, data.test_y)
                )
                mses.append(min(mse, 1e6))
            per_seed[name].append(float(np.mean(mses)))
        print(
            f"seed {seed}: "
            + " ".join(f"{n}={per_seed[n][-1]:.4f}" for n in names),
            flush=True,
        )

    print(f"wall: {time.perf_counter() - t0:.1f}s")
    results = {"per_seed": per_seed, "n_seeds": n_seeds}
    for name in names:
        results[f"mean_{name}"] = float(np.mean(per_seed[name]))
    comparisons = [(c, "relu") for c in ["gelu", "gelusine", "gelusinc", "gmtu"]]
    comparisons.append(("gelusine", "gelu"))
    for a, b in comparisons:
        wins = sum(
            1 for ma, mb in zip(per_seed[a], per_seed[b]) if ma < mb
        )
        p = sign_test_p(wins, n_seeds)
        results[f"{a}_vs_{b}"] = {"wins": wins, "p": p}
        print(f"{a} < {b}: {wins}/{n_seeds} wins, sign-test p = {p:.5f}")

    with open("/tmp/ordering_results.json", "w") as fh:
        json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
