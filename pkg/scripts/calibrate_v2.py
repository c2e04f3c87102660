"""Sign-test calibration over injectable suite variants."""

import json
import math
import sys

import numpy as np

from actlab import datagen, nn, zoo
from actlab.datagen import DatasetSpec, Interval
from actlab.tensor import SeededRng


def sign_test_p(wins, n):
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n


def build_suite(variant: str, suite_seed: int = 0):
    rng = SeededRng(suite_seed)
    specs = []
    pat_a = ((Interval(0.0, 0.5),), (Interval(0.5, 1.0),))
    pat_b = ((Interval(0.0, 1.0),), (Interval(-1.0, 0.0),))
    if variant.startswith("A"):
        patterns = [pat_a]
    elif variant.startswith("B"):
        patterns = [pat_b]
    else:
        patterns = [pat_a, pat_b]
    freq_hi = float(variant.split(":")[1]) if ":" in variant else 2 * math.pi
    for i in range(20):
        idr, oodr = patterns[i % len(patterns)]
        degree = int(rng.substream(f"poly1d/degree/{i}").generator.integers(0, 10))
        seed = int(rng.substream(f"poly1d/seed/{i}").generator.integers(0, 2**63))
        specs.append(DatasetSpec("poly1d", {"degree": degree}, idr, oodr, seed=seed))
    for i in range(20):
        idr, oodr = patterns[i % len(patterns)]
        seed = int(rng.substream(f"sin_product/seed/{i}").generator.integers(0, 2**63))
        specs.append(
            DatasetSpec(
                "sin_product", {"freq_range": (1.0, freq_hi)}, idr, oodr, seed=seed
            )
        )
    return specs


def main():
    variant = sys.argv[1]
    n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 8
    names = ["relu", "gelu", "gelusine", "gelusinc", "gmtu"]
    specs = build_suite(variant)
    samples = [datagen.realize(s) for s in specs]

    per_seed = {n: [] for n in names}
    for seed in range(n_seeds):
        for name in names:
            act = zoo.trainable_activation(zoo.builtin(name))
            mses = []
            for i, (spec, data) in enumerate(zip(specs, samples)):
                cfg = nn.MlpConfig(input_dim=spec.input_dim)
                params, report = nn.train(cfg, act, data, SeededRng(seed).substream(f"eval/{i}"))
                mse = 1e6 if report.diverged else nn.evaluate(params, act, data.test_x, data.test_y)
                mses.append(min(mse, 1e6))
            per_seed[name].append(float(np.mean(mses)))
        print(f"seed {seed}: " + " ".join(f"{n}={per_seed[n][-1]:.4f}" for n in names), flush=True)

    print(f"\nvariant {variant}: means " + " ".join(f"{n}={np.mean(per_seed[n]):.4f}" for n in names))
    comparisons = [(c, "relu") for c in names[1:]] + [("gelusine", "gelu")]
    out = {"variant": variant, "n_seeds": n_seeds, "per_seed": per_seed}
    for a, b in comparisons:
        wins = sum(1 for ma, mb in zip(per_seed[a], per_seed[b]) if ma < mb)
        p = sign_test_p(wins, n_seeds)
        out[f"{a}<{b}"] = [wins, p]
        print(f"{a} < {b}: {wins}/{n_seeds}, p={p:.4f}")
    with open(f"/tmp/calib_{variant.replace(':', '_')}.json", "w") as fh:
        json.dump(out, fh, indent=2)


if __name__ == "__main__":
    main()
