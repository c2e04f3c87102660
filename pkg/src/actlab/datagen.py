"""Synthetic regression targets with disjoint train/test input ranges.

Five families: random 1-d polynomials, sparse 20-d polynomials, products
of three sines, real spherical harmonics, and a curated set of ten
physics equations.  Training inputs are drawn from an in-distribution
(ID) box and test inputs from a disjoint out-of-distribution (OOD) box,
per dimension, so test error measures extrapolation rather than fit.

The two canonical 1-d range patterns are train (0, 0.5) / test (0.5, 1)
and train (0, 1) / test (-1, 0); families with physical input domains use
the first pattern rescaled into each dimension's domain box.  All
intervals are half-open, which makes the splits exactly disjoint.

Everything here is a pure function of the spec: targets, inputs, and
splits are reproducible bit-for-bit from ``DatasetSpec.seed``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import lpmv

from .tensor import SeededRng

__all__ = [
    "Interval",
    "DatasetSpec",
    "SampleSet",
    "RealizedTarget",
    "DomainError",
    "UnknownEquationId",
    "FAMILIES",
    "FEYNMAN_IDS",
    "real_spherical_harmonic",
    "realize_target",
    "realize",
    "target_eval",
    "default_suite",
    "smoke_suite",
    "family_suite",
    "spec_to_dict",
    "spec_from_dict",
    "export_samples",
    "import_samples",
]

FAMILIES = ("poly1d", "poly20d", "sin_product", "spherical_harmonic", "feynman")

SIN_FREQ_RANGE = (1.0, 2.0 * math.pi)  # theta/phi/psi drawn uniformly here


class DomainError(ValueError):
    pass


class UnknownEquationId(KeyError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"bad interval [{self.lo}, {self.hi})")

    def contains(self, v) -> np.ndarray:
        return (v >= self.lo) & (v < self.hi)

    def disjoint(self, other: "Interval") -> bool:
        return self.hi <= other.lo or other.hi <= self.lo


# ---------------------------------------------------------------------------
# Feynman equation table (ten closed forms with at most four inputs each)


@dataclass(frozen=True)
class FeynmanEquation:
    equation_id: str
    variables: tuple[str, ...]
    domains: tuple[tuple[float, float], ...]
    fn: Callable[..., np.ndarray]
    formula: str


_FEYNMAN_TABLE: dict[str, FeynmanEquation] = {
    eq.equation_id: eq
    for eq in [
        FeynmanEquation(
            "I.6.2a", ("theta",), ((1.0, 3.0),),
            lambda theta: np.exp(-(theta**2) / 2.0) / math.sqrt(2.0 * math.pi),
            "exp(-theta**2/2)/sqrt(2*pi)",
        ),
        FeynmanEquation(
            "I.6.2", ("sigma", "theta"), ((1.0, 3.0), (1.0, 3.0)),
            lambda sigma, theta: np.exp(-((theta / sigma) ** 2) / 2.0)
            / (math.sqrt(2.0 * math.pi) * sigma),
            "exp(-(theta/sigma)**2/2)/(sqrt(2*pi)*sigma)",
        ),
        FeynmanEquation(
            "I.12.1", ("mu", "Nn"), ((1.0, 5.0), (1.0, 5.0)),
            lambda mu, nn: mu * nn,
            "mu*Nn",
        ),
        FeynmanEquation(
            "I.14.4", ("k_spring", "x"), ((1.0, 5.0), (1.0, 5.0)),
            lambda k, x: k * x**2 / 2.0,
            "k_spring*x**2/2",
        ),
        FeynmanEquation(
            "I.25.13", ("q", "C"), ((1.0, 5.0), (1.0, 5.0)),
            lambda q, c: q / c,
            "q/C",
        ),
        FeynmanEquation(
            "I.26.2", ("n", "theta2"), ((0.0, 1.0), (1.0, 5.0)),
            lambda n, theta2: np.arcsin(n * np.sin(theta2)),
            "arcsin(n*sin(theta2))",
        ),
        FeynmanEquation(
            "I.29.4", ("omega", "c"), ((1.0, 5.0), (1.0, 5.0)),
            lambda omega, c: omega / c,
            "omega/c",
        ),
        FeynmanEquation(
            "I.34.8", ("q", "v", "B", "p"), ((1.0, 5.0),) * 4,
            lambda q, v, b, p: q * v * b / p,
            "q*v*B/p",
        ),
        FeynmanEquation(
            "I.39.1", ("pr", "V"), ((1.0, 5.0), (1.0, 5.0)),
            lambda pr, vol: 1.5 * pr * vol,
            "3/2*pr*V",
        ),
        FeynmanEquation(
            "II.3.24", ("Pwr", "r"), ((1.0, 5.0), (1.0, 5.0)),
            lambda pwr, r: pwr / (4.0 * math.pi * r**2),
            "Pwr/(4*pi*r**2)",
        ),
    ]
}

FEYNMAN_IDS = tuple(_FEYNMAN_TABLE)


def _family_dim(family: str, params: dict) -> int:
    if family == "poly1d" or family == "sin_product":
        return 1
    if family == "poly20d":
        return int(params["dim"])
    if family == "spherical_harmonic":
        return 2
    if family == "feynman":
        eq_id = params["equation_id"]
        if eq_id not in _FEYNMAN_TABLE:
            raise UnknownEquationId(f"unknown feynman equation {eq_id!r}")
        return len(_FEYNMAN_TABLE[eq_id].variables)
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True)
class DatasetSpec:
    family: str
    params: dict
    id_range: tuple[Interval, ...]
    ood_range: tuple[Interval, ...]
    seed: int
    n_train: int = 4096
    n_test: int = 1024

    def __post_init__(self):
        dim = _family_dim(self.family, self.params)
        if len(self.id_range) != dim or len(self.ood_range) != dim:
            raise ValueError(
                f"{self.family}: needs {dim} range pair(s), got "
                f"{len(self.id_range)}/{len(self.ood_range)}"
            )
        for a, b in zip(self.id_range, self.ood_range):
            if not a.disjoint(b):
                raise ValueError(f"ID {a} and OOD {b} overlap")
        if self.n_train < 128:
            raise ValueError("n_train must be >= 128")
        if self.n_test < 1:
            raise ValueError("n_test must be >= 1")

    @property
    def input_dim(self) -> int:
        return _family_dim(self.family, self.params)


@dataclass
class SampleSet:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    target_description: dict


@dataclass
class RealizedTarget:
    fn: Callable[[np.ndarray], np.ndarray]  # (n, d) -> (n, 1)
    description: dict
    input_dim: int


# ---------------------------------------------------------------------------
# Target realization


def real_spherical_harmonic(l: int, m: int, azimuth, polar) -> np.ndarray:
    """Real orthonormal spherical harmonic of degree l, order m.

    Uses the convention with the Condon-Shortley phase cancelled, so e.g.
    (l=1, m=1) is +sqrt(3/4pi) sin(polar) cos(azimuth).
    """
    mm = abs(m)
    if mm > l:
        raise ValueError(f"|m|={mm} exceeds l={l}")
    norm = math.sqrt(
        (2 * l + 1) / (4.0 * math.pi) * math.factorial(l - mm) / math.factorial(l + mm)
    )
    p = lpmv(mm, l, np.cos(polar))
    if m == 0:
        return norm * p
    if m > 0:
        return ((-1) ** mm) * math.sqrt(2.0) * norm * p * np.cos(mm * np.asarray(azimuth))
    return ((-1) ** mm) * math.sqrt(2.0) * norm * p * np.sin(mm * np.asarray(azimuth))


def realize_target(spec: DatasetSpec) -> RealizedTarget:
    """Draw the target function's parameters from the spec's "target" stream."""
    rng = SeededRng(spec.seed).substream("target")
    family = spec.family

    if family == "poly1d":
        degree = int(spec.params["degree"])
        coeffs = rng.uniform(1, degree + 1, 0.0, 1.0)[0]

        def poly1d_fn(x: np.ndarray) -> np.ndarray:
            v = x[:, 0]
            acc = np.full(v.shape, coeffs[-1])
            for c in coeffs[-2::-1]:
                acc = acc * v + c
            return acc[:, None]

        return RealizedTarget(
            poly1d_fn,
            {"family": family, "degree": degree, "coefficients": coeffs.tolist()},
            1,
        )

    if family == "poly20d":
        dim = int(spec.params["dim"])
        max_terms = int(spec.params.get("max_terms", 8))
        max_total_degree = int(spec.params.get("max_total_degree", 3))
        gen = rng.generator
        n_terms = int(gen.integers(1, max_terms + 1))
        terms = []
        for _ in range(n_terms):
            total_degree = int(gen.integers(1, max_total_degree + 1))
            variables = [int(v) for v in gen.integers(0, dim, size=total_degree)]
            coeff = float(gen.uniform(0.0, 1.0))
            terms.append((coeff, variables))

        def poly20d_fn(x: np.ndarray) -> np.ndarray:
            acc = np.zeros(x.shape[0])
            for coeff, variables in terms:
                term = np.full(x.shape[0], coeff)
                for v in variables:
                    term = term * x[:, v]
                acc = acc + term
            return acc[:, None]

        return RealizedTarget(
            poly20d_fn,
            {"family": family, "dim": dim, "terms": [[c, list(v)] for c, v in terms]},
            dim,
        )

    if family == "sin_product":
        lo, hi = spec.params.get("freq_range", SIN_FREQ_RANGE)
        freqs = rng.uniform(1, 3, lo, hi)[0]
        theta, phi, psi = (float(f) for f in freqs)

        def sin_product_fn(x: np.ndarray) -> np.ndarray:
            v = x[:, 0]
            return (np.sin(theta * v) * np.sin(phi * v) * np.sin(psi * v))[:, None]

        return RealizedTarget(
            sin_product_fn,
            {"family": family, "theta": theta, "phi": phi, "psi": psi},
            1,
        )

    if family == "spherical_harmonic":
        l, m = int(spec.params["l"]), int(spec.params["m"])

        def sph_fn(x: np.ndarray) -> np.ndarray:
            return real_spherical_harmonic(l, m, x[:, 0], x[:, 1])[:, None]

        return RealizedTarget(sph_fn, {"family": family, "l": l, "m": m}, 2)

    if family == "feynman":
        eq_id = spec.params["equation_id"]
        if eq_id not in _FEYNMAN_TABLE:
            raise UnknownEquationId(f"unknown feynman equation {eq_id!r}")
        eq = _FEYNMAN_TABLE[eq_id]

        def feynman_fn(x: np.ndarray) -> np.ndarray:
            cols = [x[:, i] for i in range(len(eq.variables))]
            return np.asarray(eq.fn(*cols), dtype=np.float64)[:, None]

        return RealizedTarget(
            feynman_fn,
            {
                "family": family,
                "equation_id": eq_id,
                "variables": list(eq.variables),
                "formula": eq.formula,
            },
            len(eq.variables),
        )

    raise ValueError(f"unknown family {family!r}")


def target_eval(target: RealizedTarget, point) -> float:
    """Exact target value at one input point."""
    x = np.asarray(point, dtype=np.float64).reshape(1, -1)
    y = target.fn(x)
    if not np.isfinite(y).all():
        raise DomainError(f"target undefined at {point!r}")
    return float(y[0, 0])


# ---------------------------------------------------------------------------
# Sampling

_MAX_RESAMPLE_ROUNDS = 1000


def _sample_split(
    rng: SeededRng, ranges: tuple[Interval, ...], n: int, target: RealizedTarget
) -> tuple[np.ndarray, np.ndarray]:
    dim = len(ranges)
    x = np.empty((n, dim))
    for j, interval in enumerate(ranges):
        x[:, j] = rng.uniform(n, 1, interval.lo, interval.hi)[:, 0]
    y = target.fn(x)
    bad = ~np.isfinite(y[:, 0])
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > _MAX_RESAMPLE_ROUNDS:
            raise DomainError(
                f"target undefined on {int(bad.sum())} points after "
                f"{_MAX_RESAMPLE_ROUNDS} resampling rounds"
            )
        k = int(bad.sum())
        for j, interval in enumerate(ranges):
            x[bad, j] = rng.uniform(k, 1, interval.lo, interval.hi)[:, 0]
        y[bad] = target.fn(x[bad])
        bad = ~np.isfinite(y[:, 0])
    return x, y


def realize(spec: DatasetSpec) -> SampleSet:
    """Materialize a spec: draw the target, then ID train and OOD test data."""
    target = realize_target(spec)
    in_rng = SeededRng(spec.seed).substream("inputs")
    train_x, train_y = _sample_split(
        in_rng.substream("train"), spec.id_range, spec.n_train, target
    )
    test_x, test_y = _sample_split(
        in_rng.substream("test"), spec.ood_range, spec.n_test, target
    )
    return SampleSet(train_x, train_y, test_x, test_y, target.description)


# ---------------------------------------------------------------------------
# Suites

_PATTERN_A = (Interval(0.0, 0.5), Interval(0.5, 1.0))
_PATTERN_B = (Interval(0.0, 1.0), Interval(-1.0, 0.0))


def _unit_patterns(index: int, dim: int) -> tuple[tuple[Interval, ...], tuple[Interval, ...]]:
    # alternate the two canonical patterns across a suite
    id_iv, ood_iv = _PATTERN_A if index % 2 == 0 else _PATTERN_B
    return (id_iv,) * dim, (ood_iv,) * dim


def _halved_box(domains: tuple[tuple[float, float], ...]):
    # pattern A rescaled into each dimension's physical domain
    id_ranges, ood_ranges = [], []
    for lo, hi in domains:
        mid = lo + (hi - lo) / 2.0
        id_ranges.append(Interval(lo, mid))
        ood_ranges.append(Interval(mid, hi))
    return tuple(id_ranges), tuple(ood_ranges)


def _derive_seed(rng: SeededRng, label: str) -> int:
    return int(rng.substream(label).generator.integers(0, 2**63))


def default_suite(seed: int) -> list[DatasetSpec]:
    """The lab's standard mixture: 20 poly1d + 10 poly20d + 20 sin_product
    + 10 spherical_harmonic + 10 feynman specs (70 total)."""
    rng = SeededRng(seed)
    specs: list[DatasetSpec] = []

    for i in range(20):
        degree = int(rng.substream(f"poly1d/degree/{i}").generator.integers(0, 10))
        id_r, ood_r = _unit_patterns(i, 1)
        specs.append(
            DatasetSpec(
                "poly1d", {"degree": degree}, id_r, ood_r,
                seed=_derive_seed(rng, f"poly1d/seed/{i}"),
            )
        )

    for i in range(10):
        id_r, ood_r = _unit_patterns(i, 20)
        specs.append(
            DatasetSpec(
                "poly20d", {"dim": 20, "max_terms": 8, "max_total_degree": 3},
                id_r, ood_r, seed=_derive_seed(rng, f"poly20d/seed/{i}"),
            )
        )

    for i in range(20):
        id_r, ood_r = _unit_patterns(i, 1)
        specs.append(
            DatasetSpec(
                "sin_product", {"freq_range": SIN_FREQ_RANGE}, id_r, ood_r,
                seed=_derive_seed(rng, f"sin_product/seed/{i}"),
            )
        )

    sph_box = ((0.0, 2.0 * math.pi), (0.0, math.pi))
    for i in range(10):
        gen = rng.substream(f"spherical/lm/{i}").generator
        l = int(gen.integers(0, 5))
        m = int(gen.integers(-l, l + 1)) if l > 0 else 0
        id_r, ood_r = _halved_box(sph_box)
        specs.append(
            DatasetSpec(
                "spherical_harmonic", {"l": l, "m": m}, id_r, ood_r,
                seed=_derive_seed(rng, f"spherical/seed/{i}"),
            )
        )

    for i, eq_id in enumerate(FEYNMAN_IDS):
        eq = _FEYNMAN_TABLE[eq_id]
        id_r, ood_r = _halved_box(eq.domains)
        specs.append(
            DatasetSpec(
                "feynman", {"equation_id": eq_id}, id_r, ood_r,
                seed=_derive_seed(rng, f"feynman/seed/{i}"),
            )
        )

    return specs


def family_suite(families, seed: int) -> list[DatasetSpec]:
    """The default suite filtered to the given families (order preserved)."""
    wanted = set(families)
    unknown = wanted - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown families: {sorted(unknown)}")
    return [s for s in default_suite(seed) if s.family in wanted]


def smoke_suite(seed: int, count: int = 4) -> list[DatasetSpec]:
    """Small, fast poly1d specs for evolution smoke runs."""
    rng = SeededRng(seed)
    specs = []
    for i in range(count):
        degree = int(rng.substream(f"smoke/degree/{i}").generator.integers(1, 6))
        id_r, ood_r = _unit_patterns(i, 1)
        specs.append(
            DatasetSpec(
                "poly1d", {"degree": degree}, id_r, ood_r,
                seed=_derive_seed(rng, f"smoke/seed/{i}"),
                n_train=512, n_test=256,
            )
        )
    return specs


# ---------------------------------------------------------------------------
# Serialization


def spec_to_dict(spec: DatasetSpec) -> dict:
    return {
        "family": spec.family,
        "params": spec.params,
        "id_range": [[iv.lo, iv.hi] for iv in spec.id_range],
        "ood_range": [[iv.lo, iv.hi] for iv in spec.ood_range],
        "seed": spec.seed,
        "n_train": spec.n_train,
        "n_test": spec.n_test,
    }


def spec_from_dict(d: dict) -> DatasetSpec:
    return DatasetSpec(
        family=d["family"],
        params=dict(d["params"]),
        id_range=tuple(Interval(lo, hi) for lo, hi in d["id_range"]),
        ood_range=tuple(Interval(lo, hi) for lo, hi in d["ood_range"]),
        seed=int(d["seed"]),
        n_train=int(d["n_train"]),
        n_test=int(d["n_test"]),
    )


# ---------------------------------------------------------------------------
# CSV export / import (audit and cross-run comparison)


def export_samples(samples: SampleSet, path) -> None:
    """Write ``x0..x{d-1}, y, split`` rows; floats as shortest round-trip."""
    dim = samples.train_x.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(dim)] + ["y", "split"])
        for x_block, y_block, split in (
            (samples.train_x, samples.train_y, "train"),
            (samples.test_x, samples.test_y, "test"),
        ):
            for row, yv in zip(x_block, y_block[:, 0]):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(yv)), split])


def import_samples(path) -> SampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        train_rows, test_rows = [], []
        for row in reader:
            values = [float(v) for v in row[: dim + 1]]
            (train_rows if row[-1] == "train" else test_rows).append(values)
    train = np.asarray(train_rows, dtype=np.float64).reshape(-1, dim + 1)
    test = np.asarray(test_rows, dtype=np.float64).reshape(-1, dim + 1)
    return SampleSet(
        train_x=train[:, :dim],
        train_y=train[:, dim:],
        test_x=test[:, :dim],
        test_y=test[:, dim:],
        target_description={"family": "csv-import", "path": str(path)},
    )
