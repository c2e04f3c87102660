"""labcli: command-line surface of the activation lab.

Subcommands: ``eval``, ``evolve``, ``sweep``, ``histogram``,
``export-dataset``, ``replay``, and ``zoo list``.  Every command that
computes numbers resolves its full configuration up front, runs a pure
function of that configuration, and writes a run directory containing a
``record.json``, the CSV artifacts (SHA-256-hashed into the record), and
rendered PNG figures.  ``replay`` re-executes a record's config and
verifies the regenerated CSVs hash identically.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, datagen, evolve, exprlang, nn, records, zoo
from .records import HashMismatch, load_record, new_run_dir, sha256_file, write_csv, write_record
from .tensor import SeededRng

TRAIN_MSE_SENTINEL = evolve.MSE_SENTINEL


# ---------------------------------------------------------------------------
# Shared resolution helpers


def resolve_suite(name: str, seed: int) -> list[datagen.DatasetSpec]:
    """Suite names: ``default``, ``smoke``, or ``+``-joined family names."""
    key = name.strip().lower().replace("-", "_")
    if key == "default":
        return datagen.default_suite(seed)
    if key == "smoke":
        return datagen.smoke_suite(seed)
    families = [part.strip() for part in key.split("+") if part.strip()]
    alias = {"spherical": "spherical_harmonic"}
    families = [alias.get(f, f) for f in families]
    specs = datagen.family_suite(families, seed)
    if not specs:
        raise ValueError(f"suite {name!r} resolved to no datasets")
    return specs


def _resolve_activation(token: str):
    """Return (label, adapter, expr_or_None, flop_cost_or_empty, status)."""
    if token in zoo.names():
        entry = zoo.builtin(token)
        flops = exprlang.cost(entry.expr) if entry.expr is not None else ""
        try:
            adapter = zoo.trainable_activation(entry)
        except zoo.NotTrainable as exc:
            return token, None, entry.expr, flops, f"not-trainable: {exc}"
        return token, adapter, entry.expr, flops, "ok"
    try:
        expr = exprlang.parse(token)
    except exprlang.ExprError as exc:
        return token, None, None, "", f"parse-error: {exc}"
    return token, nn.ExprActivation(expr), expr, exprlang.cost(expr), "ok"


def _train_eval_once(
    adapter, spec: datagen.DatasetSpec, data, seed: int, label: str,
    steps: int, optimizer: str,
) -> tuple[float, float, bool]:
    """One (activation, dataset, seed) cell: train MSE, OOD MSE, diverged."""
    cfg = nn.MlpConfig(input_dim=spec.input_dim, train_steps=steps, optimizer=optimizer)
    rng = SeededRng(seed).substream(label)
    params, report = nn.train(cfg, adapter, data, rng)
    if report.diverged:
        return TRAIN_MSE_SENTINEL, TRAIN_MSE_SENTINEL, True
    test_mse = nn.evaluate(params, adapter, data.test_x, data.test_y)
    if not math.isfinite(test_mse):
        test_mse = TRAIN_MSE_SENTINEL
    return report.final_train_mse, min(test_mse, TRAIN_MSE_SENTINEL), False


# ---------------------------------------------------------------------------
# eval


def run_eval(config: dict, run_dir: Path) -> dict:
    specs = [datagen.spec_from_dict(d) for d in config["datasets"]]
    samples = [datagen.realize(s) for s in specs]
    seeds = list(config["train_seeds"])
    steps, optimizer = int(config["steps"]), config["optimizer"]

    detail_rows = []
    summary_rows = []
    for token in config["activations"]:
        label, adapter, expr, flops, status = _resolve_activation(token)
        if adapter is None:
            summary_rows.append(
                {
                    "activation": label, "status": status, "flop_cost": flops,
                    "train_mse_mean": "", "train_mse_sd": "",
                    "test_mse_mean": "", "test_mse_sd": "",
                    "n_runs": 0, "n_diverged": 0,
                }
            )
            continue
        train_mses, test_mses, diverged_count = [], [], 0
        for i, (spec, data) in enumerate(zip(specs, samples)):
            for seed in seeds:
                tr, te, diverged = _train_eval_once(
                    adapter, spec, data, seed, f"eval/{i}", steps, optimizer
                )
                diverged_count += int(diverged)
                train_mses.append(tr)
                test_mses.append(te)
                detail_rows.append(
                    [label, i, spec.family, seed, tr, te, int(diverged)]
                )
        summary_rows.append(
            {
                "activation": label, "status": "ok", "flop_cost": flops,
                "train_mse_mean": float(np.mean(train_mses)),
                "train_mse_sd": float(np.std(train_mses)),
                "test_mse_mean": float(np.mean(test_mses)),
                "test_mse_sd": float(np.std(test_mses)),
                "n_runs": len(test_mses), "n_diverged": diverged_count,
            }
        )

    header = [
        "activation", "status", "flop_cost",
        "train_mse_mean", "train_mse_sd", "test_mse_mean", "test_mse_sd",
        "n_runs", "n_diverged",
    ]
    write_csv(run_dir / "summary.csv", header, [[r[k] for k in header] for r in summary_rows])
    write_csv(
        run_dir / "details.csv",
        ["activation", "dataset_index", "family", "train_seed", "train_mse", "test_mse", "diverged"],
        detail_rows,
    )
    from .plots import render_eval_figure

    render_eval_figure(summary_rows, run_dir / "eval_losses.png")
    return {"summary": summary_rows}


def _print_eval_table(summary_rows: list[dict]) -> None:
    print(f"{'activation':<14} {'train MSE':>22} {'OOD test MSE':>22}  status")
    for r in summary_rows:
        if r["status"] != "ok":
            print(f"{r['activation']:<14} {'-':>22} {'-':>22}  {r['status']}")
            continue
        tr = f"{r['train_mse_mean']:.6g} ± {r['train_mse_sd']:.3g}"
        te = f"{r['test_mse_mean']:.6g} ± {r['test_mse_sd']:.3g}"
        print(f"{r['activation']:<14} {tr:>22} {te:>22}  ok")


# ---------------------------------------------------------------------------
# evolve


def run_evolve(config: dict, run_dir: Path) -> dict:
    specs = tuple(datagen.spec_from_dict(d) for d in config["datasets"])
    cfg = evolve.EvolveConfig(
        datasets=specs,
        generations=int(config["generations"]),
        proposals_per_generation=int(config["proposals_per_generation"]),
        parents_per_prompt=int(config["parents_per_prompt"]),
        budget=exprlang.FlopBudget(int(config["budget"])),
        eval_seeds=tuple(config["eval_seeds"]),
        mutator=config["mutator"],
        top_k=int(config["top_k"]),
        allow_batch_stats=bool(config["allow_batch_stats"]),
        seed=int(config["seed"]),
        train_steps=int(config["train_steps"]),
        optimizer=config["optimizer"],
        proposer_cmd=config.get("proposer_cmd"),
        proposer_timeout=float(config.get("proposer_timeout", 60.0)),
    )
    db = evolve.seed_db(cfg)
    seed_fitness = db.best_fitness
    trace = [(0, seed_fitness)]

    def progress(generation: int, current: evolve.CandidateDb) -> None:
        trace.append((generation, current.best_fitness))
        print(f"generation {generation:4d}  best fitness {current.best_fitness:.6g}")

    evolve.run(cfg, db, progress=progress)

    best = db.best
    with open(run_dir / "candidates.jsonl", "w") as fh:
        for cand in db.candidates:
            fh.write(json.dumps(cand.to_dict(), sort_keys=True) + "\n")
    with open(run_dir / "best_expr.txt", "w") as fh:
        fh.write(best.expr_text + "\n")
    write_csv(
        run_dir / "trace.csv",
        ["generation", "best_fitness"],
        [[g, f] for g, f in trace],
    )
    from .plots import render_evolution_figure

    render_evolution_figure([g for g, _ in trace], [f for _, f in trace], run_dir / "evolution.png")

    improvement = 0.0
    if seed_fitness != 0:
        improvement = (best.fitness - seed_fitness) / abs(seed_fitness)
    statuses = [c.status for c in db.candidates]
    return {
        "best_expr": best.expr_text,
        "best_fitness": best.fitness,
        "seed_fitness": seed_fitness,
        "relative_improvement": improvement,
        "n_candidates": len(db),
        "n_scored": statuses.count("scored"),
        "n_rejected_budget": statuses.count("rejected-budget"),
        "n_failed": statuses.count("failed"),
    }


# ---------------------------------------------------------------------------
# sweep

_ALPHA_TOKEN = re.compile(r"\balpha\b")


def instantiate_template(template: str, value: float) -> exprlang.Expr:
    if len(_ALPHA_TOKEN.findall(template)) != 1:
        raise ValueError("sweep template must contain the token 'alpha' exactly once")
    return exprlang.parse(_ALPHA_TOKEN.sub(repr(float(value)), template))


def run_sweep(config: dict, run_dir: Path) -> dict:
    template = config["template"]
    specs = [datagen.spec_from_dict(d) for d in config["datasets"]]
    samples = [datagen.realize(s) for s in specs]
    seeds = list(config["train_seeds"])
    steps, optimizer = int(config["steps"]), config["optimizer"]
    lo, hi = float(config["alpha_lo"]), float(config["alpha_hi"])
    count = int(config["count"])
    reference = float(config["reference"])

    if config["mode"] == "grid":
        alphas = [float(a) for a in np.linspace(lo, hi, count + 2)[1:-1]]
    else:
        draw = SeededRng(int(config["alpha_sample_seed"])).substream("alphas")
        alphas = [float(a) for a in draw.uniform(count, 1, lo, hi)[:, 0]]

    def sweep_point(alpha: float) -> tuple[float, float]:
        adapter = nn.ExprActivation(instantiate_template(template, alpha))
        mses = []
        for i, (spec, data) in enumerate(zip(specs, samples)):
            for seed in seeds:
                _, te, _ = _train_eval_once(
                    adapter, spec, data, seed, f"sweep/{i}", steps, optimizer
                )
                mses.append(te)
        return float(np.mean(mses)), float(np.std(mses))

    point_rows = []
    for alpha in alphas:
        mean, sd = sweep_point(alpha)
        point_rows.append({"alpha": alpha, "mse_mean": mean, "mse_sd": sd, "is_reference": 0})
    ref_mean, ref_sd = sweep_point(reference)
    point_rows.append(
        {"alpha": reference, "mse_mean": ref_mean, "mse_sd": ref_sd, "is_reference": 1}
    )
    rank = 1 + sum(1 for r in point_rows if not r["is_reference"] and r["mse_mean"] < ref_mean)

    point_rows.sort(key=lambda r: r["alpha"])
    write_csv(
        run_dir / "sweep.csv",
        ["alpha", "test_mse_mean", "test_mse_sd", "is_reference"],
        [[r["alpha"], r["mse_mean"], r["mse_sd"], r["is_reference"]] for r in point_rows],
    )
    from .plots import render_sweep_figure

    sampled = [r for r in point_rows if not r["is_reference"]]
    render_sweep_figure(
        [r["alpha"] for r in sampled], [r["mse_mean"] for r in sampled],
        reference, ref_mean, run_dir / "sweep.png",
    )
    return {
        "reference_alpha": reference,
        "reference_mse": ref_mean,
        "reference_rank": rank,
        "count": count,
    }


# ---------------------------------------------------------------------------
# histogram


def run_histogram(config: dict, run_dir: Path) -> dict:
    label, adapter, _, _, status = _resolve_activation(config["activation"])
    if adapter is None:
        raise ValueError(f"histogram needs a trainable activation: {status}")
    spec = datagen.spec_from_dict(config["datasets"][0])
    data = datagen.realize(spec)
    cfg = nn.MlpConfig(
        input_dim=spec.input_dim,
        train_steps=int(config["steps"]),
        optimizer=config["optimizer"],
    )
    rng = SeededRng(int(config["train_seed"])).substream("histogram")
    params, _ = nn.train(cfg, adapter, data, rng)

    probe_rows = min(int(config["probe_rows"]), data.train_x.shape[0])
    values = nn.collect_preactivations(params, adapter, data.train_x[:probe_rows])
    lo, hi = float(config["lo"]), float(config["hi"])
    bins = int(config["bins"])
    # clamp outliers into the edge bins so every sample is counted
    counts, edges = np.histogram(np.clip(values, lo, hi), bins=bins, range=(lo, hi))

    write_csv(
        run_dir / "histogram.csv",
        ["bin_left", "bin_right", "count"],
        [[float(edges[i]), float(edges[i + 1]), int(c)] for i, c in enumerate(counts)],
    )
    from .plots import render_histogram_figure

    render_histogram_figure(edges[:-1], edges[1:], counts, run_dir / "histogram.png")
    outside = float(np.mean(np.abs(values) > 1.0))
    return {
        "activation": label,
        "total": int(counts.sum()),
        "probe_rows": probe_rows,
        "outside_unit_fraction": outside,
    }


# ---------------------------------------------------------------------------
# export-dataset


def run_export_dataset(config: dict, run_dir: Path) -> dict:
    spec = datagen.spec_from_dict(config["dataset"])
    samples = datagen.realize(spec)
    datagen.export_samples(samples, run_dir / "dataset.csv")
    return {
        "family": spec.family,
        "input_dim": spec.input_dim,
        "n_train": int(samples.train_x.shape[0]),
        "n_test": int(samples.test_x.shape[0]),
        "target": samples.target_description,
    }


RUNNERS = {
    "eval": run_eval,
    "evolve": run_evolve,
    "sweep": run_sweep,
    "histogram": run_histogram,
    "export-dataset": run_export_dataset,
}


def execute(command: str, config: dict, out_dir: str) -> tuple[Path, dict]:
    """Create a run dir, run the command, persist the record; returns both."""
    run_dir = new_run_dir(out_dir, config)
    t0 = time.perf_counter()
    results = RUNNERS[command](config, run_dir)
    wall = time.perf_counter() - t0
    artifacts = sorted(
        p.name
        for p in run_dir.iterdir()
        if p.suffix in (".csv", ".txt", ".jsonl")
    )
    write_record(run_dir, command, config, results, artifacts, wall)
    return run_dir, results


def replay(record_path: str, out_dir: str) -> Path:
    """Re-run a record's config and verify the artifacts hash identically."""
    record = load_record(record_path)
    command = record["command"]
    if command not in RUNNERS:
        raise ValueError(f"record has unknown command {command!r}")
    run_dir = new_run_dir(out_dir, record["config"])
    results = RUNNERS[command](record["config"], run_dir)
    mismatches = []
    for name, want in record["artifacts"].items():
        path = run_dir / name
        got = sha256_file(path) if path.exists() else "<missing>"
        if got != want:
            mismatches.append(f"{name}: recorded {want[:12]}.. got {got[:12]}..")
    write_record(run_dir, command, record["config"], results, list(record["artifacts"]), 0.0)
    if mismatches:
        raise HashMismatch("replay diverged: " + "; ".join(mismatches))
    print(f"replay ok: {len(record['artifacts'])} artifact(s) reproduced byte-identically")
    return run_dir


# ---------------------------------------------------------------------------
# argparse wiring


def _add_common(p: argparse.ArgumentParser, *, seeds: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed")
    if seeds:
        p.add_argument("--seeds", type=int, default=1, help="number of paired seeds")
    p.add_argument("--out-dir", default="runs", help="run directory root")
    p.add_argument("--suite", default="smoke", help="default|smoke|family[+family..]")
    p.add_argument("--suite-seed", type=int, default=0, help="dataset suite seed")
    p.add_argument("--steps", type=int, default=50, help="training steps")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--budget", type=int, default=64, help="FLOP budget per element")


def _suite_dicts(args) -> list[dict]:
    return [datagen.spec_to_dict(s) for s in resolve_suite(args.suite, args.suite_seed)]


def _cmd_eval(args) -> int:
    config = {
        "activations": [a.strip() for a in args.activations.split(",") if a.strip()],
        "datasets": _suite_dicts(args),
        "train_seeds": [args.seed + i for i in range(args.seeds)],
        "steps": args.steps,
        "optimizer": args.optimizer,
    }
    run_dir, results = execute("eval", config, args.out_dir)
    _print_eval_table(results["summary"])
    print(f"run dir: {run_dir}")
    return 0


def _cmd_evolve(args) -> int:
    config = {
        "datasets": _suite_dicts(args),
        "generations": args.generations,
        "proposals_per_generation": args.proposals,
        "parents_per_prompt": args.parents,
        "budget": args.budget,
        "eval_seeds": list(range(args.eval_seeds)),
        "mutator": "external" if args.proposer_cmd else args.mutator,
        "top_k": args.top_k,
        "allow_batch_stats": not args.no_batch_stats,
        "seed": args.seed,
        "train_steps": args.steps,
        "optimizer": args.optimizer,
        "proposer_cmd": args.proposer_cmd,
        "proposer_timeout": args.proposer_timeout,
    }
    run_dir, results = execute("evolve", config, args.out_dir)
    print(
        f"best: {results['best_expr']}  fitness {results['best_fitness']:.6g} "
        f"({results['relative_improvement']:+.1%} vs seed)"
    )
    print(f"run dir: {run_dir}")
    return 0


def _cmd_sweep(args) -> int:
    config = {
        "template": args.template,
        "mode": args.mode,
        "count": args.count,
        "reference": args.reference,
        "alpha_lo": args.alpha_lo,
        "alpha_hi": args.alpha_hi,
        "alpha_sample_seed": args.alpha_sample_seed,
        "datasets": _suite_dicts(args),
        "train_seeds": [args.seed + i for i in range(args.seeds)],
        "steps": args.steps,
        "optimizer": args.optimizer,
    }
    run_dir, results = execute("sweep", config, args.out_dir)
    print(
        f"reference alpha {results['reference_alpha']} -> mean OOD MSE "
        f"{results['reference_mse']:.6g}, rank {results['reference_rank']} "
        f"of {results['count']} sampled values"
    )
    print(f"run dir: {run_dir}")
    return 0


def _cmd_histogram(args) -> int:
    config = {
        "activation": args.activation,
        "datasets": _suite_dicts(args),
        "bins": args.bins,
        "lo": args.lo,
        "hi": args.hi,
        "train_seed": args.seed,
        "steps": args.steps,
        "optimizer": args.optimizer,
        "probe_rows": args.probe_rows,
    }
    run_dir, results = execute("histogram", config, args.out_dir)
    print(
        f"{results['total']} pre-activation samples; "
        f"{results['outside_unit_fraction']:.1%} outside [-1, 1]"
    )
    print(f"run dir: {run_dir}")
    return 0


def _cmd_export_dataset(args) -> int:
    suite = resolve_suite(args.suite, args.suite_seed)
    index = args.index
    if not 0 <= index < len(suite):
        raise ValueError(f"--index {index} out of range for suite of {len(suite)}")
    config = {"dataset": datagen.spec_to_dict(suite[index])}
    run_dir, results = execute("export-dataset", config, args.out_dir)
    print(f"exported {results['family']} dataset ({results['n_train']}+{results['n_test']} rows)")
    print(f"run dir: {run_dir}")
    return 0


def _cmd_replay(args) -> int:
    run_dir = replay(args.record, args.out_dir)
    print(f"run dir: {run_dir}")
    return 0


def _cmd_zoo_list(args) -> int:
    header = ["name", "display_name", "kind", "trainability", "flop_cost", "source_dataset"]
    print(",".join(header))
    for row in zoo.metadata_rows():
        print(",".join(str(row[k]) for k in header))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labcli",
        description="activation-function lab: evaluate, evolve, sweep, inspect",
    )
    parser.add_argument("--version", action="version", version=f"labcli {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="train/evaluate activations on a suite")
    p.add_argument("--activations", required=True, help="comma list of zoo names or DSL texts")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("evolve", help="run the evolutionary search")
    _add_common(p, seeds=False)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--proposals", type=int, default=8, help="proposals per generation")
    p.add_argument("--parents", type=int, default=2, help="parents per prompt")
    p.add_argument("--eval-seeds", type=int, default=3, help="evaluation seeds per candidate")
    p.add_argument("--top-k", type=int, default=16)
    p.add_argument("--mutator", choices=("grammar", "external"), default="grammar")
    p.add_argument("--proposer-cmd", default=None, help="external proposer command line")
    p.add_argument("--proposer-timeout", type=float, default=60.0)
    p.add_argument("--no-batch-stats", action="store_true",
                   help="reject candidates using batch-mean/batch-std")
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("sweep", help="sweep a constant slot in a template expression")
    p.add_argument("--template", required=True,
                   help="DSL text with the token 'alpha' exactly once")
    p.add_argument("--mode", choices=("random", "grid"), default="random")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--reference", type=float, required=True,
                   help="reference alpha to rank against the samples")
    p.add_argument("--alpha-lo", type=float, default=0.0)
    p.add_argument("--alpha-hi", type=float, default=1.0)
    p.add_argument("--alpha-sample-seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("histogram", help="histogram of trained-model pre-activations")
    p.add_argument("--activation", required=True)
    p.add_argument("--bins", type=int, default=80)
    p.add_argument("--lo", type=float, default=-4.0)
    p.add_argument("--hi", type=float, default=4.0)
    p.add_argument("--probe-rows", type=int, default=1024)
    _add_common(p, seeds=False)
    p.set_defaults(func=_cmd_histogram)

    p = sub.add_parser("export-dataset", help="realize one suite dataset to CSV")
    p.add_argument("--index", type=int, default=0, help="dataset index within the suite")
    _add_common(p, seeds=False)
    p.set_defaults(func=_cmd_export_dataset)

    p = sub.add_parser("replay", help="re-run a record and verify artifacts")
    p.add_argument("record", help="path to a record.json")
    p.add_argument("--out-dir", default="runs")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("zoo", help="zoo metadata")
    zoo_sub = p.add_subparsers(dest="zoo_command", required=True)
    pz = zoo_sub.add_parser("list", help="machine-readable table of the zoo")
    pz.set_defaults(func=_cmd_zoo_list)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
