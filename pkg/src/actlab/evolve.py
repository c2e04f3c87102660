"""Evolutionary search over the activation DSL.

A candidate database keeps every proposal ever made (append-only) plus a
top-K index; parents are drawn from the top-K with softmax weights over
fitness.  Mutation is either the built-in grammar mutator below or an
external proposer process speaking the line-delimited protocol in
:mod:`actlab.proposer`.  Fitness is the negative mean out-of-distribution
MSE of small MLPs trained on the configured datasets (higher is better);
candidates over the FLOP budget are rejected before any training happens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprlang
from .datagen import DatasetSpec, realize
from .exprlang import (
    BATCH_STATS,
    BINARY_OPS,
    DEFAULT_BUDGET,
    UNARY_OPS,
    BatchStat,
    Binary,
    Const,
    Expr,
    FlopBudget,
    Input,
    Unary,
    validate,
)
from .nn import MlpConfig, evaluate, train
from .proposer import (
    DEFAULT_INSTRUCTION,
    ExternalProposer,
    ProposerProtocolError,
    ProposerTimeout,
)
from .tensor import SeededRng

__all__ = [
    "Candidate",
    "CandidateDb",
    "EvolveConfig",
    "GrammarMutator",
    "Scorer",
    "MSE_SENTINEL",
    "seed_db",
    "score",
    "run",
]

MSE_SENTINEL = 1e6  # worst-case MSE charged to diverging/non-finite runs

SEED_EXPR_TEXT = "(relu x)"


@dataclass
class Candidate:
    id: int
    expr: Expr | None
    expr_text: str
    fitness: float | None
    flop_cost: int | None
    parent_ids: tuple[int, ...]
    generation: int
    status: str  # "scored" | "rejected-budget" | "failed"
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "expr_text": self.expr_text,
            "fitness": self.fitness,
            "flop_cost": self.flop_cost,
            "parent_ids": list(self.parent_ids),
            "generation": self.generation,
            "status": self.status,
            "error": self.error,
        }


class CandidateDb:
    """Append-only candidate log with a fitness-ordered top-K index."""

    def __init__(self, top_k: int = 16):
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        self.top_k = top_k
        self.candidates: list[Candidate] = []

    def next_id(self) -> int:
        return len(self.candidates)

    def insert(self, candidate: Candidate) -> None:
        if candidate.id != len(self.candidates):
            raise ValueError(f"candidate ids must be sequential, got {candidate.id}")
        if candidate.status == "scored" and not (
            candidate.fitness is not None and math.isfinite(candidate.fitness)
        ):
            raise ValueError("scored candidates need finite fitness")
        self.candidates.append(candidate)

    def scored(self) -> list[Candidate]:
        return [c for c in self.candidates if c.status == "scored"]

    def top(self) -> list[Candidate]:
        # ties break toward cheaper, then earlier, candidates
        ranked = sorted(
            self.scored(), key=lambda c: (-c.fitness, c.flop_cost, c.id)
        )
        return ranked[: self.top_k]

    @property
    def best(self) -> Candidate | None:
        top = self.top()
        return top[0] if top else None

    @property
    def best_fitness(self) -> float:
        best = self.best
        return best.fitness if best is not None else -math.inf

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class EvolveConfig:
    datasets: tuple[DatasetSpec, ...]
    generations: int = 200
    proposals_per_generation: int = 8
    parents_per_prompt: int = 2
    budget: FlopBudget = DEFAULT_BUDGET
    eval_seeds: tuple[int, ...] = (0, 1, 2)
    mutator: str = "grammar"  # "grammar" | "external"
    top_k: int = 16
    allow_batch_stats: bool = True
    seed: int = 0
    train_steps: int = 50
    optimizer: str = "adam"
    temperature: float = 1.0
    proposer_cmd: str | Sequence[str] | None = None
    proposer_timeout: float = 60.0
    instruction: str = DEFAULT_INSTRUCTION

    def __post_init__(self):
        if not self.datasets:
            raise ValueError("need at least one fitness dataset")
        if min(self.proposals_per_generation, self.parents_per_prompt, self.top_k) < 1:
            raise ValueError("counts must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not self.eval_seeds:
            raise ValueError("need at least one evaluation seed")
        if self.mutator not in ("grammar", "external"):
            raise ValueError(f"unknown mutator {self.mutator!r}")
        if self.mutator == "external" and self.proposer_cmd is None:
            raise ValueError("external mutator needs proposer_cmd")


# ---------------------------------------------------------------------------
# Grammar mutator

_MUTATIONS = ("point", "const", "insert", "delete", "crossover")
_MUTATION_P = (0.25, 0.25, 0.2, 0.15, 0.15)

_POW_EXPONENTS = (0.5, 2.0, 3.0)


class _MutationFailed(Exception):
    pass


class GrammarMutator:
    """Random structural edits standing in for an external proposer.

    One of five operators is drawn per attempt: point op mutation,
    multiplicative constant perturbation (factor exp(N(0, 0.3))), wrapper
    insertion, node deletion (splicing a child), or subtree crossover
    between two parents.  Results are validated and depth-capped; after
    ``max_retries`` failed attempts the first parent is returned as-is.
    """

    def __init__(
        self,
        allow_batch_stats: bool = True,
        max_depth: int = 12,
        max_retries: int = 20,
    ):
        self.allow_batch_stats = allow_batch_stats
        self.max_depth = max_depth
        self.max_retries = max_retries

    def mutate(self, parents: Sequence[Expr], gen: np.random.Generator) -> Expr:
        if not parents:
            raise ValueError("need at least one parent")
        for _ in range(self.max_retries):
            kind = _MUTATIONS[gen.choice(len(_MUTATIONS), p=_MUTATION_P)]
            try:
                result = self._apply(kind, parents, gen)
                validate(result)
            except (_MutationFailed, exprlang.ExprError):
                continue
            if exprlang.depth(result) > self.max_depth:
                continue
            if not self.allow_batch_stats and _has_batch_stat(result):
                continue
            return result
        return parents[0]

    # each operator raises _MutationFailed when it has no valid site

    def _apply(self, kind: str, parents: Sequence[Expr], gen) -> Expr:
        tree = parents[0]
        if kind == "point":
            return self._point(tree, gen)
        if kind == "const":
            return self._perturb_const(tree, gen)
        if kind == "insert":
            return self._insert(tree, gen)
        if kind == "delete":
            return self._delete(tree, gen)
        donor = parents[1] if len(parents) > 1 else parents[0]
        return self._crossover(tree, donor, gen)

    def _pick(self, items: list, gen) -> object:
        if not items:
            raise _MutationFailed()
        return items[gen.choice(len(items))]

    def _point(self, tree: Expr, gen) -> Expr:
        sites = [
            p
            for p in exprlang.positions(tree)
            if isinstance(exprlang.subtree_at(tree, p), (Unary, Binary, BatchStat))
        ]
        path = self._pick(sites, gen)
        node = exprlang.subtree_at(tree, path)
        if isinstance(node, Unary):
            choices = [op for op in UNARY_OPS if op != node.op]
            new: Expr = Unary(str(self._pick(choices, gen)), node.child)
        elif isinstance(node, Binary):
            choices = [op for op in BINARY_OPS if op != node.op]
            if not isinstance(node.right, Const):
                choices = [op for op in choices if op != "pow"]
            new = Binary(str(self._pick(choices, gen)), node.left, node.right)
        else:
            other = [s for s in BATCH_STATS if s != node.stat]
            new = BatchStat(str(self._pick(other, gen)), node.child)
        return exprlang.replace_at(tree, path, new)

    def _perturb_const(self, tree: Expr, gen) -> Expr:
        sites = [
            p
            for p in exprlang.positions(tree, skip_pow_exponent=False)
            if isinstance(exprlang.subtree_at(tree, p), Const)
        ]
        path = self._pick(sites, gen)
        node = exprlang.subtree_at(tree, path)
        factor = math.exp(gen.normal(0.0, 0.3))
        return exprlang.replace_at(tree, path, Const(node.value * factor))

    def _insert(self, tree: Expr, gen) -> Expr:
        path = self._pick(exprlang.positions(tree), gen)
        target = exprlang.subtree_at(tree, path)
        unary_pool = list(UNARY_OPS)
        if self.allow_batch_stats:
            unary_pool += ["batch-mean", "batch-std"]
        if gen.random() < 0.5:
            op = str(self._pick(unary_pool, gen))
            if op.startswith("batch-"):
                new: Expr = BatchStat(op.removeprefix("batch-"), target)
            else:
                new = Unary(op, target)
        else:
            op = str(self._pick(list(BINARY_OPS), gen))
            if op == "pow":
                exponent = float(self._pick(list(_POW_EXPONENTS), gen))
                new = Binary("pow", target, Const(exponent))
            else:
                other: Expr = Input() if gen.random() < 0.5 else Const(
                    float(gen.normal(0.0, 1.0))
                )
                if gen.random() < 0.5:
                    new = Binary(op, target, other)
                else:
                    new = Binary(op, other, target)
        return exprlang.replace_at(tree, path, new)

    def _delete(self, tree: Expr, gen) -> Expr:
        sites = [
            p
            for p in exprlang.positions(tree)
            if isinstance(exprlang.subtree_at(tree, p), (Unary, Binary, BatchStat))
        ]
        path = self._pick(sites, gen)
        node = exprlang.subtree_at(tree, path)
        if isinstance(node, Binary):
            child = node.left if gen.random() < 0.5 else node.right
        else:
            child = node.child
        return exprlang.replace_at(tree, path, child)

    def _crossover(self, tree: Expr, donor: Expr, gen) -> Expr:
        path = self._pick(exprlang.positions(tree), gen)
        donor_path = self._pick(exprlang.positions(donor), gen)
        graft = exprlang.subtree_at(donor, donor_path)
        return exprlang.replace_at(tree, path, graft)


def _has_batch_stat(expr: Expr) -> bool:
    return any(isinstance(node, BatchStat) for node, _ in exprlang.iter_nodes(expr))


# ---------------------------------------------------------------------------
# Scoring


class Scorer:
    """Trains/evaluates candidates on the config's datasets; caches the
    realized datasets so every candidate sees identical data."""

    def __init__(self, cfg: EvolveConfig):
        self.cfg = cfg
        self._samples = [realize(spec) for spec in cfg.datasets]

    def score(self, expr: Expr) -> float:
        """Negative mean OOD MSE across datasets and evaluation seeds."""
        cfg = self.cfg
        mses = []
        for i, spec in enumerate(cfg.datasets):
            data = self._samples[i]
            mlp_cfg = MlpConfig(
                input_dim=spec.input_dim,
                train_steps=cfg.train_steps,
                optimizer=cfg.optimizer,
            )
            for eval_seed in cfg.eval_seeds:
                rng = SeededRng(eval_seed).substream(f"score/{i}")
                try:
                    params, report = train(mlp_cfg, expr, data, rng)
                except exprlang.ExprError:
                    mses.append(MSE_SENTINEL)
                    continue
                if report.diverged:
                    mses.append(MSE_SENTINEL)
                    continue
                mse = evaluate(params, expr, data.test_x, data.test_y)
                mses.append(mse if math.isfinite(mse) and mse < MSE_SENTINEL else MSE_SENTINEL)
        return -float(np.mean(mses))


def score(expr: Expr, cfg: EvolveConfig) -> float:
    return Scorer(cfg).score(expr)


def seed_db(cfg: EvolveConfig, scorer: Scorer | None = None) -> CandidateDb:
    """Fresh database holding only the scored seed candidate (ReLU)."""
    scorer = scorer or Scorer(cfg)
    db = CandidateDb(top_k=cfg.top_k)
    expr = exprlang.parse(SEED_EXPR_TEXT)
    db.insert(
        Candidate(
            id=0,
            expr=expr,
            expr_text=SEED_EXPR_TEXT,
            fitness=scorer.score(expr),
            flop_cost=exprlang.cost(expr),
            parent_ids=(),
            generation=0,
            status="scored",
        )
    )
    return db


def _sample_parents(
    db: CandidateDb, cfg: EvolveConfig, gen: np.random.Generator
) -> list[Candidate]:
    top = db.top()
    if not top:
        raise ValueError("database has no scored candidates to select from")
    fitness = np.array([c.fitness for c in top])
    z = fitness / cfg.temperature
    weights = np.exp(z - z.max())
    p = weights / weights.sum()
    idx = gen.choice(len(top), size=cfg.parents_per_prompt, replace=True, p=p)
    return [top[i] for i in idx]


def run(
    cfg: EvolveConfig,
    db: CandidateDb,
    progress: Callable[[int, CandidateDb], None] | None = None,
) -> CandidateDb:
    """Run the configured number of generations against a seeded database.

    One proposal cycle: sample parents from the top-K, generate a
    candidate, hard-reject it if over the FLOP budget, otherwise train and
    score it, and append it to the log.  A malformed or crashing proposal
    only fails its own candidate.  Proposer timeouts propagate only after
    three in a row.
    """
    scorer = Scorer(cfg)
    gen_rng = SeededRng(cfg.seed).substream("evolve").generator
    mutator = GrammarMutator(allow_batch_stats=cfg.allow_batch_stats)
    proposer = None
    if cfg.mutator == "external":
        proposer = ExternalProposer(
            cfg.proposer_cmd, instruction=cfg.instruction, timeout=cfg.proposer_timeout
        )
    consecutive_timeouts = 0
    try:
        for generation in range(1, cfg.generations + 1):
            for _ in range(cfg.proposals_per_generation):
                parents = _sample_parents(db, cfg, gen_rng)
                parent_ids = tuple(c.id for c in parents)
                cand_id = db.next_id()

                expr: Expr | None = None
                text = ""
                error = ""
                if proposer is None:
                    expr = mutator.mutate([c.expr for c in parents], gen_rng)
                    text = exprlang.print_expr(expr)
                else:
                    try:
                        text = proposer.propose(
                            [(c.expr_text, c.fitness, c.flop_cost) for c in parents],
                            budget=cfg.budget.max_flops_per_element,
                        )
                        consecutive_timeouts = 0
                    except ProposerTimeout:
                        consecutive_timeouts += 1
                        if consecutive_timeouts >= 3:
                            raise
                        error = "ProposerTimeout"
                    except ProposerProtocolError as exc:
                        consecutive_timeouts = 0
                        error = f"ProposerProtocolError: {exc}"
                    if not error:
                        try:
                            expr = exprlang.parse(text)
                        except exprlang.ExprError as exc:
                            error = f"{type(exc).__name__}: {exc}"
                            expr = None

                if expr is None:
                    db.insert(
                        Candidate(
                            cand_id, None, text, None, None,
                            parent_ids, generation, "failed", error,
                        )
                    )
                    continue

                flops = exprlang.cost(expr)
                if flops > cfg.budget.max_flops_per_element:
                    db.insert(
                        Candidate(
                            cand_id, expr, exprlang.print_expr(expr), None, flops,
                            parent_ids, generation, "rejected-budget",
                        )
                    )
                    continue

                try:
                    fitness = scorer.score(expr)
                    status, error = "scored", ""
                except Exception as exc:  # crash isolation: fail just this one
                    fitness, status = None, "failed"
                    error = f"{type(exc).__name__}: {exc}"
                db.insert(
                    Candidate(
                        cand_id, expr, exprlang.print_expr(expr), fitness, flops,
                        parent_ids, generation, status, error,
                    )
                )
            if progress is not None:
                progress(generation, db)
    finally:
        if proposer is not None:
            proposer.close()
    return db
