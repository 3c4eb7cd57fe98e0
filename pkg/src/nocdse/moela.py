"""Hybrid decomposition EA with ML-guided local search, plus two baselines.

The run decomposes the problem into pop_n scalar sub-problems (one weight
vector each, Tchebycheff aggregation against a running ideal point) and
iterates: pick local-search start points (random early, surrogate-ranked
later), descend, merge trajectories into the training pool, fold results
into the population, retrain the surrogate, then run one EA pass over all
sub-problems. run_moead drops the local-search half; run_ls_only drops the
EA half. All three share the initializer, so equal seeds mean equal
initial populations.

Per-iteration randomness is derived from (seed, purpose tag, iteration),
never from a stream carried across iterations; a checkpoint therefore only
needs the data state (population, training pool, forest, cache, bounds,
ideal point, log) to resume bit-identically.

Logged `phv` is the best population hypervolume reached so far, normalized
by bounds frozen after initialization. A per-iteration population
hypervolume is not monotone under Tchebycheff replacement (a replacement
can shrink the dominated volume), so the log column tracks the running
best, which is what the convergence metrics consume.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import objectives as obj_mod
from .moo import ObjectiveBounds, normalized_population_phv, tchebycheff, weight_vectors
from .problem import Design, ProblemInstance, check_constraints, crossover, mutate, random_design
from .runlog import LogRecord, RunLog
from .search import (Forest, RFHyper, TrainingSet, greedy_local_search, ml_guide,
                     rf_train)

_TAG_INIT, _TAG_PAIR, _TAG_SELECT, _TAG_SEARCH, _TAG_UPDATE, _TAG_TRAIN, _TAG_EA = range(7)


class BudgetExhausted(Exception):
    """Internal control flow: the distinct-evaluation budget is spent."""


@dataclass
class SubProblem:
    index: int
    weight: np.ndarray
    neighbors: tuple[int, ...]   # T nearest sub-problems by weight distance, self included
    design: Design
    objectives: np.ndarray


@dataclass(frozen=True)
class RunConfig:
    pop_n: int = 50
    gen: int = 1000
    iter_early: int = 2
    n_local: int = 5
    delta: float = 0.9
    neighborhood: int = 10
    n_r: int = 2
    eval_budget: int | None = None
    stop_time_s: float | None = None
    seeds: tuple[int, ...] = ()
    ls_steps: int = 100
    ls_samples: int = 64
    rf_trees: int = 100
    rf_max_depth: int = 12
    rf_min_leaf: int = 4
    freeze_ideal: bool = False

    def __post_init__(self):
        if not (1 <= self.n_local <= self.pop_n):
            raise ValueError("need 1 <= n_local <= pop_n")
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError("delta must be in [0, 1]")
        if self.neighborhood < 2 or self.neighborhood > self.pop_n:
            raise ValueError("need 2 <= neighborhood <= pop_n")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        if self.gen < 0 or self.ls_steps < 1 or self.ls_samples < 1:
            raise ValueError("gen >= 0, ls_steps >= 1, ls_samples >= 1 required")
        if self.eval_budget is not None and self.eval_budget < self.pop_n:
            raise ValueError("eval_budget must cover the initial population")

    def rf_hyper(self) -> RFHyper:
        return RFHyper(tree_count=self.rf_trees, max_depth=self.rf_max_depth,
                       min_leaf=self.rf_min_leaf)

    def to_dict(self) -> dict:
        return {
            "pop_n": self.pop_n, "gen": self.gen, "iter_early": self.iter_early,
            "n_local": self.n_local, "delta": self.delta,
            "neighborhood": self.neighborhood, "n_r": self.n_r,
            "eval_budget": self.eval_budget, "stop_time_s": self.stop_time_s,
            "seeds": list(self.seeds), "ls_steps": self.ls_steps,
            "ls_samples": self.ls_samples, "rf_trees": self.rf_trees,
            "rf_max_depth": self.rf_max_depth, "rf_min_leaf": self.rf_min_leaf,
            "freeze_ideal": self.freeze_ideal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls().to_dict())
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class RunResult:
    algo: str
    seed: int
    instance_digest: str
    population: list[SubProblem]
    log: RunLog
    forest: Forest | None
    config: RunConfig
    constraint_violations: list[str]

    @property
    def forest_digest(self) -> str | None:
        return self.forest.digest if self.forest is not None else None


# ---------------------------------------------------------------------------
# Evaluation context
# ---------------------------------------------------------------------------

class EvalContext:
    """Shared evaluation state: cache, running bounds, running ideal point,
    and distinct-evaluation budget enforcement."""

    def __init__(self, instance: ProblemInstance, eval_budget: int | None = None,
                 freeze_z: bool = False):
        self.instance = instance
        self.cache = obj_mod.EvalCache()
        m = instance.objective_count
        self.bounds = ObjectiveBounds.empty(m)
        self.z = np.full(m, np.inf)
        self.eval_budget = eval_budget
        self.freeze_z = freeze_z

    @property
    def eval_count(self) -> int:
        return self.cache.eval_count

    def exhausted(self) -> bool:
        return self.eval_budget is not None and self.cache.eval_count >= self.eval_budget

    def evaluate(self, design: Design) -> np.ndarray:
        if self.cache.get(design.digest) is None and self.exhausted():
            raise BudgetExhausted
        vec = obj_mod.evaluate(self.instance, design, self.cache)
        self.bounds.update(vec)
        if not self.freeze_z:
            np.minimum(self.z, vec, out=self.z)
        return vec


# ---------------------------------------------------------------------------
# Population update (Tchebycheff elitism with replacement cap)
# ---------------------------------------------------------------------------

def update_population(subs: list[SubProblem], design: Design, obj: np.ndarray,
                      pool: Sequence[int], z: np.ndarray, n_r: int,
                      rng: np.random.Generator,
                      audit: Callable[[Design], None] | None = None) -> int:
    """Scan pool in seeded random order; replace incumbents the offspring
    strictly improves (Tchebycheff at z), at most n_r of them. Returns the
    replacement count."""
    order = rng.permutation(len(pool))
    replaced = 0
    for oi in order:
        j = pool[oi]
        sub = subs[j]
        if tchebycheff(obj, sub.weight, z) < tchebycheff(sub.objectives, sub.weight, z):
            subs[j] = replace(sub, design=design, objectives=obj)
            if audit is not None:
                audit(design)
            replaced += 1
            if replaced >= n_r:
                break
    return replaced


def parent_pool(sub: SubProblem, pop_n: int, delta: float,
                rng: np.random.Generator) -> tuple[int, ...]:
    """Neighborhood with probability delta, otherwise the whole population."""
    if rng.random() < delta:
        return sub.neighbors
    return tuple(range(pop_n))


def ea_step(subs: list[SubProblem], instance: ProblemInstance, config: RunConfig,
            ctx: EvalContext, rng: np.random.Generator,
            audit: Callable[[Design], None] | None = None) -> None:
    """One decomposition-EA pass: per sub-problem, two parents from its pool,
    crossover + mutation, evaluation, and a capped pool update."""
    n = len(subs)
    for i in range(n):
        pool = parent_pool(subs[i], n, config.delta, rng)
        picks = rng.choice(len(pool), size=2, replace=False)
        pa = subs[pool[int(picks[0])]].design
        pb = subs[pool[int(picks[1])]].design
        child = crossover(instance, pa, pb, rng)
        child = mutate(instance, child, rng)
        obj = ctx.evaluate(child)
        update_population(subs, child, obj, pool, ctx.z, config.n_r, rng, audit)


# ---------------------------------------------------------------------------
# Run state / checkpointing
# ---------------------------------------------------------------------------

@dataclass
class _RunState:
    subs: list[SubProblem]
    training: TrainingSet
    forest: Forest | None
    ctx: EvalContext
    log: RunLog
    init_bounds: ObjectiveBounds
    best_phv: float = 0.0
    next_iter: int = 1
    elapsed_offset_ms: float = 0.0
    violations: list[str] = field(default_factory=list)


def _neighborhoods(weights: np.ndarray, t: int) -> list[tuple[int, ...]]:
    n = len(weights)
    out = []
    for i in range(n):
        d = np.linalg.norm(weights - weights[i], axis=1)
        order = np.lexsort((np.arange(n), d))  # distance, then index
        out.append(tuple(int(j) for j in order[:t]))
    return out


def checkpoint_to_dict(state: _RunState, algo: str, seed: int, config: RunConfig) -> dict:
    x, y = (state.training.as_arrays() if len(state.training) else
            (np.zeros((0, 0)), np.zeros(0)))
    return {
        "format": "noc-checkpoint/1",
        "algo": algo,
        "seed": seed,
        "config": config.to_dict(),
        "next_iter": state.next_iter,
        "best_phv": state.best_phv,
        "elapsed_offset_ms": state.elapsed_offset_ms,
        "z": state.ctx.z.tolist(),
        "bounds": {"lo": state.ctx.bounds.lo.tolist(), "hi": state.ctx.bounds.hi.tolist()},
        "init_bounds": {"lo": state.init_bounds.lo.tolist(),
                        "hi": state.init_bounds.hi.tolist()},
        "cache": {k: list(map(float, v)) for k, v in state.ctx.cache._store.items()},
        "eval_count": state.ctx.cache.eval_count,
        "population": [{
            "index": s.index,
            "weight": s.weight.tolist(),
            "neighbors": list(s.neighbors),
            "design": s.design.to_dict(),
            "objectives": s.objectives.tolist(),
        } for s in state.subs],
        "training": {"x": x.tolist(), "y": y.tolist()},
        "forest": state.forest.to_dict() if state.forest is not None else None,
        "log": state.log.to_jsonl(),
        "timing": state.log.timing(),
        "violations": state.violations,
    }


def _state_from_checkpoint(d: dict, instance: ProblemInstance,
                           config: RunConfig) -> _RunState:
    if d.get("format") != "noc-checkpoint/1":
        raise ValueError("not a noc-checkpoint/1 document")
    ctx = EvalContext(instance, eval_budget=config.eval_budget,
                      freeze_z=config.freeze_ideal)
    ctx.z = np.array(d["z"], dtype=float)
    ctx.bounds = ObjectiveBounds(lo=np.array(d["bounds"]["lo"]),
                                 hi=np.array(d["bounds"]["hi"]))
    for k, v in d["cache"].items():
        vec = np.array(v, dtype=float)
        vec.flags.writeable = False
        ctx.cache._store[k] = vec
    ctx.cache.eval_count = d["eval_count"]
    subs = [SubProblem(
        index=s["index"],
        weight=np.array(s["weight"], dtype=float),
        neighbors=tuple(s["neighbors"]),
        design=Design.from_dict(s["design"]),
        objectives=np.array(s["objectives"], dtype=float),
    ) for s in d["population"]]
    training = TrainingSet()
    tx = np.array(d["training"]["x"], dtype=float)
    ty = np.array(d["training"]["y"], dtype=float)
    if len(ty):
        training = TrainingSet.from_arrays(tx, ty)
    forest = Forest.from_dict(d["forest"]) if d["forest"] is not None else None
    log = RunLog.from_jsonl(d["log"], d.get("timing"))
    return _RunState(
        subs=subs, training=training, forest=forest, ctx=ctx, log=log,
        init_bounds=ObjectiveBounds(lo=np.array(d["init_bounds"]["lo"]),
                                    hi=np.array(d["init_bounds"]["hi"])),
        best_phv=d["best_phv"], next_iter=d["next_iter"],
        elapsed_offset_ms=d["elapsed_offset_ms"],
        violations=list(d["violations"]),
    )


# ---------------------------------------------------------------------------
# The main loop
# ---------------------------------------------------------------------------

def _seed_seq(seed: int, tag: int, *rest: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(tag), *[int(r) for r in rest]])


def _init_state(instance: ProblemInstance, config: RunConfig, seed: int,
                algo: str, audit: bool) -> _RunState:
    n = config.pop_n
    m = instance.objective_count
    weights = weight_vectors(n, m)
    neigh = _neighborhoods(weights, config.neighborhood)
    ctx = EvalContext(instance, eval_budget=config.eval_budget,
                      freeze_z=False)  # z must initialize from the first evaluations
    designs = [random_design(instance, _seed_seq(seed, _TAG_INIT, i)) for i in range(n)]
    pairing = np.random.default_rng(_seed_seq(seed, _TAG_PAIR)).permutation(n)
    state = _RunState(
        subs=[], training=TrainingSet(), forest=None, ctx=ctx,
        log=RunLog(algo=algo, instance_digest=instance.digest, m_obj=m, seed=seed),
        init_bounds=ObjectiveBounds.empty(m),
    )
    for i in range(n):
        d = designs[int(pairing[i])]
        obj = ctx.evaluate(d)
        if audit:
            _audit_design(instance, d, state.violations)
        state.subs.append(SubProblem(index=i, weight=weights[i],
                                     neighbors=neigh[i], design=d, objectives=obj))
    ctx.freeze_z = config.freeze_ideal
    state.init_bounds = ctx.bounds.copy()
    return state


def _audit_design(instance: ProblemInstance, design: Design,
                  sink: list[str]) -> None:
    rep = check_constraints(instance, design)
    sink.extend(rep.violations)


def _append_record(state: _RunState, iteration: int, t0: float) -> LogRecord:
    pop = np.stack([s.objectives for s in state.subs])
    cur = normalized_population_phv(pop, state.init_bounds)
    state.best_phv = max(state.best_phv, cur)
    rec = LogRecord(
        iteration=iteration,
        evaluations=state.ctx.cache.eval_count,
        phv=state.best_phv,
        z=state.ctx.z.copy(),
        population=pop,
        elapsed_ms=state.elapsed_offset_ms + (time.monotonic() - t0) * 1000.0,
    )
    state.log.append(rec)
    return rec


def _local_phase(state: _RunState, instance: ProblemInstance, config: RunConfig,
                 seed: int, it: int, audit: bool) -> None:
    subs = state.subs
    sel_rng = np.random.default_rng(_seed_seq(seed, _TAG_SELECT, it))
    if it <= config.iter_early or state.forest is None:
        starts = [int(i) for i in sel_rng.choice(len(subs), size=config.n_local,
                                                 replace=False)]
    else:
        members = [(s.design, s.weight, s.objectives) for s in subs]
        starts = ml_guide(state.forest, members, config.n_local, state.ctx.bounds)
    for k, idx in enumerate(starts):
        z_snap = state.ctx.z.copy()
        best, traj = greedy_local_search(
            instance, subs[idx].design, subs[idx].weight, z_snap,
            config.ls_steps, _seed_seq(seed, _TAG_SEARCH, it, k), state.ctx,
            samples=config.ls_samples)
        state.training.extend(traj.samples())
        best_obj = state.ctx.evaluate(best)
        upd_rng = np.random.default_rng(_seed_seq(seed, _TAG_UPDATE, it, k))
        audit_cb = (lambda d: _audit_design(instance, d, state.violations)) if audit else None
        update_population(subs, best, best_obj, subs[idx].neighbors,
                          state.ctx.z, config.n_r, upd_rng, audit_cb)
    if len(state.training) >= 2:
        state.forest = rf_train(state.training, config.rf_hyper(),
                                seed=_seed_seq(seed, _TAG_TRAIN, it))


def _run(instance: ProblemInstance, config: RunConfig, seed: int, algo: str,
         audit: bool = False,
         on_record: Callable[[LogRecord], None] | None = None,
         resume_state: dict | None = None,
         checkpoint_every: int = 0,
         on_checkpoint: Callable[[dict], None] | None = None) -> RunResult:
    seed = int(seed)
    t0 = time.monotonic()
    if resume_state is not None:
        state = _state_from_checkpoint(resume_state, instance, config)
    else:
        state = _init_state(instance, config, seed, algo, audit)
        rec = _append_record(state, 0, t0)
        if on_record is not None:
            on_record(rec)

    for it in range(state.next_iter, config.gen + 1):
        if state.ctx.exhausted():
            break
        if (config.stop_time_s is not None
                and state.elapsed_offset_ms / 1000.0 + time.monotonic() - t0
                >= config.stop_time_s):
            break
        audit_cb = (lambda d: _audit_design(instance, d, state.violations)) if audit else None
        try:
            if algo in ("moela", "lsonly"):
                _local_phase(state, instance, config, seed, it, audit)
            if algo in ("moela", "moead"):
                ea_rng = np.random.default_rng(_seed_seq(seed, _TAG_EA, it))
                ea_step(state.subs, instance, config, state.ctx, ea_rng, audit_cb)
        except BudgetExhausted:
            state.next_iter = it + 1
            rec = _append_record(state, it, t0)
            if on_record is not None:
                on_record(rec)
            break
        state.next_iter = it + 1
        rec = _append_record(state, it, t0)
        if on_record is not None:
            on_record(rec)
        if checkpoint_every and on_checkpoint is not None and it % checkpoint_every == 0:
            state.elapsed_offset_ms = rec.elapsed_ms
            on_checkpoint(checkpoint_to_dict(state, algo, seed, config))
            t0 = time.monotonic()

    return RunResult(
        algo=algo, seed=seed, instance_digest=instance.digest,
        population=state.subs, log=state.log, forest=state.forest,
        config=config, constraint_violations=state.violations,
    )


def run_moela(instance: ProblemInstance, config: RunConfig, seed: int,
              **kw) -> RunResult:
    """Full hybrid: surrogate-guided local search plus the decomposition EA."""
    return _run(instance, config, seed, "moela", **kw)


def run_moead(instance: ProblemInstance, config: RunConfig, seed: int,
              **kw) -> RunResult:
    """Pure decomposition EA baseline: no local search, no surrogate."""
    return _run(instance, config, seed, "moead", **kw)


def run_ls_only(instance: ProblemInstance, config: RunConfig, seed: int,
                **kw) -> RunResult:
    """Local-search-only baseline: guided descents and retraining, no EA pass."""
    return _run(instance, config, seed, "lsonly", **kw)
