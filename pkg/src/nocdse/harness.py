"""Experiment harness: synthetic instance recipes, run persistence, and
cross-algorithm comparison reports.

Traffic archetypes stand in for application captures: uniform random,
hotspot (80% of the volume converges on 10% of the PEs), and
cpu-llc-heavy (coherence-style CPU<->LLC flows at 10x the base rate).
Every artifact round-trips through JSON losslessly, and a run directory
holds everything the metrics and front tools need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .moela import RunConfig, RunResult
from .moo import (EmptyPopulation, combined_bounds, edp_improvement, phv_improvement,
                  phv_trace, speedup_factor)
from .problem import Design, EnergyParams, LatencyParams, PlatformSpec, ProblemInstance, ThermalParams
from .runlog import RunLog

TRAFFIC_MODELS = ("uniform-random", "hotspot", "cpu-llc-heavy")
POWER_DEFAULTS = {"GPU": 2.5, "CPU": 5.0, "LLC": 1.0}
POWER_JITTER = 0.2


class BadRecipe(Exception):
    pass


class MixedInstances(Exception):
    pass


# ---------------------------------------------------------------------------
# Instance recipes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceRecipe:
    grid_n: int
    layers_y: int
    cpu: int
    gpu: int
    llc: int
    planar_links: int
    vertical_links: int
    traffic_model: str = "uniform-random"
    power_model: str = "default"
    seed: int = 0
    objective_count: int = 5
    f_max: float = 100.0
    router_stages: int = 2
    link_delay_per_unit: float = 1.0
    e_link: float = 2.0e-12
    e_router: float = 1.5e-12
    r_layer: float = 0.1
    r_base: float = 0.05

    def to_dict(self) -> dict:
        return {
            "format": "noc-recipe/1",
            "grid_n": self.grid_n, "layers_y": self.layers_y,
            "cpu": self.cpu, "gpu": self.gpu, "llc": self.llc,
            "planar_links": self.planar_links, "vertical_links": self.vertical_links,
            "traffic_model": self.traffic_model, "power_model": self.power_model,
            "seed": self.seed, "objective_count": self.objective_count,
            "f_max": self.f_max, "router_stages": self.router_stages,
            "link_delay_per_unit": self.link_delay_per_unit,
            "e_link": self.e_link, "e_router": self.e_router,
            "r_layer": self.r_layer, "r_base": self.r_base,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceRecipe":
        d = dict(d)
        if d.pop("format", "noc-recipe/1") != "noc-recipe/1":
            raise BadRecipe("not a noc-recipe/1 document")
        known = {k for k in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise BadRecipe(f"unknown recipe keys: {sorted(unknown)}")
        return cls(**d)


def paper_scale_recipe(seed: int = 0, objective_count: int = 5,
                       traffic_model: str = "cpu-llc-heavy") -> InstanceRecipe:
    """The 4x4x4 heterogeneous platform: 8 CPUs, 40 GPUs, 16 LLCs,
    96 planar links (3D-mesh-equivalent) plus 48 TSVs."""
    return InstanceRecipe(grid_n=4, layers_y=4, cpu=8, gpu=40, llc=16,
                          planar_links=96, vertical_links=48,
                          traffic_model=traffic_model, seed=seed,
                          objective_count=objective_count)


def desk_recipe(grid_n: int = 3, layers_y: int = 2, seed: int = 0,
                objective_count: int = 5,
                traffic_model: str = "uniform-random") -> InstanceRecipe:
    """Small mesh-equivalent instance for fast seeded experiments."""
    a = grid_n * grid_n * layers_y
    llc = max(1, a // 5)
    cpu = max(1, a // 8)
    gpu = a - llc - cpu
    planar = layers_y * 2 * grid_n * (grid_n - 1)
    vertical = grid_n * grid_n * (layers_y - 1)
    return InstanceRecipe(grid_n=grid_n, layers_y=layers_y, cpu=cpu, gpu=gpu,
                          llc=llc, planar_links=planar, vertical_links=vertical,
                          traffic_model=traffic_model, seed=seed,
                          objective_count=objective_count)


def _traffic(recipe: InstanceRecipe, kinds: tuple[str, ...],
             rng: np.random.Generator) -> np.ndarray:
    a = len(kinds)
    f = rng.uniform(0.0, recipe.f_max, size=(a, a))
    np.fill_diagonal(f, 0.0)
    if recipe.traffic_model == "uniform-random":
        pass
    elif recipe.traffic_model == "hotspot":
        n_hot = max(1, round(0.1 * a))
        hot = rng.choice(a, size=n_hot, replace=False)
        total = f.sum()
        hot_mask = np.zeros(a, dtype=bool)
        hot_mask[hot] = True
        hot_sum = f[:, hot_mask].sum()
        cold_sum = total - hot_sum
        if hot_sum > 0 and cold_sum > 0:
            f[:, hot_mask] *= 0.8 * total / hot_sum
            f[:, ~hot_mask] *= 0.2 * total / cold_sum
    elif recipe.traffic_model == "cpu-llc-heavy":
        kind_arr = np.array(kinds)
        cpus = kind_arr == "CPU"
        llcs = kind_arr == "LLC"
        f[np.ix_(cpus, llcs)] *= 10.0
        f[np.ix_(llcs, cpus)] *= 10.0
    else:
        raise BadRecipe(f"unknown traffic model {recipe.traffic_model!r}")
    np.fill_diagonal(f, 0.0)
    return f


def generate_instance(recipe: InstanceRecipe) -> ProblemInstance:
    """Deterministic instance from a recipe; same recipe, same digest."""
    if recipe.grid_n < 2 or recipe.layers_y < 1:
        raise BadRecipe("grid_n >= 2 and layers_y >= 1 required")
    if min(recipe.cpu, recipe.llc) < 1 or recipe.gpu < 0:
        raise BadRecipe("need at least one CPU and one LLC")
    a = recipe.grid_n ** 2 * recipe.layers_y
    if recipe.cpu + recipe.gpu + recipe.llc != a:
        raise BadRecipe(f"PE mix must sum to {a} tiles")
    if recipe.power_model != "default":
        raise BadRecipe(f"unknown power model {recipe.power_model!r}")
    if recipe.traffic_model not in TRAFFIC_MODELS:
        raise BadRecipe(f"unknown traffic model {recipe.traffic_model!r}")
    spec = PlatformSpec(
        grid_n=recipe.grid_n,
        layers_y=recipe.layers_y,
        pe_inventory=(("CPU", recipe.cpu), ("GPU", recipe.gpu), ("LLC", recipe.llc)),
        link_budget_planar=recipe.planar_links,
        link_budget_vertical=recipe.vertical_links,
    )
    rng = np.random.default_rng(np.random.SeedSequence([recipe.seed, 7_102_331]))
    traffic = _traffic(recipe, spec.pe_kinds, rng)
    base = np.array([POWER_DEFAULTS[k] for k in spec.pe_kinds])
    jitter = rng.uniform(1.0 - POWER_JITTER, 1.0 + POWER_JITTER, size=a)
    return ProblemInstance(
        spec=spec,
        traffic=traffic,
        pe_power=base * jitter,
        latency_params=LatencyParams(router_stages=recipe.router_stages,
                                     link_delay_per_unit=recipe.link_delay_per_unit),
        energy_params=EnergyParams(e_link=recipe.e_link, e_router=recipe.e_router),
        thermal_params=ThermalParams(r_layers=(recipe.r_layer,) * recipe.layers_y,
                                     r_base=recipe.r_base),
        objective_count=recipe.objective_count,
    )


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _dump_json(obj: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _load_json(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def save_instance(instance: ProblemInstance, path: Path) -> None:
    _dump_json(instance.to_dict(), path)


def load_instance(path: Path) -> ProblemInstance:
    return ProblemInstance.from_dict(_load_json(path))


def save_design(design: Design, path: Path) -> None:
    _dump_json(design.to_dict(), path)


def load_design(path: Path) -> Design:
    return Design.from_dict(_load_json(path))


def save_recipe(recipe: InstanceRecipe, path: Path) -> None:
    _dump_json(recipe.to_dict(), path)


def load_recipe(path: Path) -> InstanceRecipe:
    return InstanceRecipe.from_dict(_load_json(path))


# ---------------------------------------------------------------------------
# Run directories
# ---------------------------------------------------------------------------

@dataclass
class RunArtifacts:
    """Everything a comparison needs from one finished run."""
    algo: str
    seed: int
    instance_digest: str
    m_obj: int
    log: RunLog
    population_objs: np.ndarray     # N x M
    weights: np.ndarray             # N x M
    design_paths: list[str] = field(default_factory=list)
    run_dir: str | None = None


def artifacts_from_result(result: RunResult) -> RunArtifacts:
    return RunArtifacts(
        algo=result.algo,
        seed=result.seed,
        instance_digest=result.instance_digest,
        m_obj=result.log.m_obj,
        log=result.log,
        population_objs=np.stack([s.objectives for s in result.population]),
        weights=np.stack([s.weight for s in result.population]),
    )


def save_run(result: RunResult, run_dir: Path) -> None:
    run_dir = Path(run_dir)
    (run_dir / "designs").mkdir(parents=True, exist_ok=True)
    meta = {
        "format": "noc-run/1",
        "algo": result.algo,
        "seed": result.seed,
        "instance_digest": result.instance_digest,
        "m_obj": result.log.m_obj,
        "forest_digest": result.forest_digest,
        "constraint_violations": result.constraint_violations,
    }
    _dump_json(meta, run_dir / "meta.json")
    _dump_json(result.config.to_dict(), run_dir / "config.json")
    (run_dir / "log.jsonl").write_text(result.log.to_jsonl())
    _dump_json(result.log.timing(), run_dir / "timing.json")
    design_paths = []
    for s in result.population:
        p = run_dir / "designs" / f"design_{s.index:03d}.json"
        save_design(s.design, p)
        design_paths.append(str(Path("designs") / p.name))
    pop = {
        "format": "noc-population/1",
        "objectives": [s.objectives.tolist() for s in result.population],
        "weights": [s.weight.tolist() for s in result.population],
        "designs": design_paths,
    }
    _dump_json(pop, run_dir / "population.json")
    if result.forest is not None:
        _dump_json(result.forest.to_dict(), run_dir / "forest.json")


def load_run(run_dir: Path) -> RunArtifacts:
    run_dir = Path(run_dir)
    meta = _load_json(run_dir / "meta.json")
    if meta.get("format") != "noc-run/1":
        raise ValueError(f"{run_dir} is not a run directory")
    timing = None
    if (run_dir / "timing.json").exists():
        timing = _load_json(run_dir / "timing.json")
    log = RunLog.from_jsonl((run_dir / "log.jsonl").read_text(), timing)
    pop = _load_json(run_dir / "population.json")
    return RunArtifacts(
        algo=meta["algo"],
        seed=meta["seed"],
        instance_digest=meta["instance_digest"],
        m_obj=meta["m_obj"],
        log=log,
        population_objs=np.array(pop["objectives"], dtype=float),
        weights=np.array(pop["weights"], dtype=float),
        design_paths=list(pop["designs"]),
        run_dir=str(run_dir),
    )


# ---------------------------------------------------------------------------
# Comparison report
# ---------------------------------------------------------------------------

@dataclass
class MetricRow:
    baseline_algo: str
    baseline_seed: int
    speedup_evals: float | None = None
    speedup_wall: float | None = None
    speedup_reached: bool | None = None
    baseline_converged: bool | None = None
    phv_moela: float | None = None
    phv_baseline: float | None = None
    phv_improvement: float | None = None
    edp_improvement: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "baseline_algo", "baseline_seed", "speedup_evals", "speedup_wall",
            "speedup_reached", "baseline_converged", "phv_moela", "phv_baseline",
            "phv_improvement", "edp_improvement", "notes")}


@dataclass
class MetricsReport:
    instance_digest: str
    m_obj: int
    moela_algo: str
    moela_seed: int
    rows: list[MetricRow]
    budget_axis: str = "evaluations"  # wall clock is hardware-bound; reported alongside

    def to_dict(self) -> dict:
        return {
            "format": "noc-metrics/1",
            "instance_digest": self.instance_digest,
            "m_obj": self.m_obj,
            "moela_algo": self.moela_algo,
            "moela_seed": self.moela_seed,
            "budget_axis": self.budget_axis,
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        if d.get("format") != "noc-metrics/1":
            raise ValueError("not a noc-metrics/1 document")
        rows = [MetricRow(**r) for r in d["rows"]]
        return cls(instance_digest=d["instance_digest"], m_obj=d["m_obj"],
                   moela_algo=d["moela_algo"], moela_seed=d["moela_seed"],
                   rows=rows, budget_axis=d["budget_axis"])

    COLUMNS = ("baseline_algo", "baseline_seed", "speedup_evals", "speedup_wall",
               "phv_moela", "phv_baseline", "phv_improvement", "edp_improvement",
               "notes")

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            vals = []
            for c in self.COLUMNS:
                v = getattr(r, c)
                if c == "notes":
                    v = ";".join(v)
                vals.append("" if v is None else str(v))
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def compare_runs(moela_run: RunArtifacts | RunResult,
                 baseline_runs: list[RunArtifacts | RunResult]) -> MetricsReport:
    """Speed-up factor, PHV improvement and proxy-EDP improvement of the
    designated run against each baseline. Partial failures surface as notes
    on the affected metric, the rest still report."""
    moela = moela_run if isinstance(moela_run, RunArtifacts) else artifacts_from_result(moela_run)
    rows = []
    for b in baseline_runs:
        base = b if isinstance(b, RunArtifacts) else artifacts_from_result(b)
        if (base.instance_digest != moela.instance_digest
                or base.m_obj != moela.m_obj):
            raise MixedInstances(
                f"run {base.algo}/{base.seed} is from a different instance or objective count")
        row = MetricRow(baseline_algo=base.algo, baseline_seed=base.seed)
        try:
            bounds = combined_bounds([base.log, moela.log])
            traces = (phv_trace(base.log, bounds), phv_trace(moela.log, bounds))
            sp = speedup_factor(base.log, moela.log, traces=traces)
            row.speedup_evals = sp.ratio_evals
            row.speedup_wall = sp.ratio_wall
            row.speedup_reached = sp.reached
            row.baseline_converged = sp.baseline_converged
            if not sp.reached:
                row.notes.append("target PHV never reached (speed-up reported as 0)")
            row.phv_baseline = float(traces[0][1][-1])
            row.phv_moela = float(traces[1][1][-1])
            row.phv_improvement = phv_improvement(base.log, moela.log, traces=traces)
        except EmptyPopulation as e:
            row.notes.append(f"phv metrics unavailable: {e}")
        if moela.m_obj >= 5:
            try:
                row.edp_improvement = edp_improvement(base.population_objs,
                                                      moela.population_objs)
            except EmptyPopulation as e:
                row.notes.append(f"edp metric unavailable: {e}")
        else:
            row.notes.append("edp metric needs the 5-objective scenario (thermal gate)")
        rows.append(row)
    return MetricsReport(
        instance_digest=moela.instance_digest,
        m_obj=moela.m_obj,
        moela_algo=moela.algo,
        moela_seed=moela.seed,
        rows=rows,
    )
