"""dse: command-line front end.

Subcommands: generate (recipe -> instance), run (one algorithm, seeded,
into a run directory), evaluate (objectives + constraint report for a
design), metrics (comparison report), front (Pareto front CSV). Run logs
are written append-only as the run progresses; wall-clock timing lives in
a sidecar so identical seeded runs produce byte-identical logs.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import harness, moela
from .harness import (InstanceRecipe, MixedInstances, artifacts_from_result,
                      compare_runs, generate_instance, load_design, load_instance,
                      load_recipe, load_run, save_run)
from .moo import combined_bounds, pareto_mask, phv_trace
from .objectives import OBJECTIVE_NAMES, EvalCache, evaluate, proxy_edp
from .problem import check_constraints
from .runlog import RunLog

_RUNNERS = {"moela": moela.run_moela, "moead": moela.run_moead,
            "lsonly": moela.run_ls_only}


def _cmd_generate(args) -> int:
    recipe = load_recipe(Path(args.recipe))
    instance = generate_instance(recipe)
    harness.save_instance(instance, Path(args.out))
    print(f"instance {instance.digest} -> {args.out}")
    return 0


def _run_one(algo: str, instance_path: str, config_path: str, seed: int,
             out_dir: str, audit: bool, checkpoint_every: int, resume: bool) -> str:
    instance = load_instance(Path(instance_path))
    config = moela.RunConfig.from_dict(json.loads(Path(config_path).read_text()))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    resume_state = None
    ckpt_path = out / "checkpoint.json"
    if resume:
        if not ckpt_path.exists():
            raise FileNotFoundError(f"no checkpoint in {out}")
        resume_state = json.loads(ckpt_path.read_text())

    log_path = out / "log.jsonl"
    mode = "w"
    log_file = None

    def on_record(rec):
        nonlocal log_file
        if log_file is None:
            log_file = open(log_path, mode)
            if mode == "w":
                header = RunLog(algo=algo, instance_digest=instance.digest,
                                m_obj=instance.objective_count, seed=seed)
                log_file.write(header.header_line() + "\n")
        log_file.write(RunLog.record_line(rec) + "\n")
        log_file.flush()

    def on_checkpoint(d):
        ckpt_path.write_text(json.dumps(d))

    if resume:
        # the resumed log re-serializes in full at the end; skip streaming
        on_record = None  # type: ignore[assignment]

    result = _RUNNERS[algo](
        instance, config, seed, audit=audit, on_record=on_record,
        resume_state=resume_state,
        checkpoint_every=checkpoint_every,
        on_checkpoint=on_checkpoint if checkpoint_every else None,
    )
    if log_file is not None:
        log_file.close()
    save_run(result, out)
    return f"{algo} seed={seed}: {result.log.records[-1].evaluations} evaluations, " \
           f"final PHV {result.log.records[-1].phv:.6f} -> {out}"


def _cmd_run(args) -> int:
    if args.repeat < 1:
        raise ValueError("--repeat must be >= 1")
    if args.repeat == 1:
        print(_run_one(args.algo, args.instance, args.config, args.seed,
                       args.out, args.audit_constraints, args.checkpoint_every,
                       args.resume))
        return 0
    config = moela.RunConfig.from_dict(json.loads(Path(args.config).read_text()))
    seeds = list(config.seeds) if config.seeds else [args.seed + i for i in range(args.repeat)]
    if len(seeds) < args.repeat:
        raise ValueError("config.seeds shorter than --repeat")
    jobs = []
    with ProcessPoolExecutor(max_workers=min(args.repeat, args.workers)) as pool:
        for i in range(args.repeat):
            rep_dir = str(Path(args.out) / f"rep{i:03d}")
            jobs.append(pool.submit(_run_one, args.algo, args.instance, args.config,
                                    seeds[i], rep_dir, args.audit_constraints, 0, False))
        for j in jobs:
            print(j.result())
    return 0


def _cmd_evaluate(args) -> int:
    instance = load_instance(Path(args.instance))
    design = load_design(Path(args.design))
    report = check_constraints(instance, design)
    out = {
        "constraints": {
            "connected": report.connected,
            "planar_length_ok": report.planar_length_ok,
            "degree_ok": report.degree_ok,
            "vertical_multiplicity_ok": report.vertical_multiplicity_ok,
            "llc_on_edge": report.llc_on_edge,
            "violations": report.violations,
        },
    }
    if report.feasible:
        vec = evaluate(instance, design, EvalCache())
        out["objectives"] = {OBJECTIVE_NAMES[i]: float(v) for i, v in enumerate(vec)}
        if instance.objective_count >= 4:
            out["proxy_edp"] = proxy_edp(vec)
    print(json.dumps(out, indent=1, sort_keys=True))
    if not report.feasible:
        print("error: design is infeasible; objectives not computed", file=sys.stderr)
        return 2
    return 0


def _cmd_metrics(args) -> int:
    moela_run = load_run(Path(args.moela))
    baselines = [load_run(Path(b)) for b in args.baseline]
    report = compare_runs(moela_run, baselines)
    print(report.to_csv())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
        (out / "report.csv").write_text(report.to_csv())
        written = [str(out / "report.json"), str(out / "report.csv")]
        if not args.no_plot:
            from .plots import save_phv_figure
            logs = [moela_run.log] + [b.log for b in baselines]
            bounds = combined_bounds(logs)
            traces = []
            for art in [moela_run] + baselines:
                ev, phv, _ = phv_trace(art.log, bounds)
                traces.append((f"{art.algo} (seed {art.seed})", ev, phv))
            written.append(str(save_phv_figure(traces, out / "phv_traces.png")))
        print("wrote " + ", ".join(written), file=sys.stderr)
    return 0


def _cmd_front(args) -> int:
    art = load_run(Path(args.run))
    objs = art.population_objs
    mask = pareto_mask(objs)
    m = art.m_obj
    names = list(OBJECTIVE_NAMES[:m])
    header = names + ["proxy_edp", "design_path"]
    lines = [",".join(header)]
    run_dir = Path(art.run_dir)
    for i in np.nonzero(mask)[0]:
        row = [repr(float(v)) for v in objs[i]]
        row.append(repr(float(objs[i, 3] * objs[i, 2])) if m >= 4 else "")
        row.append(str(run_dir / art.design_paths[i]))
        lines.append(",".join(row))
    csv_text = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text)
    written = [str(out)]
    if not args.no_plot:
        from .plots import save_front_figure
        fig = out.with_suffix(".png")
        save_front_figure(objs, mask, fig,
                          title=f"{art.algo} front ({int(mask.sum())} of {len(objs)})")
        written.append(str(fig))
    print("wrote " + ", ".join(written), file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dse",
                                description="3D NoC design space exploration")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="build a problem instance from a recipe")
    g.add_argument("--recipe", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_generate)

    r = sub.add_parser("run", help="run one algorithm on an instance")
    r.add_argument("--algo", required=True, choices=sorted(_RUNNERS))
    r.add_argument("--instance", required=True)
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--repeat", type=int, default=1,
                   help="run k seeded replicas in parallel worker processes")
    r.add_argument("--workers", type=int, default=4)
    r.add_argument("--audit-constraints", action="store_true",
                   help="check every design inserted into the population")
    r.add_argument("--checkpoint-every", type=int, default=0)
    r.add_argument("--resume", action="store_true",
                   help="continue from the run directory's checkpoint")
    r.set_defaults(fn=_cmd_run)

    e = sub.add_parser("evaluate", help="objectives + constraint report for a design")
    e.add_argument("--instance", required=True)
    e.add_argument("--design", required=True)
    e.set_defaults(fn=_cmd_evaluate)

    m = sub.add_parser("metrics", help="compare a run against baselines")
    m.add_argument("--moela", required=True)
    m.add_argument("--baseline", action="append", required=True)
    m.add_argument("--out", default=None)
    m.add_argument("--no-plot", action="store_true")
    m.set_defaults(fn=_cmd_metrics)

    f = sub.add_parser("front", help="Pareto front of a run as CSV")
    f.add_argument("--run", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--no-plot", action="store_true")
    f.set_defaults(fn=_cmd_front)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError, MixedInstances,
            harness.BadRecipe) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
