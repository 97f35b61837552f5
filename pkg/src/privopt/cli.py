"""Command-line entry point: run experiments, sweeps, audits, bound reports and
privacy checks from JSON configs, emitting deterministic CSV/JSON artifacts.

Exit codes: 0 success, 1 check or runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .analysis import (audit_invariants, bound_params, check_consensus,
                       check_lemma1, check_lemma2, check_theorem3,
                       compute_metrics, effective_bounds, render_report_table)
from .configs import ConfigError, RunConfig, SweepConfig, execute
from .engine import ExecutionTrace, ScheduleError
from .graphs import DisconnectedError
from .objectives import GlobalProblem, solve_centralized
from .privacy import (NonFsTraceError, NotACutError, TargetSetError,
                      complete_alternative_objectives, construct_alternative,
                      extract_view, necessity_demo, verify_indistinguishable)

METRIC_COLUMNS = ("k", "algorithm", "delta", "seed", "suboptimality",
                  "max_disagreement", "eta2", "F_k", "H_k")

_AUDIT_CHECKS = ("invariants", "lemma1", "lemma2", "consensus", "theorem3")


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _provenance(config_doc: dict, seed) -> dict:
    return {"artifact_version": __version__, "seed": seed, "config": config_doc}


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-privopt-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path: str, rows: list, provenance: dict) -> None:
    lines = [f"# timestamp={_timestamp()}",
             "# provenance=" + json.dumps(provenance, sort_keys=True),
             ",".join(METRIC_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in METRIC_COLUMNS))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_report_json(path: str | None, report: dict, provenance: dict) -> None:
    doc = {"timestamp": _timestamp(), "provenance": provenance, "report": report}
    payload = json.dumps(doc, sort_keys=True, indent=2)
    if path is None:
        print(payload)
    else:
        _atomic_write(path, payload + "\n")


def _metric_rows(trace: ExecutionTrace, problem: GlobalProblem, optimum,
                 delta=None, seed=None) -> list:
    x_star, f_star = optimum
    metrics = compute_metrics(trace, problem, reference_point=x_star, optimum_value=f_star)
    if delta is None:
        delta = trace.delta if trace.algorithm != "fs" else trace.extras.get("delta_coeff", 0.0)
    if seed is None:
        seed = trace.seed if trace.seed is not None else ""
    rows = []
    for m in metrics:
        rows.append({"k": m.round_index, "algorithm": trace.algorithm,
                     "delta": delta, "seed": seed,
                     "suboptimality": m.suboptimality,
                     "max_disagreement": m.max_disagreement,
                     "eta2": m.eta2, "F_k": m.growth_coeff, "H_k": m.offset_term})
    return rows


def _cmd_run(args) -> int:
    config = RunConfig.from_file(args.config)
    if args.record_every is not None:
        config.record_every = int(args.record_every)
        config.validate()
    os.makedirs(args.out_dir, exist_ok=True)
    trace = execute(config)
    problem = config.build_problem()
    optimum = solve_centralized(problem)
    rows = _metric_rows(trace, problem, optimum)
    provenance = _provenance(config.canonical_dict(), config.seed)
    base = os.path.join(args.out_dir, config.output_basename)
    trace_doc = trace.to_json_dict()
    trace_doc["provenance"] = provenance
    _atomic_write(base + "_trace.json", json.dumps(trace_doc) + "\n")
    write_metrics_csv(base + "_metrics.csv", rows, provenance)
    print(f"wrote {base}_trace.json and {base}_metrics.csv "
          f"(final suboptimality {rows[-1]['suboptimality']:.3e})")
    return 0


def _cmd_sweep(args) -> int:
    sweep = SweepConfig.from_file(args.config)
    cells = sweep.cells()
    os.makedirs(args.out_dir, exist_ok=True)
    rows: list = []
    failures: list = []
    optimum = None
    if cells:
        base_problem = GlobalProblem.from_spec(
            {"objectives": sweep.base["objectives"], "feasible": sweep.base["feasible"]})
        optimum = solve_centralized(base_problem)
    if args.jobs > 1 and len(cells) > 1:
        import multiprocessing

        with multiprocessing.Pool(args.jobs) as pool:
            results = pool.starmap(_sweep_cell_safe, [(c, optimum) for c in cells])
    else:
        results = [_sweep_cell_safe(c, optimum) for c in cells]
    for doc, outcome in zip(cells, results):
        ok, payload = outcome
        if ok:
            rows.extend(payload)
        else:
            failures.append({"algorithm": doc.get("algorithm"), "delta": doc.get("delta"),
                             "seed": doc.get("seed"), "error": payload})
    provenance = _provenance({"base": sweep.base,
                              "grid": {"algorithm": sweep.algorithms,
                                       "delta": sweep.deltas, "seed": sweep.seeds}},
                             seed=sweep.seeds)
    write_metrics_csv(os.path.join(args.out_dir, "sweep_metrics.csv"), rows, provenance)
    write_report_json(os.path.join(args.out_dir, "sweep_report.json"),
                      {"cells": len(cells), "failed": failures}, provenance)
    print(f"swept {len(cells)} cells, {len(failures)} failed")
    return 0 if not failures else 1


def _sweep_cell_safe(doc: dict, optimum):
    """Run one grid cell; failures are recorded and the sweep continues."""
    try:
        config = RunConfig.from_dict(doc)
        trace = execute(config)
        problem = config.build_problem()
        return True, _metric_rows(trace, problem, optimum,
                                  delta=config.delta, seed=config.seed)
    except Exception as exc:
        return False, f"{type(exc).__name__}: {exc}"


def _cmd_audit(args) -> int:
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = [c for c in checks if c not in _AUDIT_CHECKS]
    if unknown:
        print(f"unknown checks: {unknown}; available: {list(_AUDIT_CHECKS)}", file=sys.stderr)
        return 2
    trace = ExecutionTrace.load(args.trace)
    problem = GlobalProblem.from_spec(trace.problem_spec, validate_convexity=False)
    optimum = solve_centralized(problem)
    reports = []
    failed = False
    for check in checks:
        if check == "invariants":
            rep = audit_invariants(trace, problem)
        elif check == "lemma1":
            rep = check_lemma1(trace, effective_bounds(trace, problem))
        elif check == "lemma2":
            rep = check_lemma2(trace, problem, optimum[0])
        elif check == "consensus":
            rep = check_consensus(trace, tail_fraction=args.tail_fraction,
                                  threshold=args.consensus_threshold)
        elif check == "theorem3":
            try:
                rep = check_theorem3([(trace.delta, trace)], problem, optimum_value=optimum[1])
            except (ScheduleError, ValueError) as exc:
                # wrong schedule or a down-sampled trace: a usage problem
                print(f"theorem3: {exc}", file=sys.stderr)
                return 2
        reports.append(rep)
        failed |= not rep.passed
    print(render_report_table(reports))
    provenance = _provenance({"trace": args.trace, "checks": checks}, trace.seed)
    if args.out is not None:
        write_report_json(args.out, {rep.name: rep.to_dict() for rep in reports}, provenance)
    return 1 if failed else 0


def _parse_agents(text: str) -> list:
    if not text.strip():
        return []
    return [int(t) for t in text.split(",") if t.strip()]


def _cmd_privacy(args) -> int:
    trace = ExecutionTrace.load(args.trace)
    try:
        coalition = _parse_agents(args.coalition)
        target = _parse_agents(args.target)
        if len(set(coalition)) >= trace.n:
            print("coalition covers every agent; the target set is empty", file=sys.stderr)
            return 2
        view = extract_view(trace, coalition)
        with open(args.alt_objectives) as fh:
            alt_doc = json.load(fh)
        alternatives = {int(k): np.asarray(v, dtype=float) for k, v in alt_doc.items()}
        problem = GlobalProblem.from_spec(trace.problem_spec)
        objectives = complete_alternative_objectives(problem, coalition, target,
                                                     alternatives, d_max=int(view.recipe["d_max"]))
    except (NonFsTraceError, TargetSetError, ConfigError, KeyError, OSError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"privacy check not applicable: {exc}", file=sys.stderr)
        return 2
    provenance = _provenance({"trace": args.trace, "coalition": coalition,
                              "target": target}, trace.seed)
    try:
        instance = construct_alternative(view, objectives, extras_seed=args.extras_seed)
    except DisconnectedError as exc:
        report = {"passed": False, "error": f"connectivity precondition violated: {exc}"}
        try:
            truth = {j: spec["coeffs"] for j, spec in enumerate(trace.problem_spec["objectives"])}
            report["necessity_demo"] = necessity_demo(view, truth).to_dict()
        except NotACutError:
            pass
        write_report_json(args.out, report, provenance)
        return 1
    verdict = verify_indistinguishable(view, instance)
    report = verdict.to_dict()
    report["solve_residual"] = instance.solve_residual
    write_report_json(args.out, report, provenance)
    return 0 if verdict.passed else 1


def _cmd_bounds(args) -> int:
    config = RunConfig.from_file(args.config)
    topology = config.build_topology()
    problem = config.build_problem()
    weights = config.build_weights(topology)
    params = bound_params(topology, weights, problem, delta=config.delta)
    provenance = _provenance(config.canonical_dict(), config.seed)
    write_report_json(args.out, params.to_dict(), provenance)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privopt",
                                     description="Distributed optimization simulator with "
                                                 "structured randomization and privacy checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=".")
    p_run.add_argument("--record-every", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="execute a parameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out-dir", default=".")
    p_sweep.add_argument("--jobs", type=int, default=1)

    p_audit = sub.add_parser("audit", help="run checks against a trace file")
    p_audit.add_argument("trace")
    p_audit.add_argument("--checks", default="invariants,lemma1,lemma2,consensus")
    p_audit.add_argument("--out", default=None)
    p_audit.add_argument("--tail-fraction", type=float, default=0.1)
    # perturbed runs have a disagreement floor of roughly step * noise bound,
    # so the default accommodates the quartic family at 1e4 rounds; tighten it
    # for baseline runs
    p_audit.add_argument("--consensus-threshold", type=float, default=0.05)

    p_priv = sub.add_parser("privacy", help="constructive indistinguishability check")
    p_priv.add_argument("trace")
    p_priv.add_argument("--coalition", required=True)
    p_priv.add_argument("--target", required=True)
    p_priv.add_argument("--alt-objectives", required=True)
    p_priv.add_argument("--out", default=None)
    p_priv.add_argument("--extras-seed", type=int, default=0)

    p_bounds = sub.add_parser("bounds", help="print bound constants for a config")
    p_bounds.add_argument("--config", required=True)
    p_bounds.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "audit": _cmd_audit,
                "privacy": _cmd_privacy, "bounds": _cmd_bounds}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except ScheduleError as exc:
        print(f"schedule error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
