"""Config-driven experiment runner.

Subcommands:
  run <config>              execute the configured checks, write reports
  validate <config>         parse + validate, print every problem found
  describe-measure <config> print grid, emergent probabilities, atom count
  oracle <config>           run with the exact enumeration path forced

Exit codes: 0 all checks passed, 2 at least one check failed, 1 execution
or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .errors import OverlapLabError, ParseError, ValidationError
from .grid import OverlapGrid
from .measures import (TreeMeasureSpec, adversarial_measure, derive_seed,
                       explicit_measure)
from .models import FrozenModel, TreeModel
from .observables import ObservableSpec, Psi, default_gg_observables
from .pipeline import DescendConfig, criterion_run, descend
from .sampler import EventSpec, MCConfig
from .verify import (conditional_marginal_check, consistency_check,
                     distinct_mass_check, gg_residual, lemma1_check,
                     positivity_check, support_check, ultrametricity_check)

CHECK_NAMES = ("gg", "mass", "lemma1", "consistency", "marginal", "support",
               "positivity", "ultra", "descend", "criterion")


@dataclass
class ExperimentConfig:
    measure: dict
    checks: list
    seed: int
    output_dir: str
    formats: list
    raw: dict

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(path) -> ExperimentConfig:
    """Load and validate a config file, collecting every problem at once."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e

    problems = []
    measure = raw.get("measure")
    if not isinstance(measure, dict):
        problems.append("measure: required object missing")
        measure = {}
    else:
        problems.extend(_validate_measure(measure))

    checks = raw.get("checks")
    if not isinstance(checks, list) or not checks:
        problems.append("checks: need a nonempty list")
        checks = []
    for i, chk in enumerate(checks):
        name = chk.get("name") if isinstance(chk, dict) else None
        if name not in CHECK_NAMES:
            problems.append(
                f"checks[{i}].name: unknown check {name!r}; allowed: "
                + ", ".join(CHECK_NAMES))
            continue
        mc = chk.get("mc", {})
        if isinstance(mc, dict):
            for key in ("outer", "inner"):
                if key in mc and (not isinstance(mc[key], int) or mc[key] < 1):
                    problems.append(f"checks[{i}].mc.{key}: must be an integer >= 1")
        else:
            problems.append(f"checks[{i}].mc: must be an object")
        if name == "criterion" and "q" not in chk:
            problems.append(f"checks[{i}]: criterion needs a threshold q")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        problems.append("seed: must be an integer")
        seed = 0

    output = raw.get("output", {})
    out_dir = output.get("dir", "out") if isinstance(output, dict) else "out"
    formats = output.get("formats", ["csv", "json"]) if isinstance(output, dict) \
        else ["csv", "json"]
    for f in formats:
        if f not in ("csv", "json"):
            problems.append(f"output.formats: unknown format {f!r}")

    if problems:
        raise ValidationError(problems)
    return ExperimentConfig(measure, checks, seed, out_dir, list(formats), raw)


def _validate_measure(measure: dict) -> list:
    problems = []
    mtype = measure.get("type")
    if mtype == "tree":
        try:
            TreeMeasureSpec(tuple(measure.get("q", ())),
                            int(measure.get("branching", 0)),
                            tuple(measure.get("zetas", ())),
                            int(measure.get("seed", 0)))
        except (ValueError, TypeError, OverlapLabError) as e:
            problems.append(f"measure: {e}")
    elif mtype == "explicit":
        grid = measure.get("grid")
        if not isinstance(grid, dict):
            problems.append("measure.grid: required for explicit measures")
        else:
            try:
                OverlapGrid.from_json_dict(grid)
            except (ValueError, KeyError, TypeError) as e:
                problems.append(f"measure.grid: {e}")
        weights = measure.get("weights")
        if weights is not None and abs(sum(weights) - 1.0) > 1e-9:
            problems.append(
                f"measure.weights: sum to {sum(weights)!r}, expected 1")
        if not measure.get("atoms"):
            problems.append("measure.atoms: required for explicit measures")
    elif mtype == "adversarial":
        pass
    else:
        problems.append(f"measure.type: unknown type {mtype!r}")
    return problems


def build_model(measure: dict):
    """Construct the model plus any advisory warnings."""
    warnings = []
    mtype = measure["type"]
    if mtype == "tree":
        spec = TreeMeasureSpec(tuple(measure["q"]), int(measure["branching"]),
                               tuple(measure["zetas"]),
                               int(measure.get("seed", 0)))
        model = TreeModel(spec)
    elif mtype == "explicit":
        grid = OverlapGrid.from_json_dict(measure["grid"])
        m = explicit_measure(np.asarray(measure["atoms"], dtype=np.float64),
                             np.asarray(measure["weights"], dtype=np.float64),
                             grid, on_sphere=bool(measure.get("on_sphere", True)))
        model = FrozenModel(m)
    else:
        model = FrozenModel(adversarial_measure())
    if any(q < 0 for q in model.grid.levels):
        warnings.append("grid has negative overlap levels; identity-satisfying "
                        "families keep overlaps nonnegative")
    return model, warnings


def _parse_observable(d: dict) -> ObservableSpec:
    psi_d = d["psi"]
    if "monomial" in psi_d:
        psi = Psi("monomial", int(psi_d["monomial"]))
    else:
        psi = Psi("indicator", int(psi_d["indicator"]))
    fpat = tuple(((int(l), int(lp)), int(v)) for l, lp, v in d.get("f_pattern", ()))
    fmono = tuple(((int(l), int(lp)), int(p)) for l, lp, p in d.get("f_monomial", ()))
    return ObservableSpec(int(d["n"]), psi, f_pattern=fpat, f_monomial=fmono)


def _mc_of(chk: dict) -> MCConfig:
    mc = chk.get("mc", {})
    return MCConfig(int(mc.get("outer", 200)), int(mc.get("inner", 100)))


def _run_check(chk: dict, model, seed: int, oracle: bool):
    """Dispatch one configured check. Returns (rows, json_obj, passed)."""
    name = chk["name"]
    mc = _mc_of(chk)
    abs_tol = float(chk.get("abs_tol", 0.01))
    z = float(chk.get("z", 3.0))
    method = "enumerate" if oracle else chk.get("method", "mc")

    if name == "gg":
        obs_cfg = chk.get("observables", "default")
        if obs_cfg == "default":
            observables = default_gg_observables(model.grid.k)
        else:
            observables = [_parse_observable(d) for d in obs_cfg]
        cond_cfg = chk.get("conditioned")
        rows, objs, ok = [], [], True
        for i, obs in enumerate(observables):
            cond = None
            if cond_cfg:
                cond = EventSpec(cond_cfg["kind"], obs.n + 1,
                                 cond_cfg.get("q"))
            rep = gg_residual(model, obs, mc, derive_seed(seed, i),
                              conditioned=cond, abs_tol=abs_tol, z=z,
                              method=method)
            rows.append(rep.row())
            objs.append({"observable": obs.observable_id(),
                         "residual": rep.residual, "se": rep.residual_se,
                         "pass": rep.passed, "conditioned": rep.conditioned})
            ok &= rep.passed
        return rows, {"observables": objs}, ok

    if name == "mass":
        rep = distinct_mass_check(model, int(chk.get("n_max", 5)), mc, seed,
                                  abs_tol=abs_tol, z=z, method=method)
        return list(rep.rows), {"p_top": rep.p_top}, rep.passed

    if name in ("lemma1", "consistency"):
        n = int(chk.get("n", 2))
        fpat = tuple(((int(l), int(lp)), int(v))
                     for l, lp, v in chk.get("f_pattern", ((1, 2, 1),)))
        f = ObservableSpec(max(n, 2), Psi("monomial", 1), f_pattern=fpat)
        fn = lemma1_check if name == "lemma1" else consistency_check
        rep = fn(model, f, n, mc, seed, abs_tol=abs_tol, z=z, method=method)
        return [rep.row(name)], {"residual": rep.residual,
                                 "se": rep.residual_se}, rep.passed

    if name == "marginal":
        rep = conditional_marginal_check(model, mc, seed, abs_tol=abs_tol,
                                         z=z, method=method)
        return list(rep.rows), {"acceptance_rate": rep.acceptance_rate}, rep.passed

    if name == "support":
        rep = support_check(model.measure_at(0))
        return [rep.row(model.model_id)], {"max_deviation": rep.max_deviation}, \
            rep.passed

    if name == "positivity":
        rep = positivity_check(model, mc, seed)
        return [rep.row(model.model_id)], {"min_overlap": rep.min_overlap}, \
            rep.passed

    if name == "ultra":
        rep = ultrametricity_check(model, mc, seed, n=int(chk.get("n", 8)))
        return [rep.row(model.model_id)], {
            "triples": rep.triples_checked, "violations": rep.violations,
            "witness": rep.first_witness}, rep.passed

    if name == "descend":
        cfg = DescendConfig(
            n_condition=int(chk.get("n_condition", 4)), mc=mc,
            psd_outer=int(chk.get("psd_outer", 50)),
            psd_inner=int(chk.get("psd_inner", 20)),
            abs_tol=abs_tol, z=z, force=bool(chk.get("force", False)),
            method=method)
        rep = descend(model, cfg, seed)
        passed = rep.all_passed
        node = rep.child
        while node is not None:
            passed &= node.all_passed
            node = node.child
        return rep.rows(model.model_id), rep.to_json_dict(), passed

    if name == "criterion":
        reports = criterion_run(model, float(chk["q"]),
                                chk.get("patterns", [[[1, 1, 1]]]),
                                int(chk.get("n_max", 6)), mc, seed, z=z,
                                method=method)
        rows = []
        ok = True
        for rep in reports:
            rows.extend(rep.rows(model.model_id))
            ok &= rep.consistent_within_noise
        return rows, {"patterns": [r.to_json_dict() for r in reports]}, ok

    raise ValueError(f"unhandled check {name!r}")


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_rows_csv(rows, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check_name", "model_id", "n", "observable_id",
                    "estimate", "reference", "residual", "se", "pass"])
        for r in rows:
            w.writerow([r.check, r.model_id, _format_value(r.n),
                        r.observable_id, _format_value(r.estimate),
                        _format_value(r.reference), _format_value(r.residual),
                        _format_value(r.se), _format_value(r.passed)])


def emit_plot_data(rows, path: Path):
    """Long-format CSV for external plotting; one row per (series, n)."""
    rows = [r for r in rows if r.n is not None]
    if not rows:
        raise ValueError("no plottable report rows")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "n", "estimate", "reference", "se"])
        for r in rows:
            if r.check in ("mass", "criterion"):
                est, ref = r.estimate, r.reference
            else:
                est, ref = r.residual, 0.0
            series = f"{r.check}:{r.observable_id}"
            w.writerow([series, r.n, _format_value(est),
                        _format_value(ref), _format_value(r.se)])


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   out_dir=None, formats=None, seed=None,
                   oracle: bool = False) -> int:
    t0 = time.time()
    seed = config.seed if seed is None else seed
    formats = formats or config.formats
    out = Path(out_dir or config.output_dir)
    try:
        out.mkdir(parents=False, exist_ok=True)
    except OSError as e:
        print(f"error: cannot create output directory {out}: {e}",
              file=sys.stderr)
        return 1

    try:
        model, warnings = build_model(config.measure)
    except (OverlapLabError, ValueError) as e:
        print(f"error: cannot build measure: {e}", file=sys.stderr)
        return 1
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    _kernels.warmup()

    def task(i_chk):
        i, chk = i_chk
        start = time.time()
        try:
            rows, obj, ok = _run_check(chk, model, derive_seed(seed, i), oracle)
            status = "pass" if ok else "fail"
            return i, rows, obj, status, None, time.time() - start
        except Exception as e:  # noqa: BLE001 - gather all per-check errors
            return i, [], {}, "error", f"{type(e).__name__}: {e}", \
                time.time() - start

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(task, enumerate(config.checks)))
    results.sort(key=lambda r: r[0])

    all_rows = []
    check_summaries = []
    statuses = []
    for i, rows, obj, status, err, wall in results:
        all_rows.extend(rows)
        statuses.append(status)
        check_summaries.append({
            "name": config.checks[i]["name"], "status": status,
            "error": err, "wall_time_s": wall,
            "rows": [r.__dict__ for r in rows], "summary": obj,
        })
        if err:
            print(f"error in check {config.checks[i]['name']}: {err}",
                  file=sys.stderr)

    manifest = {
        "config_hash": config.config_hash(),
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "jobs": jobs,
        "oracle": oracle,
        "checks": [{"name": s["name"], "status": s["status"],
                    "wall_time_s": s["wall_time_s"], "error": s["error"]}
                   for s in check_summaries],
        "total_wall_time_s": time.time() - t0,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    if "csv" in formats:
        write_rows_csv(all_rows, out / "report.csv")
        if any(r.n is not None for r in all_rows):
            emit_plot_data(all_rows, out / "plot_data.csv")
    if "json" in formats:
        with open(out / "report.json", "w") as fh:
            json.dump({"model_id": model.model_id,
                       "checks": check_summaries}, fh, indent=2)

    if "error" in statuses:
        return 1
    if "fail" in statuses:
        return 2
    return 0


def describe_measure(config: ExperimentConfig) -> int:
    try:
        model, warnings = build_model(config.measure)
    except (OverlapLabError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    measure = model.measure_at(0)
    grid = measure.grid
    print(f"model:        {model.model_id}")
    print(f"kind:         {measure.kind}")
    print(f"atoms:        {measure.m}")
    print(f"levels:       {list(grid.levels)}")
    print(f"self overlap: {grid.self_overlap}")
    if grid.probs is not None:
        probs = ", ".join(f"q{i + 1}={p:.6g}" for i, p in enumerate(grid.probs))
        print(f"level probs:  {probs}   (first outer draw)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="overlap-lab",
        description="verification lab for discrete replica overlap arrays")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker threads across checks "
                             "(default: OVERLAP_LAB_JOBS or 1)")
    parser.add_argument("--out", type=str, default=None,
                        help="output directory override")
    parser.add_argument("--format", choices=("csv", "json", "both"),
                        default=None, help="report format override")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run", "validate", "describe-measure", "oracle"):
        p = sub.add_parser(cmd)
        p.add_argument("config")
    args = parser.parse_args(argv)

    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("OVERLAP_LAB_JOBS", "1"))
    formats = None
    if args.format:
        formats = ["csv", "json"] if args.format == "both" else [args.format]

    try:
        config = parse_config(args.config)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 1
    except ValidationError as e:
        for p in e.problems:
            print(f"invalid: {p}", file=sys.stderr)
        return 1

    if args.command == "validate":
        try:
            _, warnings = build_model(config.measure)
        except (OverlapLabError, ValueError) as e:
            print(f"invalid: measure: {e}", file=sys.stderr)
            return 1
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        print("config ok")
        return 0
    if args.command == "describe-measure":
        return describe_measure(config)
    oracle = args.command == "oracle"
    return run_experiment(config, jobs=jobs, out_dir=args.out,
                          formats=formats, seed=args.seed, oracle=oracle)


if __name__ == "__main__":
    sys.exit(main())
