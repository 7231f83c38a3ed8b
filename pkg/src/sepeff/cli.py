"""Command-line interface.

Subcommands: ``estimate``, ``simulate``, ``coverage``, ``check-graph`` and
``ingest``. Exit status is 0 on success, 2 for invalid input and 3 when
estimation fails. Output schemas:

risks.csv      estimator,a_y,a_d,k,estimate,lower,upper
effects.csv    estimator,kind,k,estimate,lower,upper
weights_diag.csv  estimator,a_y,a_d,mean,max,p99
run.json       resolved configuration; pass it back with --config to rerun
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .bootstrap import bootstrap_ci
from .causal_graph import check_dismissible, fixture_names, load_fixture, parse_graph
from .errors import EstimationError, SepEffError, ValidationError
from .event_history import read_wide_csv, validate_and_expand, write_wide_csv
from .gformula import Estimator
from .pipeline import Pipeline
from . import prostate, simulate

log = logging.getLogger("sepeff")

ESTIMATE_DEFAULTS = {
    "data": None,
    "format": "auto",
    "K": None,
    "y_formula": None,
    "d_formula": None,
    "c_formula": None,
    "targets": ["1,1", "0,0", "1,0", "0,1"],
    "estimators": "gformula,ipw1",
    "boot": 0,
    "level": 0.95,
    "seed": 0,
    "truncate_weights": None,
    "report_k": None,
    "out": "out",
    "workers": None,
}


def _targets(items) -> list[tuple[int, int]]:
    out = []
    for t in items:
        parts = str(t).replace(" ", "").split(",")
        if len(parts) != 2 or not all(p in ("0", "1") for p in parts):
            raise ValidationError(f"target {t!r} must look like 'a_y,a_d' with 0/1 entries")
        out.append((int(parts[0]), int(parts[1])))
    return out


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults) - {"command", "versions"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in file_cfg.items() if k in defaults})
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _versions() -> dict:
    return {
        "sepeff": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_estimate(args) -> int:
    cfg = _resolve(args, ESTIMATE_DEFAULTS)
    if cfg["data"] is None:
        raise ValidationError("--data is required")
    fmt = cfg["format"]
    if fmt == "auto":
        header = pd.read_csv(cfg["data"], nrows=0).columns
        fmt = "prostate" if prostate.looks_like_prostate(header) else "wide"
    if fmt == "prostate":
        pcfg = prostate.ProstateConfig(horizon_K=cfg["K"] or prostate.ProstateConfig().horizon_K)
        subjects = prostate.load_prostate(cfg["data"], pcfg)
        cfg["K"] = pcfg.horizon_K
        cfg["y_formula"] = cfg["y_formula"] or prostate.Y_FORMULA
        cfg["d_formula"] = cfg["d_formula"] or prostate.D_FORMULA
        cfg["c_formula"] = cfg["c_formula"] or prostate.C_FORMULA
        cfg["report_k"] = cfg["report_k"] or prostate.REPORT_K
    else:
        subjects = read_wide_csv(cfg["data"])
        if cfg["K"] is None:
            raise ValidationError("--K is required for wide CSV input")
    cfg["format"] = fmt
    if not cfg["y_formula"] or not cfg["d_formula"]:
        raise ValidationError("--y-formula and --d-formula are required")
    table = validate_and_expand(subjects, int(cfg["K"]), truncate=True)
    if cfg["c_formula"] is None and np.any(table.c):
        cfg["c_formula"] = "1 + k + k^2 + k^3 + A"
    pipe = Pipeline(
        y_formula=cfg["y_formula"],
        d_formula=cfg["d_formula"],
        c_formula=cfg["c_formula"],
        estimators=tuple(Estimator(e.strip()) for e in str(cfg["estimators"]).split(",") if e.strip()),
        targets=tuple(_targets(cfg["targets"])),
        truncate_quantile=cfg["truncate_weights"],
    )
    curves, weights = pipe.run(table, return_weights=True)
    effects = pipe.effects(curves)
    boot = {}
    if cfg["boot"]:
        boot = bootstrap_ci(table, pipe, int(cfg["boot"]), float(cfg["level"]), int(cfg["seed"]),
                            workers=cfg["workers"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    nan = np.full(table.grid_K, np.nan)
    rows = []
    for (est, a_y, a_d), c in curves.items():
        b = boot.get(("risk", est, a_y, a_d))
        lo, hi = (b.lower, b.upper) if b else (nan, nan)
        for k in range(table.grid_K):
            rows.append((est.value, a_y, a_d, k + 1, c.values[k], lo[k], hi[k]))
    pd.DataFrame(rows, columns=["estimator", "a_y", "a_d", "k", "estimate", "lower", "upper"]).to_csv(
        out / "risks.csv", index=False
    )
    rows = []
    for (est, label), e in effects.items():
        b = boot.get(("effect", est, label))
        lo, hi = (b.lower, b.upper) if b else (nan, nan)
        for k in range(table.grid_K):
            rows.append((est.value, label, k + 1, e.values[k], lo[k], hi[k]))
    pd.DataFrame(rows, columns=["estimator", "kind", "k", "estimate", "lower", "upper"]).to_csv(
        out / "effects.csv", index=False
    )
    rows = [(est.value, a_y, a_d, *w.diagnostics.values()) for (est, a_y, a_d), w in weights.items()]
    pd.DataFrame(rows, columns=["estimator", "a_y", "a_d", "mean", "max", "p99"]).to_csv(
        out / "weights_diag.csv", index=False
    )
    _write_json(out / "run.json", {"command": "estimate", **cfg, "versions": _versions()})
    rk = cfg["report_k"] or table.grid_K
    print(f"risk at k={rk}")
    for (est, a_y, a_d), c in curves.items():
        b = boot.get(("risk", est, a_y, a_d))
        ci = f" ({b.lower[rk - 1]:.3f}, {b.upper[rk - 1]:.3f})" if b else ""
        print(f"  {est.value:<9} a_y={a_y} a_d={a_d}  {c.at(rk):.3f}{ci}")
    return 0


SIM_DEFAULTS = {
    "scenario": 1,
    "n": 400,
    "reps": 1,
    "boot": 0,
    "level": 0.95,
    "seed": 0,
    "K": 99,
    "ks": [25, 75, 100],
    "four_arm": False,
    "out": "out",
    "workers": None,
}


def _coverage_outputs(cfg: dict, out: Path) -> None:
    table = simulate.run_coverage(
        int(cfg["scenario"]), int(cfg["n"]), int(cfg["reps"]), int(cfg["boot"]), tuple(cfg["ks"]),
        float(cfg["level"]), int(cfg["seed"]), K=int(cfg["K"]), workers=cfg["workers"],
    )
    (out / "coverage.csv").write_text(table.to_csv(), encoding="utf-8")
    print(table.to_wide().to_string(index=False))
    if table.failed_replicates:
        print(f"{table.failed_replicates} replicate(s) failed and were excluded")


def cmd_simulate(args) -> int:
    cfg = _resolve(args, SIM_DEFAULTS)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    dgp = simulate.coverage_scenario(int(cfg["scenario"]), int(cfg["K"])).dgp
    simulate.truth_frame(dgp).to_csv(out / "truth.csv", index=False)
    design = simulate.ArmDesign.FOUR_ARM if cfg["four_arm"] else simulate.ArmDesign.TWO_ARM
    for r in range(int(cfg["reps"])):
        subjects = simulate.simulate_cohort(dgp, int(cfg["n"]), int(cfg["seed"]), design, replicate=r)
        if design is simulate.ArmDesign.FOUR_ARM:
            rows = [(s.id, s.arm, s.arm_d, s.covariates["L1"], s.covariates["L2"],
                     s.event_interval if s.event_interval is not None else dgp.K + 1, s.event_kind.value)
                    for s in subjects]
            pd.DataFrame(rows, columns=["id", "a_y", "a_d", "L1", "L2", "time", "event"]).to_csv(
                out / f"cohort_{r}.csv", index=False)
        else:
            write_wide_csv(subjects, out / f"cohort_{r}.csv", K=dgp.K)
    if cfg["boot"]:
        _coverage_outputs(cfg, out)
    _write_json(out / "run.json", {"command": "simulate", **cfg, "versions": _versions()})
    return 0


def cmd_coverage(args) -> int:
    cfg = _resolve(args, {**SIM_DEFAULTS, "reps": 200, "boot": 200})
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    dgp = simulate.coverage_scenario(int(cfg["scenario"]), int(cfg["K"])).dgp
    simulate.truth_frame(dgp).to_csv(out / "truth.csv", index=False)
    _coverage_outputs(cfg, out)
    _write_json(out / "run.json", {"command": "coverage", **cfg, "versions": _versions()})
    return 0


def cmd_check_graph(args) -> int:
    src = args.graph
    path = Path(src)
    if path.is_file():
        g = parse_graph(path.read_text(encoding="utf-8"))
    elif src in fixture_names():
        g = load_fixture(src)
    else:
        raise ValidationError(f"{src!r} is neither a file nor a shipped graph ({', '.join(fixture_names())})")
    report = check_dismissible(g, args.K)
    print(report.to_table())
    print(f"delta1: {'holds' if report.delta1_holds else 'FAILS'}; "
          f"delta2: {'holds' if report.delta2_holds else 'FAILS'}")
    return 0


def cmd_ingest(args) -> int:
    cfg = prostate.ProstateConfig(horizon_K=args.K)
    subjects, audit = prostate.load_prostate_with_audit(args.data, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_wide_csv(subjects, out / "subjects.csv", K=cfg.horizon_K)
    _write_json(out / "audit.json", audit)
    print(json.dumps(audit["arm_sizes"]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sepeff", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate risks and separable effects from data")
    e.add_argument("--config", help="JSON file of option values; flags take precedence")
    e.add_argument("--data", help="wide CSV (id,arm,<covariates>,time,event) or the prostate extract")
    e.add_argument("--format", choices=["auto", "wide", "prostate"])
    e.add_argument("--K", type=int, help="horizon; the grid has K+1 intervals")
    e.add_argument("--y-formula", dest="y_formula")
    e.add_argument("--d-formula", dest="d_formula")
    e.add_argument("--c-formula", dest="c_formula")
    e.add_argument("--targets", nargs="+", help="pairs a_y,a_d such as 1,1 0,0 1,0")
    e.add_argument("--estimators", help="comma list from gformula, ipw1, ipw2, nonparam")
    e.add_argument("--boot", type=int, help="bootstrap replicates (0 disables)")
    e.add_argument("--level", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--truncate-weights", dest="truncate_weights", type=float, metavar="Q",
                   help="cap weights at their Q-quantile")
    e.add_argument("--report-k", dest="report_k", type=int)
    e.add_argument("--workers", type=int, help="bootstrap processes (default from SEPEFF_WORKERS)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "simulate cohorts and true risks; with --boot also estimate coverage"),
        ("coverage", cmd_coverage, "coverage of bootstrap intervals for a simulation scenario"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config")
        s.add_argument("--scenario", type=int)
        s.add_argument("--n", type=int)
        s.add_argument("--reps", type=int)
        s.add_argument("--boot", type=int)
        s.add_argument("--level", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--K", type=int)
        s.add_argument("--ks", type=int, nargs="+")
        s.add_argument("--four-arm", dest="four_arm", action="store_const", const=True)
        s.add_argument("--workers", type=int)
        s.add_argument("--out")
        s.set_defaults(func=func)

    g = sub.add_parser("check-graph", help="check the dismissible component conditions on a graph")
    g.add_argument("graph", help="graph file or shipped graph name")
    g.add_argument("--K", type=int, default=None)
    g.set_defaults(func=cmd_check_graph)

    i = sub.add_parser("ingest", help="recode the prostate extract to the wide CSV format")
    i.add_argument("--data", default=None)
    i.add_argument("--K", type=int, default=59)
    i.add_argument("--out", default="out")
    i.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (OSError, SepEffError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
