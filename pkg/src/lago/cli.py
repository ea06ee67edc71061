"""Command-line interface.

Every verb prints the same canonical JSON or CSV the HTTP API serves, so the
two surfaces can be diffed byte-for-byte. Exit codes: 0 success, 2 usage
error, 1 data or computation error (one machine-parsable line on stderr:
"lago: error: <kind>: <message>").
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from .cost_model import CostModel, Package, cost_curve
from .errors import DataError, LagoError
from .inference import design_effect, overall_effect_test, power_two_proportions, project_outcome
from .optimizer import OptimizationCriteria, PowerContext, confidence_set, optimize_package
from .outcome_model import OutcomeFit, fit_logistic
from .serialize import dump_csv, dumps
from .simulator import SimulationScenario, operating_characteristics
from .stage_engine import final_analysis, recommend_next_stage, render_text
from .trial_model import TrialConfig, combine_stages, load_observations


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _emit(text: str, out: str | None) -> None:
    sys.stdout.write(text)
    if out:
        _write(out, text)


def _load_config(path: str) -> TrialConfig:
    return TrialConfig.from_json(_read(path))


def _load_datasets(path: str, config: TrialConfig):
    return load_observations(_read(path), config)


def _combined(path: str, config: TrialConfig):
    datasets = _load_datasets(path, config)
    return combine_stages(datasets, upto=max(d.stage_index for d in datasets))


def _load_fit(path: str) -> OutcomeFit:
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise DataError(f"fit file {path} is not valid JSON: {exc}") from exc
    return OutcomeFit.from_dict(doc)


# argparse type converters; raising ArgumentTypeError keeps these usage errors (exit 2)

def _name_value(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric value in {text!r}") from None


def _dose_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated doses, got {text!r}"
        ) from None


def _subgroup_spec(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in text.split(","):
        name, value = _name_value(part)
        out[name] = value
    return out


def _scales(args) -> dict[str, float] | None:
    pairs = getattr(args, "scale", None)
    return dict(pairs) if pairs else None


def _criteria(args, config: TrialConfig) -> OptimizationCriteria:
    power_context = None
    if args.power_target is not None:
        if args.power_n_per_arm is None:
            args._parser.error("--power-target requires --power-n-per-arm")
        icc = args.power_icc
        if icc is None:
            icc = config.icc if config.icc is not None else 0.0
        power_context = PowerContext(
            n_per_arm=args.power_n_per_arm,
            cluster_size=args.power_cluster_size,
            icc=icc,
            alpha=args.power_alpha,
            baseline_rate=args.power_baseline,
        )
    profile = dict(args.at) if args.at else None
    return OptimizationCriteria.from_dict(
        {
            "goal_type": args.goal_type,
            "goal_value": args.goal,
            "level": args.level,
            "covariate_profile": profile,
            "baseline_rate": args.baseline_rate,
            "power_target": args.power_target,
            "power_context": None if power_context is None else power_context.to_dict(),
            "budget": args.budget,
            "use_robust_vcov": args.vcov == "robust",
        },
        config,
    )


def cmd_fit(args) -> None:
    config = _load_config(args.config)
    combined = _combined(args.data, config)
    fit = fit_logistic(combined, config, report_scales=_scales(args))
    _emit(dumps(fit.to_dict()), args.out)


def _fit_for(args, config: TrialConfig):
    """Either refit from --data or reload a stored --fit, plus the combined data
    when available (for baseline-rate resolution)."""
    if args.fit:
        return _load_fit(args.fit), None
    combined = _combined(args.data, config)
    return fit_logistic(combined, config), combined


def cmd_optimize(args) -> None:
    config = _load_config(args.config)
    cost = CostModel.from_config(config)
    fit, combined = _fit_for(args, config)
    criteria = _criteria(args, config)
    if combined is not None:
        criteria = criteria.resolve_baseline(combined)
    result = optimize_package(fit, cost, criteria, config)
    _emit(dumps(result.to_dict()), args.out)


def cmd_confset(args) -> None:
    config = _load_config(args.config)
    cost = CostModel.from_config(config)
    fit, combined = _fit_for(args, config)
    criteria = _criteria(args, config)
    if combined is not None:
        criteria = criteria.resolve_baseline(combined)
    confset = confidence_set(fit, cost, criteria, config)
    _emit(dumps(confset.to_dict()), args.out)
    if args.csv:
        header, rows = confset.to_csv_rows(config)
        _write(args.csv, dump_csv(header, rows))


def cmd_test(args) -> None:
    config = _load_config(args.config)
    combined = _combined(args.data, config)
    result = overall_effect_test(combined, comparison=args.comparison, method=args.method)
    _emit(dumps(result.to_dict()), args.out)


def cmd_project(args) -> None:
    if args.overall_or is not None:
        components = [("overall", args.overall_or, 1.0)]
    elif args.components_csv is not None:
        components = _read_projection_csv(args.components_csv)
    else:
        components = [(name, float(orr), float(dose)) for name, orr, dose in args.component]
    projection = project_outcome(args.baseline, components)
    _emit(dumps(projection.to_dict()), args.out)


def _read_projection_csv(path: str) -> list:
    """Read component,or_per_unit,dose rows."""
    text = _read(path)
    reader = csv.DictReader(io.StringIO(text))
    required = {"component", "or_per_unit", "dose"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise DataError(f"{path}: expected columns component,or_per_unit,dose")
    out = []
    for i, row in enumerate(reader, start=2):
        try:
            out.append((row["component"], float(row["or_per_unit"]), float(row["dose"])))
        except (TypeError, ValueError):
            raise DataError(f"{path}: row {i}: or_per_unit and dose must be numeric")
    if not out:
        raise DataError(f"{path}: no component rows")
    return out


def cmd_power(args) -> None:
    power = power_two_proportions(
        args.baseline, args.target_rate, args.n_per_arm,
        cluster_size=args.cluster_size, icc=args.icc, alpha=args.alpha,
    )
    payload = {
        "p0": args.baseline,
        "p1": args.target_rate,
        "n_per_arm": args.n_per_arm,
        "cluster_size": args.cluster_size,
        "icc": args.icc,
        "alpha": args.alpha,
        "design_effect": design_effect(args.cluster_size, args.icc),
        "power": power,
    }
    _emit(dumps(payload), args.out)


def cmd_run_stage(args) -> None:
    config = _load_config(args.config)
    cost = CostModel.from_config(config)
    datasets = _load_datasets(args.data, config)
    criteria = _criteria(args, config)
    previous = Package(doses=args.previous) if args.previous else None
    rec = recommend_next_stage(datasets, config, cost, criteria, previous_package=previous)
    _emit(dumps(rec.to_dict()), args.out)


def cmd_final(args) -> None:
    config = _load_config(args.config)
    cost = CostModel.from_config(config)
    datasets = _load_datasets(args.data, config)
    criteria = _criteria(args, config)
    report = final_analysis(
        datasets, config, cost, criteria,
        subgroup_profiles=args.subgroup or (),
        comparison=args.comparison,
        method=args.method,
        report_scales=_scales(args),
    )
    text = dumps(report.to_dict())
    _emit(text, args.out)
    if args.out_dir:
        from .figures import render_report_figures

        os.makedirs(args.out_dir, exist_ok=True)
        _write(os.path.join(args.out_dir, "report.json"), text)
        _write(os.path.join(args.out_dir, "report.txt"), render_text(report, config))
        header, rows = report.confidence_set.to_csv_rows(config)
        _write(os.path.join(args.out_dir, "confidence_set.csv"), dump_csv(header, rows))
        combined = combine_stages(datasets, upto=config.num_stages)
        resolved = criteria.resolve_baseline(combined)
        fit = fit_logistic(combined, config, report_scales=_scales(args))
        render_report_figures(report, fit, config, cost, resolved, args.out_dir)


def cmd_cost_curve(args) -> None:
    config = _load_config(args.config)
    cost = CostModel.from_config(config)
    points = cost_curve(cost, config, args.component)
    _emit(dump_csv(["dose", "cost"], points), args.out)


def cmd_simulate(args) -> None:
    scenario = SimulationScenario.from_json(_read(args.scenario))
    coverage = Package(doses=args.coverage_package) if args.coverage_package else None
    report = operating_characteristics(
        scenario, args.reps, seed=args.seed, alpha=args.alpha, coverage_package=coverage
    )
    _emit(dumps(report.to_dict()), args.out)
    if args.csv:
        _write(args.csv, dump_csv(report.csv_header(), [tuple(report.csv_row())]))


def cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")


def _add_criteria_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--goal", type=float, required=True, help="outcome goal")
    p.add_argument("--goal-type", choices=["absolute", "relative_increase"],
                   default="absolute")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--at", type=_name_value, action="append", metavar="NAME=VALUE",
                   help="covariate profile entry (repeatable; others take references)")
    p.add_argument("--baseline-rate", type=float, default=None,
                   help="baseline rate for relative_increase goals")
    p.add_argument("--budget", type=float, default=None, help="maximum package cost")
    p.add_argument("--power-target", type=float, default=None,
                   help="minimum power of the end-of-study test")
    p.add_argument("--power-n-per-arm", type=float, default=None)
    p.add_argument("--power-cluster-size", type=float, default=1.0)
    p.add_argument("--power-icc", type=float, default=None,
                   help="default: the config's icc")
    p.add_argument("--power-alpha", type=float, default=0.05)
    p.add_argument("--power-baseline", type=float, default=0.5)
    p.add_argument("--vcov", choices=["robust", "model"], default="robust")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lago",
        description="Adaptive trial engine: fit stage data, optimize the next "
                    "package, and report operating characteristics.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func, _parser=p)
        p.add_argument("--out", default=None, help="also write stdout payload here")
        return p

    p = add("fit", cmd_fit, "fit the outcome model to observation data")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scale", type=_name_value, action="append", metavar="NAME=K",
                   help="reporting scale for a component (repeatable)")

    for name, func, help_text in (
        ("optimize", cmd_optimize, "cheapest package meeting the goal"),
        ("confset", cmd_confset, "packages whose CI contains the goal"),
    ):
        p = add(name, func, help_text)
        p.add_argument("--config", required=True)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--data", help="observation CSV (model is refitted)")
        src.add_argument("--fit", help="stored fit JSON from `lago fit`")
        _add_criteria_args(p)
        if name == "confset":
            p.add_argument("--csv", default=None, help="also write members as CSV here")

    p = add("test", cmd_test, "overall intervention effect test")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--comparison", choices=["arm", "prepost"], default="arm")
    p.add_argument("--method", choices=["cluster_t", "wald_sandwich"], default=None)

    p = add("project", cmd_project, "project an outcome rate from odds ratios")
    p.add_argument("--baseline", type=float, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--or", dest="overall_or", type=float,
                       help="single overall odds ratio")
    group.add_argument("--component", nargs=3, action="append",
                       metavar=("NAME", "OR_PER_UNIT", "DOSE"),
                       help="per-component odds ratio and dose (repeatable)")
    group.add_argument("--components-csv", default=None,
                       help="CSV with columns component,or_per_unit,dose")

    p = add("power", cmd_power, "power of the two-proportion test")
    p.add_argument("--baseline", type=float, required=True)
    p.add_argument("--target-rate", type=float, required=True)
    p.add_argument("--n-per-arm", type=float, required=True)
    p.add_argument("--cluster-size", type=float, default=1.0)
    p.add_argument("--icc", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.05)

    p = add("run-stage", cmd_run_stage, "recommend the next stage's package")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--previous", type=_dose_list, default=None, metavar="D1,D2,...",
                   help="previously planned package (freezing fallback and "
                        "stabilization reference)")
    _add_criteria_args(p)

    p = add("final", cmd_final, "all-stages analysis report")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--comparison", choices=["arm", "prepost"], default="arm")
    p.add_argument("--method", choices=["cluster_t", "wald_sandwich"], default=None)
    p.add_argument("--subgroup", type=_subgroup_spec, action="append",
                   metavar="NAME=VALUE[,NAME=VALUE...]",
                   help="extra covariate profile to optimize for (repeatable)")
    p.add_argument("--scale", type=_name_value, action="append", metavar="NAME=K")
    p.add_argument("--out-dir", default=None,
                   help="write report.json/report.txt/confidence_set.csv and figures here")
    _add_criteria_args(p)

    p = add("cost-curve", cmd_cost_curve, "per-dose cost of one component as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--component", required=True)

    p = add("simulate", cmd_simulate, "Monte Carlo operating characteristics")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--coverage-package", type=_dose_list, default=None,
                   metavar="D1,D2,...", help="package whose coverage to track")
    p.add_argument("--csv", default=None, help="also write a one-line sweep CSV here")

    p = add("serve", cmd_serve, "start the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except LagoError as exc:
        print(f"lago: error: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
