"""Command-line front end.

Exit codes: 0 success, 1 model/semantic error, 2 I/O error.  JSON output is
the machine contract; the text renderer is presentation only.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .graph import to_dot
from .identify import IdentifyConfig, identify_model
from .model import EquationSpec, ModelError, equation_of, model_from_json, model_to_json, validate
from .numeric import (
    EstimationError,
    NumericError,
    read_dataset,
    sample_generic_params,
    simulate,
    tsls_estimate,
)
from .parser import ParseError, emit_model, parse_model
from .selfcheck import run_all
from .transform import TransformError, l2o

EXIT_SEMANTIC = 1
EXIT_IO = 2


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as err:
        click.echo(f"error: cannot read {path}: {err.strerror or err}", err=True)
        sys.exit(EXIT_IO)


def _load_model(path: str):
    """Read a model file: the textual language, or interchange JSON."""
    text = _read_text(path)
    if text.lstrip().startswith("{"):
        try:
            model = model_from_json(json.loads(text))
        except (json.JSONDecodeError, KeyError, ModelError, TypeError) as err:
            click.echo(f"error: bad model JSON: {err}", err=True)
            sys.exit(EXIT_SEMANTIC)
        problems = validate(model)
        if problems:
            for p in problems:
                click.echo(f"violation: {p}", err=True)
            sys.exit(EXIT_SEMANTIC)
        return model
    try:
        model = parse_model(text)
    except ParseError as err:
        for d in err.diagnostics:
            click.echo(str(d), err=True)
        sys.exit(EXIT_SEMANTIC)
    return model


def _config(tol, max_sets, max_cond, oracle_bound) -> IdentifyConfig:
    return IdentifyConfig(
        max_choices=max_sets, max_conditioning=max_cond, oracle_bound=oracle_bound
    )


@click.group()
def main():
    """Identify and estimate path coefficients of latent-variable SEMs."""


@main.command("validate")
@click.argument("model_file", type=click.Path())
def cmd_validate(model_file):
    """Parse a model file and check every structural invariant."""
    model = _load_model(model_file)
    problems = validate(model)
    for p in problems:
        click.echo(f"violation: {p}", err=True)
    if problems:
        sys.exit(EXIT_SEMANTIC)
    click.echo("ok")


@main.command("identify")
@click.argument("model_file", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-8, show_default=True, help="rank tolerance")
@click.option("--max-sets", type=click.IntRange(min=1), default=16, show_default=True, help="instrument-set cap per equation")
@click.option("--max-cond", type=click.IntRange(min=0), default=2, show_default=True, help="conditioning-set size cap")
@click.option("--oracle-bound", type=click.IntRange(min=1), default=12, show_default=True)
def cmd_identify(model_file, fmt, tol, max_sets, max_cond, oracle_bound):
    """Decide identifiability of every structural equation."""
    model = _load_model(model_file)
    report = identify_model(model, _config(tol, max_sets, max_cond, oracle_bound))
    if fmt == "json":
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(report.to_text(), nl=False)


@main.command("transform")
@click.argument("model_file", type=click.Path())
@click.option("--equation", "dependent", required=True, help="dependent variable of the equation")
@click.option("--targets", default="", help="comma-separated covariates to rewrite (default: all free)")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="json")
@click.option("--emit-dot", is_flag=True, help="print only the transformed diagram as DOT")
def cmd_transform(model_file, dependent, targets, fmt, emit_dot):
    """Rewrite one equation over observed variables and show its provenance."""
    model = _load_model(model_file)
    try:
        eq = equation_of(model, dependent)
        if targets:
            wanted = tuple(t.strip() for t in targets.split(",") if t.strip())
            unknown = [t for t in wanted if t not in eq.covariates]
            if unknown:
                raise ModelError(f"targets {unknown} are not covariates of {dependent!r}")
            eq = EquationSpec(eq.dependent, eq.covariates, frozenset(wanted))
        outcome = l2o(model, eq)
    except (ModelError, TransformError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_SEMANTIC)
    dot = to_dot(outcome.diagram, include_errors=True, name="transformed")
    if emit_dot:
        click.echo(dot, nl=False)
        return
    provenance = {r: e.render() for r, e in outcome.regressor_coefficients.items()}
    if fmt == "json":
        payload = {
            "regression": {"dependent": outcome.dependent, "regressors": list(outcome.regressors)},
            "provenance": provenance,
            "composite_error": {m: e.render() for m, e in outcome.composite_error.items()},
            "kept_as_error": list(outcome.kept_latents),
            "dot": dot,
        }
        click.echo(json.dumps(payload, indent=2))
    else:
        click.echo(f"regression: {outcome.dependent} ~ {' + '.join(outcome.regressors)}")
        for r, rendered in provenance.items():
            click.echo(f"  coef({r} -> {outcome.dependent}) = {rendered}")
        click.echo(f"composite error: {', '.join(outcome.composite_error)}")


@main.command("simulate")
@click.argument("model_file", type=click.Path())
@click.option("-n", "--rows", type=click.IntRange(min=2), required=True)
@click.option("--seed", type=int, default=0, envvar="MIIVGRAPH_SEED", show_default=True)
@click.option("--params", "params_file", type=click.Path(), default=None,
              help="JSON file of parameter values (default: generic values from the seed)")
@click.option("--dist", type=click.Choice(["gaussian", "uniform"]), default="gaussian")
@click.option("-o", "--out", type=click.Path(), required=True)
def cmd_simulate(model_file, rows, seed, params_file, dist, out):
    """Simulate observed data from the model."""
    model = _load_model(model_file)
    if params_file is not None:
        try:
            params = json.loads(_read_text(params_file))
        except json.JSONDecodeError as err:
            click.echo(f"error: bad params file: {err}", err=True)
            sys.exit(EXIT_SEMANTIC)
        base = sample_generic_params(model, seed)
        base.update({k: float(v) for k, v in params.items()})
        params = base
    else:
        params = sample_generic_params(model, seed)
    try:
        data = simulate(model, params, rows, seed, distribution=dist)
    except NumericError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_SEMANTIC)
    try:
        data.to_csv(out, index=False)
    except OSError as err:
        click.echo(f"error: cannot write {out}: {err.strerror or err}", err=True)
        sys.exit(EXIT_IO)
    click.echo(f"wrote {len(data)} rows to {out}")


@main.command("estimate")
@click.argument("model_file", type=click.Path())
@click.argument("data_file", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-8, show_default=True)
@click.option("--max-sets", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--max-cond", type=click.IntRange(min=0), default=2, show_default=True)
@click.option("--oracle-bound", type=click.IntRange(min=1), default=12, show_default=True)
def cmd_estimate(model_file, data_file, fmt, tol, max_sets, max_cond, oracle_bound):
    """Identify the model, then 2SLS-estimate every estimable quantity."""
    model = _load_model(model_file)
    if not Path(data_file).exists():
        click.echo(f"error: cannot read {data_file}: no such file", err=True)
        sys.exit(EXIT_IO)
    try:
        data = read_dataset(data_file)
    except (NumericError, ValueError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_SEMANTIC)
    missing = [c for c in model.observed if c not in data.columns]
    if missing:
        click.echo(f"error: dataset is missing columns: {', '.join(missing)}", err=True)
        sys.exit(EXIT_SEMANTIC)
    report = identify_model(model, _config(tol, max_sets, max_cond, oracle_bound))
    payload = {"equations": []}
    for record in report.records:
        entry = {"dependent": record.dependent, "status": record.status.value, "estimates": []}
        done: set[tuple] = set()
        estimated_params: set[str] = set()
        for choice in record.choices:
            key = (choice.strategy, choice.dependent, choice.regressors, choice.instruments, choice.conditioning)
            if key in done:
                continue
            new_info = any(
                (e.single_label and e.single_label not in estimated_params) or e.is_aliased_sum
                for e in choice.estimands.values()
            )
            if not new_info:
                continue
            done.add(key)
            try:
                result = tsls_estimate(
                    data,
                    choice.dependent,
                    list(choice.regressors),
                    list(choice.instruments),
                    list(choice.conditioning),
                    tol_rel=tol,
                )
            except EstimationError as err:
                entry["estimates"].append(
                    {"strategy": choice.strategy, "error": str(err), "instruments": list(choice.instruments)}
                )
                continue
            for regressor in choice.regressors:
                expr = choice.estimands[regressor]
                kind = "parameter" if expr.single_label else "combination"
                if expr.single_label:
                    if expr.single_label in estimated_params:
                        continue
                    estimated_params.add(expr.single_label)
                entry["estimates"].append(
                    {
                        "target": expr.render(),
                        "kind": kind,
                        "estimate": result.coefficients[regressor],
                        "se": result.standard_errors[regressor],
                        "strategy": choice.strategy,
                        "instruments": list(result.instruments),
                        "conditioning": list(result.conditioning),
                        "n": result.n,
                    }
                )
        entry["unidentified"] = sorted(set(record.target_params) - estimated_params)
        payload["equations"].append(entry)
    if fmt == "json":
        click.echo(json.dumps(payload, indent=2))
    else:
        for entry in payload["equations"]:
            click.echo(f"equation {entry['dependent']} [{entry['status']}]")
            for est in entry["estimates"]:
                if "error" in est:
                    click.echo(f"  {est['strategy']}: estimation failed: {est['error']}")
                    continue
                cond = f" | {{{', '.join(est['conditioning'])}}}" if est["conditioning"] else ""
                click.echo(
                    f"  {est['target']} = {est['estimate']:.6g} (se {est['se']:.3g})"
                    f" via {est['strategy']} IV {{{', '.join(est['instruments'])}}}{cond}"
                )
            if entry["unidentified"]:
                click.echo(f"  unidentified: {', '.join(entry['unidentified'])}")


@main.command("selfcheck")
@click.option("--trials", type=click.IntRange(min=1), default=25, show_default=True)
@click.option("--seed", type=int, default=0, envvar="MIIVGRAPH_SEED", show_default=True)
@click.option("--oracle-bound", type=click.IntRange(min=1), default=12, show_default=True)
def cmd_selfcheck(trials, seed, oracle_bound):
    """Cross-validate the graphical machinery against its oracles."""
    results = run_all(trials, seed, oracle_bound=oracle_bound)
    failed = False
    for r in results:
        click.echo(r.line())
        failed = failed or not r.passed
    if failed:
        sys.exit(EXIT_SEMANTIC)


@main.command("export")
@click.argument("model_file", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["json", "dot", "lav"]), default="json")
@click.option("--include-errors", is_flag=True)
def cmd_export(model_file, fmt, include_errors):
    """Emit the parsed model as interchange JSON, DOT, or model text."""
    model = _load_model(model_file)
    if fmt == "json":
        click.echo(json.dumps(model_to_json(model), indent=2))
    elif fmt == "lav":
        click.echo(emit_model(model), nl=False)
    else:
        click.echo(to_dot(model.diagram, include_errors=include_errors), nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
