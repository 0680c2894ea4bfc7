"""Command-line interface: reproducible runs over substrate/application
JSON files, GraphML topologies, and scenario configs.

Exit codes: 0 success, 2 input error, 3 infeasible, 4 resource limit.
Set VNEAP_LOG=debug|info|warning|error to control logging.  All
randomness derives from --seed through stable per-component labels.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import click

from . import harness, io as vio
from .formulation import compute_rejection_penalty
from .harness import (
    GenParams,
    ScenarioConfig,
    TierParams,
    assign_costs_capacities,
    calibrate_target_utilization,
    classify_tiers,
    generate_requests,
    ingest_graphml,
    run_scenario,
    write_result,
)
from .io import FormatError
from .model import validate_application, validate_requests, validate_substrate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4

log = logging.getLogger("vneap.cli")


def _setup_logging() -> None:
    level = os.environ.get("VNEAP_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_catalog(spec: str):
    """An application catalog: a JSON path, or the name of a bundled
    catalog (cctv_two, cctv_four)."""
    p = Path(spec)
    if p.exists():
        return vio.load_applications(p)
    bundled = resources.files("vneap").joinpath(f"fixtures/{spec}.json")
    if bundled.is_file():
        return vio.load_applications(json.loads(bundled.read_text()))
    raise FormatError(f"no such application catalog: {spec}")


def _load_inputs(substrate: str, apps: str, requests_path=None, efficiency=None):
    net = vio.load_substrate(substrate)
    catalog = _load_catalog(apps)
    problems = validate_substrate(net)
    for app in catalog.values():
        problems += validate_application(app)
    reqs = None
    if requests_path is not None:
        reqs = vio.load_requests(requests_path)
        problems += validate_requests(reqs, net, catalog)
    if problems:
        raise FormatError("; ".join(str(v) for v in problems[:5]))
    eff = vio.load_efficiency(efficiency)
    return net, catalog, reqs, eff


@click.group()
def main() -> None:
    """Virtual network embedding with alternative topologies."""
    _setup_logging()


@main.command()
@click.option("--graphml", required=True, type=click.Path(), help="Topology file to ingest.")
@click.option("--out", required=True, type=click.Path(), help="Substrate JSON to write.")
@click.option("--tier-ratios", default=3.0, show_default=True, help="Cost/capacity ratio between tiers.")
def ingest(graphml: str, out: str, tier_ratios: float) -> None:
    """Classify a GraphML topology into tiers and assign costs/capacities."""
    try:
        g = ingest_graphml(graphml)
        tiers = classify_tiers(g)
        net = assign_costs_capacities(
            g, tiers, TierParams(cost_ratio=tier_ratios, capacity_ratio=tier_ratios)
        )
    except FormatError as exc:
        _fail(str(exc), EXIT_INPUT)
    vio.write_json(out, vio.dump_substrate(net))
    click.echo(f"{len(net.nodes)} nodes, {len(net.arcs)} arcs -> {out}")


@main.command()
@click.option("--substrate", required=True, type=click.Path())
@click.option("--apps", required=True)
@click.option("--app", default=None, help="Application id (defaults to the only one).")
@click.option("--count", required=True, type=int)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--spatial", default="uniform", show_default=True,
              type=click.Choice(["uniform", "lognormal"]))
@click.option("--size-mean", default=10.0, show_default=True)
@click.option("--size-sigma", default=2.0, show_default=True)
@click.option("--origin-cap/--no-origin-cap", default=True, show_default=True,
              help="Cap per-origin demand by local capacity.")
@click.option("--out", required=True, type=click.Path())
def generate(substrate, apps, app, count, seed, spatial, size_mean, size_sigma, origin_cap, out):
    """Generate a request population over the substrate's edge nodes."""
    try:
        net, catalog, _, _ = _load_inputs(substrate, apps)
        app = app or sorted(catalog)[0]
        if app not in catalog:
            raise FormatError(f"unknown application {app!r}")
        params = GenParams(
            count=count,
            app=app,
            size_mean=size_mean,
            size_sigma=size_sigma,
            spatial=spatial,
            enforce_origin_cap=origin_cap,
        )
        requests = generate_requests(net, catalog, params, seed)
    except (FormatError, ValueError) as exc:
        _fail(str(exc), EXIT_INPUT)
    vio.write_json(out, vio.dump_requests(requests))
    click.echo(f"{len(requests)} requests -> {out}")


@main.command()
@click.option("--substrate", required=True, type=click.Path())
@click.option("--apps", required=True)
@click.option("--requests", "requests_path", required=True, type=click.Path())
@click.option("--node-tu", required=True, type=float, help="Node target utilization (1.0 = 100%).")
@click.option("--link-tu", required=True, type=float, help="Link target utilization (1.0 = 100%).")
@click.option(
    "--population",
    default=None,
    type=int,
    help="Size capacities for a run of this many requests (the request "
    "file then acts as a sample of the demand distribution).",
)
@click.option("--out", required=True, type=click.Path())
def calibrate(substrate, apps, requests_path, node_tu, link_tu, population, out):
    """Scale substrate capacities to hit the target utilizations."""
    try:
        net, catalog, reqs, _ = _load_inputs(substrate, apps, requests_path)
        scaled = calibrate_target_utilization(
            net, catalog, reqs, node_tu, link_tu, population=population
        )
    except (FormatError, ValueError) as exc:
        _fail(str(exc), EXIT_INPUT)
    vio.write_json(out, vio.dump_substrate(scaled))
    click.echo(f"calibrated substrate -> {out}")


def _serialize_embedding(emb) -> dict:
    return {
        "origin": emb.request.origin,
        "app": emb.request.app,
        "demand": emb.request.demand,
        "alternative": emb.alternative,
        "nodes": dict(sorted(emb.node_map.items())),
        "links": {
            f"{i}->{j}": [list(arc) for arc in path]
            for (i, j), path in sorted(emb.link_map.items())
        },
    }


@main.command()
@click.option("--substrate", required=True, type=click.Path())
@click.option("--apps", required=True)
@click.option("--requests", "requests_path", required=True, type=click.Path())
@click.option("--algo", required=True, help="lp | milp | greedy | tanto | vnep:T")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--psi", default=None, type=float, help="Rejection penalty (default: derived).")
@click.option("--efficiency", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def solve(substrate, apps, requests_path, algo, seed, psi, efficiency, out):
    """Run one algorithm on one instance and write its report."""
    known = {"lp", "milp", "greedy", "tanto"}
    if algo not in known and not algo.startswith("vnep:"):
        _fail(f"unknown algorithm {algo!r}", EXIT_INPUT)
    try:
        net, catalog, reqs, eff = _load_inputs(substrate, apps, requests_path, efficiency)
        if algo.startswith("vnep:"):
            t = int(algo.split(":", 1)[1])
            if not any(any(a.index == t for a in app.alternatives) for app in catalog.values()):
                raise FormatError(f"no alternative with index {t}")
        if psi is None:
            psi = compute_rejection_penalty(net, catalog, eff)
    except (FormatError, ValueError) as exc:
        _fail(str(exc), EXIT_INPUT)

    try:
        row, _, embeddings = harness._run_algorithm(algo, net, catalog, eff, reqs, psi, seed)
    except ValueError as exc:
        _fail(str(exc), EXIT_INPUT)
    except RuntimeError as exc:
        if "infeasible" in str(exc):
            _fail(str(exc), EXIT_INFEASIBLE)
        _fail(str(exc), EXIT_LIMIT)

    status = row.get("status", "ok")
    if status in ("infeasible", "unbounded"):
        _fail(f"solver status: {status}", EXIT_INFEASIBLE)
    if status in ("iteration_limit", "time_limit"):
        _fail(f"solver status: {status}", EXIT_LIMIT)

    report = {"schema_version": vio.SCHEMA_VERSION, "psi": psi}
    report.update({k: v for k, v in sorted(row.items())})
    if embeddings is not None:
        report["embeddings"] = [_serialize_embedding(e) for e in embeddings]
    vio.write_json(out, report)
    click.echo(f"{algo}: total_cost={row.get('total_cost')!r} -> {out}")


@main.command()
@click.option("--scenario", required=True, type=click.Path(), help="Scenario config JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--jobs", default=1, type=int, show_default=True)
@click.option("--seed", default=None, type=int, help="Override the scenario seed.")
def compare(scenario, out_dir, jobs, seed):
    """Run a full scenario (all repetitions and algorithms)."""
    try:
        config = load_scenario(scenario, jobs=jobs, seed=seed)
    except (FormatError, ValueError, KeyError) as exc:
        _fail(str(exc), EXIT_INPUT)
    result = run_scenario(config)
    paths = write_result(result, out_dir, config.apps)
    for err in result.errors:
        click.echo(
            f"repetition {err['repetition']} {err['algorithm']}: {err['error']}", err=True
        )
    click.echo(f"{len(result.rows)} rows -> {paths['rows']}")
    if not result.rows:
        sys.exit(EXIT_INFEASIBLE)


@main.command()
@click.option("--results", "results_dir", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def report(results_dir, out):
    """Aggregate result rows (mean/variance per algorithm and metric)."""
    rows = []
    paths = sorted(Path(results_dir).glob("*_rows.csv"))
    if not paths:
        _fail(f"no *_rows.csv under {results_dir}", EXIT_INPUT)
    for path in paths:
        with open(path, newline="") as fh:
            for raw in csv.DictReader(fh):
                row = {}
                for key, value in raw.items():
                    if value is None or value == "":
                        continue
                    if value in ("true", "false"):
                        row[key] = value == "true"
                        continue
                    try:
                        row[key] = float(value)
                    except ValueError:
                        row[key] = value
                rows.append(row)
    summary = harness.summarize(rows)
    vio.write_json(out, {"schema_version": vio.SCHEMA_VERSION, "aggregates": summary})
    click.echo(f"{len(rows)} rows summarized -> {out}")


def load_scenario(path, jobs: int = 1, seed=None) -> ScenarioConfig:
    """Build a ScenarioConfig from a scenario JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != vio.SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    base = Path(path).parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    sub = doc["substrate"]
    if isinstance(sub, dict) and "graphml" in sub:
        g = ingest_graphml(resolve(sub["graphml"]))
        ratio = float(sub.get("tier_ratio", 3.0))
        net = assign_costs_capacities(
            g, classify_tiers(g), TierParams(cost_ratio=ratio, capacity_ratio=ratio)
        )
    else:
        net = vio.load_substrate(resolve(sub))
    apps_spec = doc["applications"]
    catalog = (
        _load_catalog(apps_spec)
        if not (base / apps_spec).exists()
        else vio.load_applications(base / apps_spec)
    )
    eff = vio.load_efficiency(resolve(doc["efficiency"]) if doc.get("efficiency") else None)
    return ScenarioConfig(
        name=doc.get("name", Path(path).stem),
        substrate=net,
        apps=catalog,
        requests=int(doc["requests"]),
        node_tu=float(doc.get("node_tu", 1.0)),
        link_tu=float(doc.get("link_tu", 1.0)),
        app=doc.get("app", ""),
        size_mean=float(doc.get("size_mean", 10.0)),
        size_sigma=float(doc.get("size_sigma", 2.0)),
        spatial=doc.get("spatial", "uniform"),
        lognormal_mu=float(doc.get("lognormal_mu", 0.0)),
        lognormal_sigma=float(doc.get("lognormal_sigma", 1.0)),
        calibration_requests=int(doc.get("calibration_requests", 60_000)),
        algorithms=tuple(doc.get("algorithms", ["lp", "greedy", "tanto"])),
        repetitions=int(doc.get("repetitions", 30)),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        psi=(float(doc["psi"]) if doc.get("psi") is not None else None),
        efficiency=eff,
        jobs=jobs,
    )


if __name__ == "__main__":
    main()
