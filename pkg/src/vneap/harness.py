"""Experiment harness: topology ingestion, tier classification, cost and
capacity assignment, request generation, target-utilization calibration,
and scenario execution with deterministic result rows.

Scenario flow per repetition: generate a calibration request set, scale
substrate capacities to the configured target utilizations, generate the
run request set, execute each configured algorithm, and collect metrics
through the validator.  All randomness is derived from the scenario seed
via labeled streams, so rows are byte-stable across runs and across
worker counts; wall-clock timings are kept out of the rows and reported
in a separate timings table.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np
from scipy import stats as _stats

from . import rng as _rng
from .formulation import (
    aggregate_requests,
    build_milp,
    build_relaxed_aggregate_lp,
    compute_rejection_penalty,
    fractional_solution,
    restrict_to_alternative,
)
from .greedy import greedy_embed_all
from .io import FormatError
from .lp import solve_lp, solve_milp_exact
from .model import (
    CORE,
    EDGE,
    TRANSPORT,
    Application,
    EfficiencyMap,
    Request,
    SubstrateArc,
    SubstrateNode,
    SubstrateNetwork,
)
from .tanto import TantoOptions, tanto
from .validator import (
    alternative_shares,
    check_feasibility,
    fractional_alternative_shares,
    fractional_cost,
    objective_consistency,
    rejection_rate,
    total_cost,
)

log = logging.getLogger("vneap.harness")

_TIER_RANK = {EDGE: 0, TRANSPORT: 1, CORE: 2}


# -- topology ingestion -------------------------------------------------------


def ingest_graphml(path: Union[str, Path]) -> nx.Graph:
    """Read an undirected topology from GraphML, keeping node attributes
    (geo coordinates etc.).  Parallel edges are collapsed and self-loops
    dropped; an empty graph is an error."""
    try:
        raw = nx.read_graphml(str(path))
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file")
    except Exception as exc:  # parse errors from the XML layer
        raise FormatError(f"{path}: {exc}")
    g = nx.Graph(raw)  # collapse direction/multi-edges
    loops = list(nx.selfloop_edges(g))
    if loops:
        log.warning("%s: dropping %d self-loop(s)", path, len(loops))
        g.remove_edges_from(loops)
    if g.number_of_nodes() == 0:
        raise FormatError(f"{path}: graph has no nodes")
    return nx.relabel_nodes(g, {n: str(n) for n in g.nodes})


def _jenks_breaks(values: Sequence[float], counts: Sequence[int], k: int) -> list[int]:
    """Natural-breaks partition of sorted unique ``values`` (weighted by
    ``counts``) into ``k`` contiguous classes minimizing within-class
    squared deviation.  Returns the start index of each class."""
    m = len(values)
    # prefix sums for O(1) within-class cost
    w = np.asarray(counts, dtype=float)
    x = np.asarray(values, dtype=float)
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cwx = np.concatenate([[0.0], np.cumsum(w * x)])
    cwxx = np.concatenate([[0.0], np.cumsum(w * x * x)])

    def cost(i: int, j: int) -> float:  # classes cover values[i:j]
        weight = cw[j] - cw[i]
        if weight <= 0:
            return 0.0
        mean = (cwx[j] - cwx[i]) / weight
        return (cwxx[j] - cwxx[i]) - weight * mean * mean

    best = {(0, 0): 0.0}
    choice: dict[tuple[int, int], int] = {}
    for classes in range(1, k + 1):
        for j in range(1, m + 1):
            if classes > j:
                continue
            best_cost = math.inf
            best_i = classes - 1
            for i in range(classes - 1, j):
                prev = best.get((classes - 1, i))
                if prev is None:
                    continue
                c = prev + cost(i, j)
                if c < best_cost - 1e-15:
                    best_cost = c
                    best_i = i
            best[(classes, j)] = best_cost
            choice[(classes, j)] = best_i
    starts = []
    j = m
    for classes in range(k, 0, -1):
        i = choice[(classes, j)]
        starts.append(i)
        j = i
    return list(reversed(starts))


def classify_tiers(graph: nx.Graph) -> tuple[dict[str, str], dict[tuple[str, str], str]]:
    """Three-tier split of a topology by node degree (natural breaks):
    lowest-degree class is edge, then transport, then core.  A link's
    tier is the lowest tier of its endpoints.

    With fewer than three distinct degree values the split degrades to
    two tiers (edge/core) or one (all edge), with a warning.
    """
    degrees = dict(graph.degree())
    unique = sorted(set(degrees.values()))
    counts = [sum(1 for d in degrees.values() if d == u) for u in unique]
    k = min(3, len(unique))
    if k < 3:
        log.warning(
            "only %d distinct degree value(s); degrading to %d tier(s)", len(unique), k
        )
    tier_names = {1: [EDGE], 2: [EDGE, CORE], 3: [EDGE, TRANSPORT, CORE]}[k]
    starts = _jenks_breaks(unique, counts, k)
    tier_of_value: dict[float, str] = {}
    for c in range(k):
        hi = starts[c + 1] if c + 1 < k else len(unique)
        for idx in range(starts[c], hi):
            tier_of_value[unique[idx]] = tier_names[c]
    node_tiers = {str(n): tier_of_value[degrees[n]] for n in graph.nodes}
    link_tiers = {}
    for u, v in graph.edges:
        low = min(node_tiers[str(u)], node_tiers[str(v)], key=_TIER_RANK.get)
        link_tiers[(str(u), str(v))] = low
    return node_tiers, link_tiers


@dataclass(frozen=True)
class TierParams:
    """Cost/capacity anchors.  Costs decrease and capacities grow by the
    tier ratio from edge toward core (ratio 3 gives the 9:3:1 cost and
    1:3:9 capacity ladder); link cost anchors are explicit since only
    the edge-vs-core relation (about 2x) is pinned down."""

    cost_ratio: float = 3.0
    capacity_ratio: float = 3.0
    edge_node_cost: float = 0.09
    edge_node_capacity: float = 1.0
    edge_link_capacity: float = 1.0
    link_costs: tuple[float, float, float] = (0.02, 0.01, 0.01)  # edge, transport, core

    def node_cost(self, tier: str) -> float:
        return self.edge_node_cost / self.cost_ratio ** _TIER_RANK[tier]

    def node_capacity(self, tier: str) -> float:
        return self.edge_node_capacity * self.capacity_ratio ** _TIER_RANK[tier]

    def link_cost(self, tier: str) -> float:
        return self.link_costs[_TIER_RANK[tier]]

    def link_capacity(self, tier: str) -> float:
        return self.edge_link_capacity * self.capacity_ratio ** _TIER_RANK[tier]


def assign_costs_capacities(
    graph: nx.Graph,
    tiers: tuple[dict[str, str], dict[tuple[str, str], str]],
    params: Optional[TierParams] = None,
) -> SubstrateNetwork:
    """Turn a classified topology into a substrate network.  Capacities
    are relative at this point; calibration fixes the absolute scale.
    Every undirected link becomes two directed arcs."""
    params = params or TierParams()
    node_tiers, link_tiers = tiers
    nodes = [
        SubstrateNode(
            id=n,
            cost=params.node_cost(node_tiers[n]),
            capacity=params.node_capacity(node_tiers[n]),
            tier=node_tiers[n],
        )
        for n in sorted(graph.nodes, key=str)
    ]
    arcs = []
    for u, v in sorted((tuple(map(str, e)) for e in graph.edges), key=lambda e: e):
        tier = link_tiers.get((u, v), link_tiers.get((v, u)))
        cost = params.link_cost(tier)
        cap = params.link_capacity(tier)
        arcs.append(SubstrateArc(u, v, cost, cap))
        arcs.append(SubstrateArc(v, u, cost, cap))
    return SubstrateNetwork(tuple(nodes), tuple(arcs))


# -- request generation and calibration ---------------------------------------


@dataclass(frozen=True)
class GenParams:
    """Request-population parameters: how many, how big, where from."""

    count: int
    app: str
    size_mean: float = 10.0
    size_sigma: float = 2.0
    size_floor: float = 0.1
    spatial: str = "uniform"  # or "lognormal"
    lognormal_mu: float = 0.0
    lognormal_sigma: float = 1.0
    enforce_origin_cap: bool = True


def _main_footprint(app: Application) -> tuple[float, float, float]:
    """(node units, link units, first-link units) consumed per unit of
    demand under the app's main alternative — used for the per-origin
    generation cap and for calibration."""
    main = app.main
    node_fp = sum(n.size for n in main.nodes)
    link_fp = sum(vl.size for vl in main.links)
    first = main.children.get(main.root, ())
    first_link = first[0].size if first else 0.0
    return node_fp, link_fp, first_link


def generate_requests(
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    params: GenParams,
    seed: int,
) -> list[Request]:
    """Draw requests originating at edge-tier nodes.

    Sizes are normal(mean, sigma) clipped below at the floor; origins
    are uniform over edge nodes or weighted by a log-normal profile over
    the ranked edge nodes (hotspots).  When the origin cap is enforced,
    an origin stops receiving requests once its accumulated demand would
    overload its own capacity or its outgoing arcs under the main
    alternative's footprint; generation then redraws, and gives up with
    a warning if the count is unreachable.
    """
    edges = [n for n in net.nodes if n.tier == EDGE]
    if not edges:
        raise ValueError("substrate has no edge-tier nodes to originate requests")
    edges = sorted(edges, key=lambda n: n.id)
    app = apps[params.app]
    node_fp, _, first_link = _main_footprint(app)
    stream = _rng.stream(seed, "generate")
    if params.spatial == "uniform":
        weights = np.full(len(edges), 1.0 / len(edges))
    elif params.spatial == "lognormal":
        xs = 3.0 * (np.arange(len(edges)) + 0.5) / len(edges)
        pdf = _stats.lognorm.pdf(xs, s=params.lognormal_sigma, scale=math.exp(params.lognormal_mu))
        weights = pdf / pdf.sum()
    else:
        raise ValueError(f"unknown spatial distribution {params.spatial!r}")

    caps = {}
    if params.enforce_origin_cap:
        for n in edges:
            out_cap = sum(a.capacity for a in net.out_arcs.get(n.id, ()))
            bounds = []
            if node_fp > 0:
                bounds.append(n.capacity / node_fp)
            if first_link > 0:
                bounds.append(out_cap / first_link)
            caps[n.id] = min(bounds) if bounds else math.inf
    used = {n.id: 0.0 for n in edges}

    out: list[Request] = []
    attempts = 0
    limit = max(10 * params.count, 1000)
    while len(out) < params.count and attempts < limit:
        attempts += 1
        origin = edges[int(stream.choice(len(edges), p=weights))].id
        size = max(params.size_floor, float(stream.normal(params.size_mean, params.size_sigma)))
        if params.enforce_origin_cap and used[origin] + size > caps[origin]:
            continue
        used[origin] += size
        out.append(Request(origin=origin, app=params.app, demand=size))
    if len(out) < params.count:
        log.warning(
            "origin caps exhausted: generated %d of %d requests", len(out), params.count
        )
    return out


def calibrate_target_utilization(
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    calib_requests: Sequence[Request],
    node_tu: float,
    link_tu: float,
    population: Optional[int] = None,
) -> SubstrateNetwork:
    """Uniformly rescale node and arc capacities so the calibration
    population's main-alternative footprint equals the requested target
    utilizations (total demand / total capacity).  Tier ratios are
    preserved by construction (uniform scaling); costs are untouched.

    When ``population`` is given, the calibration set is treated as a
    sample estimating per-request demand, and capacities are sized for a
    run of ``population`` requests instead of for the sample itself."""
    if node_tu <= 0 or link_tu <= 0:
        raise ValueError("target utilizations must be positive")
    node_demand = 0.0
    link_demand = 0.0
    for r in calib_requests:
        node_fp, link_fp, _ = _main_footprint(apps[r.app])
        node_demand += r.demand * node_fp
        link_demand += r.demand * link_fp
    if node_demand <= 0 or link_demand <= 0:
        raise ValueError("calibration set carries no demand")
    if population is not None:
        if population <= 0:
            raise ValueError("population must be positive")
        factor = population / len(calib_requests)
        node_demand *= factor
        link_demand *= factor
    total_node_cap = sum(n.capacity for n in net.nodes)
    total_arc_cap = sum(a.capacity for a in net.arcs)
    node_scale = (node_demand / node_tu) / total_node_cap
    arc_scale = (link_demand / link_tu) / total_arc_cap
    nodes = tuple(replace(n, capacity=n.capacity * node_scale) for n in net.nodes)
    arcs = tuple(replace(a, capacity=a.capacity * arc_scale) for a in net.arcs)
    return SubstrateNetwork(nodes, arcs)


def measured_utilization(
    net: SubstrateNetwork, apps: Mapping[str, Application], requests: Sequence[Request]
) -> tuple[float, float]:
    """(node TU, link TU) implied by a request set — calibration's
    inverse, used to verify the calibration identity."""
    node_demand = 0.0
    link_demand = 0.0
    for r in requests:
        node_fp, link_fp, _ = _main_footprint(apps[r.app])
        node_demand += r.demand * node_fp
        link_demand += r.demand * link_fp
    return (
        node_demand / sum(n.capacity for n in net.nodes),
        link_demand / sum(a.capacity for a in net.arcs),
    )


# -- scenario execution --------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    substrate: SubstrateNetwork
    apps: Mapping[str, Application]
    requests: int
    node_tu: float = 1.0
    link_tu: float = 1.0
    app: str = ""
    size_mean: float = 10.0
    size_sigma: float = 2.0
    spatial: str = "uniform"
    lognormal_mu: float = 0.0
    lognormal_sigma: float = 1.0
    calibration_requests: int = 60_000
    algorithms: tuple[str, ...] = ("lp", "greedy", "tanto")
    repetitions: int = 30
    seed: int = 0
    psi: Optional[float] = None
    efficiency: EfficiencyMap = field(default_factory=EfficiencyMap)
    jobs: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.node_tu <= 0 or self.link_tu <= 0:
            raise ValueError("target utilizations must be positive")
        if self.size_sigma <= 0:
            raise ValueError("size sigma must be positive")
        if not self.app:
            object.__setattr__(self, "app", sorted(self.apps)[0])


@dataclass
class ScenarioResult:
    config_name: str
    rows: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)


_BASE_COLUMNS = [
    "scenario",
    "algorithm",
    "repetition",
    "seed",
    "status",
    "request_count",
    "served_demand",
    "rejected_demand",
    "rejection_rate",
    "compute_cost",
    "bandwidth_cost",
    "rejection_cost",
    "total_cost",
    "objective",
    "objective_delta",
]

_BOUND_COLUMNS = [
    "initial_nonzero_y",
    "rounding_rejections",
    "stranded_rejections",
    "lp_exhausted_rejections",
    "overflow_rejections",
    "max_request_steps",
    "request_step_budget",
    "rejection_bound_ok",
    "psi_gap_ok",
    "steps_ok",
]


def result_columns(alt_indices: Sequence[int]) -> list[str]:
    return _BASE_COLUMNS + [f"share_{t}" for t in alt_indices] + _BOUND_COLUMNS


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _run_algorithm(
    algo: str,
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    efficiency: EfficiencyMap,
    requests: Sequence[Request],
    psi: float,
    seed: int,
) -> tuple[dict, dict, Optional[list]]:
    """One algorithm on one prepared repetition; returns (row, timing,
    embeddings) — embeddings is None for fractional algorithms."""
    total_demand = sum(r.demand for r in requests)
    row = {
        "algorithm": algo,
        "seed": seed,
        "status": "ok",
        "request_count": len(requests),
    }
    timing = {"algorithm": algo}
    catalog = apps
    if algo.startswith("vnep:"):
        catalog = restrict_to_alternative(apps, int(algo.split(":", 1)[1]))

    embeddings = None
    if algo == "lp" or algo.startswith("vnep:"):
        t0 = time.perf_counter()
        aggregates = aggregate_requests(requests)
        lp = build_relaxed_aggregate_lp(net, catalog, efficiency, aggregates, psi)
        sol = solve_lp(lp)
        timing["runtime_s"] = time.perf_counter() - t0
        if not sol.optimal:
            row["status"] = sol.status
            return row, timing, None
        frac = fractional_solution(lp, sol.x, sol.objective, aggregates, catalog)
        cost = fractional_cost(catalog, net, efficiency, frac, psi)
        row["served_demand"] = total_demand - frac.total_rejected_demand
        row["rejected_demand"] = frac.total_rejected_demand
        row["rejection_rate"] = (
            frac.total_rejected_demand / total_demand if total_demand else 0.0
        )
        row["objective"] = sol.objective
        row["objective_delta"] = objective_consistency(
            net, catalog, efficiency, psi, sol.objective, frac
        )
        shares = fractional_alternative_shares(frac, catalog)
        row.update(
            compute_cost=cost.compute,
            bandwidth_cost=cost.bandwidth,
            rejection_cost=cost.rejection,
            total_cost=cost.total,
        )
    elif algo == "milp":
        t0 = time.perf_counter()
        lp = build_milp(net, catalog, efficiency, requests, psi)
        sol = solve_milp_exact(lp)
        timing["runtime_s"] = time.perf_counter() - t0
        if not sol.optimal:
            row["status"] = sol.status
            return row, timing, None
        row["objective"] = sol.objective
        # metrics via the per-request variable values (integral, so the
        # fractional accounting is exact here)
        frac_like = fractional_solution(
            lp, sol.x, sol.objective, _milp_aggregates(requests), catalog
        )
        cost = fractional_cost(catalog, net, efficiency, frac_like, psi)
        row["served_demand"] = total_demand - frac_like.total_rejected_demand
        row["rejected_demand"] = frac_like.total_rejected_demand
        row["rejection_rate"] = (
            frac_like.total_rejected_demand / total_demand if total_demand else 0.0
        )
        row["objective_delta"] = objective_consistency(
            net, catalog, efficiency, psi, sol.objective, frac_like
        )
        shares = fractional_alternative_shares(frac_like, catalog)
        row.update(
            compute_cost=cost.compute,
            bandwidth_cost=cost.bandwidth,
            rejection_cost=cost.rejection,
            total_cost=cost.total,
        )
    elif algo == "greedy":
        embeddings, rep = greedy_embed_all(net, catalog, efficiency, requests, psi, seed)
        timing["runtime_s"] = rep.runtime_s
        violations = check_feasibility(net, catalog, efficiency, embeddings)
        if violations:
            raise RuntimeError(f"greedy produced an infeasible embedding set: {violations[0]}")
        cost = total_cost(net, catalog, efficiency, embeddings, psi, validate=False)
        row["served_demand"] = total_demand - rep.rejected_demand
        row["rejected_demand"] = rep.rejected_demand
        row["rejection_rate"] = rejection_rate(embeddings)
        row["objective"] = rep.objective
        row["objective_delta"] = abs(rep.objective - cost.total)
        shares = alternative_shares(embeddings)
        row.update(
            compute_cost=cost.compute,
            bandwidth_cost=cost.bandwidth,
            rejection_cost=cost.rejection,
            total_cost=cost.total,
        )
    elif algo == "tanto":
        embeddings, rep = tanto(
            net, catalog, efficiency, requests, psi, TantoOptions(), seed
        )
        timing["runtime_s"] = rep.runtime_s
        timing["lp_runtime_s"] = rep.lp_runtime_s
        timing["rounding_runtime_s"] = rep.rounding_runtime_s
        violations = check_feasibility(net, catalog, efficiency, embeddings)
        if violations:
            raise RuntimeError(f"tanto produced an infeasible embedding set: {violations[0]}")
        cost = total_cost(net, catalog, efficiency, embeddings, psi, validate=False)
        row["served_demand"] = total_demand - rep.rejected_demand
        row["rejected_demand"] = rep.rejected_demand
        row["rejection_rate"] = rejection_rate(embeddings)
        row["objective"] = cost.total
        row["objective_delta"] = 0.0
        shares = alternative_shares(embeddings)
        row.update(
            compute_cost=cost.compute,
            bandwidth_cost=cost.bandwidth,
            rejection_cost=cost.rejection,
            total_cost=cost.total,
        )
        row.update(
            initial_nonzero_y=rep.initial_nonzero_y,
            rounding_rejections=rep.rounding_rejections,
            stranded_rejections=rep.stranded_rejections,
            lp_exhausted_rejections=rep.lp_exhausted_rejections,
            overflow_rejections=rep.overflow_rejections,
            max_request_steps=rep.max_request_steps,
            request_step_budget=rep.request_step_budget,
            rejection_bound_ok=rep.rejection_bound_ok,
            psi_gap_ok=rep.psi_gap_ok,
            steps_ok=rep.steps_ok,
        )
    else:
        raise ValueError(f"unknown algorithm {algo!r}")

    for t in catalog_alternative_indices(apps):
        row[f"share_{t}"] = shares.get(t, 0.0)
    return row, timing, embeddings


def _milp_aggregates(requests: Sequence[Request]):
    """Per-request singleton aggregates matching the exact model's
    variable owners."""
    from .formulation import AggregatedRequest, request_owner

    return tuple(
        AggregatedRequest(request_owner(k), r.origin, r.app, r.demand, (k,))
        for k, r in enumerate(requests)
    )


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Execute all repetitions of a scenario.

    Each repetition derives its own seeds from the scenario seed, so the
    result rows are identical however many workers run them.  A failing
    repetition/algorithm is recorded in ``errors`` and skipped; the rest
    of the run proceeds.
    """
    result = ScenarioResult(config_name=config.name)
    psi = (
        config.psi
        if config.psi is not None
        else compute_rejection_penalty(config.substrate, config.apps, config.efficiency)
    )

    def one_rep(rep: int):
        rows, timings, errors = [], [], []
        calib_seed = _rng.substream_seed(config.seed, "calibration", rep)
        req_seed = _rng.substream_seed(config.seed, "requests", rep)
        gen = GenParams(
            count=config.requests,
            app=config.app,
            size_mean=config.size_mean,
            size_sigma=config.size_sigma,
            spatial=config.spatial,
            lognormal_mu=config.lognormal_mu,
            lognormal_sigma=config.lognormal_sigma,
        )
        try:
            calib = generate_requests(
                config.substrate,
                config.apps,
                replace(gen, count=config.calibration_requests, enforce_origin_cap=False),
                calib_seed,
            )
            net = calibrate_target_utilization(
                config.substrate,
                config.apps,
                calib,
                config.node_tu,
                config.link_tu,
                population=config.requests,
            )
            requests = generate_requests(net, config.apps, gen, req_seed)
        except Exception as exc:
            errors.append({"repetition": rep, "algorithm": "", "error": str(exc)})
            return rows, timings, errors
        for algo in config.algorithms:
            algo_seed = _rng.substream_seed(config.seed, "algo", algo, rep)
            try:
                row, timing, _ = _run_algorithm(
                    algo, net, config.apps, config.efficiency, requests, psi, algo_seed
                )
            except Exception as exc:
                errors.append({"repetition": rep, "algorithm": algo, "error": str(exc)})
                continue
            row["scenario"] = config.name
            row["repetition"] = rep
            timing.update(scenario=config.name, repetition=rep)
            rows.append(row)
            timings.append(timing)
        return rows, timings, errors

    reps = range(config.repetitions)
    if config.jobs > 1 and config.repetitions > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            pieces = list(pool.map(one_rep, reps))
    else:
        pieces = [one_rep(rep) for rep in reps]
    for rows, timings, errors in pieces:  # deterministic merge: repetition order
        result.rows.extend(rows)
        result.timings.extend(timings)
        result.errors.extend(errors)
    result.aggregates = summarize(result.rows)
    return result


def summarize(rows: Sequence[dict]) -> dict:
    """Per-algorithm mean and population variance of the main metrics."""
    out: dict = {}
    metrics = ["rejection_rate", "total_cost", "compute_cost", "bandwidth_cost", "rejection_cost"]
    by_algo: dict[str, list[dict]] = {}
    for row in rows:
        by_algo.setdefault(row["algorithm"], []).append(row)
    for algo, group in sorted(by_algo.items()):
        stats = {}
        for metric in metrics:
            values = [row[metric] for row in group if metric in row]
            if not values:
                continue
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            stats[metric] = {"mean": mean, "variance": var, "n": len(values)}
        out[algo] = stats
    return out


def catalog_alternative_indices(apps: Mapping[str, Application]) -> list[int]:
    seen: set[int] = set()
    for app in apps.values():
        for alt in app.alternatives:
            seen.add(alt.index)
    return sorted(seen)


def rows_to_csv(rows: Sequence[dict], alt_indices: Sequence[int]) -> str:
    """Render rows with a fixed column set and repr-exact floats, so the
    bytes are stable for a given row content."""
    columns = result_columns(alt_indices)
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def long_rows(rows: Sequence[dict], alt_indices: Sequence[int]) -> list[tuple]:
    """(scenario, repetition, seed, algorithm, metric, value) triples for
    plot-ready long-format export."""
    out = []
    skip = {"scenario", "algorithm", "repetition", "seed", "status"}
    columns = [c for c in result_columns(alt_indices) if c not in skip]
    for row in rows:
        for metric in columns:
            if metric in row:
                out.append(
                    (
                        row["scenario"],
                        row["repetition"],
                        row["seed"],
                        row["algorithm"],
                        metric,
                        row[metric],
                    )
                )
    return out


def long_rows_to_csv(rows: Sequence[dict], alt_indices: Sequence[int]) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "repetition", "seed", "algorithm", "metric", "value"])
    for entry in long_rows(rows, alt_indices):
        writer.writerow([_fmt(v) for v in entry])
    return buf.getvalue()


def timings_to_csv(timings: Sequence[dict]) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    columns = ["scenario", "repetition", "algorithm", "runtime_s", "lp_runtime_s", "rounding_runtime_s"]
    writer.writerow(columns)
    for t in timings:
        writer.writerow([_fmt(t.get(c)) for c in columns])
    return buf.getvalue()


def write_result(result: ScenarioResult, out_dir: Union[str, Path], apps: Mapping[str, Application]) -> dict[str, Path]:
    """Persist a scenario result: wide CSV, long CSV, JSON summary, and
    the timings sidecar (kept separate so the data files are
    byte-reproducible)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    alt_indices = catalog_alternative_indices(apps)
    paths = {
        "rows": out / f"{result.config_name}_rows.csv",
        "long": out / f"{result.config_name}_long.csv",
        "summary": out / f"{result.config_name}_summary.json",
        "timings": out / f"{result.config_name}_timings.csv",
    }
    paths["rows"].write_text(rows_to_csv(result.rows, alt_indices))
    paths["long"].write_text(long_rows_to_csv(result.rows, alt_indices))
    paths["summary"].write_text(
        json.dumps(
            {
                "schema_version": 1,
                "scenario": result.config_name,
                "aggregates": result.aggregates,
                "errors": result.errors,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    paths["timings"].write_text(timings_to_csv(result.timings))
    return paths
