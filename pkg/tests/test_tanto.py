"""LP-rounding embedder: weighted selection, the per-request walk, restore
semantics, and end-to-end behaviour against the fractional optimum."""

from __future__ import annotations

from importlib import resources

import numpy as np
import pytest
from scipy import stats

from vneap.formulation import (
    AggregatedRequest,
    VariableKey,
    aggregate_requests,
    compute_rejection_penalty,
)
from vneap.harness import (
    GenParams,
    assign_costs_capacities,
    calibrate_target_utilization,
    classify_tiers,
    generate_requests,
    ingest_graphml,
)
from vneap.io import load_applications
from vneap.model import (
    AlternativeTopology,
    Application,
    EfficiencyMap,
    Request,
    VirtualNode,
)
from vneap.tanto import (
    RoundingState,
    TantoOptions,
    embed_request,
    tanto,
    weighted_random_select,
)
from vneap.validator import (
    alternative_shares,
    check_feasibility,
    total_cost,
)

from conftest import random_instance, toy_apps, toy_net, unit_requests

PSI_TOY = 1050.0


# -- weighted random selection -------------------------------------------------


def test_zero_weights_are_never_drawn():
    rng = np.random.default_rng(0)
    assert all(weighted_random_select([1.0, 0.0], rng) == 0 for _ in range(50))
    assert all(weighted_random_select([0.0, 2.0, 0.0], rng) == 1 for _ in range(50))


def test_single_weight_is_index_zero():
    assert weighted_random_select([3.5], np.random.default_rng(1)) == 0


def test_degenerate_weights_raise():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError, match="sum to zero"):
        weighted_random_select([0.0, 0.0], rng)
    with pytest.raises(ValueError, match="negative"):
        weighted_random_select([1.0, -0.1], rng)


def test_draw_frequencies_match_weights():
    """(1, 1, 2) must come out (0.25, 0.25, 0.5); chi-square at 99%."""
    rng = np.random.default_rng(12345)
    n = 100_000
    counts = np.zeros(3)
    for _ in range(n):
        counts[weighted_random_select([1.0, 1.0, 2.0], rng)] += 1
    expected = np.array([0.25, 0.25, 0.5]) * n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < stats.chi2.isf(0.01, df=2)


# -- the per-request walk --------------------------------------------------------


def owner_key(alt: int, kind) -> VariableKey:
    return VariableKey("g0", alt, kind)


def make_state(values: dict[VariableKey, float], demand: float = 1.0) -> RoundingState:
    net = toy_net()
    agg = AggregatedRequest("g0", "E", "cam", demand, (0,))
    return RoundingState.for_aggregate(
        net, agg, values, toy_apps()["cam"].alternatives
    )


def test_concentrated_solution_walks_deterministically():
    values = {
        owner_key(0, ("n", "theta", "E")): 1.0,
        owner_key(0, ("l", "theta", "A", "E", "C")): 1.0,
        owner_key(0, ("n", "A", "C")): 1.0,
        owner_key(0, ("n", "B", "C")): 1.0,
    }
    state = make_state(values)
    emb = embed_request(
        Request("E", "cam", 1.0),
        toy_apps()["cam"].alternatives,
        state,
        np.random.default_rng(0),
    )
    assert not emb.rejected
    assert emb.alternative == 0
    assert emb.node_map == {"theta": "E", "A": "C", "B": "C"}
    assert emb.link_map == {("theta", "A"): (("E", "C"),), ("A", "B"): ()}
    assert state.accepted == 1
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in state.y.values())


def test_insufficient_root_mass_rejects_and_zeroes():
    root = owner_key(0, ("n", "theta", "E"))
    state = make_state({root: 0.4})
    emb = embed_request(
        Request("E", "cam", 1.0),
        toy_apps()["cam"].alternatives,
        state,
        np.random.default_rng(0),
    )
    assert emb.rejected
    assert state.rounding_rejections == 1
    assert state.y[root] == 0.0
    assert root in state.zeroed


def test_rejection_restores_everything_but_the_zeroed_variable():
    root = owner_key(0, ("n", "theta", "E"))
    hop = owner_key(0, ("l", "theta", "A", "E", "C"))
    place_a = owner_key(0, ("n", "A", "C"))
    state = make_state({root: 1.0, hop: 1.0, place_a: 0.3, owner_key(0, ("n", "B", "C")): 1.0})
    emb = embed_request(
        Request("E", "cam", 1.0),
        toy_apps()["cam"].alternatives,
        state,
        np.random.default_rng(0),
    )
    assert emb.rejected
    assert state.rounding_rejections == 1
    assert state.zeroed == {place_a}
    assert state.y[place_a] == 0.0
    assert state.y[root] == pytest.approx(1.0)  # consumed, then restored
    assert state.y[hop] == pytest.approx(1.0)


def test_zeroed_variables_stay_zero_for_later_requests():
    root = owner_key(0, ("n", "theta", "E"))
    state = make_state({root: 0.4}, demand=2.0)
    alts = toy_apps()["cam"].alternatives
    rng = np.random.default_rng(0)
    first = embed_request(Request("E", "cam", 2.0), alts, state, rng)
    assert first.rejected and state.rounding_rejections == 1
    second = embed_request(Request("E", "cam", 2.0), alts, state, rng)
    assert second.rejected
    assert state.lp_exhausted_rejections == 1  # nothing left to draw from
    assert state.y[root] == 0.0


def test_share_of_draws_tracks_the_fractional_weights():
    """Root mass (0.7, 0.3) over two single-node alternatives: the served
    split stays within 3-sigma binomial bounds of 0.7 while mass lasts."""
    alts = (
        AlternativeTopology("duo", 0, [VirtualNode("r", 0.0)], [], "r"),
        AlternativeTopology("duo", 1, [VirtualNode("r", 0.0)], [], "r"),
    )
    supply, draws = 10_000, 1_000
    values = {
        owner_key(0, ("n", "r", "E")): 0.7,
        owner_key(1, ("n", "r", "E")): 0.3,
    }
    net = toy_net()
    agg = AggregatedRequest("g0", "E", "duo", float(supply), tuple(range(supply)))
    state = RoundingState.for_aggregate(net, agg, values, alts)
    rng = np.random.default_rng(77)
    served = [
        embed_request(Request("E", "duo", 1.0), alts, state, rng).alternative
        for _ in range(draws)
    ]
    share = served.count(0) / draws
    sigma = (0.7 * 0.3 / draws) ** 0.5
    assert abs(share - 0.7) <= 3 * sigma


# -- end-to-end --------------------------------------------------------------------


def test_tight_uplink_moves_everyone_to_the_accelerated_option():
    """3000 uplink units cannot carry any 100-unit stream, so the optimum
    serves all 100 requests via the 30-unit alternative; rounding follows
    with no rejections."""
    net, apps, eff = toy_net(link_cap=3000.0), toy_apps(), EfficiencyMap()
    requests = unit_requests(100)
    embeddings, report = tanto(net, apps, eff, requests, PSI_TOY, seed=0)
    assert report.lp_objective == pytest.approx(100 * 280.0, rel=1e-9)
    assert report.rejected == 0
    assert report.accepted == 100
    assert alternative_shares(embeddings) == {1: pytest.approx(1.0)}
    assert check_feasibility(net, apps, eff, embeddings) == []
    breakdown = total_cost(net, apps, eff, embeddings, PSI_TOY)
    assert breakdown.total == pytest.approx(100 * 280.0, rel=1e-9)


def test_integral_relaxation_is_copied_exactly():
    net, apps, eff = toy_net(), toy_apps(), EfficiencyMap()
    embeddings, report = tanto(net, apps, eff, unit_requests(1), PSI_TOY, seed=3)
    (emb,) = embeddings
    assert emb.alternative == 0
    assert emb.node_map == {"theta": "E", "A": "C", "B": "C"}
    assert emb.link_map == {("theta", "A"): (("E", "C"),), ("A", "B"): ()}
    assert report.lp_objective == pytest.approx(205.0, rel=1e-9)


def test_rejection_rate_tracks_the_fractional_optimum_under_saturation():
    """On a calibrated national topology at 100% target utilization the
    rounded rejection mass lands within a few points of the fractional
    optimum's."""
    gml = resources.files("vneap").joinpath("fixtures/topologies/arnes_si.graphml")
    graph = ingest_graphml(str(gml))
    net = assign_costs_capacities(graph, classify_tiers(graph))
    apps = load_applications(
        str(resources.files("vneap").joinpath("fixtures/cctv_two.json"))
    )
    app_id = next(iter(apps))
    eff = EfficiencyMap()
    calib = generate_requests(
        net, apps, GenParams(count=5000, app=app_id, enforce_origin_cap=False), seed=5
    )
    net = calibrate_target_utilization(net, apps, calib, 1.0, 1.0, population=600)
    requests = generate_requests(
        net, apps, GenParams(count=600, app=app_id, enforce_origin_cap=False), seed=6
    )
    psi = compute_rejection_penalty(net, apps, eff)
    total = sum(r.demand for r in requests)
    embeddings, report = tanto(net, apps, eff, requests, psi, seed=7)
    lp_rate = report.lp_rejected_demand / total
    tanto_rate = report.rejected_demand / total
    assert lp_rate == pytest.approx(0.2675, abs=2e-4)
    assert tanto_rate >= lp_rate - 1e-9  # the relaxation is the lower bound
    assert tanto_rate - lp_rate <= 0.05
    assert check_feasibility(net, apps, eff, embeddings) == []


def test_fixed_seed_reproduces_the_run():
    net, apps, eff, requests, psi = random_instance(29)
    a, ra = tanto(net, apps, eff, requests, psi, seed=5)
    b, rb = tanto(net, apps, eff, requests, psi, seed=5)
    assert [(e.alternative, dict(e.node_map), dict(e.link_map)) for e in a] == [
        (e.alternative, dict(e.node_map), dict(e.link_map)) for e in b
    ]
    assert ra.rejected == rb.rejected
    assert ra.total_steps == rb.total_steps


def test_worker_count_does_not_change_the_result():
    net, apps, eff = toy_net(link_cap=3000.0), toy_apps(), EfficiencyMap()
    requests = [Request(origin, "cam", 1.0) for origin in ("E", "C") for _ in range(30)]
    serial, rs = tanto(net, apps, eff, requests, PSI_TOY, TantoOptions(jobs=1), seed=9)
    threaded, rt = tanto(net, apps, eff, requests, PSI_TOY, TantoOptions(jobs=4), seed=9)
    assert [(e.alternative, dict(e.node_map), dict(e.link_map)) for e in serial] == [
        (e.alternative, dict(e.node_map), dict(e.link_map)) for e in threaded
    ]
    assert rs.rejected == rt.rejected


@pytest.mark.parametrize("seed", [1, 7, 19])
def test_reported_guarantees_hold_and_are_recomputable(seed):
    net, apps, eff, requests, psi = random_instance(seed)
    embeddings, report = tanto(net, apps, eff, requests, psi, seed=seed)
    assert check_feasibility(net, apps, eff, embeddings) == []
    assert report.rejection_bound_ok and report.psi_gap_ok and report.steps_ok
    assert report.rounding_rejections <= report.initial_nonzero_y
    assert report.max_request_steps <= report.request_step_budget
    # the penalty-gap bound, rebuilt from raw instance quantities
    d_max = max(r.demand for r in requests)
    used = {r.app for r in requests}
    catalog_size = sum(
        len(a.nodes) + len(a.links) for app in used for a in apps[app].alternatives
    )
    bound = psi * d_max * len(net.nodes) * len(net.arcs) * catalog_size
    assert report.psi_gap_bound == pytest.approx(bound, rel=1e-12)
    assert report.psi_tanto - report.psi_lp <= bound + 1e-6 * (1 + bound)
