"""Sequential greedy embedding: each request gets the cheapest feasible
alternative against residual capacity, or is rejected.

The per-alternative search (`minv_embed`) decomposes the service tree
into maximal downward chains and embeds each chain with a Dijkstra run
over (substrate node, chain progress) states, so hops pay bandwidth and
placements pay compute.  Subtrees hanging off a placed branch node are
embedded recursively with the same rule.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import rng as _rng
from .model import (
    FORBIDDEN,
    AlternativeTopology,
    Application,
    EfficiencyMap,
    IntegralEmbedding,
    Request,
    SubstrateNetwork,
    VirtualLink,
)

_EPS = 1e-9


@dataclass
class ResidualState:
    """Remaining node and arc capacity, consumed as requests are accepted."""

    node: dict[str, float]
    arc: dict[tuple[str, str], float]

    @staticmethod
    def from_network(net: SubstrateNetwork) -> "ResidualState":
        return ResidualState(
            {n.id: n.capacity for n in net.nodes},
            {(a.src, a.dst): a.capacity for a in net.arcs},
        )

    def consume(self, node_loads: Mapping[str, float], arc_loads: Mapping) -> None:
        for v, amount in node_loads.items():
            self.node[v] = max(0.0, self.node[v] - amount)
        for vw, amount in arc_loads.items():
            self.arc[vw] = max(0.0, self.arc[vw] - amount)


@dataclass(frozen=True)
class CandidateEmbedding:
    node_map: dict[str, str]
    link_map: dict[tuple[str, str], tuple[tuple[str, str], ...]]
    cost: float
    node_loads: dict[str, float]
    arc_loads: dict[tuple[str, str], float]


def _chains(alt: AlternativeTopology) -> list[tuple[str, list[VirtualLink]]]:
    """Split the tree into maximal downward chains, in preorder.  Each
    chain starts at a node that is already placed by the time the chain
    is processed (the root, or an earlier chain's interior/branch node).
    """
    out: list[tuple[str, list[VirtualLink]]] = []

    def descend(start: str) -> None:
        for first in alt.children.get(start, ()):
            chain = [first]
            cur = first.child
            while len(alt.children.get(cur, ())) == 1:
                nxt = alt.children[cur][0]
                chain.append(nxt)
                cur = nxt.child
            out.append((start, chain))
            descend(cur)

    descend(alt.root)
    return out


def _embed_chain(
    net: SubstrateNetwork,
    efficiency: EfficiencyMap,
    alt: AlternativeTopology,
    chain: Sequence[VirtualLink],
    start_node: str,
    demand: float,
    residual: ResidualState,
    node_index: Mapping[str, int],
):
    """Cheapest placement of one chain of functions, starting from the
    fixed substrate position of the chain's first (already placed)
    function.  Returns (placements, paths, cost) or None.

    States are (substrate node, number of chain functions placed);
    Dijkstra explores 'place here' and 'hop one arc' moves.  Capacity is
    checked per individual move against the residual snapshot — the
    caller rechecks the assembled embedding cumulatively.
    """
    k = len(chain)
    dist: dict[tuple[str, int], float] = {(start_node, 0): 0.0}
    prev: dict[tuple[str, int], tuple[tuple[str, int], str]] = {}
    heap = [(0.0, 0, node_index[start_node], start_node)]
    best_final: Optional[tuple[str, int]] = None
    while heap:
        d, m, _, v = heapq.heappop(heap)
        if d > dist.get((v, m), float("inf")) + _EPS:
            continue
        if m == k:
            best_final = (v, m)
            break
        link = chain[m]
        func = alt.node_by_id[link.child]
        # place the next function on the current node
        coeff = efficiency.node(func.id, v)
        if coeff is not FORBIDDEN:
            load = demand * func.size * coeff
            if load <= residual.node[v] + _EPS:
                nd = d + load * net.node_by_id[v].cost
                if nd < dist.get((v, m + 1), float("inf")) - _EPS:
                    dist[(v, m + 1)] = nd
                    prev[(v, m + 1)] = ((v, m), "place")
                    heapq.heappush(heap, (nd, m + 1, node_index[v], v))
        # or carry the pending virtual link one arc further
        for arc in net.out_arcs.get(v, ()):
            w = arc.dst
            lcoeff = efficiency.link((link.parent, link.child), (v, w))
            if lcoeff is FORBIDDEN:
                continue
            load = demand * link.size * lcoeff
            if load > residual.arc[(v, w)] + _EPS:
                continue
            nd = d + load * arc.cost
            if nd < dist.get((w, m), float("inf")) - _EPS:
                dist[(w, m)] = nd
                prev[(w, m)] = ((v, m), "hop")
                heapq.heappush(heap, (nd, m, node_index[w], w))
    if best_final is None:
        return None
    # walk predecessors back to the start state to recover placements/paths
    placements: dict[str, str] = {}
    paths: dict[tuple[str, str], list[tuple[str, str]]] = {
        (vl.parent, vl.child): [] for vl in chain
    }
    state = best_final
    while state in prev:
        (pv, pm), move = prev[state]
        if move == "place":
            placements[chain[pm].child] = state[0]
        else:
            paths[(chain[pm].parent, chain[pm].child)].insert(0, (pv, state[0]))
        state = (pv, pm)
    return placements, {pair: tuple(p) for pair, p in paths.items()}, dist[best_final]


def minv_embed(
    net: SubstrateNetwork,
    alt: AlternativeTopology,
    origin: str,
    demand: float,
    efficiency: EfficiencyMap,
    residual: ResidualState,
) -> Optional[CandidateEmbedding]:
    """Minimal-cost embedding of one alternative rooted at ``origin``
    against the given residual capacities, or None if the search finds
    no feasible placement.

    Chains are embedded greedily in preorder; the assembled candidate is
    then rechecked cumulatively (several functions sharing one node must
    fit together), so a returned candidate is always safe to accept.
    """
    if origin not in net.node_by_id:
        return None
    if efficiency.node(alt.root, origin) is FORBIDDEN:
        return None
    node_index = {n.id: i for i, n in enumerate(net.nodes)}
    node_map: dict[str, str] = {alt.root: origin}
    link_map: dict[tuple[str, str], tuple[tuple[str, str], ...]] = {}
    cost = 0.0
    for start_func, chain in _chains(alt):
        got = _embed_chain(
            net, efficiency, alt, chain, node_map[start_func], demand, residual, node_index
        )
        if got is None:
            return None
        placements, paths, chain_cost = got
        node_map.update(placements)
        link_map.update(paths)
        cost += chain_cost
    # cumulative recheck: per-move checks were against the untouched
    # residual, so co-located functions / shared arcs need a joint pass
    node_loads: dict[str, float] = {}
    arc_loads: dict[tuple[str, str], float] = {}
    for i, v in node_map.items():
        coeff = efficiency.node(i, v)
        load = demand * alt.node_by_id[i].size * coeff
        if load:
            node_loads[v] = node_loads.get(v, 0.0) + load
    for vl in alt.links:
        for arc in link_map[(vl.parent, vl.child)]:
            load = demand * vl.size * efficiency.link((vl.parent, vl.child), arc)
            if load:
                arc_loads[arc] = arc_loads.get(arc, 0.0) + load
    for v, load in node_loads.items():
        if load > residual.node[v] + _EPS:
            return None
    for vw, load in arc_loads.items():
        if load > residual.arc[vw] + _EPS:
            return None
    return CandidateEmbedding(node_map, link_map, cost, node_loads, arc_loads)


@dataclass
class GreedyReport:
    accepted: int = 0
    rejected: int = 0
    embed_cost: float = 0.0
    rejected_demand: float = 0.0
    rejection_penalty: float = 0.0
    objective: float = 0.0
    runtime_s: float = 0.0
    order: tuple[int, ...] = field(default=())


def greedy_embed_all(
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    efficiency: EfficiencyMap,
    requests: Sequence[Request],
    psi: float,
    order_seed: int,
) -> tuple[list[IntegralEmbedding], GreedyReport]:
    """Embed requests one by one, cheapest feasible alternative first.

    Requests are visited in a seeded uniform shuffle (the input order is
    an artifact of generation, not of the modeled system), but the
    returned list matches the input order.  A request is rejected only
    when no alternative fits the current residual capacity; ties between
    equal-cost alternatives go to the lower alternative index.
    """
    t0 = time.perf_counter()
    residual = ResidualState.from_network(net)
    order = _rng.stream(order_seed, "greedy-order").permutation(len(requests))
    results: list[Optional[IntegralEmbedding]] = [None] * len(requests)
    report = GreedyReport(order=tuple(int(i) for i in order))
    for pos in order:
        req = requests[pos]
        app = apps[req.app]
        best: Optional[CandidateEmbedding] = None
        best_alt: Optional[int] = None
        for alt in sorted(app.alternatives, key=lambda a: a.index):
            cand = minv_embed(net, alt, req.origin, req.demand, efficiency, residual)
            if cand is not None and (best is None or cand.cost < best.cost):
                best, best_alt = cand, alt.index
        if best is None:
            results[pos] = IntegralEmbedding.reject(req)
            report.rejected += 1
            report.rejected_demand += req.demand
        else:
            residual.consume(best.node_loads, best.arc_loads)
            results[pos] = IntegralEmbedding(req, best_alt, best.node_map, best.link_map)
            report.accepted += 1
            report.embed_cost += best.cost
    report.rejection_penalty = psi * report.rejected_demand
    report.objective = report.embed_cost + report.rejection_penalty
    report.runtime_s = time.perf_counter() - t0
    return [e for e in results if e is not None], report
