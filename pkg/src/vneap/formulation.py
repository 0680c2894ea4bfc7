"""Builds the embedding-with-alternatives MILP, its LP relaxation over
aggregated requests, and the transforms between aggregate and
per-request fractional solutions.

Model recap
-----------
For each demand owner (a request, or an aggregate of all requests that
share origin and application) and each alternative topology ``t`` there
are binary/fractional placement variables:

* ``x[t, i, v]``  -- virtual node ``i`` sits on substrate node ``v``;
* ``x[t, ij, vw]`` -- virtual link ``(i, j)`` crosses substrate arc
  ``(v, w)``.

The root anchor may only sit at the owner's origin, so a single root
variable per alternative is created there (placement anywhere else is
eliminated instead of constrained to zero).  Pairings marked forbidden
in the efficiency map are likewise never instantiated.

Constraints per owner:

* at most one alternative is selected
  (``sum_t x[t, root, origin] <= 1``; slack means rejection);
* flow conservation per virtual link and substrate node: the child's
  placement equals the parent's placement plus net arc inflow, which
  forces every chosen link onto a contiguous arc path;
* substrate node and arc loads stay within capacity, where the load of
  a placement is ``demand * element_size * efficiency``.

The objective charges every unit of induced load its element's cost and
adds a rejection penalty ``psi`` per unit of unserved demand.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import (
    FORBIDDEN,
    Application,
    EfficiencyMap,
    Request,
    SubstrateNetwork,
    EDGE,
)

log = logging.getLogger("vneap.formulation")


@dataclass(frozen=True)
class VariableKey:
    """Identifies one placement variable.

    ``kind`` is ``("n", virtual_node, substrate_node)`` for node
    placements and ``("l", parent, child, arc_src, arc_dst)`` for link
    placements.
    """

    owner: str
    alt: int
    kind: tuple

    def describe(self) -> str:
        if self.kind[0] == "n":
            _, i, v = self.kind
            return f"{self.owner} t={self.alt} node {i} -> {v}"
        _, i, j, v, w = self.kind
        return f"{self.owner} t={self.alt} link {i}->{j} on arc {v}->{w}"


@dataclass(frozen=True)
class Row:
    name: str
    coeffs: tuple[tuple[int, float], ...]  # (variable index, coefficient)
    sense: str  # "<=", ">=", "=="
    rhs: float


@dataclass
class LinearProgram:
    """A sparse linear program over :class:`VariableKey` variables.

    ``binary`` lists the variable indices that must be integral; an
    empty set makes the program a plain LP over the ``[lower, upper]``
    box.
    """

    keys: tuple[VariableKey, ...]
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    objective_constant: float
    rows: tuple[Row, ...]
    binary: frozenset[int]

    def __post_init__(self):
        self.index: dict[VariableKey, int] = {k: i for i, k in enumerate(self.keys)}

    @property
    def n_vars(self) -> int:
        return len(self.keys)

    @property
    def is_milp(self) -> bool:
        return bool(self.binary)

    def relax(self) -> "LinearProgram":
        """Continuous copy: same rows/bounds, no integrality marks."""
        return LinearProgram(
            self.keys,
            self.lower.copy(),
            self.upper.copy(),
            self.objective.copy(),
            self.objective_constant,
            self.rows,
            frozenset(),
        )

    def value_map(self, x: np.ndarray, drop_below: float = 0.0) -> dict[VariableKey, float]:
        out = {}
        for i, k in enumerate(self.keys):
            v = float(x[i])
            if abs(v) > drop_below:
                out[k] = v
        return out


@dataclass(frozen=True)
class AggregatedRequest:
    """All requests sharing (origin, application), merged.  ``members``
    are indices into the original request list; ``demand`` is the sum of
    member demands."""

    owner: str
    origin: str
    app: str
    demand: float
    members: tuple[int, ...]


@dataclass
class FractionalSolution:
    """A solved fractional embedding over aggregates: variable values,
    the solver objective, and per-aggregate rejected demand mass."""

    values: dict[VariableKey, float]
    objective: float
    rejection_mass: dict[str, float]  # owner -> unserved demand (demand units)
    aggregates: tuple[AggregatedRequest, ...] = field(default_factory=tuple)

    @property
    def total_rejected_demand(self) -> float:
        return sum(self.rejection_mass.values())


_SANE = re.compile(r"[^A-Za-z0-9_.]")


def _clean(s: str) -> str:
    return _SANE.sub("_", s)


def request_owner(index: int) -> str:
    return f"r{index}"


def _owner_rows(
    net: SubstrateNetwork,
    catalog: Mapping[str, Application],
    eff: EfficiencyMap,
    owners: Sequence[tuple[str, str, str, float]],
    psi: float,
):
    """Shared builder core.  ``owners`` holds
    ``(owner_id, origin, app_id, demand)`` tuples; demand is the
    request's demand for the per-request MILP and the aggregate total
    for the aggregate LP."""
    if psi < 0:
        raise ValueError(f"rejection penalty must be nonnegative, got {psi}")
    keys: list[VariableKey] = []
    objective: list[float] = []
    obj_const = 0.0
    index: dict[VariableKey, int] = {}

    def new_var(key: VariableKey, cost: float) -> int:
        idx = len(keys)
        keys.append(key)
        objective.append(cost)
        index[key] = idx
        return idx

    rows: list[Row] = []
    # capacity accumulators, filled while variables are created
    node_cap_coeffs: dict[str, list[tuple[int, float]]] = {n.id: [] for n in net.nodes}
    arc_cap_coeffs: dict[tuple[str, str], list[tuple[int, float]]] = {
        (a.src, a.dst): [] for a in net.arcs
    }

    for owner, origin, app_id, demand in owners:
        if app_id not in catalog:
            raise KeyError(f"unknown application {app_id!r} for owner {owner}")
        if origin not in net.node_by_id:
            raise KeyError(f"unknown origin node {origin!r} for owner {owner}")
        app = catalog[app_id]
        obj_const += demand * psi  # full penalty, bought back per served unit
        root_vars: list[int] = []
        for alt in app.alternatives:
            if eff.node(alt.root, origin) is FORBIDDEN:
                continue  # this alternative can never anchor here
            # root: only at the origin (placement elsewhere is eliminated)
            root_key = VariableKey(owner, alt.index, ("n", alt.root, origin))
            root_idx = new_var(root_key, -demand * psi)
            root_vars.append(root_idx)
            node_ids: dict[tuple[str, str], int] = {(alt.root, origin): root_idx}
            # non-root virtual nodes: one variable per allowed substrate node
            for vn in alt.nodes:
                if vn.id == alt.root:
                    continue
                for sn in net.nodes:
                    coeff = eff.node(vn.id, sn.id)
                    if coeff is FORBIDDEN:
                        continue
                    load = demand * vn.size * coeff
                    idx = new_var(
                        VariableKey(owner, alt.index, ("n", vn.id, sn.id)),
                        load * sn.cost,
                    )
                    node_ids[(vn.id, sn.id)] = idx
                    if load:
                        node_cap_coeffs[sn.id].append((idx, load))
            # link variables: one per allowed substrate arc
            link_ids: dict[tuple[str, str, str, str], int] = {}
            for vl in alt.links:
                for arc in net.arcs:
                    coeff = eff.link((vl.parent, vl.child), (arc.src, arc.dst))
                    if coeff is FORBIDDEN:
                        continue
                    load = demand * vl.size * coeff
                    idx = new_var(
                        VariableKey(
                            owner, alt.index, ("l", vl.parent, vl.child, arc.src, arc.dst)
                        ),
                        load * arc.cost,
                    )
                    link_ids[(vl.parent, vl.child, arc.src, arc.dst)] = idx
                    if load:
                        arc_cap_coeffs[(arc.src, arc.dst)].append((idx, load))
            # flow conservation: child placement = parent placement + net inflow
            for vl in alt.links:
                for sn in net.nodes:
                    coeffs: dict[int, float] = {}

                    def add(idx: Optional[int], c: float) -> None:
                        if idx is not None:
                            coeffs[idx] = coeffs.get(idx, 0.0) + c

                    add(node_ids.get((vl.child, sn.id)), 1.0)
                    add(node_ids.get((vl.parent, sn.id)), -1.0)
                    for arc in net.in_arcs[sn.id]:
                        add(link_ids.get((vl.parent, vl.child, arc.src, arc.dst)), -1.0)
                    for arc in net.out_arcs[sn.id]:
                        add(link_ids.get((vl.parent, vl.child, arc.src, arc.dst)), 1.0)
                    coeffs = {i: c for i, c in coeffs.items() if c != 0.0}
                    if not coeffs:
                        continue
                    rows.append(
                        Row(
                            _clean(
                                f"flow_{owner}_t{alt.index}_{vl.parent}.{vl.child}_{sn.id}"
                            ),
                            tuple(sorted(coeffs.items())),
                            "==",
                            0.0,
                        )
                    )
        if root_vars:
            rows.append(
                Row(
                    _clean(f"one_{owner}"),
                    tuple((i, 1.0) for i in root_vars),
                    "<=",
                    1.0,
                )
            )
    # capacity rows last, kept even when no variable touches them
    for n in net.nodes:
        rows.append(
            Row(_clean(f"ncap_{n.id}"), tuple(node_cap_coeffs[n.id]), "<=", n.capacity)
        )
    for a in net.arcs:
        rows.append(
            Row(
                _clean(f"acap_{a.src}_{a.dst}"),
                tuple(arc_cap_coeffs[(a.src, a.dst)]),
                "<=",
                a.capacity,
            )
        )
    n = len(keys)
    return (
        tuple(keys),
        np.zeros(n),
        np.ones(n),
        np.asarray(objective, dtype=float),
        obj_const,
        tuple(rows),
    )


def build_milp(
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    efficiency: EfficiencyMap,
    requests: Sequence[Request],
    psi: float,
) -> LinearProgram:
    """Exact binary program over individual requests."""
    owners = [
        (request_owner(k), r.origin, r.app, r.demand) for k, r in enumerate(requests)
    ]
    keys, lo, hi, obj, const, rows = _owner_rows(net, apps, efficiency, owners, psi)
    return LinearProgram(keys, lo, hi, obj, const, rows, frozenset(range(len(keys))))


def aggregate_requests(requests: Sequence[Request]) -> list[AggregatedRequest]:
    """Merge requests by (origin, application).  Aggregates are ordered
    by (origin, application) so the result is independent of request
    order."""
    groups: dict[tuple[str, str], list[int]] = {}
    for k, r in enumerate(requests):
        groups.setdefault((r.origin, r.app), []).append(k)
    out = []
    for i, (origin, app) in enumerate(sorted(groups)):
        members = groups[(origin, app)]
        out.append(
            AggregatedRequest(
                owner=f"g{i}",
                origin=origin,
                app=app,
                demand=sum(requests[k].demand for k in members),
                members=tuple(members),
            )
        )
    return out


def build_relaxed_aggregate_lp(
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    efficiency: EfficiencyMap,
    aggregates: Sequence[AggregatedRequest],
    psi: float,
) -> LinearProgram:
    """Continuous relaxation over aggregated demand.  Variable count
    depends on the number of distinct (origin, application) pairs, not
    on the number of requests."""
    owners = [(g.owner, g.origin, g.app, g.demand) for g in aggregates]
    keys, lo, hi, obj, const, rows = _owner_rows(net, apps, efficiency, owners, psi)
    return LinearProgram(keys, lo, hi, obj, const, rows, frozenset())


def fractional_solution(
    lp: LinearProgram,
    x: np.ndarray,
    objective: float,
    aggregates: Sequence[AggregatedRequest],
    apps: Mapping[str, Application],
) -> FractionalSolution:
    """Package solver output: values by key plus per-aggregate rejected
    demand (the demand-weighted slack of the one-alternative rows)."""
    values = lp.value_map(x)
    rejection = {}
    for g in aggregates:
        served = 0.0
        for alt in apps[g.app].alternatives:
            served += values.get(
                VariableKey(g.owner, alt.index, ("n", alt.root, g.origin)), 0.0
            )
        rejection[g.owner] = (1.0 - min(served, 1.0)) * g.demand
    return FractionalSolution(values, objective, rejection, tuple(aggregates))


def split_solution(
    y: Mapping[VariableKey, float], requests: Sequence[Request]
) -> dict[VariableKey, float]:
    """Derive a per-request fractional solution from an aggregate one:
    each member receives the aggregate values scaled by its share
    ``d(r) / d_total`` of the aggregate demand."""
    aggregates = aggregate_requests(requests)
    by_owner: dict[str, AggregatedRequest] = {g.owner: g for g in aggregates}
    out: dict[VariableKey, float] = {}
    for key, val in y.items():
        g = by_owner.get(key.owner)
        if g is None:
            raise KeyError(f"value for unknown aggregate {key.owner!r}")
        for member in g.members:
            share = requests[member].demand / g.demand
            out[VariableKey(request_owner(member), key.alt, key.kind)] = val * share
    return out


def merge_solution(
    x: Mapping[VariableKey, float], requests: Sequence[Request]
) -> dict[VariableKey, float]:
    """Inverse of :func:`split_solution`: sum member values back into
    their aggregate."""
    aggregates = aggregate_requests(requests)
    owner_of_member = {}
    for g in aggregates:
        for member in g.members:
            owner_of_member[request_owner(member)] = g.owner
    out: dict[VariableKey, float] = {}
    for key, val in x.items():
        owner = owner_of_member.get(key.owner)
        if owner is None:
            raise KeyError(f"value for unknown request owner {key.owner!r}")
        merged = VariableKey(owner, key.alt, key.kind)
        out[merged] = out.get(merged, 0.0) + val
    return out


def restrict_to_alternative(
    apps: Mapping[str, Application], t: int
) -> dict[str, Application]:
    """Catalog in which every application keeps only alternative ``t``
    (single-alternative baseline)."""
    out = {}
    for app in apps.values():
        out[app.id] = Application(app.id, (app.alternative(t),))
    return out


def compute_rejection_penalty(
    net: SubstrateNetwork,
    apps: Mapping[str, Application],
    efficiency: EfficiencyMap,
) -> float:
    """Penalty per unit of rejected demand: the cost of the most
    expensive sensible embedding, taken as collocating every function of
    an application's main alternative on one edge-tier node (the
    priciest realistic placement), maximized over edge nodes and
    applications.  Falls back to all nodes when no edge tier exists."""
    candidates = [n for n in net.nodes if n.tier == EDGE]
    if not candidates:
        log.warning(
            "no edge-tier nodes; computing rejection penalty over all %d nodes",
            len(net.nodes),
        )
        candidates = list(net.nodes)
    best = -math.inf
    for app in apps.values():
        main = app.main
        for n in candidates:
            total = 0.0
            feasible = True
            for vn in main.nodes:
                coeff = efficiency.node(vn.id, n.id)
                if coeff is FORBIDDEN:
                    feasible = False
                    break
                if vn.id != main.root:
                    total += vn.size * coeff * n.cost
            if feasible:
                best = max(best, total)
    if best == -math.inf:
        raise ValueError(
            "cannot compute rejection penalty: no node admits a full collocation "
            "of any application's main alternative"
        )
    return best
