"""JSON (de)serialization for all domain entities.

File formats are documented field-for-field in ``docs/FORMATS.md``.
Every loader accepts either a path or an already-parsed dict; every
dumper returns a plain dict, so round-tripping is
``load_x(dump_x(value)) == value``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .model import (
    FORBIDDEN,
    AlternativeTopology,
    Application,
    EfficiencyMap,
    Request,
    SubstrateArc,
    SubstrateNetwork,
    SubstrateNode,
    VirtualLink,
    VirtualNode,
)

SCHEMA_VERSION = 1

Source = Union[str, Path, Mapping]


class FormatError(ValueError):
    """Raised when an input document does not match its schema."""


def _load(source: Source) -> Mapping:
    if isinstance(source, Mapping):
        return source
    path = Path(source)
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc


def _require(doc: Mapping, key: str, where: str):
    if key not in doc:
        raise FormatError(f"{where}: missing required field {key!r}")
    return doc[key]


# -- substrate ---------------------------------------------------------------


def load_substrate(source: Source) -> SubstrateNetwork:
    doc = _load(source)
    nodes = [
        SubstrateNode(
            id=str(_require(n, "id", "substrate node")),
            cost=float(_require(n, "cost", "substrate node")),
            capacity=float(_require(n, "capacity", "substrate node")),
            tier=n.get("tier"),
        )
        for n in _require(doc, "nodes", "substrate")
    ]
    arcs: list[SubstrateArc] = []
    for l in _require(doc, "links", "substrate"):
        src = str(_require(l, "src", "substrate link"))
        dst = str(_require(l, "dst", "substrate link"))
        cost = float(_require(l, "cost", "substrate link"))
        cap = float(_require(l, "capacity", "substrate link"))
        arcs.append(SubstrateArc(src, dst, cost, cap))
        if not l.get("directed", False):
            arcs.append(SubstrateArc(dst, src, cost, cap))
    return SubstrateNetwork(nodes, arcs)


def dump_substrate(net: SubstrateNetwork) -> dict:
    # Arcs are emitted individually (directed) so the dump is a faithful
    # image of the in-memory network regardless of how it was built.
    return {
        "schema_version": SCHEMA_VERSION,
        "nodes": [
            {
                "id": n.id,
                "cost": n.cost,
                "capacity": n.capacity,
                **({"tier": n.tier} if n.tier is not None else {}),
            }
            for n in net.nodes
        ],
        "links": [
            {"src": a.src, "dst": a.dst, "cost": a.cost, "capacity": a.capacity, "directed": True}
            for a in net.arcs
        ],
    }


# -- applications ------------------------------------------------------------


def load_applications(source: Source) -> dict[str, Application]:
    doc = _load(source)
    catalog: dict[str, Application] = {}
    for a in _require(doc, "applications", "application catalog"):
        app_id = str(_require(a, "id", "application"))
        alts = []
        for t in _require(a, "alternatives", f"application {app_id}"):
            alts.append(
                AlternativeTopology(
                    app_id=app_id,
                    index=int(_require(t, "index", f"application {app_id} alternative")),
                    nodes=[
                        VirtualNode(str(n["id"]), float(n["size"]))
                        for n in _require(t, "nodes", f"application {app_id} alternative")
                    ],
                    links=[
                        VirtualLink(str(l["parent"]), str(l["child"]), float(l["size"]))
                        for l in t.get("links", [])
                    ],
                    root=str(_require(t, "root", f"application {app_id} alternative")),
                )
            )
        if app_id in catalog:
            raise FormatError(f"duplicate application id {app_id!r}")
        if not alts:
            raise FormatError(f"application {app_id!r} has no alternatives")
        catalog[app_id] = Application(app_id, tuple(alts))
    return catalog


def dump_applications(catalog: Mapping[str, Application]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "applications": [
            {
                "id": app.id,
                "alternatives": [
                    {
                        "index": alt.index,
                        "root": alt.root,
                        "nodes": [{"id": n.id, "size": n.size} for n in alt.nodes],
                        "links": [
                            {"parent": l.parent, "child": l.child, "size": l.size}
                            for l in alt.links
                        ],
                    }
                    for alt in app.alternatives
                ],
            }
            for app in catalog.values()
        ],
    }


# -- efficiency map ----------------------------------------------------------


def load_efficiency(source: Optional[Source]) -> EfficiencyMap:
    """Load an efficiency map; ``None`` yields the all-defaults map."""
    if source is None:
        return EfficiencyMap()
    doc = _load(source)
    node_coeffs = {}
    for entry in doc.get("nodes", []):
        key = (str(_require(entry, "function", "efficiency node entry")),
               str(_require(entry, "node", "efficiency node entry")))
        node_coeffs[key] = FORBIDDEN if entry.get("forbidden") else float(entry["coeff"])
    link_coeffs = {}
    for entry in doc.get("links", []):
        vlink = tuple(str(x) for x in _require(entry, "link", "efficiency link entry"))
        arc = tuple(str(x) for x in _require(entry, "arc", "efficiency link entry"))
        if len(vlink) != 2 or len(arc) != 2:
            raise FormatError("efficiency link entry: 'link' and 'arc' must be pairs")
        link_coeffs[(vlink, arc)] = (
            FORBIDDEN if entry.get("forbidden") else float(entry["coeff"])
        )
    return EfficiencyMap(node_coeffs, link_coeffs, default=float(doc.get("default", 1.0)))


def dump_efficiency(eff: EfficiencyMap) -> dict:
    nodes = []
    for (fn, node), c in eff.node_coeffs.items():
        entry = {"function": fn, "node": node}
        if c is FORBIDDEN:
            entry["forbidden"] = True
        else:
            entry["coeff"] = c
        nodes.append(entry)
    links = []
    for (vlink, arc), c in eff.link_coeffs.items():
        entry = {"link": list(vlink), "arc": list(arc)}
        if c is FORBIDDEN:
            entry["forbidden"] = True
        else:
            entry["coeff"] = c
        links.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "default": eff.default,
        "nodes": nodes,
        "links": links,
    }


# -- requests ----------------------------------------------------------------


def load_requests(source: Source) -> list[Request]:
    doc = _load(source)
    return [
        Request(
            origin=str(_require(r, "origin", "request")),
            app=str(_require(r, "app", "request")),
            demand=float(_require(r, "demand", "request")),
        )
        for r in _require(doc, "requests", "request list")
    ]


def dump_requests(requests: Sequence[Request]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "requests": [
            {"origin": r.origin, "app": r.app, "demand": r.demand} for r in requests
        ],
    }


def write_json(path: Union[str, Path], doc: Mapping) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")
