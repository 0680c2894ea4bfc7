"""Serialization round-trips and schema error reporting."""

from __future__ import annotations

import json

import pytest

from vneap.io import (
    FormatError,
    dump_applications,
    dump_efficiency,
    dump_requests,
    dump_substrate,
    load_applications,
    load_efficiency,
    load_requests,
    load_substrate,
    write_json,
)
from vneap.model import FORBIDDEN, EfficiencyMap, Request

from conftest import toy_apps, toy_net, unit_requests


def test_substrate_round_trip():
    net = toy_net(link_cap=5000.0, node_cap=300.0)
    back = load_substrate(dump_substrate(net))
    assert back.nodes == net.nodes
    assert back.arcs == net.arcs


def test_substrate_round_trip_through_file(tmp_path):
    path = tmp_path / "net.json"
    write_json(path, dump_substrate(toy_net()))
    back = load_substrate(path)
    assert back.nodes == toy_net().nodes
    assert back.arcs == toy_net().arcs


def test_undirected_links_expand_to_arc_pairs():
    doc = {
        "nodes": [
            {"id": "a", "cost": 1.0, "capacity": 9.0},
            {"id": "b", "cost": 2.0, "capacity": 9.0},
        ],
        "links": [{"src": "a", "dst": "b", "cost": 0.5, "capacity": 4.0}],
    }
    net = load_substrate(doc)
    assert {(a.src, a.dst) for a in net.arcs} == {("a", "b"), ("b", "a")}
    assert all(a.cost == 0.5 and a.capacity == 4.0 for a in net.arcs)


def test_applications_round_trip():
    catalog = toy_apps()
    back = load_applications(dump_applications(catalog))
    assert set(back) == set(catalog)
    for app_id, app in catalog.items():
        for alt, alt2 in zip(app.alternatives, back[app_id].alternatives):
            assert alt2.index == alt.index
            assert alt2.root == alt.root
            assert alt2.nodes == alt.nodes
            assert alt2.links == alt.links


def test_requests_round_trip():
    reqs = unit_requests(3) + [Request("C", "cam", 2.5)]
    assert load_requests(dump_requests(reqs)) == reqs


def test_efficiency_round_trip_keeps_forbidden_entries():
    eff = EfficiencyMap(
        node_coeffs={("A", "E"): FORBIDDEN, ("A", "C"): 0.8},
        link_coeffs={(("A", "B"), ("E", "C")): 1.5},
        default=0.9,
    )
    back = load_efficiency(dump_efficiency(eff))
    assert back.node_coeffs == eff.node_coeffs
    assert back.link_coeffs == eff.link_coeffs
    assert back.default == eff.default


def test_no_efficiency_source_means_all_defaults():
    eff = load_efficiency(None)
    assert eff.node_coeffs == {} and eff.link_coeffs == {}
    assert eff.node("anything", "anywhere") == 1.0


def test_bundled_catalogs_load():
    from importlib import resources

    for name in ("cctv_two", "cctv_four"):
        path = resources.files("vneap").joinpath(f"fixtures/{name}.json")
        catalog = load_applications(str(path))
        assert catalog, name
        for app in catalog.values():
            assert app.alternatives


# -- error reporting ---------------------------------------------------------


def test_missing_field_names_the_field():
    with pytest.raises(FormatError, match="missing required field 'capacity'"):
        load_substrate({"nodes": [{"id": "a", "cost": 1.0}], "links": []})


def test_invalid_json_reports_the_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"nodes": [,]}')
    with pytest.raises(FormatError, match="invalid JSON at line 1"):
        load_substrate(path)


def test_missing_file_is_a_format_error(tmp_path):
    with pytest.raises(FormatError):
        load_substrate(tmp_path / "nope.json")


def test_duplicate_application_id_rejected():
    doc = dump_applications(toy_apps())
    doc["applications"].append(json.loads(json.dumps(doc["applications"][0])))
    with pytest.raises(FormatError, match="duplicate application id"):
        load_applications(doc)


def test_application_without_alternatives_rejected():
    with pytest.raises(FormatError, match="no alternatives"):
        load_applications({"applications": [{"id": "x", "alternatives": []}]})


def test_efficiency_link_entry_must_be_pairs():
    doc = {"links": [{"link": ["A", "B", "C"], "arc": ["E", "C"], "coeff": 1.0}]}
    with pytest.raises(FormatError, match="must be pairs"):
        load_efficiency(doc)
