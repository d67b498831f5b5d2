import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from abp.model import assemble_spec
from abp.specio import fixture_text
from abp.validator import (
    CATALOG,
    Severity,
    UnknownCode,
    Verdict,
    explain_finding,
    live_agents,
    validate_spec,
)

from specgen import agent, cycle_doc, diamond_doc, random_dag_doc, ref


def pizza_doc():
    return json.loads(fixture_text("pizza.abp.json"))


def agent_entry(doc, aid):
    return next(a for a in doc["agents"] if a["id"] == aid)


def object_entry(doc, oid):
    return next(o for o in doc["objects"] if o["id"] == oid)


def report_of(doc):
    return validate_spec(assemble_spec(doc))


def test_pizza_is_clean(pizza):
    report = validate_spec(pizza)
    assert report.findings == ()
    assert report.verdict is Verdict.VALID


def test_undeclared_variant_use():
    doc = pizza_doc()
    object_entry(doc, "checkedOrder")["variants"].append("MAYBE")
    agent_entry(doc, "a3")["triggers"] = ["checkedOrder/MAYBE"]
    report = report_of(doc)
    assert report.verdict is Verdict.INVALID
    assert report.subjects("E-DEAD-AGENT") == {"a3", "a4", "a5"}
    assert report.subjects("W-REDUNDANT-OBJECT") == {"checkedOrder", "pizzaSchedule", "pizzaDone"}
    assert set(report.codes) == {"E-DEAD-AGENT", "W-REDUNDANT-OBJECT"}
    (a3,) = [f for f in report.findings if f.subject == "a3"]
    assert a3.related == ("checkedOrder/MAYBE",)
    (co,) = [f for f in report.findings if f.subject == "checkedOrder"]
    assert co.related == ("OK",)


def test_extra_object_is_redundant():
    doc = pizza_doc()
    doc["objects"].append({"id": "extra", "kind": "document", "variants": [], "physical": False})
    agent_entry(doc, "a4")["finals"].append("extra")
    report = report_of(doc)
    assert report.codes == ["W-REDUNDANT-OBJECT"]
    assert report.subjects("W-REDUNDANT-OBJECT") == {"extra"}
    assert report.verdict is Verdict.VALID_WITH_WARNINGS


def test_resource_use_is_consumption():
    doc = pizza_doc()
    agent_entry(doc, "a1")["resources"] = []
    doc["resource_objects"] = []
    # menu is then neither seeded nor used; still not a released object
    assert report_of(doc).findings == ()


def test_cycle():
    report = report_of(cycle_doc())
    assert "E-CYCLE" in report.codes
    (f,) = [f for f in report.findings if f.code == "E-CYCLE"]
    assert f.subject == "G1" and f.related[0] == f.related[-1]


def test_goal_mismatch():
    doc = pizza_doc()
    agent_entry(doc, "a4")["goal"] = "PizzaDelivered"
    assert "E-GOAL-MISMATCH" in report_of(doc).codes


def test_unreachable_end():
    doc = pizza_doc()
    # all producers of end objects are woken by something nobody makes
    doc["objects"].append({"id": "never", "kind": "document", "variants": [], "physical": False})
    agent_entry(doc, "a2")["triggers"] = ["never"]
    agent_entry(doc, "a5")["triggers"] = ["never"]
    report = report_of(doc)
    assert "E-UNREACHABLE-END" in report.codes
    assert report.subjects("E-DEAD-AGENT") == {"a2", "a5"}


def test_covering():
    doc = pizza_doc()
    agent_entry(doc, "a5")["capabilities"].append("ARCHIVE")
    assert report_of(doc).subjects("E-COVERING") == {"C"}
    doc = pizza_doc()
    doc["capabilities"].append("DELETE")
    report = report_of(doc)
    assert report.codes == ["W-COVERING-SLACK"]


def test_split_inconsistent():
    report = report_of(diamond_doc(split="XOR", merge="XOR"))
    assert report.codes == ["W-SPLIT-INCONSISTENT"]
    assert report_of(diamond_doc(split="XOR", merge="XOR", data_driven=True)).findings == ()


def test_physical_no_record():
    doc = pizza_doc()
    object_entry(doc, "pizzaDone")["kind"] = "document"
    report = report_of(doc)
    assert report.codes == ["W-PHYSICAL-NO-RECORD"]
    assert report.findings[0].severity is Severity.WARNING


def test_ambiguous_and_scattered():
    doc = diamond_doc(split="AND", merge="AND")
    doc["goals"].append({"id": "G9", "objects": [ref("x")], "merge": "AND"})
    doc["agents"].append(agent("a9", [ref("order")], [ref("x")], "G9"))
    doc["agents"].append(agent("a8", [ref("x"), ref("y")], [ref("done")], "G5"))
    report = report_of(doc)
    assert {"a2", "a3"} <= report.subjects("E-AMBIGUOUS-TRIGGER")
    assert report.subjects("E-SCATTERED-TRIGGER") == {"a8"}


def test_findings_are_sorted_errors_first():
    doc = pizza_doc()
    object_entry(doc, "pizzaDone")["kind"] = "document"
    agent_entry(doc, "a4")["goal"] = "PizzaDelivered"
    report = report_of(doc)
    severities = [f.severity for f in report.findings]
    assert severities == sorted(severities, key=lambda s: s is not Severity.ERROR)
    assert list(report.findings) == sorted(report.findings, key=lambda f: f.sort_key())


def test_json_shape():
    doc = pizza_doc()
    object_entry(doc, "pizzaDone")["kind"] = "document"
    data = json.loads(report_of(doc).to_json())
    assert data["verdict"] == "valid-with-warnings"
    assert data["findings"][0]["code"] == "W-PHYSICAL-NO-RECORD"
    assert set(data["findings"][0]) == {"code", "severity", "subject", "message", "related"}


class TestExplain:
    def test_dead_agent(self):
        assert "trigger objects" in explain_finding("E-DEAD-AGENT")

    def test_cycle(self):
        assert "precedence" in explain_finding("E-CYCLE")

    def test_unknown(self):
        with pytest.raises(UnknownCode):
            explain_finding("E-NOPE")

    def test_every_code_explained(self):
        for code in CATALOG:
            text = explain_finding(code)
            assert "Remediation" in text and "Origin" in text


def test_purity(pizza):
    doc = pizza_doc()
    agent_entry(doc, "a3")["triggers"] = ["order"]
    spec = assemble_spec(doc)
    assert validate_spec(spec).to_json() == validate_spec(spec).to_json()
    assert validate_spec(pizza) == validate_spec(pizza)


@settings(max_examples=80)
@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_adding_an_agent_never_kills_another(seed, pick):
    """Dead agents are a fixpoint over producers: more producers, fewer dead."""
    rng = random.Random(seed)
    doc = random_dag_doc(rng)
    before = assemble_spec(doc)
    start = {r.object for r in before.start_objects}
    objs = [o.id for o in before.objects if o.id not in start]
    pick_rng = random.Random(pick)
    trig = pick_rng.choice([o.id for o in before.objects])
    out = pick_rng.choice([o for o in objs if o != trig] or objs)
    if out == trig:
        return
    doc["agents"].append(agent("zz", [ref(trig)], [ref(out)], before.goals[0].id))
    after = assemble_spec(doc)
    assert live_agents(before) <= live_agents(after)
    dead_before = validate_spec(before).subjects("E-DEAD-AGENT")
    dead_after = validate_spec(after).subjects("E-DEAD-AGENT") - {"zz"}
    assert dead_after <= dead_before
