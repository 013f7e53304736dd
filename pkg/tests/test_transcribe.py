import json

import pytest
import yaml

from wfbench import bench
from wfbench.definition import parse_definition
from wfbench.transcribe import Untranscribable, census_compare, transcribe
from wfbench.transcribe.census import DOCUMENTED_DELTAS

SINGLE = parse_definition("name: t\nroot: a\nphases:\n  a: {type: task, func: f}\n")
COMPOUND = parse_definition(
    "name: b\nroot: sw\nphases:\n"
    "  sw: {type: switch, cases: [{and: [{var: x, op: '==', value: 1}, {var: y, op: '==', value: 2}], next: a}],"
    " default: a}\n"
    "  a: {type: task, func: f}\n"
)
APPS = [f() for f in bench.APPLICATIONS.values()]


def test_aws_single_task_document():
    doc = transcribe(SINGLE, "aws").parsed()
    assert doc["StartAt"] == "a"
    state = doc["States"]["a"]
    assert state["Type"] == "Task" and state["End"] is True
    assert state["Parameters"]["FunctionName"] == "f"


def test_google_offers_json_and_yaml_that_agree():
    program = transcribe(SINGLE, "google")
    assert yaml.safe_load(program.extras["workflow.yaml"]) == program.parsed()
    assert "main" in program.parsed()


def test_azure_emits_definition_and_manifest():
    program = transcribe(SINGLE, "azure")
    assert program.parsed()["root"] == "a"
    assert json.loads(program.extras["manifest.json"])


@pytest.mark.parametrize("platform", ["aws", "google"])
def test_compound_guard_is_untranscribable(platform):
    with pytest.raises(Untranscribable, match="CompoundGuard"):
        transcribe(COMPOUND, platform)


def test_azure_accepts_compound_guard():
    transcribe(COMPOUND, "azure")


def test_aws_loop_carries_payload_isolation_note():
    notes = transcribe(bench.excamera().definition, "aws").notes
    assert [n["code"] for n in notes] == ["LoopPayloadIsolation"]


def _aws_functions(states):
    for s in states.values():
        if s["Type"] == "Task":
            yield s["Parameters"]["FunctionName"]
        for sub in s.get("Branches", []) + ([s["ItemProcessor"]] if "ItemProcessor" in s else []):
            yield from _aws_functions(sub["States"])


@pytest.mark.parametrize("spec", APPS, ids=lambda s: s.name)
def test_aws_document_invokes_every_function(spec):
    names = set(_aws_functions(transcribe(spec.definition, "aws").parsed()["States"]))
    assert names == set(spec.definition.function_names())


@pytest.mark.parametrize("spec", APPS, ids=lambda s: s.name)
def test_aws_needs_fewer_transitions_than_google(spec):
    counts = dict(census_compare(spec.definition, spec.canonical_fanouts, spec.failures))
    assert counts["aws"] < counts["google"]


@pytest.mark.parametrize("spec", APPS, ids=lambda s: s.name)
@pytest.mark.parametrize("platform", ["aws", "google", "azure"])
def test_census_monotone_in_fanout(spec, platform):
    census = transcribe(spec.definition, platform).census
    base = census.transitions_per_execution(spec.canonical_fanouts, spec.failures)
    doubled = {k: 2 * v for k, v in spec.canonical_fanouts.items()}
    assert census.transitions_per_execution(doubled, spec.failures) >= base


def test_documented_deltas_are_attached_to_the_census():
    census = transcribe(bench.genome().definition, "google").census
    assert census.documented_delta == DOCUMENTED_DELTAS["genome"]["google"]
    assert census.delta_reason
