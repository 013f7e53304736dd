import pytest

from wfbench.definition import (
    DefinitionSyntaxError,
    SchemaError,
    execution_path,
    get_path,
    parse_definition,
    serialize,
    structure,
    validate,
)


def codes(doc, fanouts=None):
    return validate(parse_definition(doc), fanouts).codes()


MAP_DOC = "name: x\nroot: a\nphases:\n  a: {type: map, func: f, array: xs}\n"


def test_json_and_yaml_parse_to_the_same_definition():
    j = '{"name": "x", "root": "a", "phases": {"a": {"type": "map", "func": "f", "array": "xs"}}}'
    assert parse_definition(j) == parse_definition(MAP_DOC)


@pytest.mark.parametrize("fmt", ["json", "yaml"])
def test_serialize_round_trips(fmt):
    d = parse_definition(MAP_DOC)
    assert parse_definition(serialize(d, fmt)) == d


def test_dangling_next_is_reported():
    assert codes('{"name":"x","root":"a","phases":{"a":{"type":"task","func":"f","next":"b"}}}') == {
        "DanglingReference"
    }


def test_duplicate_keys_are_schema_errors_not_silently_merged():
    assert "SchemaError" in codes('{"name":"x","root":"a","root":"b","phases":{"a":{"type":"task","func":"f"}}}')


def test_cycles_and_self_reference():
    assert codes("name: x\nroot: a\nphases:\n  a: {type: task, func: f, next: a}\n") == {"SelfReference", "Cycle"}
    two = "name: x\nroot: a\nphases:\n  a: {type: task, func: f, next: b}\n  b: {type: task, func: g, next: a}\n"
    assert codes(two) == {"Cycle"}


def test_unreachable_phase():
    assert codes("name: x\nroot: a\nphases:\n  a: {type: task, func: f}\n  b: {type: task, func: g}\n") == {
        "Unreachable"
    }


def test_fanout_above_platform_limit_only_warns():
    report = validate(parse_definition(MAP_DOC), {"a": 50})
    assert report.ok
    assert any("40" in str(w) for w in report.warnings)


def test_unknown_phase_type_raises():
    with pytest.raises(SchemaError):
        parse_definition("name: x\nroot: a\nphases:\n  a: {type: bogus, func: f}\n")


def test_syntax_error_raises():
    with pytest.raises(DefinitionSyntaxError):
        parse_definition("[1,2")


def test_get_path_walks_dicts_and_lists():
    assert get_path({"a": [{"b": 3}]}, "a.0.b") == 3


def test_structure_counts_map_width():
    s = structure(parse_definition(MAP_DOC), {"a": 4})
    assert (s.function_count, s.parallelism, s.phases) == (4, 4, 1)


def test_execution_path_follows_the_failure_branch():
    from wfbench.bench import trip_booking

    defn = trip_booking().definition
    assert len(execution_path(defn, ())) == 4
    assert len(execution_path(defn, ("confirm",))) == 7
