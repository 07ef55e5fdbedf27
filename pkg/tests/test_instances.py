"""Preset construction and the JSON instance format."""

import json

import pytest

from tatonnement import (
    InstanceFormatError,
    get_preset,
    load_document,
    parse_instance,
    run_dichotomy,
    serialize_instance,
    write_instance,
)

GOOD = {
    "firms": [
        {"terms": [[0.5, 2]]},
        {"count": 3, "terms": [[0.5, 2], [0.5, 4]]},
    ],
    "demand_C": 40.0,
    "epsilon": 1e-4,
}


def _write(tmp_path, payload, name="inst.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload) if isinstance(payload, dict) else payload)
    return path


def test_preset_shapes():
    """Sizes, demands, and the interleaved cost families."""
    b10 = get_preset("bench-10")
    assert b10.n == 10 and b10.demand_C == 1000.0
    assert all(f.terms == ((0.5, 2),) for f in b10.firms)

    b100 = get_preset("bench-100")
    assert b100.n == 100 and b100.demand_C == 1e4
    assert b100.firms[0].terms == ((0.5, 2), (0.5, 4))  # k = 1, odd
    assert b100.firms[1].terms == ((2.0, 2),)  # k = 2, even

    b1000 = get_preset("bench-1000")
    assert b1000.n == 1000 and b1000.demand_C == 1e6
    assert b1000.firms[0].terms == ((1.0, 2),)
    assert b1000.firms[1].terms == ((2.0, 2), (4.0, 4))
    assert sum(1 for f in b1000.firms if f.terms == ((1.0, 2),)) == 500


def test_preset_epsilon_override():
    assert get_preset("bench-10").epsilon == 1e-4
    assert get_preset("bench-10", epsilon=0.1).epsilon == 0.1
    with pytest.raises(KeyError):
        get_preset("bench-11")


def test_parse_expands_count(tmp_path):
    instance = parse_instance(_write(tmp_path, GOOD))
    assert instance.n == 4
    assert instance.firms[1].terms == instance.firms[3].terms == ((0.5, 2), (0.5, 4))
    assert instance.demand_C == 40.0


def test_parse_reports_json_position(tmp_path):
    path = _write(tmp_path, '{\n  "firms": [,]\n}')
    with pytest.raises(InstanceFormatError, match=r":2:"):
        parse_instance(path)


def test_parse_reports_offending_field(tmp_path):
    bad_term = dict(GOOD, firms=[{"terms": [[0.5, 2], [1.0]]}])
    with pytest.raises(InstanceFormatError, match=r"firms\[0\].terms\[1\]"):
        parse_instance(_write(tmp_path, bad_term))

    bad_count = dict(GOOD, firms=[{"count": 0, "terms": [[0.5, 2]]}])
    with pytest.raises(InstanceFormatError, match=r"firms\[0\].*count"):
        parse_instance(_write(tmp_path, bad_count))

    no_convex = dict(GOOD, firms=[{"terms": [[0.5, 1]]}])
    with pytest.raises(InstanceFormatError, match=r"firms\[0\]"):
        parse_instance(_write(tmp_path, no_convex))

    bad_demand = dict(GOOD, demand_C=-1.0)
    with pytest.raises(InstanceFormatError, match="demand_C"):
        parse_instance(_write(tmp_path, bad_demand))

    unknown = dict(GOOD, extra=1)
    with pytest.raises(InstanceFormatError, match="extra"):
        parse_instance(_write(tmp_path, unknown))


def test_solver_section_passthrough(tmp_path):
    doc = dict(GOOD, solver={"mechanism": "decentralized", "step_policy": "fixed",
                             "max_iterations": 500})
    loaded = load_document(_write(tmp_path, doc))
    assert loaded.solver.mechanism == "decentralized"
    assert loaded.solver.step_policy == "fixed"
    assert loaded.solver.max_iterations == 500

    plain = load_document(_write(tmp_path, GOOD))
    assert plain.solver.mechanism is None

    bad = dict(GOOD, solver={"mechanism": "psychic"})
    with pytest.raises(InstanceFormatError, match="mechanism"):
        load_document(_write(tmp_path, bad))


def test_round_trip_preserves_solutions(tmp_path):
    """Serialize -> parse gives an instance whose run is bitwise identical."""
    for name in ("bench-10", "bench-100"):
        original = get_preset(name)
        path = tmp_path / f"{name}.json"
        write_instance(original, path)
        restored = parse_instance(path)
        assert restored.n == original.n
        assert [f.terms for f in restored.firms] == [f.terms for f in original.firms]
        _, report_a = run_dichotomy(original)
        _, report_b = run_dichotomy(restored)
        assert report_a.price_final == report_b.price_final
        assert report_a.primal_value == report_b.primal_value


def test_serialize_is_normalized():
    doc = serialize_instance(get_preset("bench-10"))
    assert len(doc["firms"]) == 10
    assert all("count" not in entry for entry in doc["firms"])
    assert doc["firms"][0] == {"terms": [[0.5, 2]]}
