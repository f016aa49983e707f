import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given

from conftest import extension_from_seed, seeds
from fzstructure.finsys import (
    GroupCapExceeded,
    SchemaError,
    ValidationError,
    compose,
    compose_factors,
    enumerate_group,
    factor_from_functions,
    factor_from_ids,
    invert,
    load_factor,
    load_system,
    make_system,
    quotient,
    system_to_dict,
    trivial_factor,
    validate_factor,
)
from fzstructure.systems import cyclic_system, q8_system, symmetric_points
from oracles import perm_closure


def _doc(weights, perm=None):
    atoms = [{"id": f"a{i}", "weight": w} for i, w in enumerate(weights)]
    gens = [{"label": "T", "perm": perm or {}}]
    return {"atoms": atoms, "generators": gens}


def test_load_cycle_roundtrip():
    X = cyclic_system(4)
    Y = load_system(json.dumps(system_to_dict(X)))
    assert Y.atoms == X.atoms and Y.weights == X.weights
    assert Y.action.generators == X.action.generators


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError, match="sum"):
        load_system(_doc(["33/100", "33/100", "33/100"]))


def test_nonpositive_weight_rejected():
    with pytest.raises(ValidationError):
        load_system(_doc(["1", "0"]))


def test_duplicate_atom_rejected():
    doc = _doc(["1/2", "1/2"])
    doc["atoms"][1]["id"] = "a0"
    with pytest.raises(ValidationError, match="duplicate"):
        load_system(doc)


def test_non_measure_preserving_generator_rejected():
    with pytest.raises(ValidationError, match="measure-preserving"):
        load_system(_doc(["1/4", "3/4"], {"a0": "a1", "a1": "a0"}))


def test_non_bijection_rejected():
    with pytest.raises(ValidationError):
        load_system(_doc(["1/2", "1/2"], {"a0": "a1"}))


def test_schema_errors():
    with pytest.raises(SchemaError):
        load_system("{not json")
    with pytest.raises(SchemaError):
        load_system({"atoms": []})
    with pytest.raises(SchemaError):
        load_system(_doc(["half", "1/2"]))


def test_word_convention_left_to_right_composition():
    X = symmetric_points(3)
    s, c = X.perm("s"), X.perm("c")
    assert X.element(["s", "c"]).perm == compose(s, c)
    assert X.element([]).is_identity


def test_enumerate_group_orders():
    assert len(enumerate_group(cyclic_system(5))) == 5
    assert len(enumerate_group(symmetric_points(3))) == 6
    assert len(enumerate_group(q8_system())) == 8
    G = enumerate_group(q8_system())
    assert G[0].is_identity and G[0].word == ()


def test_enumerate_group_matches_closure_oracle():
    X = symmetric_points(4)
    perms = [p for _, p in X.action.generators]
    assert {g.perm for g in enumerate_group(X)} == perm_closure(perms)


def test_enumerate_group_words_are_faithful():
    X = q8_system()
    for g in enumerate_group(X):
        assert X.element(g.word).perm == g.perm


def test_group_cap():
    with pytest.raises(GroupCapExceeded):
        enumerate_group(symmetric_points(5), cap=10)


def test_factor_validation_witnesses(pi4):
    assert validate_factor(pi4).passed
    bad = factor_from_ids(pi4.source, pi4.target, {"x0": "y0", "x1": "y0", "x2": "y1", "x3": "y1"})
    rep = validate_factor(bad)
    assert not rep.passed
    names = {c.name for c in rep.failures()}
    assert "equivariant" in names


def test_factor_measure_witness():
    X = cyclic_system(2)
    Y = make_system({"u": Fraction(1, 3), "v": Fraction(2, 3)}, {"T": [0, 1]})
    pi = factor_from_ids(X, Y, {"x0": "u", "x1": "v"})
    rep = validate_factor(pi)
    c = next(c for c in rep.checks if c.name == "measure-preserving")
    assert not c.ok and c.witness == "u"


def test_load_factor_file(tmp_path):
    X, Y = cyclic_system(4), cyclic_system(2, prefix="y")
    (tmp_path / "x.json").write_text(json.dumps(system_to_dict(X)))
    (tmp_path / "y.json").write_text(json.dumps(system_to_dict(Y)))
    doc = {"source": "x.json", "target": "y.json", "map": {f"x{i}": f"y{i % 2}" for i in range(4)}, "gen_map": {"T": "T"}}
    (tmp_path / "f.json").write_text(json.dumps(doc))
    pi = load_factor(tmp_path / "f.json")
    assert validate_factor(pi).passed


def test_quotient_rejects_non_invariant_partition():
    with pytest.raises(ValidationError):
        quotient(cyclic_system(4), [[0, 1], [2, 3]])


def test_factor_from_functions_refines_to_invariant_partition():
    X = cyclic_system(6)
    # level sets {0}, {1..5} are not invariant; the generated factor is all of X
    pi = factor_from_functions(X, [np.array([1, 0, 0, 0, 0, 0])])
    assert pi.target.n == 6
    pi2 = factor_from_functions(X, [np.array([1, -1, 1, -1, 1, -1])])
    assert pi2.target.n == 2


@given(seeds)
def test_random_extensions_are_valid(seed):
    pi = extension_from_seed(seed)
    assert validate_factor(pi).passed
    assert validate_factor(trivial_factor(pi.source)).passed
    # composing with the map to a point gives the point map
    comp = compose_factors(trivial_factor(pi.target), pi)
    assert set(comp.mapping) == {0}


def test_invert():
    p = (2, 0, 1)
    assert compose(p, invert(p)) == (0, 1, 2)


def test_decimal_weights_are_exact():
    X = load_system(_doc(["0.25", "0.75"]))
    assert X.weights == (Fraction(1, 4), Fraction(3, 4))
    with pytest.raises(SchemaError):
        load_system(_doc(["0.5/2", "1/2"]))
    with pytest.raises(ValidationError, match="sum"):
        load_system(_doc(["0.5", "0.49"]))
