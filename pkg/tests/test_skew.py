import numpy as np
import pytest
from hypothesis import given, settings

from conftest import seeds
from fzstructure.cli import corpus_dir
from fzstructure.condlinalg import CondModule
from fzstructure.ergodic import invariant_factor
from fzstructure.finsys import SchemaError, ValidationError, load_system_file, make_system, trivial_factor
from fzstructure.hilbert import Observable
from fzstructure.skew import (
    BudgetExceeded,
    Cocycle,
    FinGroupTable,
    NotErgodicError,
    Subgroup,
    all_subgroups,
    cocycle_product_quotient,
    cocycle_table,
    constant_rank_frame,
    extract_cocycle,
    load_cocycle,
    mackey_range,
    skew_build,
    skew_is_compact_check,
    verify_cocycle,
)
from fzstructure.systems import cycle_over_cycle, cyclic_system, q8_system, random_system
from oracles import brute_mackey_order, skew_orbit_holonomy


def _corpus_cocycle(name):
    Y = load_system_file(corpus_dir() / "cycle2.json")
    rho, L = load_cocycle(corpus_dir() / name, Y)
    return Y, rho, L


def _ergodic_base(rng, n):
    perm = [int(v) for v in rng.permutation(n)]
    cyc = [(i + 1) % n for i in range(n)]
    gens = {"a": cyc, "b": perm} if rng.random() < 0.5 else {"a": cyc}
    return make_system([(f"y{i}", f"1/{n}") for i in range(n)], gens)


def _random_cocycle(rng, Y, K):
    return Cocycle(Y, K, {(y, a): int(rng.integers(len(K))) for y in range(Y.n) for a in Y.labels})


GROUPS = [FinGroupTable.cyclic(2), FinGroupTable.cyclic(3), FinGroupTable.cyclic(4),
          FinGroupTable.quaternion(),
          FinGroupTable.from_perms([[1, 0, 2], [1, 2, 0]])]


def test_group_table_validation():
    with pytest.raises(ValidationError):
        FinGroupTable(("a", "b"), ((0, 0), (0, 1)))
    Q = FinGroupTable.quaternion()
    assert len(Q) == 8 and not Q.is_abelian and Q.order_of(Q.index("i")) == 4
    assert FinGroupTable.cyclic(6).is_cyclic


def test_q8_subgroups():
    assert [len(H) for H in all_subgroups(FinGroupTable.quaternion())] == [1, 2, 4, 4, 4, 8]


def test_ergodic_cocycle_is_single_four_cycle():
    Y, rho, _ = _corpus_cocycle("z2_ergodic_cocycle.json")
    X, pi = skew_build(Y, rho, rho.group)
    assert X.n == 4 and invariant_factor(X).ergodic
    T = X.perm("T")
    trace, x = [], X.index["y0|0"]
    for _ in range(4):
        trace.append(X.atoms[x])
        x = T[x]
    assert trace == ["y0|0", "y1|1", "y0|1", "y1|0"]


def test_verify_cocycle_and_corruption():
    Y, rho, _ = _corpus_cocycle("z2_ergodic_cocycle.json")
    rep = verify_cocycle(rho)
    assert rep.passed
    elements, table = cocycle_table(rho)
    bad = dict(table)
    g = next(e for e in elements if not e.is_identity)
    bad[g.perm] = [1 - v for v in bad[g.perm]]
    rep = verify_cocycle(rho, table=bad)
    law = next(c for c in rep.checks if c.name == "cocycle law")
    assert not law.ok and set(law.witness) == {"g", "h", "y"}


def test_mackey_corpus():
    Y, rho, _ = _corpus_cocycle("z2_ergodic_cocycle.json")
    assert len(mackey_range(Y, rho, rho.group).H) == 2
    Y, rho, _ = _corpus_cocycle("z2_trivial_cocycle.json")
    assert len(mackey_range(Y, rho, rho.group).H) == 1


def test_mackey_budget_and_ergodicity():
    Y, rho, _ = _corpus_cocycle("z2_ergodic_cocycle.json")
    with pytest.raises(BudgetExceeded):
        mackey_range(Y, rho, rho.group, budget=2)
    Z = make_system([("a", "1/2"), ("b", "1/2")], {"T": [0, 1]})
    with pytest.raises(NotErgodicError):
        mackey_range(Z, Cocycle.trivial(Z, rho.group), rho.group)


@given(seeds)
def test_mackey_plant_and_recover(seed):
    rng = np.random.default_rng(seed)
    K = GROUPS[seed % len(GROUPS)]
    Y = _ergodic_base(rng, int(rng.integers(1, 4)))
    b = [int(rng.integers(len(K))) for _ in range(Y.n)]
    # rho_s(y) = b(S y) b(y)^{-1} is a coboundary
    vals = {}
    for a in Y.labels:
        S = Y.perm(a)
        for y in range(Y.n):
            vals[(y, a)] = K.mult[b[S[y]]][K.inverse[b[y]]]
    rho = Cocycle(Y, K, vals)
    res = mackey_range(Y, rho, K)
    assert len(res.H) == 1
    bt = [K.index(res.transfer[a]) for a in Y.atoms]
    for (y, a), r in vals.items():
        S = Y.perm(a)
        assert K.mult[K.mult[K.inverse[bt[S[y]]]][r]][bt[y]] == K.identity


@settings(max_examples=25)
@given(seeds)
def test_mackey_matches_oracles(seed):
    rng = np.random.default_rng(seed)
    K = GROUPS[seed % len(GROUPS)]
    Y = _ergodic_base(rng, int(rng.integers(1, 4)))
    rho = _random_cocycle(rng, Y, K)
    res = mackey_range(Y, rho, K)
    perms = {a: Y.perm(a) for a in Y.labels}
    assert len(res.H) == brute_mackey_order(perms, rho.values, K, Y.n)
    holo = skew_orbit_holonomy(perms, rho.values, K.mult, K.identity, Y.n, len(K))
    assert len(res.H) == len(holo)
    X, _ = skew_build(Y, rho, K)
    # the skew product is ergodic exactly when the range is all of K
    assert invariant_factor(X).ergodic == (len(res.H) == len(K))


@settings(max_examples=10)
@given(seeds)
def test_skew_products_are_compact(seed):
    rng = np.random.default_rng(seed)
    K = GROUPS[seed % 3]
    Y = _ergodic_base(rng, int(rng.integers(1, 4)))
    rho = _random_cocycle(rng, Y, K)
    assert verify_cocycle(rho).passed
    assert skew_is_compact_check(Y, rho, K).compact
    L = all_subgroups(K)[1] if len(K) > 2 else None
    assert skew_is_compact_check(Y, rho, K, L).compact


def test_quotient_skew_compact():
    Y = cyclic_system(2, prefix="y")
    K = FinGroupTable.cyclic(4)
    rho = Cocycle(Y, K, {(0, "T"): 1, (1, "T"): 0})
    L = Subgroup.generated(K, [2])
    X, pi = skew_build(Y, rho, K, L)
    assert X.n == 4 and X.atoms[0] == "y0|0+2"
    assert skew_is_compact_check(Y, rho, K, L).compact


def test_extract_cycle_over_cycle():
    pi = cycle_over_cycle(4, 2)
    bundle = extract_cocycle(pi, Observable(pi.source, [1, 1, -1, -1]))
    (m,) = bundle.modules
    assert m.dimension == 1 and m.ok() and m.law_error == 0
    lam = m.lambdas[pi.source.perm("T")]
    assert np.allclose(lam[:, 0, 0], [1, -1])


def test_extract_q8_irreps():
    bundle = extract_cocycle(trivial_factor(q8_system()))
    dims = sorted(m.dimension for m in bundle.modules)
    assert dims == [1, 1, 1, 1, 2, 2]
    assert bundle.ok
    for m in bundle.modules:
        assert m.law_error < 1e-9


@given(seeds)
def test_character_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    K = FinGroupTable.cyclic(n)
    Y = _ergodic_base(rng, int(rng.integers(1, 4)))
    rho = _random_cocycle(rng, Y, K)
    X, pi = skew_build(Y, rho, K)
    j = int(rng.integers(1, n))
    chi = np.exp(2j * np.pi * j * np.arange(n) / n)
    f = Observable(X, np.tile(chi, Y.n))
    (m,) = extract_cocycle(pi, f).modules
    assert m.ok() and m.unimodular
    for a in Y.labels:
        got = m.lambdas[X.perm(a)][:, 0, 0].conj()
        want = [chi[rho.value(y, a)] for y in range(Y.n)]
        assert np.allclose(got, want)


def test_extract_requires_ergodic_base():
    X = make_system([(f"x{i}", "1/4") for i in range(4)], {"T": [1, 0, 3, 2]})
    Y = make_system([("a", "1/2"), ("b", "1/2")], {"T": [0, 1]})
    from fzstructure.finsys import factor_from_ids

    pi = factor_from_ids(X, Y, {"x0": "a", "x1": "a", "x2": "b", "x3": "b"})
    with pytest.raises(NotErgodicError):
        extract_cocycle(pi)


def test_constant_rank_frame_rejects_mixed_rank(pi4):
    mod = CondModule([Observable(pi4.source, [1, 0, 0, 0])], pi4)
    with pytest.raises(NotErgodicError) as exc:
        constant_rank_frame(mod)
    assert exc.value.witness == {"y1": 0, "y0": 1}


def test_product_quotient_cyclic():
    Y = cyclic_system(1, prefix="y")
    r2 = Cocycle(Y, FinGroupTable.cyclic(2), {(0, "T"): 1})
    r3 = Cocycle(Y, FinGroupTable.cyclic(3), {(0, "T"): 1})
    pq = cocycle_product_quotient([r2, r3])
    assert len(pq.group) == 6 and pq.group.is_cyclic and pq.bijective
    assert verify_cocycle(pq.cocycle).passed


def test_product_quotient_with_subgroups():
    Y = cyclic_system(2, prefix="y")
    K4 = FinGroupTable.cyclic(4)
    r1 = Cocycle(Y, K4, {(0, "T"): 1, (1, "T"): 3})
    r2 = Cocycle(Y, FinGroupTable.cyclic(2), {(0, "T"): 1, (1, "T"): 0})
    pq = cocycle_product_quotient([r1, r2], [Subgroup.generated(K4, [2]), Subgroup.trivial(r2.group)])
    assert pq.bijective and len(pq.coset_map) == 4


def test_cocycle_schema():
    Y = load_system_file(corpus_dir() / "cycle2.json")
    with pytest.raises(SchemaError):
        load_cocycle('{"elements": ["0"]}', Y)
    with pytest.raises(ValidationError):
        load_cocycle('{"elements": ["0"], "mult": [["0"]], "cocycle": {"zz": {"T": "0"}}}', Y)


def test_cocycle_dict_round_trip():
    Y, rho, _ = _corpus_cocycle("z2_ergodic_cocycle.json")
    again, _ = load_cocycle(rho.to_json(), Y)
    assert again.values == rho.values
