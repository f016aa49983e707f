import numpy as np
import pytest
from hypothesis import given, settings

from conftest import extension_from_seed, seeds, small_extension
from fzstructure import structure
from fzstructure.condlinalg import contains
from fzstructure.finsys import factor_from_ids, make_system, trivial_factor, validate_factor
from fzstructure.hilbert import Observable
from fzstructure.relprod import Kernel, build_relprod, invariant_kernels
from fzstructure.structure import (
    CRITERIA,
    EquivalenceError,
    NotSelfAdjointError,
    ap_factor,
    classify_compact,
    dichotomy,
    furstenberg_tower,
    irreducible_modules,
    module_invariance_residual,
    rel_wm_extension,
    rel_wm_function,
    spectral_projection,
    split_kernel,
)
from fzstructure.systems import cyclic_system, point_system, q8_system, symmetric_points, trivial_action


def test_classify_running_example(pi4):
    rep = classify_compact(pi4)
    assert rep.compact and set(rep.criteria) == set(CRITERIA)
    assert rep.witnesses["i'"]["invariant_kernel_dim"] == 2
    assert rep.witnesses["i'"]["image_rank"] == 4


def test_equivalence_fault_injection(pi4, monkeypatch):
    monkeypatch.setitem(structure._CRITERION_FUNCS, "ii", lambda ctx: (False, {"injected": True}))
    with pytest.raises(EquivalenceError):
        classify_compact(pi4)
    rep = classify_compact(pi4, strict=False)
    assert not rep.agreement and not rep.compact


@settings(max_examples=15)
@given(seeds)
def test_classify_random_extensions(seed):
    assert classify_compact(extension_from_seed(seed)).compact


def test_spectral_projection_constant(pi4):
    rp = build_relprod(pi4)
    mod = spectral_projection(Kernel.constant(rp), 0.5)
    assert list(mod.cdim()) == [1, 1]
    assert contains(mod, Observable(pi4.source, [1, 2, 1, 2]))
    assert module_invariance_residual(mod) < 1e-9


def test_spectral_projection_diagonal(pi4):
    rp = build_relprod(pi4)
    mod = spectral_projection(Kernel.diagonal(rp), 0.25)
    assert list(mod.cdim()) == [2, 2]


def test_spectral_projection_rejects_non_hermitian(pi4):
    rp = build_relprod(pi4)
    a, b = invariant_kernels(rp)
    K = a + b * 1j
    with pytest.raises(NotSelfAdjointError):
        spectral_projection(K, 0.5)
    A, B = split_kernel(K)
    assert A.is_hermitian() and B.is_hermitian()
    assert np.allclose((A + B * 1j).flat(), K.flat())
    spectral_projection(A, 0.1)


def test_spectral_projection_rejects_non_invariant(pi4):
    rp = build_relprod(pi4)
    K = Kernel.from_function(rp, lambda x, x2: float(x == x2 == 0))
    with pytest.raises(ValueError, match="invariant"):
        spectral_projection(K, 0.5)


def test_rel_wm_function_not_wm(pi4):
    res = rel_wm_function(Observable(pi4.source, [1, 1, -1, -1]), pi4)
    assert not res.is_wm and res.min_corr == pytest.approx(1)


def test_rel_wm_function_requires_zero_mean(pi4):
    with pytest.raises(ValueError):
        rel_wm_function(Observable(pi4.source, [1, 0, 0, 0]), pi4)


def test_single_element_correlation_can_vanish():
    # Z/2 swapping the first coordinate of a 2x2 grid over a point
    X = make_system({"00": "1/4", "01": "1/4", "10": "1/4", "11": "1/4"}, {"T": [2, 3, 0, 1]})
    pi = trivial_factor(X)
    res = rel_wm_function(Observable(X, [1, 0, 0, -1]), pi)
    assert res.min_corr == pytest.approx(0, abs=1e-12)
    assert res.mean_corr > 0


def test_rel_wm_extension_running_example(pi4):
    res = rel_wm_extension(pi4)
    assert not res.is_wm
    assert res.witness["inv_relprod_dim"] == 2 and res.witness["inv_base_dim"] == 1
    assert not any(res.routes.values())


def test_identity_extension_is_wm():
    X = cyclic_system(3)
    from fzstructure.finsys import identity_factor

    res = rel_wm_extension(identity_factor(X))
    assert res.is_wm and all(res.routes.values())


@settings(max_examples=15)
@given(seeds)
def test_dichotomy_random(seed):
    pi = small_extension(seed)
    dec = dichotomy(pi)
    assert dec.wm_basis == [] and dec.oracle_wm_dim == 0
    assert len(dec.ap_basis) == pi.source.n
    assert dec.cross < 1e-9
    res = rel_wm_extension(pi)
    assert res.is_wm == pi.is_isomorphism


def test_irreducible_modules_q8():
    mods = irreducible_modules(trivial_factor(q8_system()))
    ranks = sorted(m.rank for m in mods)
    assert ranks == [1, 1, 1, 1, 2, 2]
    for m in mods:
        assert module_invariance_residual(m.module()) < 1e-9


def test_ap_factor_q8_rank_one():
    ap = ap_factor(trivial_factor(q8_system()), max_rank=1)
    assert ap.Z.n == 4 and not ap.escalated
    assert validate_factor(ap.phi).passed and validate_factor(ap.psi).passed


def test_ap_factor_running_example(pi4):
    assert ap_factor(pi4).Z.n == 4


def test_tower_default_modes():
    for sys in (cyclic_system(4), q8_system(), symmetric_points(3), trivial_action(2)):
        rep = furstenberg_tower(sys)
        assert rep.factor_sizes == [1, sys.n] and rep.length == 1
        assert rep.top_wm.is_wm and rep.compositions_ok
    assert furstenberg_tower(point_system()).factor_sizes == [1]


def test_tower_q8_rank_one():
    rep = furstenberg_tower(q8_system(), max_rank=1)
    assert rep.length == 2 and rep.factor_sizes == [1, 4, 8]
    steps = [lv for lv in rep.levels if lv.kind == "compact-step"]
    assert all(lv.compactness.compact and not lv.step.is_isomorphism for lv in steps)
    assert rep.top_wm.is_wm and rep.compositions_ok


def test_tower_rank_escalation():
    rep = furstenberg_tower(symmetric_points(3), max_rank=1)
    steps = [lv for lv in rep.levels if lv.kind == "compact-step"]
    assert rep.factor_sizes[-1] == 3
    assert any(lv.escalated for lv in steps)


def test_tower_json_shape():
    doc = furstenberg_tower(cyclic_system(4)).to_json()
    assert doc["length"] == 1 and doc["factor_sizes"] == [1, 4]
    assert doc["top_relatively_weakly_mixing"] is True


def test_ap_factor_over_nontrivial_base():
    X = cyclic_system(6)
    Y = cyclic_system(3, prefix="y")
    pi = factor_from_ids(X, Y, {f"x{i}": f"y{i % 3}" for i in range(6)})
    ap = ap_factor(pi)
    assert ap.Z.n == 6 and ap.psi.target.n == 3
