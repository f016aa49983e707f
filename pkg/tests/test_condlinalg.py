import numpy as np
import pytest
from hypothesis import given

from conftest import extension_from_seed, random_obs, seeds
from fzstructure.condlinalg import (
    CondModule,
    NotOrthonormalError,
    bessel_check,
    cdim,
    cond_orthonormal_extract,
    cond_profile,
    contains,
    full_module,
    gram_schmidt,
    greedy_extract,
    is_cond_orthonormal,
    module_project,
    normalize_truncate,
    opnorm_diagnostic,
)
from fzstructure.finsys import make_system, factor_from_ids
from fzstructure.hilbert import Observable, cond_inner, cond_norm, l2_norm, lift
from fzstructure.relprod import Kernel, build_relprod, kernel_apply
from oracles import fiber_rank


def test_zero_generator(pi4):
    frame = gram_schmidt([Observable(pi4.source, np.zeros(4))], pi4)
    assert frame.partition.blocks[frame.e0] == frozenset({0, 1})
    assert list(cdim(frame)) == [0, 0]


def test_mixed_rank_frame(pi4):
    # supported on the fiber {x0, x2} over y0
    f = Observable(pi4.source, [1, 0, 3, 0])
    frame = gram_schmidt([f], pi4)
    assert list(cdim(frame)) == [1, 0]
    assert frame.partition.blocks["1"] == frozenset({0})
    assert frame.partition.blocks[frame.e0] == frozenset({1})
    (h,) = frame.frames["1"]
    assert np.allclose(cond_norm(h, pi4).values, [1, 0])


def test_full_rank_frame(pi4):
    assert list(full_module(pi4).cdim()) == [2, 2]


def test_module_project_pythagoras(pi4):
    g = Observable(pi4.source, [1, 1, 1, 1])
    o = Observable(pi4.source, [1, 0, -1, 0])
    mod = CondModule([g], pi4)
    proj, res = module_project(mod, g + o)
    assert proj.allclose(g)
    assert np.allclose(res.values, [1, 0])
    assert contains(mod, 3 * g)
    assert not contains(mod, o)


def test_normalize_truncate_constant_norm(pi4):
    f = Observable(pi4.source, [2, 2, 2, 2])
    g, E = normalize_truncate(f, pi4, 0.1)
    assert E == frozenset({0, 1}) and g.allclose(f.values / 2)


def test_normalize_truncate_includes_large_fiber(pi4):
    f = Observable(pi4.source, [1, 1e6, 1, 1e6])
    g, E = normalize_truncate(f, pi4, 1e-6)
    assert E == frozenset({0, 1})
    assert np.allclose(cond_inner(g, g, pi4).values, [1, 1])


def test_normalize_truncate_zero(pi4):
    with pytest.raises(ValueError):
        normalize_truncate(Observable(pi4.source, np.zeros(4)), pi4, 0.1)


def test_opnorm_constant_and_zero(pi4):
    rp = build_relprod(pi4)
    assert np.allclose(opnorm_diagnostic(Kernel.constant(rp)), (1, 1))
    assert opnorm_diagnostic(Kernel.constant(rp, 0)) == (0, 0)


def test_opnorm_two_fiber_gap(pi4):
    rp = build_relprod(pi4)
    K = Kernel.constant(rp).scale_by_base(np.array([1.0, 0.0]))
    ball, cond = opnorm_diagnostic(K)
    assert ball == pytest.approx(1)
    assert cond == pytest.approx(1 / np.sqrt(2))


def test_extract_constant(pi4):
    rp = build_relprod(pi4)
    M = cond_orthonormal_extract(Kernel.constant(rp), eps=0.5)
    assert len(M) == 1 and M[0].allclose(np.ones(4))
    assert cond_orthonormal_extract(Kernel.constant(rp, 0)) == []


def test_bessel_parseval_equality(pi4):
    rp = build_relprod(pi4)
    M = full_module(pi4).normal_form.vectors()
    rep = bessel_check(Kernel.constant(rp), M)
    assert rep.passed and abs(rep.max_excess) < 1e-12
    assert bessel_check(Kernel.constant(rp), []).passed


def test_bessel_rejects_non_orthonormal(pi4):
    rp = build_relprod(pi4)
    with pytest.raises(NotOrthonormalError):
        bessel_check(Kernel.constant(rp), [Observable(pi4.source, [2, 2, 2, 2])])


@given(seeds)
def test_gram_schmidt_invariants(seed):
    pi = extension_from_seed(seed, k=3)
    rng = np.random.default_rng(seed)
    gens = [random_obs(rng, pi.source) * lift(rng.integers(0, 2, pi.target.n), pi) for _ in range(int(rng.integers(1, 5)))]
    frame = gram_schmidt(gens, pi)
    frame.partition.check(pi.target.n)
    assert is_cond_orthonormal(frame.vectors(), pi)
    assert np.array_equal(cdim(frame), fiber_rank(pi, [g.values for g in gens]))
    mod = CondModule(gens, pi)
    for g in gens:
        assert contains(mod, g)
    a = rng.standard_normal((len(gens), pi.target.n))
    combo = sum((lift(a[i], pi) * g for i, g in enumerate(gens)), Observable(pi.source, np.zeros(pi.source.n)))
    assert contains(mod, combo)
    # idempotence
    assert np.array_equal(cdim(gram_schmidt(frame.vectors(), pi)), cdim(frame))


@given(seeds)
def test_extract_residual_bound(seed):
    pi = extension_from_seed(seed, k=3)
    rp = build_relprod(pi)
    rng = np.random.default_rng(seed)
    K = Kernel.from_flat(rp, rng.standard_normal(len(rp)) * 2)
    eps = 0.5
    M = cond_orthonormal_extract(K, eps=eps)
    assert is_cond_orthonormal(M, pi)
    for _ in range(5):
        f = random_obs(rng, pi.source)
        for m in M:
            f = f - lift(cond_inner(f, m, pi), pi) * m
        assert l2_norm(kernel_apply(K, f)) <= eps * l2_norm(f) + 1e-9
    assert bessel_check(K, M).passed


@given(seeds)
def test_greedy_agrees_with_fast(seed):
    pi = extension_from_seed(seed, k=3)
    rp = build_relprod(pi)
    rng = np.random.default_rng(seed)
    K = Kernel.from_flat(rp, rng.standard_normal(len(rp)))
    K = K + K.adjoint()
    fast = cond_orthonormal_extract(K, eps=0.4)
    slow = greedy_extract(K, eps=0.4, seed=seed % 1000)
    assert np.array_equal(cond_profile(fast, pi), cond_profile(slow, pi))


def test_extract_inside_submodule(pi4):
    rp = build_relprod(pi4)
    sub = CondModule([Observable(pi4.source, [1, 1, -1, -1])], pi4)
    M = cond_orthonormal_extract(Kernel.diagonal(rp), sub, eps=0.25)
    assert len(M) == 1 and contains(sub, M[0])


@given(seeds)
def test_opnorm_ordering(seed):
    pi = extension_from_seed(seed)
    rp = build_relprod(pi)
    rng = np.random.default_rng(seed)
    K = Kernel.from_flat(rp, rng.standard_normal(len(rp)))
    ball, cond = opnorm_diagnostic(K)
    assert cond <= ball + 1e-9


def test_gram_schmidt_non_uniform_weights():
    X = make_system({"a": "1/6", "b": "1/3", "c": "1/2"}, {"T": [0, 1, 2]})
    Y = make_system({"y": 1}, {"T": [0]})
    pi = factor_from_ids(X, Y, {"a": "y", "b": "y", "c": "y"})
    frame = gram_schmidt([Observable(X, [1, 0, 0]), Observable(X, [1, 1, 0])], pi)
    assert is_cond_orthonormal(frame.vectors(), pi)
    assert list(cdim(frame)) == [2]
