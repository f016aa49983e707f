from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given

from conftest import extension_from_seed, random_obs, seeds
from fzstructure.finsys import validate_factor
from fzstructure.hilbert import Observable, cond_inner, lift
from fzstructure.relprod import (
    Kernel,
    build_relprod,
    f1f2_sides,
    fiber_operator,
    hs_cond_norm,
    invariant_kernels,
    kernel_apply,
    kernel_inner,
    kernel_koopman,
    pair_orbits,
    tensor,
)
from oracles import pair_orbit_count


def test_running_example_pair_atoms(pi4):
    rp = build_relprod(pi4)
    assert len(rp) == 8
    assert set(rp.weights) == {Fraction(1, 8)}


def test_relprod_factors_validate(pi4):
    rp = build_relprod(pi4)
    assert validate_factor(rp.to_base).passed
    assert validate_factor(rp.projection(1)).passed
    assert validate_factor(rp.projection(2)).passed


def test_diagonal_kernel_halves(pi4):
    rp = build_relprod(pi4)
    f = Observable(pi4.source, [1, 2, 3, 4])
    assert kernel_apply(Kernel.diagonal(rp), f).allclose(f.values / 2)


def test_invariant_kernel_dimension(pi4):
    rp = build_relprod(pi4)
    assert len(invariant_kernels(rp)) == 2
    assert pair_orbit_count(pi4) == 2


def test_hs_norm_of_diagonal(pi4):
    rp = build_relprod(pi4)
    assert np.allclose(hs_cond_norm(Kernel.diagonal(rp)).values, 1 / np.sqrt(2))


@given(seeds)
def test_tensor_acts_as_rank_one(seed):
    pi = extension_from_seed(seed)
    rp = build_relprod(pi)
    rng = np.random.default_rng(seed)
    f, g, h = (random_obs(rng, pi.source) for _ in range(3))
    lhs = kernel_apply(tensor(rp, f, g.conj()), h)
    rhs = f * lift(cond_inner(h, g, pi), pi)
    assert lhs.allclose(rhs, 1e-10)


@given(seeds)
def test_invariant_kernels_orthonormal_and_invariant(seed):
    pi = extension_from_seed(seed)
    rp = build_relprod(pi)
    basis = invariant_kernels(rp)
    assert len(basis) == pair_orbit_count(pi) == len(pair_orbits(rp))
    G = np.array([[kernel_inner(a, b) for b in basis] for a in basis])
    assert np.allclose(G, np.eye(len(basis)), atol=1e-12)
    for K in basis:
        for label in pi.source.labels:
            assert np.allclose(kernel_koopman(label, K).flat(), K.flat())


@given(seeds)
def test_f1f2_exact(seed):
    pi = extension_from_seed(seed)
    rp = build_relprod(pi)
    rng = np.random.default_rng(seed)
    f1 = [Fraction(int(a), int(b)) for a, b in zip(rng.integers(-9, 10, pi.source.n), rng.integers(1, 9, pi.source.n))]
    f2 = [Fraction(int(a), 3) for a in rng.integers(-9, 10, pi.source.n)]
    lhs, rhs = f1f2_sides(rp, f1, f2)
    assert lhs == rhs


@given(seeds)
def test_fiber_operator_is_unitarily_similar(seed):
    pi = extension_from_seed(seed)
    rp = build_relprod(pi)
    rng = np.random.default_rng(seed)
    K = Kernel.from_flat(rp, rng.standard_normal(len(rp)))
    for y, fib in enumerate(pi.fibers):
        w = rp.fiber_weights[y]
        direct = K.blocks[y] * w[None, :]
        assert np.allclose(np.linalg.eigvals(direct).real.sum(), np.trace(fiber_operator(K, y)).real)


def test_kernel_json_roundtrip(pi4):
    rp = build_relprod(pi4)
    K = Kernel.from_flat(rp, np.arange(8) + 1j)
    K2 = Kernel.from_json(rp, K.to_json())
    assert np.allclose(K.flat(), K2.flat())
    assert not K.is_hermitian()
    assert (K + K.adjoint()).is_hermitian()


def test_kernel_mismatch(pi4):
    from fzstructure.systems import cycle_over_cycle

    rp1, rp2 = build_relprod(pi4), build_relprod(cycle_over_cycle(6, 3))
    with pytest.raises(ValueError):
        Kernel.constant(rp1) + Kernel.constant(rp2)
