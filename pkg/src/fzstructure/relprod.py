"""The relatively independent self-product ``X ×_Y X`` and kernels on it.

Kernels are stored as one dense block per fiber of the factor: the operator
``f ↦ K ∗_Y f`` never mixes fibers, so conditional analysis is fiberwise
linear algebra.  The flat pair-atom view is derived from the blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np

from .finsys import FactorMap, FinSystem, GroupElement, make_system, orbits
from .hilbert import Observable, cond_exp_exact, resolve_element


class RelProduct:
    """``X ×_Y X`` for a factor map ``π: X -> Y``.

    Pair atoms ``(x, x')`` with ``π(x) = π(x')`` are ordered lexicographically
    in atom order and weighted by ``μ(x)μ(x')/ν(π(x))``.
    """

    def __init__(self, pi: FactorMap):
        self.factor = pi
        src = pi.source
        fibers = pi.fibers
        pairs = [(x, x2) for x in range(src.n) for x2 in fibers[pi.mapping[x]]]
        self.pairs: tuple[tuple[int, int], ...] = tuple(pairs)
        self.pair_index = {p: k for k, p in enumerate(pairs)}
        self.weights: tuple[Fraction, ...] = tuple(
            src.weights[x] * src.weights[x2] / pi.target.weights[pi.mapping[x]] for x, x2 in pairs
        )
        self.proj1 = np.array([x for x, _ in pairs], dtype=np.intp)
        self.proj2 = np.array([x2 for _, x2 in pairs], dtype=np.intp)
        self.fweights = np.array([float(w) for w in self.weights])
        # position of each source atom inside its fiber
        self.slot = np.zeros(src.n, dtype=np.intp)
        for fib in fibers:
            for k, x in enumerate(fib):
                self.slot[x] = k

    @property
    def source(self) -> FinSystem:
        return self.factor.source

    @property
    def fibers(self):
        return self.factor.fibers

    def __len__(self):
        return len(self.pairs)

    def pair_perm(self, p: Sequence[int]) -> tuple[int, ...]:
        """The diagonal action ``T×T`` of an atom permutation on pair atoms."""
        return tuple(self.pair_index[(p[x], p[x2])] for x, x2 in self.pairs)

    @cached_property
    def fiber_weights(self) -> list[np.ndarray]:
        cw = self.factor.cond_weights
        return [cw[list(f)] for f in self.fibers]

    @cached_property
    def system(self) -> FinSystem:
        """``X ×_Y X`` as a system in its own right, with the diagonal action."""
        src = self.source
        weights = [(f"{src.atoms[x]}|{src.atoms[x2]}", w) for (x, x2), w in zip(self.pairs, self.weights)]
        gens = [(label, self.pair_perm(src.perm(label))) for label in src.labels]
        return make_system(weights, gens, name=f"{src.name}x_Y{src.name}" if src.name else "")

    @cached_property
    def to_base(self) -> FactorMap:
        """The canonical factor ``X ×_Y X -> Y``."""
        m = tuple(self.factor.mapping[x] for x, _ in self.pairs)
        return FactorMap(self.system, self.factor.target, m, self.factor.gen_map)

    def projection(self, which: int) -> FactorMap:
        idx = self.proj1 if which == 1 else self.proj2
        labels = tuple((a, a) for a in self.source.labels)
        return FactorMap(self.system, self.source, tuple(int(i) for i in idx), labels)


def build_relprod(pi: FactorMap) -> RelProduct:
    """Construct ``X ×_Y X`` and verify its defining identities exactly."""
    rp = RelProduct(pi)
    if sum(rp.weights, Fraction(0)) != 1:
        raise AssertionError("pair weights do not sum to 1")
    # the bilinear identity on the indicator basis is the defining formula
    cw = pi.cond_weights_exact
    tgt = pi.target
    for (x, x2), w in zip(rp.pairs, rp.weights):
        y = pi.mapping[x]
        if w != tgt.weights[y] * cw[x] * cw[x2]:
            raise AssertionError("relative product identity fails on indicators")
    for label in pi.source.labels:
        q = rp.pair_perm(pi.source.perm(label))
        if any(rp.weights[i] != rp.weights[j] for i, j in enumerate(q)):
            raise AssertionError(f"diagonal action of {label!r} does not preserve pair weights")
    return rp


def f1f2_sides(rp: RelProduct, f1: Sequence[Fraction], f2: Sequence[Fraction]) -> tuple[Fraction, Fraction]:
    """Both sides of ``∫ f1⊗f2 d(μ×_Yμ) = ∫ E(f1|Y)E(f2|Y) dν`` exactly."""
    lhs = sum((w * f1[x] * f2[x2] for (x, x2), w in zip(rp.pairs, rp.weights)), Fraction(0))
    e1, e2 = cond_exp_exact(f1, rp.factor), cond_exp_exact(f2, rp.factor)
    tgt = rp.factor.target
    rhs = sum((tgt.weights[y] * e1[y] * e2[y] for y in range(tgt.n)), Fraction(0))
    return lhs, rhs


def coordinate_partition(rp: RelProduct) -> list[list[int]]:
    """Common refinement of the partitions pulled back along both projections."""
    classes: dict[tuple[int, int], list[int]] = {}
    for k, (x, x2) in enumerate(rp.pairs):
        classes.setdefault((x, x2), []).append(k)
    return list(classes.values())


# kernels ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Kernel:
    """A complex function on pair atoms, stored as per-fiber blocks."""

    rp: RelProduct
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.blocks) != len(self.rp.fibers):
            raise ValueError("one block per fiber required")
        blocks = []
        for b, fib in zip(self.blocks, self.rp.fibers):
            b = np.asarray(b, dtype=complex)
            if b.shape != (len(fib), len(fib)):
                raise ValueError("block shape does not match fiber size")
            blocks.append(b)
        object.__setattr__(self, "blocks", tuple(blocks))

    @classmethod
    def from_flat(cls, rp: RelProduct, values: Sequence[complex]) -> "Kernel":
        values = np.asarray(values, dtype=complex)
        if values.shape != (len(rp),):
            raise ValueError("wrong number of pair values")
        blocks = [np.zeros((len(f), len(f)), dtype=complex) for f in rp.fibers]
        for (x, x2), v in zip(rp.pairs, values):
            blocks[rp.factor.mapping[x]][rp.slot[x], rp.slot[x2]] = v
        return cls(rp, tuple(blocks))

    @classmethod
    def from_function(cls, rp: RelProduct, fn: Callable[[int, int], complex]) -> "Kernel":
        return cls.from_flat(rp, [fn(x, x2) for x, x2 in rp.pairs])

    @classmethod
    def constant(cls, rp: RelProduct, c: complex = 1.0) -> "Kernel":
        return cls(rp, tuple(np.full((len(f), len(f)), c, dtype=complex) for f in rp.fibers))

    @classmethod
    def diagonal(cls, rp: RelProduct) -> "Kernel":
        return cls(rp, tuple(np.eye(len(f), dtype=complex) for f in rp.fibers))

    def flat(self) -> np.ndarray:
        m, s = self.rp.factor.mapping, self.rp.slot
        return np.array([self.blocks[m[x]][s[x], s[x2]] for x, x2 in self.rp.pairs])

    def value(self, x: int, x2: int) -> complex:
        m = self.rp.factor.mapping
        if m[x] != m[x2]:
            raise KeyError("atoms lie in different fibers")
        return complex(self.blocks[m[x]][self.rp.slot[x], self.rp.slot[x2]])

    def _same(self, other: "Kernel"):
        if other.rp is not self.rp:
            raise ValueError("kernels on different relative products")

    def __add__(self, other: "Kernel") -> "Kernel":
        self._same(other)
        return Kernel(self.rp, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: "Kernel") -> "Kernel":
        self._same(other)
        return Kernel(self.rp, tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __mul__(self, c: complex) -> "Kernel":
        return Kernel(self.rp, tuple(c * b for b in self.blocks))

    __rmul__ = __mul__

    def scale_by_base(self, a: Observable | np.ndarray) -> "Kernel":
        """Multiply by a function of the factor."""
        vals = a.values if isinstance(a, Observable) else np.asarray(a)
        return Kernel(self.rp, tuple(vals[y] * b for y, b in enumerate(self.blocks)))

    def adjoint(self) -> "Kernel":
        """``K†(x, x') = conj K(x', x)``; the kernel of the adjoint operator."""
        return Kernel(self.rp, tuple(b.conj().T for b in self.blocks))

    def is_hermitian(self, tol: float = 1e-9) -> bool:
        return all(np.max(np.abs(b - b.conj().T), initial=0.0) <= tol for b in self.blocks)

    def to_json(self) -> list[dict[str, Any]]:
        atoms = self.rp.source.atoms
        return [
            {"x": atoms[x], "x2": atoms[x2], "value": [float(v.real), float(v.imag)]}
            for (x, x2), v in zip(self.rp.pairs, self.flat())
        ]

    @classmethod
    def from_json(cls, rp: RelProduct, items: Sequence[dict[str, Any]]) -> "Kernel":
        idx = rp.source.index
        vals = np.zeros(len(rp), dtype=complex)
        for it in items:
            k = rp.pair_index[(idx[it["x"]], idx[it["x2"]])]
            re, im = it["value"]
            vals[k] = complex(re, im)
        return cls.from_flat(rp, vals)


def tensor(rp: RelProduct, f: Observable, g: Observable) -> Kernel:
    """``(f⊗g)(x, x') = f(x) g(x')`` restricted to pair atoms."""
    return Kernel(rp, tuple(np.outer(f.values[list(fib)], g.values[list(fib)]) for fib in rp.fibers))


def kernel_apply(K: Kernel, f: Observable) -> Observable:
    """``(K ∗_Y f)(x) = Σ_{x'} μ_{π(x)}(x') K(x, x') f(x')``."""
    rp = K.rp
    if f.base is not rp.source and f.base != rp.source:
        raise ValueError("observable and kernel live on different systems")
    out = np.zeros(rp.source.n, dtype=complex)
    for fib, w, b in zip(rp.fibers, rp.fiber_weights, K.blocks):
        idx = list(fib)
        out[idx] = b @ (w * f.values[idx])
    return Observable(rp.source, out)


def hs_cond_norm(K: Kernel) -> Observable:
    """Conditional Hilbert-Schmidt norm ``E(|K|²|Y)^{1/2}`` on the factor."""
    vals = [np.sqrt(float(w @ (np.abs(b) ** 2) @ w)) for w, b in zip(K.rp.fiber_weights, K.blocks)]
    return Observable(K.rp.factor.target, np.array(vals))


def kernel_inner(K1: Kernel, K2: Kernel) -> complex:
    """``L²(X ×_Y X)`` inner product."""
    K1._same(K2)
    return complex(np.dot(K1.rp.fweights, K1.flat() * np.conj(K2.flat())))


def kernel_koopman(g: GroupElement | str | Sequence[str], K: Kernel) -> Kernel:
    """``((T×T)^g)^* K (x, x') = K(T^g x, T^g x')``."""
    el = resolve_element(K.rp.source, g)
    q = K.rp.pair_perm(el.perm)
    return Kernel.from_flat(K.rp, K.flat()[list(q)])


def fiber_operator(K: Kernel, y: int) -> np.ndarray:
    """Matrix of ``K ∗_Y`` on fiber ``y`` in μ_y-orthonormal coordinates.

    With ``D = diag(μ_y)`` the operator acts as ``f ↦ K D f``; conjugating by
    ``D^{1/2}`` gives ``D^{1/2} K D^{1/2}``, whose spectral data are those of
    the operator on ``L²(μ_y)``.
    """
    s = np.sqrt(K.rp.fiber_weights[y])
    return s[:, None] * K.blocks[y] * s[None, :]


def pair_orbits(rp: RelProduct) -> list[list[int]]:
    """Orbits of the diagonal action on pair atoms."""
    return orbits(len(rp), [rp.pair_perm(p) for _, p in rp.source.action.generators])


def invariant_kernels(rp: RelProduct) -> list[Kernel]:
    """Orthonormal basis of ``T×T``-invariant kernels.

    The fixed space of a permutation action is spanned by orbit indicators;
    these are disjointly supported, so normalising each in ``L²(μ×_Yμ)``
    gives an orthonormal basis, ordered by the first pair atom of each orbit.
    """
    basis = []
    for orb in pair_orbits(rp):
        mass = sum(rp.weights[k] for k in orb)
        vals = np.zeros(len(rp))
        vals[orb] = 1.0 / np.sqrt(float(mass))
        basis.append(Kernel.from_flat(rp, vals))
    return basis
