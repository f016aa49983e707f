"""Observables, disintegration and conditional Hilbert structure over a factor.

At finite scale L⁰, L² and L∞ coincide, so a single :class:`Observable`
type (complex values in atom order) serves for all of them.  Measures stay
exact; function values are double precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .finsys import FactorMap, FinSystem, GroupElement, enumerate_group

TOL = 1e-9


class UnknownElementError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Observable:
    """A complex function on the atoms of ``base``."""

    base: FinSystem
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.base.n,):
            raise ValueError(f"expected {self.base.n} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    # construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, base: FinSystem, values: Mapping[str, Any]) -> "Observable":
        arr = np.zeros(base.n, dtype=complex)
        for a, v in values.items():
            if isinstance(v, (list, tuple)):
                v = complex(v[0], v[1])
            arr[base.index[a]] = v
        return cls(base, arr)

    @classmethod
    def constant(cls, base: FinSystem, c: complex = 1.0) -> "Observable":
        return cls(base, np.full(base.n, c, dtype=complex))

    @classmethod
    def indicator(cls, base: FinSystem, atoms: Iterable[str | int]) -> "Observable":
        arr = np.zeros(base.n, dtype=complex)
        for a in atoms:
            arr[base.index[a] if isinstance(a, str) else a] = 1.0
        return cls(base, arr)

    def to_json(self) -> dict[str, list[float]]:
        return {a: [float(v.real), float(v.imag)] for a, v in zip(self.base.atoms, self.values)}

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Observable):
            if other.base is not self.base and other.base != self.base:
                raise ValueError("observables live on different systems")
            return other.values
        return other

    def __add__(self, other):
        return Observable(self.base, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Observable(self.base, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Observable(self.base, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Observable(self.base, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Observable(self.base, self.values / self._coerce(other))

    def __neg__(self):
        return Observable(self.base, -self.values)

    def conj(self) -> "Observable":
        return Observable(self.base, self.values.conj())

    def __getitem__(self, atom: str) -> complex:
        return complex(self.values[self.base.index[atom]])

    def allclose(self, other: "Observable | np.ndarray | complex", tol: float = TOL) -> bool:
        return bool(np.max(np.abs(self.values - self._coerce(other)), initial=0.0) <= tol)

    def __repr__(self):
        return f"Observable({np.array2string(self.values, precision=4)})"


def _fiber_sum(values: np.ndarray, pi: FactorMap) -> np.ndarray:
    """Sum of ``values`` over each fiber of ``pi`` (complex-safe)."""
    out = np.zeros(pi.target.n, dtype=complex)
    np.add.at(out, pi.fiber_index, values)
    return out


def lift(a: Observable | np.ndarray, pi: FactorMap) -> Observable:
    """Pull a function on the factor back to the extension (``a ∘ π``)."""
    vals = a.values if isinstance(a, Observable) else np.asarray(a, dtype=complex)
    return Observable(pi.source, vals[pi.fiber_index])


# disintegration -------------------------------------------------------------


@dataclass(frozen=True)
class FiberMeasure:
    """Fiber measures ``μ_y``: per target atom, the conditional weights on its fiber."""

    factor: FactorMap
    fibers: tuple[tuple[tuple[int, Fraction], ...], ...]

    def of(self, y: str) -> dict[str, Fraction]:
        src = self.factor.source
        return {src.atoms[x]: w for x, w in self.fibers[self.factor.target.index[y]]}


def disintegrate(pi: FactorMap) -> FiberMeasure:
    cw = pi.cond_weights_exact
    fibers = tuple(tuple((x, cw[x]) for x in fib) for fib in pi.fibers)
    for y, fib in enumerate(fibers):
        if sum((w for _, w in fib), Fraction(0)) != 1:
            raise AssertionError(f"fiber measure over {pi.target.atoms[y]} is not a probability")
    return FiberMeasure(pi, fibers)


def disintegration_identity(pi: FactorMap, f: Sequence[Fraction], g: Sequence[Fraction]) -> tuple[Fraction, Fraction]:
    """Both sides of ``∫ f·(g∘π) dμ = ∫ (∫ f dμ_y) g(y) dν(y)`` in exact arithmetic."""
    src, tgt = pi.source, pi.target
    lhs = sum((src.weights[x] * f[x] * g[pi.mapping[x]] for x in range(src.n)), Fraction(0))
    inner = cond_exp_exact(f, pi)
    rhs = sum((tgt.weights[y] * g[y] * inner[y] for y in range(tgt.n)), Fraction(0))
    return lhs, rhs


def pushforward_fiber(mu: FiberMeasure, g: GroupElement, y: int) -> dict[int, Fraction]:
    """``(T^g)_* μ_y`` as a dict on source atom indices."""
    return {g.perm[x]: w for x, w in mu.fibers[y]}


# conditional expectation and friends ---------------------------------------------


def cond_exp_exact(values: Sequence[Fraction], pi: FactorMap) -> list[Fraction]:
    cw = pi.cond_weights_exact
    out = [Fraction(0)] * pi.target.n
    for x, y in enumerate(pi.mapping):
        out[y] += cw[x] * values[x]
    return out


def cond_exp(f: Observable, pi: FactorMap) -> Observable:
    """``E(f|Y)`` as an observable on the factor."""
    return Observable(pi.target, _fiber_sum(pi.cond_weights * f.values, pi))


def cond_inner(f: Observable, g: Observable, pi: FactorMap) -> Observable:
    """Conditional inner product ``E(f ḡ | Y)``."""
    return Observable(pi.target, _fiber_sum(pi.cond_weights * f.values * np.conj(g.values), pi))


def cond_norm(f: Observable, pi: FactorMap) -> Observable:
    sq = _fiber_sum(pi.cond_weights * np.abs(f.values) ** 2, pi).real
    return Observable(pi.target, np.sqrt(np.maximum(sq, 0.0)))


def pmetric(f: Observable, g: Observable, pi: FactorMap) -> float:
    """Probabilistic metric ``∫_Y min(1, ‖f-g‖_{X|Y}) dν``."""
    d = cond_norm(f - g, pi).values.real
    return float(np.dot(pi.target.fweights, np.minimum(1.0, d)))


def l2_inner(f: Observable, g: Observable) -> complex:
    return complex(np.dot(f.base.fweights, f.values * np.conj(g.values)))


def l2_norm(f: Observable) -> float:
    return float(np.sqrt(np.dot(f.base.fweights, np.abs(f.values) ** 2)))


def mean(f: Observable) -> complex:
    return complex(np.dot(f.base.fweights, f.values))


def concatenate(pieces: Mapping[Any, Observable], blocks: Mapping[Any, Iterable[int]], pi: FactorMap) -> Observable:
    """Piecewise assembly ``Σ_E f_E 1_E`` over a partition of the factor's atoms."""
    out = np.zeros(pi.source.n, dtype=complex)
    covered = np.zeros(pi.target.n, dtype=bool)
    for key, ys in blocks.items():
        ys = list(ys)
        if covered[ys].any():
            raise ValueError("blocks overlap")
        covered[ys] = True
        mask = np.isin(pi.fiber_index, ys)
        out[mask] = pieces[key].values[mask]
    if not covered.all():
        raise ValueError("blocks do not cover the factor")
    return Observable(pi.source, out)


# Koopman operators -------------------------------------------------------------


def resolve_element(sys: FinSystem, g: GroupElement | str | Sequence[str]) -> GroupElement:
    if isinstance(g, GroupElement):
        if len(g.perm) != sys.n:
            raise UnknownElementError("group element acts on a different number of atoms")
        return g
    word = (g,) if isinstance(g, str) else tuple(g)
    try:
        return sys.element(word)
    except KeyError as exc:
        raise UnknownElementError(str(exc)) from None


def koopman(g: GroupElement | str | Sequence[str], f: Observable) -> Observable:
    """``(T^g)^* f = f ∘ T^g``."""
    el = resolve_element(f.base, g)
    return Observable(f.base, f.values[list(el.perm)])


def orbit(f: Observable, cap: int | None = None) -> list[Observable]:
    kw = {} if cap is None else {"cap": cap}
    return [koopman(g, f) for g in enumerate_group(f.base, **kw)]
