"""Standard example systems and seeded random generators of finite extensions."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .finsys import (
    FactorMap,
    FinSystem,
    checked_factor,
    factor_from_ids,
    identity_factor,
    make_system,
    orbits,
    trivial_factor,
)


def cyclic_system(n: int, prefix: str = "x", name: str = "") -> FinSystem:
    """``Z/n`` rotating ``n`` atoms of equal weight."""
    w = Fraction(1, n)
    return make_system(
        [(f"{prefix}{i}", w) for i in range(n)],
        {"T": [(i + 1) % n for i in range(n)]},
        name=name or f"cycle{n}",
    )


def cycle_over_cycle(n: int = 4, m: int = 2) -> FactorMap:
    """``Z/n`` over ``Z/m`` via reduction mod ``m`` (``m`` divides ``n``)."""
    if n % m:
        raise ValueError("m must divide n")
    X = cyclic_system(n)
    Y = cyclic_system(m, prefix="y")
    return checked_factor(factor_from_ids(X, Y, {f"x{i}": f"y{i % m}" for i in range(n)}))


def trivial_action(n: int, name: str = "") -> FinSystem:
    w = Fraction(1, n)
    return make_system([(f"x{i}", w) for i in range(n)], {"T": list(range(n))}, name=name or f"fixed{n}")


def point_system() -> FinSystem:
    return make_system([("pt", 1)], {"T": [0]}, name="point")


def q8_system() -> FinSystem:
    """The quaternion group acting on itself by right translation by ``i`` and ``j``."""
    from .skew import FinGroupTable

    Q = FinGroupTable.quaternion()
    n = len(Q.elements)
    w = Fraction(1, n)
    gens = {}
    for g in ("i", "j"):
        gi = Q.index(g)
        gens[g] = [Q.mult[x][gi] for x in range(n)]
    return make_system([(a, w) for a in Q.elements], gens, name="q8")


def symmetric_points(n: int = 3) -> FinSystem:
    """``S_n`` permuting ``n`` points (generated by a transposition and an ``n``-cycle)."""
    w = Fraction(1, n)
    swap = [1, 0] + list(range(2, n))
    cyc = [(i + 1) % n for i in range(n)]
    return make_system([(f"p{i}", w) for i in range(n)], {"s": swap, "c": cyc}, name=f"sym{n}")


# random extensions ---------------------------------------------------------------


def _orbit_weights(n: int, perms, rng: np.random.Generator, max_w: int) -> list[Fraction]:
    orbs = orbits(n, perms)
    raw = [0] * n
    for orb in orbs:
        w = int(rng.integers(1, max_w + 1))
        for x in orb:
            raw[x] = w
    total = sum(raw)
    return [Fraction(r, total) for r in raw]


def random_extension(
    rng: np.random.Generator,
    ny: int | None = None,
    k: int | None = None,
    n_gens: int | None = None,
    max_weight: int = 4,
) -> FactorMap:
    """Random group extension ``X = Y × {0..k-1}`` over a random ``Y``.

    Each generator acts by ``(y, i) ↦ (S y, σ_y(i))`` with random ``S`` and
    random fiber permutations ``σ_y``.  Weights are random but constant on
    orbits of ``X``, so conditional weights on fibers are generally not uniform.
    """
    ny = ny if ny is not None else int(rng.integers(1, 5))
    k = k if k is not None else int(rng.integers(1, 4))
    n_gens = n_gens if n_gens is not None else int(rng.integers(1, 3))
    n = ny * k
    labels = [f"g{j}" for j in range(n_gens)]
    ys = [list(rng.permutation(ny)) for _ in labels]
    xs = []
    for S in ys:
        p = [0] * n
        for y in range(ny):
            sigma = rng.permutation(k)
            for i in range(k):
                p[y * k + i] = int(S[y]) * k + int(sigma[i])
        xs.append(p)
    xw = _orbit_weights(n, xs, rng, max_weight)
    yw = [sum(xw[y * k : (y + 1) * k], Fraction(0)) for y in range(ny)]
    X = make_system(
        [(f"x{y}_{i}", xw[y * k + i]) for y in range(ny) for i in range(k)],
        dict(zip(labels, xs)),
        name="rx",
    )
    Y = make_system([(f"y{y}", yw[y]) for y in range(ny)], {a: [int(v) for v in S] for a, S in zip(labels, ys)}, name="ry")
    return checked_factor(factor_from_ids(X, Y, {f"x{y}_{i}": f"y{y}" for y in range(ny) for i in range(k)}))


def random_system(rng: np.random.Generator, n: int | None = None, n_gens: int | None = None) -> FinSystem:
    """Random permutation action with orbit-constant random weights."""
    n = n if n is not None else int(rng.integers(1, 9))
    n_gens = n_gens if n_gens is not None else int(rng.integers(1, 3))
    perms = [[int(v) for v in rng.permutation(n)] for _ in range(n_gens)]
    w = _orbit_weights(n, perms, rng, 4)
    return make_system([(f"a{i}", w[i]) for i in range(n)], {f"g{j}": p for j, p in enumerate(perms)}, name="rs")


def random_factor(rng: np.random.Generator, **kw) -> FactorMap:
    """Random extension, or occasionally one of the degenerate factors of a random system."""
    r = rng.random()
    if r < 0.1:
        return identity_factor(random_system(rng))
    if r < 0.2:
        return trivial_factor(random_system(rng))
    return random_extension(rng, **kw)
