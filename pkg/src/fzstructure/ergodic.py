"""Invariant factor, ergodicity and the minimal-norm projection onto invariant functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .finsys import DEFAULT_GROUP_CAP, FactorMap, FinSystem, checked_factor, enumerate_group, orbits, quotient
from .hilbert import Observable, cond_exp, lift, koopman


class NonConvergence(RuntimeError):
    pass


@dataclass
class InvReport:
    inv_factor: FactorMap
    inv_dimension: int
    ergodic: bool

    def to_json(self) -> dict[str, Any]:
        tgt = self.inv_factor.target
        return {
            "inv_dimension": self.inv_dimension,
            "ergodic": self.ergodic,
            "orbits": [a.split("+") for a in tgt.atoms],
        }


def invariant_factor(sys: FinSystem) -> InvReport:
    """Factor onto the partition into orbits of the action."""
    orbs = orbits(sys.n, [p for _, p in sys.action.generators])
    pi = checked_factor(quotient(sys, orbs, name=f"Inv({sys.name})" if sys.name else "Inv"))
    return InvReport(pi, len(orbs), len(orbs) == 1)


def ab_project(f: Observable, cap: int = DEFAULT_GROUP_CAP) -> Observable:
    """Uniform average of ``f`` over the group."""
    elements = enumerate_group(f.base, cap)
    acc = np.zeros(f.base.n, dtype=complex)
    for g in elements:
        acc += f.values[list(g.perm)]
    return Observable(f.base, acc / len(elements))


def inv_projection(f: Observable) -> Observable:
    """``E(f | Inv(X))`` computed through the invariant factor."""
    pi = invariant_factor(f.base).inv_factor
    return lift(cond_exp(f, pi), pi)


@dataclass
class MinNormResult:
    point: Observable
    weights: np.ndarray
    gap: float
    iterations: int


def convex_min_norm(
    f: Observable, tol: float = 1e-13, max_iter: int = 100_000, cap: int = DEFAULT_GROUP_CAP
) -> MinNormResult:
    """Minimise ``‖Σ λ_g (T^g)^* f‖`` over the probability simplex.

    Frank-Wolfe with away steps and exact line search on the quadratic
    ``λᵀQλ``, ``Q`` the real Gram matrix of the orbit.  Stops when the
    Frank-Wolfe duality gap is below ``tol``; since the objective is the
    squared norm, the returned point is within ``sqrt(tol)`` of the minimiser.
    """
    vecs: list[np.ndarray] = []
    seen: set[bytes] = set()
    for g in enumerate_group(f.base, cap):
        v = f.values[list(g.perm)]
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            vecs.append(v)
    V = np.stack(vecs)
    w = f.base.fweights
    Q = np.real((V * w) @ V.conj().T)
    m = len(vecs)
    lam = np.zeros(m)
    lam[0] = 1.0
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Ql = Q @ lam
        grad = 2 * Ql
        s = int(np.argmin(grad))
        gap = float(grad @ lam - grad[s])
        if gap < tol:
            break
        support = np.flatnonzero(lam > 0)
        a = int(support[np.argmax(grad[support])])
        away_gap = float(grad[a] - grad @ lam)
        if gap >= away_gap:
            d = -lam.copy()
            d[s] += 1.0
            tmax = 1.0
        else:
            d = lam.copy()
            d[a] -= 1.0
            tmax = lam[a] / (1.0 - lam[a]) if lam[a] < 1.0 else np.inf
        dQd = float(d @ Q @ d)
        t = tmax if dQd <= 0 else min(tmax, max(0.0, -float(Ql @ d) / dQd))
        lam = lam + t * d
        lam[np.abs(lam) < 1e-17] = 0.0
        lam = np.maximum(lam, 0.0)
        lam /= lam.sum()
    else:
        raise NonConvergence(f"Frank-Wolfe gap {gap:.3g} after {max_iter} iterations")
    return MinNormResult(Observable(f.base, lam @ V), lam, gap, it)


def convex_min_norm_oracle(f: Observable, tol: float = 1e-13, max_iter: int = 100_000) -> Observable:
    return convex_min_norm(f, tol, max_iter).point


def is_invariant(f: Observable, tol: float = 0.0) -> bool:
    return all(koopman(label, f).allclose(f, tol) for label in f.base.labels)
