"""Conditional linear algebra over the ring of functions on a factor.

Gram-Schmidt with function-valued coefficients, Y-partitions and conditional
dimension, module projection, and the conditional spectral toolkit used to
extract finite conditional orthonormal sets from a kernel operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Any, Sequence

import numpy as np

from .finsys import FactorMap
from .hilbert import TOL, Observable, cond_inner, cond_norm, l2_norm, lift
from .relprod import Kernel, fiber_operator, kernel_apply

GS_CUTOFF = 1e-9


class NotOrthonormalError(ValueError):
    pass


@dataclass(frozen=True)
class YPartition:
    """Disjoint blocks of factor atoms (by index) covering the factor; blocks may be empty."""

    blocks: dict[str, frozenset[int]]

    def block_of(self, y: int) -> str:
        for key, ys in self.blocks.items():
            if y in ys:
                return key
        raise KeyError(y)

    def check(self, n: int) -> None:
        seen: set[int] = set()
        for ys in self.blocks.values():
            if seen & ys:
                raise ValueError("partition blocks overlap")
            seen |= ys
        if seen != set(range(n)):
            raise ValueError("partition does not cover the factor")


@dataclass
class CondFrame:
    """Output of conditional Gram-Schmidt.

    ``frames[E]`` are conditionally orthonormal on block ``E`` and vanish
    off it; ``frames[e0] == [0]``.
    """

    factor: FactorMap
    partition: YPartition
    frames: dict[str, list[Observable]]
    e0: str

    def vectors(self) -> list[Observable]:
        return [h for key, hs in self.frames.items() if key != self.e0 for h in hs]

    def to_json(self) -> dict[str, Any]:
        ya = self.factor.target.atoms
        return {
            "blocks": {k: [ya[y] for y in sorted(ys)] for k, ys in self.partition.blocks.items()},
            "frames": {k: [h.to_json() for h in hs] for k, hs in self.frames.items()},
            "e0": self.e0,
        }


def _restrict(f: Observable, ys: frozenset[int], pi: FactorMap) -> Observable:
    mask = np.isin(pi.fiber_index, sorted(ys))
    return Observable(f.base, np.where(mask, f.values, 0))


def gram_schmidt(gens: Sequence[Observable], pi: FactorMap, cutoff: float = GS_CUTOFF) -> CondFrame:
    """Conditional Gram-Schmidt process.

    ``h_k = g_k / ‖g_k‖ · 1{‖g_k‖ > 0}`` with ``g_k = f_k - Σ_{i<k} ⟨f_k, h_i⟩ h_i``.
    A fiber counts as ``‖g_k‖ > 0`` when the conditional norm exceeds
    ``cutoff · max(1, ‖f_k‖)``.  Blocks are keyed by the bit pattern of these
    positivity sets over generator index; the all-zero pattern is ``E0``.
    """
    ny = pi.target.n
    n = len(gens)
    hs: list[Observable] = []
    positive: list[np.ndarray] = []
    for f in gens:
        g = f
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for h in hs:
                g = g - lift(cond_inner(g, h, pi), pi) * h
        nrm = cond_norm(g, pi).values.real
        ref = np.maximum(1.0, cond_norm(f, pi).values.real)
        pos = nrm > cutoff * ref
        scale = np.where(pos, 1.0 / np.where(pos, nrm, 1.0), 0.0)
        hs.append(lift(scale, pi) * g)
        positive.append(pos)

    patterns: dict[str, set[int]] = {}
    for y in range(ny):
        key = "".join("1" if positive[i][y] else "0" for i in range(n))
        patterns.setdefault(key, set()).add(y)
    e0 = "0" * n
    patterns.setdefault(e0, set())
    blocks = {k: frozenset(v) for k, v in sorted(patterns.items(), reverse=True)}
    frames: dict[str, list[Observable]] = {}
    zero = Observable(pi.source, np.zeros(pi.source.n))
    for key, ys in blocks.items():
        if key == e0:
            frames[key] = [zero]
        else:
            frames[key] = [_restrict(hs[i], ys, pi) for i in range(n) if key[i] == "1"]
    return CondFrame(pi, YPartition(blocks), frames, e0)


def cdim(frame: CondFrame) -> np.ndarray:
    """Conditional dimension as an integer array over the factor's atoms."""
    out = np.zeros(frame.factor.target.n, dtype=int)
    for key, ys in frame.partition.blocks.items():
        if key != frame.e0:
            out[sorted(ys)] = len(frame.frames[key])
    return out


@dataclass
class CondModule:
    """Finitely generated module over functions on the factor."""

    generators: list[Observable]
    factor: FactorMap
    cutoff: float = GS_CUTOFF

    @cached_property
    def normal_form(self) -> CondFrame:
        return gram_schmidt(self.generators, self.factor, self.cutoff)

    def cdim(self) -> np.ndarray:
        return cdim(self.normal_form)

    def fiber_basis(self, y: int) -> np.ndarray:
        """Columns: μ_y-orthonormal coordinates of the module's fiber at ``y``."""
        fib = list(self.factor.fibers[y])
        s = np.sqrt(self.factor.cond_weights[fib])
        frame = self.normal_form
        key = frame.partition.block_of(y)
        if key == frame.e0:
            return np.zeros((len(fib), 0), dtype=complex)
        cols = [s * h.values[fib] for h in frame.frames[key]]
        return np.stack(cols, axis=1)


def full_module(pi: FactorMap) -> CondModule:
    """The whole space, generated by atom indicators."""
    gens = [Observable(pi.source, np.eye(pi.source.n)[i]) for i in range(pi.source.n)]
    return CondModule(gens, pi)


def module_project(mod: CondModule, f: Observable) -> tuple[Observable, Observable]:
    """Orthogonal projection onto the module and the conditional norm of the residual."""
    if f.base is not mod.factor.source and f.base != mod.factor.source:
        raise ValueError("observable does not live on the module's system")
    pi = mod.factor
    proj = Observable(f.base, np.zeros(f.base.n))
    for h in mod.normal_form.vectors():
        proj = proj + lift(cond_inner(f, h, pi), pi) * h
    return proj, cond_norm(f - proj, pi)


def contains(mod: CondModule, f: Observable, tol: float = TOL) -> bool:
    _, r = module_project(mod, f)
    return bool(np.max(r.values.real, initial=0.0) <= tol * max(1.0, l2_norm(f)))


# conditional normalisation ----------------------------------------------------------


def normalize_truncate(f: Observable, pi: FactorMap, eps: float) -> tuple[Observable, frozenset[int]]:
    """Conditionally normalise ``f`` on ``E_N = {0 < ‖f‖ ≤ N}``.

    ``N`` is the smallest integer with ``‖‖f‖ 1_{E_N^c}‖_{L²(Y)} < eps``.
    Returns ``g = 1_E f/‖f‖`` (so ``⟨g, g⟩ = 1_E``) and ``E``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    norms = cond_norm(f, pi).values.real
    if not np.any(norms > 0):
        raise ValueError("f is zero")
    nu = pi.target.fweights
    candidates = sorted({max(1, int(np.ceil(v))) for v in norms if v > 0})
    for N in candidates:
        tail_mask = ~((norms > 0) & (norms <= N))
        tail = float(np.sqrt(np.dot(nu, np.where(tail_mask, norms**2, 0.0))))
        if tail < eps:
            break
    E = frozenset(int(y) for y in np.flatnonzero((norms > 0) & (norms <= N)))
    inv = np.zeros_like(norms)
    idx = sorted(E)
    inv[idx] = 1.0 / norms[idx]
    return lift(inv, pi) * f, E


# conditional spectral toolkit --------------------------------------------------------


def _phase_fix(u: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(u) > 1e-10 * max(np.max(np.abs(u)), 1e-300)))
    z = u[k]
    return u * (abs(z) / z) if abs(z) > 0 else u


def _fiber_spaces(K: Kernel, subspace: CondModule | None) -> list[np.ndarray]:
    out = []
    for y, fib in enumerate(K.rp.fibers):
        if subspace is None:
            out.append(np.eye(len(fib), dtype=complex))
        else:
            out.append(subspace.fiber_basis(y))
    return out


def _fiber_singular_values(K: Kernel, subspace: CondModule | None) -> np.ndarray:
    vals = []
    for y, Q in enumerate(_fiber_spaces(K, subspace)):
        if Q.shape[1] == 0:
            vals.append(0.0)
        else:
            vals.append(float(np.linalg.norm(fiber_operator(K, y) @ Q, 2)))
    return np.array(vals)


def opnorm_diagnostic(
    K: Kernel, module: CondModule | None = None, brute_limit: int = 16
) -> tuple[float, float]:
    """``(sup over the L² unit ball, sup over conditionally normalised f)`` of ``‖K ∗_Y f‖``.

    The first is the largest fiberwise spectral norm.  The second maximises
    over ``⟨f, f⟩ = 1_E``: on each fiber of ``E`` the best choice is the top
    right singular vector, and ``E`` is searched exhaustively when the factor
    has at most ``brute_limit`` atoms.
    """
    sig = _fiber_singular_values(K, module)
    sup_ball = float(sig.max(initial=0.0))
    nu = K.rp.factor.target.fweights
    if module is None:
        allowed = list(range(len(sig)))
    else:
        allowed = [y for y in range(len(sig)) if module.fiber_basis(y).shape[1] > 0]
    contrib = {y: float(nu[y] * sig[y] ** 2) for y in allowed}
    best = 0.0
    if len(allowed) <= brute_limit:
        for r in range(1, len(allowed) + 1):
            for E in combinations(allowed, r):
                best = max(best, sum(contrib[y] for y in E))
    else:
        best = sum(contrib.values())
    return sup_ball, float(np.sqrt(best))


def _bundle(per_fiber: list[list[np.ndarray]], pi: FactorMap) -> list[Observable]:
    """Stack the k-th vector of every fiber into the k-th global function."""
    depth = max((len(v) for v in per_fiber), default=0)
    out = []
    for k in range(depth):
        vals = np.zeros(pi.source.n, dtype=complex)
        for y, vecs in enumerate(per_fiber):
            if k < len(vecs):
                vals[list(pi.fibers[y])] = vecs[k]
        out.append(Observable(pi.source, vals))
    return out


def cond_orthonormal_extract(
    K: Kernel, subspace: CondModule | None = None, eps: float = 0.5
) -> list[Observable]:
    """Finite conditional orthonormal set ``M`` such that ``‖K ∗_Y f‖ ≤ eps ‖f‖``
    for every ``f`` in ``subspace`` conditionally orthogonal to ``M``.

    Per fiber, keep the right singular vectors of ``K ∗_Y`` (restricted to
    the subspace) with singular value ``≥ eps``, largest first, and bundle
    them across fibers.  For self-adjoint kernels these are the eigenvectors
    with ``|λ| ≥ eps``.
    """
    pi = K.rp.factor
    if not all(np.all(np.isfinite(b)) for b in K.blocks):
        raise ValueError("kernel has non-finite entries")
    per_fiber: list[list[np.ndarray]] = []
    for y, Q in enumerate(_fiber_spaces(K, subspace)):
        vecs: list[np.ndarray] = []
        if Q.shape[1]:
            A = fiber_operator(K, y) @ Q
            _, s, vh = np.linalg.svd(A)
            s_w = np.sqrt(pi.cond_weights[list(pi.fibers[y])])
            for k, sv in enumerate(s):
                if sv >= eps:
                    u = Q @ vh[k].conj()
                    vecs.append(_phase_fix(u / s_w))
        per_fiber.append(vecs)
    return _bundle(per_fiber, pi)


def greedy_extract(
    K: Kernel,
    subspace: CondModule | None = None,
    eps: float = 0.5,
    max_iter: int = 20_000,
    seed: int = 0,
) -> list[Observable]:
    """Slow greedy oracle for :func:`cond_orthonormal_extract`.

    Repeatedly maximise ``‖K ∗_Y f‖`` over conditionally normalised ``f``
    conditionally orthogonal to the vectors chosen so far, by fiberwise power
    iteration, keeping the fibers where the remaining norm is still ``≥ eps``.
    Stops once the remaining operator norm drops below ``eps``.
    """
    pi = K.rp.factor
    rng = np.random.default_rng(seed)
    spaces = _fiber_spaces(K, subspace)
    chosen: list[list[np.ndarray]] = [[] for _ in spaces]  # orthonormal coords per fiber
    result: list[Observable] = []
    total_dim = sum(Q.shape[1] for Q in spaces)
    for _ in range(total_dim + 1):
        tops: list[tuple[float, np.ndarray | None]] = []
        for y, Q in enumerate(spaces):
            if Q.shape[1] == 0:
                tops.append((0.0, None))
                continue
            P = Q @ Q.conj().T
            for c in chosen[y]:
                P = P - np.outer(c, c.conj())
            A = fiber_operator(K, y) @ P
            B = A.conj().T @ A
            v = P @ (rng.standard_normal(len(P)) + 1j * rng.standard_normal(len(P)))
            if np.linalg.norm(v) < 1e-14:
                tops.append((0.0, None))
                continue
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(max_iter):
                w = B @ v
                nw = np.linalg.norm(w)
                if nw < 1e-300:
                    lam = 0.0
                    break
                new_lam = float(np.real(np.vdot(v, w)))
                v = w / nw
                if abs(new_lam - lam) <= 1e-15 * max(1.0, new_lam):
                    lam = new_lam
                    break
                lam = new_lam
            tops.append((float(np.sqrt(max(lam, 0.0))), v))
        if max(t[0] for t in tops) < eps:
            break
        per_fiber = []
        for y, (sig, v) in enumerate(tops):
            if v is not None and sig >= eps:
                chosen[y].append(v)
                s_w = np.sqrt(pi.cond_weights[list(pi.fibers[y])])
                per_fiber.append([_phase_fix(v / s_w)])
            else:
                per_fiber.append([])
        result.extend(_bundle(per_fiber, pi))
    return result


def cond_profile(M: Sequence[Observable], pi: FactorMap, tol: float = 1e-6) -> np.ndarray:
    """Number of vectors of ``M`` with conditional norm 1 at each factor atom."""
    out = np.zeros(pi.target.n, dtype=int)
    for m in M:
        out += (np.abs(cond_norm(m, pi).values.real - 1.0) <= tol).astype(int)
    return out


def is_cond_orthonormal(M: Sequence[Observable], pi: FactorMap, tol: float = TOL) -> bool:
    for i, m in enumerate(M):
        d = cond_inner(m, m, pi).values
        if not np.all((np.abs(d) <= tol) | (np.abs(d - 1) <= tol)):
            return False
        for m2 in M[i + 1 :]:
            if np.max(np.abs(cond_inner(m, m2, pi).values), initial=0.0) > tol:
                return False
    return True


@dataclass
class BesselReport:
    passed: bool
    max_excess: float
    witness: str | None
    total: float
    per_atom: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "max_excess": self.max_excess,
            "witness": self.witness,
            "sum_sq_norms": self.total,
        }


def bessel_check(K: Kernel, M: Sequence[Observable], tol: float = TOL) -> BesselReport:
    """Pointwise Bessel inequality ``Σ_m |K ∗_Y m (x)|² ≤ ‖K(x,·)‖²_{X|Y}``."""
    pi = K.rp.factor
    if not is_cond_orthonormal(M, pi, tol=max(tol, 1e-9)):
        raise NotOrthonormalError("M is not conditionally orthonormal")
    n = pi.source.n
    lhs = np.zeros(n)
    total = 0.0
    for m in M:
        km = kernel_apply(K, m)
        lhs += np.abs(km.values) ** 2
        total += l2_norm(km) ** 2
    rhs = np.zeros(n)
    for y, fib in enumerate(pi.fibers):
        w = K.rp.fiber_weights[y]
        rows = (np.abs(K.blocks[y]) ** 2) @ w
        rhs[list(fib)] = rows
    excess = lhs - rhs
    k = int(np.argmax(excess))
    ok = bool(excess[k] <= tol)
    return BesselReport(
        passed=ok,
        max_excess=float(excess[k]),
        witness=None if ok else pi.source.atoms[k],
        total=float(total),
        per_atom=list(zip(lhs.tolist(), rhs.tolist())),
    )
