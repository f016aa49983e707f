"""Relative compactness, the AP/WM decomposition and Furstenberg towers.

The workhorse is the decomposition of ``L²(X)`` into irreducible invariant
modules over the factor: the invariant kernels form the commutant of the
action among fiber-preserving operators, so the eigenspaces of a generic
Hermitian invariant kernel are minimal invariant modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .condlinalg import CondModule, contains, module_project
from .finsys import (
    DEFAULT_GROUP_CAP,
    FactorMap,
    FinSystem,
    GroupCapExceeded,
    checked_factor,
    compose_factors,
    enumerate_group,
    factor_from_functions,
    orbits,
    trivial_factor,
)
from .hilbert import TOL, Observable, cond_exp, cond_inner, cond_norm, koopman, l2_norm, lift
from .relprod import (
    Kernel,
    RelProduct,
    build_relprod,
    fiber_operator,
    invariant_kernels,
    kernel_apply,
    kernel_koopman,
    pair_orbits,
)


class EquivalenceError(RuntimeError):
    """Characterisations that must agree did not."""


class NotSelfAdjointError(ValueError):
    pass


def _rank(A: np.ndarray, tol: float = 1e-9) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def _phase_fix(u: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(u) > 1e-10 * max(np.max(np.abs(u)), 1e-300)))
    z = u[k]
    return u * (abs(z) / z) if abs(z) > 0 else u


# irreducible invariant modules ---------------------------------------------------


@dataclass
class EigenModule:
    """Eigenspace of a generic invariant kernel: a minimal invariant module."""

    eigenvalue: float
    factor: FactorMap
    coords: list[list[np.ndarray]]  # per fiber: μ_y-orthonormal coordinate vectors

    @property
    def cdim(self) -> np.ndarray:
        return np.array([len(c) for c in self.coords])

    @property
    def rank(self) -> int:
        return int(self.cdim.max(initial=0))

    def frame(self) -> list[Observable]:
        """Conditionally orthonormal frame: the k-th vector of every fiber glued together."""
        pi = self.factor
        out = []
        for k in range(self.rank):
            vals = np.zeros(pi.source.n, dtype=complex)
            for y, cs in enumerate(self.coords):
                if k < len(cs):
                    fib = list(pi.fibers[y])
                    vals[fib] = cs[k] / np.sqrt(pi.cond_weights[fib])
            out.append(Observable(pi.source, vals))
        return out

    def l2_basis(self) -> list[Observable]:
        """L²-orthonormal basis: one vector per fiber and coordinate vector."""
        pi = self.factor
        nu = pi.target.fweights
        out = []
        for y, cs in enumerate(self.coords):
            fib = list(pi.fibers[y])
            for c in cs:
                vals = np.zeros(pi.source.n, dtype=complex)
                vals[fib] = c / np.sqrt(pi.cond_weights[fib] * nu[y])
                out.append(Observable(pi.source, vals))
        return out

    def module(self) -> CondModule:
        return CondModule(self.frame(), self.factor)


def generic_invariant_kernel(rp: RelProduct, seed: int = 0) -> Kernel:
    """Seeded random Hermitian combination of invariant kernels."""
    rng = np.random.default_rng(seed)
    basis = invariant_kernels(rp)
    coeffs = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    K = Kernel.constant(rp, 0.0)
    for c, B in zip(coeffs, basis):
        K = K + B * c
    return (K + K.adjoint()) * 0.5


def irreducible_modules(
    pi: FactorMap, seed: int = 0, tries: int = 20, sep: float = 1e-5, rp: RelProduct | None = None
) -> list[EigenModule]:
    """Decompose ``L²(X)`` into minimal invariant modules over ``Y``.

    Eigenvalues of a generic Hermitian invariant kernel are clustered across
    all fibers; each cluster is one module.  A new seed is drawn when two
    distinct clusters lie within ``sep`` (relative) of each other.
    """
    rp = rp or build_relprod(pi)
    ny = pi.target.n
    for attempt in range(tries):
        K = generic_invariant_kernel(rp, seed + attempt)
        entries: list[tuple[float, int, np.ndarray]] = []
        for y in range(ny):
            vals, vecs = np.linalg.eigh(fiber_operator(K, y))
            for k in range(len(vals)):
                entries.append((float(vals[k]), y, vecs[:, k]))
        entries.sort(key=lambda e: -e[0])
        scale = max(1.0, max(abs(e[0]) for e in entries))
        clusters: list[list[tuple[float, int, np.ndarray]]] = []
        for e in entries:
            if clusters and abs(clusters[-1][-1][0] - e[0]) <= 1e-8 * scale:
                clusters[-1].append(e)
            else:
                clusters.append([e])
        means = [np.mean([e[0] for e in c]) for c in clusters]
        if len(means) > 1 and np.min(-np.diff(means)) < sep * scale:
            continue
        mods = []
        for c, lam in zip(clusters, means):
            coords: list[list[np.ndarray]] = [[] for _ in range(ny)]
            for _, y, v in c:
                coords[y].append(_phase_fix(v))
            mods.append(EigenModule(float(lam), pi, coords))
        return mods
    raise RuntimeError("could not separate the spectrum of a generic invariant kernel")


def ap_subspace(pi: FactorMap, max_rank: int | None = None, mods: list[EigenModule] | None = None):
    """L²-orthonormal basis of the span of invariant modules of rank ``≤ max_rank``."""
    mods = mods if mods is not None else irreducible_modules(pi)
    chosen = [m for m in mods if max_rank is None or m.rank <= max_rank]
    basis = [v for m in chosen for v in m.l2_basis()]
    return basis, chosen


# spectral projection ------------------------------------------------------------


def is_invariant_kernel(K: Kernel, tol: float = TOL) -> bool:
    flat = K.flat()
    return all(
        np.max(np.abs(kernel_koopman(label, K).flat() - flat), initial=0.0) <= tol
        for label in K.rp.source.labels
    )


def split_kernel(K: Kernel) -> tuple[Kernel, Kernel]:
    """Hermitian ``A, B`` with ``K = A + iB``."""
    A = (K + K.adjoint()) * 0.5
    B = (K - K.adjoint()) * (-0.5j)
    return A, B


def spectral_projection(K: Kernel, eps: float, tol: float = TOL) -> CondModule:
    """Range of ``1_{[eps, ∞)}(K ∗_Y)`` as a finitely generated module.

    ``K`` must be invariant and self-adjoint; use :func:`split_kernel` first
    for a general kernel.
    """
    if not K.is_hermitian(tol):
        raise NotSelfAdjointError("kernel is not self-adjoint; split it into Hermitian parts")
    if not is_invariant_kernel(K, tol):
        raise ValueError("kernel is not invariant")
    pi = K.rp.factor
    per_fiber: list[list[np.ndarray]] = []
    for y, fib in enumerate(pi.fibers):
        vals, vecs = np.linalg.eigh(fiber_operator(K, y))
        keep = [k for k in np.argsort(-vals) if vals[k] >= eps]
        s = np.sqrt(pi.cond_weights[list(fib)])
        per_fiber.append([_phase_fix(vecs[:, k]) / s for k in keep])
    depth = max((len(v) for v in per_fiber), default=0)
    gens = []
    for k in range(depth):
        vals = np.zeros(pi.source.n, dtype=complex)
        for y, vs in enumerate(per_fiber):
            if k < len(vs):
                vals[list(pi.fibers[y])] = vs[k]
        gens.append(Observable(pi.source, vals))
    if not gens:
        gens = [Observable(pi.source, np.zeros(pi.source.n))]
    return CondModule(gens, pi)


def module_invariance_residual(mod: CondModule) -> float:
    """Largest conditional-norm residual of a translated frame vector."""
    worst = 0.0
    for h in mod.normal_form.vectors():
        for label in h.base.labels:
            _, r = module_project(mod, koopman(label, h))
            worst = max(worst, float(np.max(r.values.real, initial=0.0)))
    return worst


# compactness criteria -----------------------------------------------------------


CRITERIA = ("i", "ii", "iii", "i'", "ii'", "iii'")
EPSILONS = (1.0, 0.5, 0.25)


@dataclass
class CompactnessReport:
    criteria: dict[str, bool]
    witnesses: dict[str, Any]

    @property
    def agreement(self) -> bool:
        return len(set(self.criteria.values())) == 1

    @property
    def compact(self) -> bool:
        return self.agreement and all(self.criteria.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "criteria": dict(self.criteria),
            "agreement": self.agreement,
            "relatively_compact": self.compact,
            "witnesses": self.witnesses,
        }


def _vector_orbit(f: Observable, cap: int) -> list[Observable]:
    """Distinct translates of ``f``, by breadth-first search over generators."""
    scale = max(1.0, float(np.max(np.abs(f.values), initial=0.0)))

    def key(v):
        return tuple(np.round(v.values / scale, 9).tolist())

    out = [f]
    seen = {key(f)}
    i = 0
    while i < len(out):
        for label in f.base.labels:
            g = koopman(label, out[i])
            k = key(g)
            if k not in seen:
                seen.add(k)
                out.append(g)
                if len(out) > cap:
                    raise GroupCapExceeded(f"orbit larger than cap {cap}")
        i += 1
    return out


@dataclass
class _Ctx:
    pi: FactorMap
    rp: RelProduct
    kernels: list[Kernel]
    cap: int
    tol: float
    orbit_modules: list[CondModule] = field(default_factory=list)


def _orbit_modules(ctx: _Ctx) -> list[CondModule]:
    """Modules generated by the orbit of one atom indicator per orbit of the action."""
    if not ctx.orbit_modules:
        X = ctx.pi.source
        for orb in orbits(X.n, [p for _, p in X.action.generators]):
            delta = Observable.indicator(X, [orb[0]])
            ctx.orbit_modules.append(CondModule(_vector_orbit(delta, ctx.cap), ctx.pi))
    return ctx.orbit_modules


def _crit_i(ctx: _Ctx) -> tuple[bool, dict]:
    """Conditional span of kernel images: full rank on every fiber."""
    ranks = []
    for y, fib in enumerate(ctx.pi.fibers):
        A = np.hstack([fiber_operator(K, y) for K in ctx.kernels])
        ranks.append(_rank(A, ctx.tol))
    sizes = [len(f) for f in ctx.pi.fibers]
    ok = ranks == sizes
    bad = next((ctx.pi.target.atoms[y] for y in range(len(sizes)) if ranks[y] != sizes[y]), None)
    return ok, {"fiber_ranks": ranks, "fiber_sizes": sizes, "witness": bad}


def _crit_i_prime(ctx: _Ctx) -> tuple[bool, dict]:
    """L² span of ``K ∗_Y δ_x`` over invariant kernels and atoms."""
    X = ctx.pi.source
    w = np.sqrt(X.fweights)
    cols = []
    for K in ctx.kernels:
        for x in range(X.n):
            cols.append(w * kernel_apply(K, Observable.indicator(X, [x])).values)
    rank = _rank(np.stack(cols, axis=1), ctx.tol)
    return rank == X.n, {"invariant_kernel_dim": len(ctx.kernels), "image_rank": rank, "l2_dim": X.n}


def _crit_ii(ctx: _Ctx) -> tuple[bool, dict]:
    """Finitely generated invariant modules whose union contains every indicator."""
    X = ctx.pi.source
    mods = _orbit_modules(ctx)
    resid = max(module_invariance_residual(m) for m in mods)
    missing = [
        X.atoms[x] for x in range(X.n) if not any(contains(m, Observable.indicator(X, [x]), ctx.tol) for m in mods)
    ]
    ok = resid <= ctx.tol and not missing
    return ok, {
        "modules": len(mods),
        "generators": [len(m.generators) for m in mods],
        "max_cdim": [int(m.cdim().max(initial=0)) for m in mods],
        "invariance_residual": resid,
        "uncovered": missing,
    }


def _crit_ii_prime(ctx: _Ctx) -> tuple[bool, dict]:
    """The same modules as closed L∞(Y)-submodules of L², checked with classical projections."""
    X, pi = ctx.pi.source, ctx.pi
    w = np.sqrt(X.fweights)
    ny = pi.target.n
    spans = []
    worst = 0.0
    for m in _orbit_modules(ctx):
        gens = []
        for key, hs in m.normal_form.frames.items():
            if key == m.normal_form.e0:
                continue
            for h in hs:
                for y in range(ny):
                    v = np.where(pi.fiber_index == y, h.values, 0)
                    if np.any(v):
                        gens.append(w * v)
        if not gens:
            continue
        B = np.stack(gens, axis=1)
        U, s, _ = np.linalg.svd(B, full_matrices=False)
        U = U[:, s > ctx.tol * max(1.0, s[0])]
        for label in X.labels:
            TB = np.stack([w * koopman(label, Observable(X, b / w)).values for b in B.T], axis=1)
            r = TB - U @ (U.conj().T @ TB)
            worst = max(worst, float(np.max(np.abs(r), initial=0.0)))
        spans.append(U)
    rank = _rank(np.hstack(spans), ctx.tol) if spans else 0
    ok = worst <= ctx.tol and rank == X.n
    return ok, {"l2_span_rank": rank, "l2_dim": X.n, "invariance_residual": worst}


def _net_certificate(
    f: Observable, mod: CondModule, eps: float, cap: int, tol: float
) -> tuple[bool, dict]:
    """Certify a finite eps-net for the orbit of ``f`` under the conditional norm.

    Coordinates of every translate in the module's frame are rounded to a
    grid in the coefficient ball of radius ``M`` (the largest conditional
    norm on the orbit), separately on each factor atom.  The rounded
    combinations form a finite set; each translate must be within ``eps`` of
    its rounding at every factor atom.
    """
    pi = mod.factor
    frame = mod.normal_form
    orbit = _vector_orbit(f, cap)
    M = max(float(np.max(cond_norm(h, pi).values.real, initial=0.0)) for h in orbit)
    k = max((len(hs) for key, hs in frame.frames.items() if key != frame.e0), default=0)
    step = eps / 2 if k <= 7 else eps / math.sqrt(2 * k)
    worst = 0.0
    for h in orbit:
        g = Observable(pi.source, np.zeros(pi.source.n))
        for key, hs in frame.frames.items():
            if key == frame.e0:
                continue
            for b in hs:
                c = cond_inner(h, b, pi).values
                rc = step * (np.round(c.real / step) + 1j * np.round(c.imag / step))
                g = g + lift(rc, pi) * b
        d = float(np.max(cond_norm(h - g, pi).values.real, initial=0.0))
        worst = max(worst, d)
    per_axis = 2 * math.ceil(M / step) + 1 if M > 0 else 1
    log10_size = pi.target.n * 2 * k * math.log10(per_axis) if per_axis > 1 else 0.0
    return worst < eps, {"eps": eps, "orbit_size": len(orbit), "radius": M, "grid_step": step, "max_distance": worst, "log10_net_size_bound": log10_size}


def _crit_iii(ctx: _Ctx) -> tuple[bool, dict]:
    """Nets for the orbits of frame vectors of the invariant modules."""
    out = []
    ok = True
    for m in _orbit_modules(ctx):
        for h in m.normal_form.vectors():
            for eps in EPSILONS:
                good, wit = _net_certificate(h, m, eps, ctx.cap, ctx.tol)
                ok &= good
                if not good:
                    out.append(wit)
    return ok, {"failures": out, "epsilons": list(EPSILONS), "dense_set": "module frame vectors"}


def _crit_iii_prime(ctx: _Ctx) -> tuple[bool, dict]:
    """Nets for the orbits of atom indicators."""
    X = ctx.pi.source
    out = []
    ok = True
    mods = _orbit_modules(ctx)
    for x in range(X.n):
        delta = Observable.indicator(X, [x])
        m = next(m for m in mods if contains(m, delta, ctx.tol))
        for eps in EPSILONS:
            good, wit = _net_certificate(delta, m, eps, ctx.cap, ctx.tol)
            ok &= good
            if not good:
                out.append({"atom": X.atoms[x], **wit})
    return ok, {"failures": out, "epsilons": list(EPSILONS), "dense_set": "atom indicators"}


_CRITERION_FUNCS = {
    "i": _crit_i,
    "ii": _crit_ii,
    "iii": _crit_iii,
    "i'": _crit_i_prime,
    "ii'": _crit_ii_prime,
    "iii'": _crit_iii_prime,
}


def classify_compact(
    pi: FactorMap, tol: float = TOL, cap: int = DEFAULT_GROUP_CAP, strict: bool = True
) -> CompactnessReport:
    """Evaluate all six characterisations of relative compactness.

    Raises :class:`EquivalenceError` when they disagree and ``strict`` is set.
    """
    rp = build_relprod(pi)
    ctx = _Ctx(pi, rp, invariant_kernels(rp), cap, tol)
    crit, wit = {}, {}
    for name in CRITERIA:
        ok, w = _CRITERION_FUNCS[name](ctx)
        crit[name], wit[name] = bool(ok), w
    rep = CompactnessReport(crit, wit)
    if strict and not rep.agreement:
        raise EquivalenceError(f"compactness criteria disagree: {crit}")
    return rep


# weak mixing ---------------------------------------------------------------------


@dataclass
class WMResult:
    is_wm: bool
    min_corr: float
    argmin: Any
    mean_corr: float

    def to_json(self) -> dict[str, Any]:
        return {
            "is_wm": self.is_wm,
            "min_corr": self.min_corr,
            "argmin": self.argmin.name(),
            "mean_sq_corr": self.mean_corr,
        }


def rel_wm_function(f: Observable, pi: FactorMap, tol: float = TOL, cap: int = DEFAULT_GROUP_CAP) -> WMResult:
    """Smallest conditional autocorrelation ``‖⟨(T^g)^*f, f⟩_{X|Y}‖_{L²(Y)}`` over the group.

    Also reports the group mean of the squared correlations, which is at
    least ``‖f‖⁴/|Γ|`` (the identity term) and so vanishes only for ``f = 0``.
    """
    if np.max(np.abs(cond_exp(f, pi).values), initial=0.0) > tol * max(1.0, l2_norm(f)):
        raise ValueError("E(f|Y) must vanish")
    elements = enumerate_group(f.base, cap)
    nu = pi.target.fweights
    corr = []
    for g in elements:
        c = cond_inner(koopman(g, f), f, pi).values
        corr.append(float(np.sqrt(np.dot(nu, np.abs(c) ** 2))))
    corr = np.array(corr)
    m = float(corr.min())
    k = int(np.flatnonzero(corr <= m * (1 + 1e-9) + 1e-300)[0])
    return WMResult(m < tol, m, elements[k], float(np.mean(corr**2)))


@dataclass
class DecompositionReport:
    ap_basis: list[Observable]
    wm_basis: list[Observable]
    cross: float
    oracle_wm_dim: int

    def to_json(self) -> dict[str, Any]:
        return {
            "ap_dim": len(self.ap_basis),
            "wm_dim": len(self.wm_basis),
            "max_cross_inner": self.cross,
            "oracle_wm_dim": self.oracle_wm_dim,
            "wm_basis": [w.to_json() for w in self.wm_basis],
        }


def _kernel_of_cond_exp(pi: FactorMap) -> np.ndarray:
    """Columns: L²-orthonormal basis (weighted coordinates) of ``ker E(·|Y)``."""
    X = pi.source
    w = np.sqrt(X.fweights)
    cols = [w * lift(cond_exp(Observable.indicator(X, [x]), pi), pi).values for x in range(X.n)]
    P = np.stack(cols, axis=1) if cols else np.zeros((X.n, 0))
    U, s, _ = np.linalg.svd(P)
    r = int(np.sum(s > 1e-9))
    return U[:, r:]


def dichotomy(pi: FactorMap, tol: float = TOL, cap: int = DEFAULT_GROUP_CAP) -> DecompositionReport:
    """``L²(X) = AP ⊕ WM`` with WM computed as the orthocomplement of AP."""
    X = pi.source
    w = np.sqrt(X.fweights)
    ap, _ = ap_subspace(pi)
    A = np.stack([w * a.values for a in ap], axis=1) if ap else np.zeros((X.n, 0))
    U, s, _ = np.linalg.svd(A) if A.size else (np.eye(X.n), np.zeros(0), None)
    r = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))
    comp = U[:, r:]
    wm = [Observable(X, comp[:, j] / w) for j in range(comp.shape[1])]
    cross = max((abs(np.vdot(w * b.values, w * a.values)) for a in ap for b in wm), default=0.0)
    # finite-orbit oracle: every nonzero function orthogonal to L²(Y) has a
    # strictly positive mean correlation, so no nonzero vector is weakly mixing
    oracle_dim = 0
    kerE = _kernel_of_cond_exp(pi)
    for j in range(kerE.shape[1]):
        res = rel_wm_function(Observable(X, kerE[:, j] / w), pi, tol, cap)
        if res.mean_corr <= tol:
            oracle_dim += 1
    return DecompositionReport(ap, wm, float(cross), oracle_dim)


@dataclass
class WMExtensionResult:
    is_wm: bool
    routes: dict[str, bool]
    witness: dict[str, Any]

    def to_json(self) -> dict[str, Any]:
        return {"is_wm": self.is_wm, "routes": self.routes, "witness": self.witness}


def rel_wm_extension(pi: FactorMap, tol: float = TOL, cap: int = DEFAULT_GROUP_CAP) -> WMExtensionResult:
    """Relative weak mixing of ``π`` by three independent routes that must agree."""
    X = pi.source
    dec = dichotomy(pi, tol, cap)
    kerE = _kernel_of_cond_exp(pi).shape[1]
    wm_in_kernel = all(
        np.max(np.abs(cond_exp(b, pi).values), initial=0.0) <= tol for b in dec.wm_basis
    )
    route_a = wm_in_kernel and len(dec.wm_basis) == kerE
    route_b = len(dec.ap_basis) == pi.target.n
    rp = build_relprod(pi)
    inv_pairs = len(pair_orbits(rp))
    Y = pi.target
    inv_y = len(orbits(Y.n, [p for _, p in Y.action.generators]))
    route_c = inv_pairs == inv_y
    routes = {"wm_span": route_a, "ap_equals_base": route_b, "relative_ergodicity": route_c}
    witness = {
        "wm_dim": len(dec.wm_basis),
        "ker_cond_exp_dim": kerE,
        "ap_dim": len(dec.ap_basis),
        "base_dim": Y.n,
        "inv_relprod_dim": inv_pairs,
        "inv_base_dim": inv_y,
    }
    if len(set(routes.values())) != 1:
        raise EquivalenceError(f"weak mixing routes disagree: {routes}")
    return WMExtensionResult(route_a, routes, witness)


# AP factor and towers ------------------------------------------------------------


@dataclass
class APFactor:
    Z: FinSystem
    phi: FactorMap
    psi: FactorMap
    rank_used: int | None
    escalated: bool


def _factor_between(phi: FactorMap, pi: FactorMap) -> FactorMap:
    """``ψ: Z -> Y`` with ``ψ ∘ φ = π`` for ``φ: X -> Z`` refining ``π``."""
    m = [-1] * phi.target.n
    for x, z in enumerate(phi.mapping):
        y = pi.mapping[x]
        if m[z] not in (-1, y):
            raise ValueError("factor does not refine the base")
        m[z] = y
    gen_map = tuple((phi.gens[a], b) for a, b in pi.gen_map)
    return checked_factor(FactorMap(phi.target, pi.target, tuple(m), gen_map))


def ap_factor(pi: FactorMap, max_rank: int | None = None) -> APFactor:
    """Factor generated by ``AP`` (or by its rank-capped part) together with ``Y``.

    With a rank cap that yields no new functions over a non-trivial
    extension, the cap is raised to the smallest rank that makes progress
    and the result is flagged as escalated.
    """
    X = pi.source
    mods = irreducible_modules(pi)
    lifted_y = [lift(np.eye(pi.target.n)[y], pi) for y in range(pi.target.n)]
    rank = max_rank
    escalated = False
    ranks = sorted({m.rank for m in mods})
    while True:
        basis, _ = ap_subspace(pi, rank, mods)
        phi = factor_from_functions(X, basis + lifted_y)
        if rank is None or phi.target.n > pi.target.n or pi.is_isomorphism:
            break
        bigger = [r for r in ranks if r > rank]
        if not bigger:
            break
        rank = bigger[0]
        escalated = True
    psi = _factor_between(phi, pi)
    return APFactor(phi.target, phi, psi, rank, escalated)


@dataclass
class TowerLevel:
    kind: str
    factor: FactorMap  # X -> Y_alpha
    step: FactorMap | None  # Y_alpha -> Y_{alpha-1}
    compactness: CompactnessReport | None = None
    rank_used: int | None = None
    escalated: bool = False

    def to_json(self) -> dict[str, Any]:
        tgt = self.factor.target
        out: dict[str, Any] = {
            "kind": self.kind,
            "atoms": len(tgt.atoms),
            "factor_atoms": list(tgt.atoms),
        }
        if self.step is not None:
            sizes = [len(f) for f in self.step.fibers]
            out["step_fiber_size"] = {"min": min(sizes), "max": max(sizes)}
            out["nontrivial"] = not self.step.is_isomorphism
        if self.compactness is not None:
            out["relatively_compact"] = self.compactness.compact
            out["criteria"] = self.compactness.criteria
        if self.kind == "compact-step":
            out["rank_used"] = self.rank_used
            out["rank_escalated"] = self.escalated
        return out


@dataclass
class TowerReport:
    levels: list[TowerLevel]
    top_wm: WMExtensionResult
    max_rank: int | None
    compositions_ok: bool

    @property
    def length(self) -> int:
        return sum(1 for lv in self.levels if lv.kind == "compact-step")

    @property
    def factor_sizes(self) -> list[int]:
        return [lv.factor.target.n for lv in self.levels if lv.kind != "final-wm"]

    def to_json(self) -> dict[str, Any]:
        return {
            "length": self.length,
            "factor_sizes": self.factor_sizes,
            "max_rank": self.max_rank,
            "bounded_rank_mode": self.max_rank is not None,
            "levels": [lv.to_json() for lv in self.levels],
            "top_relatively_weakly_mixing": self.top_wm.is_wm,
            "top_wm_routes": self.top_wm.routes,
            "compositions_ok": self.compositions_ok,
        }


def furstenberg_tower(sys: FinSystem, max_rank: int | None = None, tol: float = TOL, cap: int = DEFAULT_GROUP_CAP) -> TowerReport:
    """Tower of relatively compact steps from the trivial factor up to a weakly mixing top."""
    cur = checked_factor(trivial_factor(sys))
    levels = [TowerLevel("initial", cur, None)]
    while True:
        wm = rel_wm_extension(cur, tol, cap)
        if wm.is_wm:
            break
        step = ap_factor(cur, max_rank)
        if step.psi.is_isomorphism:
            raise RuntimeError("tower step made no progress")
        rep = classify_compact(step.psi, tol, cap)
        levels.append(TowerLevel("compact-step", step.phi, step.psi, rep, step.rank_used, step.escalated))
        cur = step.phi
    levels.append(TowerLevel("final-wm", cur, None))
    # composing the step maps from X down must reproduce every level's factor map
    ok = True
    for i, lv in enumerate(levels[:-1]):
        comp = cur
        for up in reversed(levels[i + 1 : -1]):
            comp = compose_factors(up.step, comp)
        ok &= comp.mapping == lv.factor.mapping
    return TowerReport(levels, wm, max_rank, bool(ok))
