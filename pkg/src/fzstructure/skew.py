"""Finite groups, cocycles, homogeneous skew products and cocycle extraction."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

from .condlinalg import CondModule
from .ergodic import invariant_factor
from .finsys import (
    DEFAULT_GROUP_CAP,
    FactorMap,
    FinSystem,
    Report,
    SchemaError,
    ValidationError,
    checked_factor,
    compose,
    enumerate_group,
    make_system,
)
from .hilbert import TOL, Observable, cond_inner, koopman

SUBGROUP_LIMIT = 24
DEFAULT_MACKEY_BUDGET = 10**6


class BudgetExceeded(RuntimeError):
    pass


class NotErgodicError(ValueError):
    def __init__(self, msg: str, witness: Any = None):
        super().__init__(msg)
        self.witness = witness


# groups ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FinGroupTable:
    """A finite group given by its multiplication table on named elements.

    ``mult[a][b]`` is the index of ``a·b``.
    """

    elements: tuple[str, ...]
    mult: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.elements)
        if n == 0 or len(set(self.elements)) != n:
            raise ValidationError("group elements must be non-empty and distinct")
        if len(self.mult) != n or any(len(r) != n or any(not 0 <= v < n for v in r) for r in self.mult):
            raise ValidationError("multiplication table has the wrong shape")
        m = self.mult
        if self._find_identity() is None:
            raise ValidationError("no identity element")
        e = self.identity
        for a in range(n):
            if not any(m[a][b] == e and m[b][a] == e for b in range(n)):
                raise ValidationError(f"element {self.elements[a]!r} has no inverse")
        for a, b, c in itertools.product(range(n), repeat=3):
            if m[m[a][b]][c] != m[a][m[b][c]]:
                raise ValidationError(
                    f"not associative at ({self.elements[a]}, {self.elements[b]}, {self.elements[c]})"
                )

    def _find_identity(self) -> int | None:
        n = len(self.elements)
        for e in range(n):
            if all(self.mult[e][a] == a and self.mult[a][e] == a for a in range(n)):
                return e
        return None

    @cached_property
    def identity(self) -> int:
        return self._find_identity()

    @cached_property
    def inverse(self) -> tuple[int, ...]:
        e = self.identity
        return tuple(next(b for b in range(len(self)) if self.mult[a][b] == e) for a in range(len(self)))

    @cached_property
    def _index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.elements)}

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown group element {name!r}") from None

    def __len__(self):
        return len(self.elements)

    def mul(self, a: int, b: int) -> int:
        return self.mult[a][b]

    def order_of(self, a: int) -> int:
        k, x = 1, a
        while x != self.identity:
            x = self.mult[x][a]
            k += 1
        return k

    @property
    def is_abelian(self) -> bool:
        n = len(self)
        return all(self.mult[a][b] == self.mult[b][a] for a in range(n) for b in range(n))

    @property
    def is_cyclic(self) -> bool:
        return any(self.order_of(a) == len(self) for a in range(len(self)))

    # constructors
    @classmethod
    def from_names(cls, elements: Sequence[str], mult: Sequence[Sequence[str]]) -> "FinGroupTable":
        idx = {a: i for i, a in enumerate(elements)}
        try:
            table = tuple(tuple(idx[v] for v in row) for row in mult)
        except KeyError as exc:
            raise ValidationError(f"table mentions unknown element {exc}") from None
        return cls(tuple(elements), table)

    @classmethod
    def cyclic(cls, n: int) -> "FinGroupTable":
        return cls(tuple(str(i) for i in range(n)), tuple(tuple((a + b) % n for b in range(n)) for a in range(n)))

    @classmethod
    def quaternion(cls) -> "FinGroupTable":
        names = ("1", "-1", "i", "-i", "j", "-j", "k", "-k")
        # unit quaternions as (sign, axis) with axis in 1, i, j, k
        basis = {"1": (1, 0), "i": (1, 1), "j": (1, 2), "k": (1, 3)}
        prod = {
            (0, 0): (1, 0), (0, 1): (1, 1), (0, 2): (1, 2), (0, 3): (1, 3),
            (1, 0): (1, 1), (1, 1): (-1, 0), (1, 2): (1, 3), (1, 3): (-1, 2),
            (2, 0): (1, 2), (2, 1): (-1, 3), (2, 2): (-1, 0), (2, 3): (1, 1),
            (3, 0): (1, 3), (3, 1): (1, 2), (3, 2): (-1, 1), (3, 3): (-1, 0),
        }  # fmt: skip

        def parse(s):
            sign, rest = (-1, s[1:]) if s.startswith("-") else (1, s)
            return sign * basis[rest][0], basis[rest][1]

        axis_name = {0: "1", 1: "i", 2: "j", 3: "k"}

        def show(sign, axis):
            return ("" if sign > 0 else "-") + axis_name[axis]

        idx = {a: i for i, a in enumerate(names)}
        table = []
        for a in names:
            sa, xa = parse(a)
            row = []
            for b in names:
                sb, xb = parse(b)
                s, x = prod[(xa, xb)]
                row.append(idx[show(sa * sb * s, x)])
            table.append(tuple(row))
        return cls(names, tuple(table))

    @classmethod
    def direct_product(cls, G: "FinGroupTable", H: "FinGroupTable") -> "FinGroupTable":
        pairs = [(a, b) for a in range(len(G)) for b in range(len(H))]
        idx = {p: i for i, p in enumerate(pairs)}
        names = tuple(f"({G.elements[a]},{H.elements[b]})" for a, b in pairs)
        table = tuple(
            tuple(idx[(G.mult[a][c], H.mult[b][d])] for c, d in pairs) for a, b in pairs
        )
        return cls(names, table)

    @classmethod
    def from_perms(cls, gens: Sequence[Sequence[int]]) -> "FinGroupTable":
        """Group generated by permutations, elements named ``p0, p1, ...`` in discovery order."""
        n = len(gens[0])
        ident = tuple(range(n))
        elems = [ident]
        seen = {ident: 0}
        i = 0
        while i < len(elems):
            for g in gens:
                q = compose(tuple(g), elems[i])
                if q not in seen:
                    seen[q] = len(elems)
                    elems.append(q)
            i += 1
        table = tuple(tuple(seen[compose(a, b)] for b in elems) for a in elems)
        return cls(tuple(f"p{k}" for k in range(len(elems))), table)

    def to_json(self) -> dict[str, Any]:
        return {"elements": list(self.elements), "mult": [[self.elements[v] for v in row] for row in self.mult]}


@dataclass(frozen=True, eq=False)
class Subgroup:
    parent: FinGroupTable
    members: frozenset[int]

    def __post_init__(self):
        G = self.parent
        if G.identity not in self.members:
            raise ValidationError("subgroup must contain the identity")
        for a in self.members:
            if G.inverse[a] not in self.members:
                raise ValidationError("subgroup is not closed under inverses")
            for b in self.members:
                if G.mult[a][b] not in self.members:
                    raise ValidationError("subgroup is not closed under multiplication")

    def __len__(self):
        return len(self.members)

    @property
    def sorted_members(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))

    def names(self) -> list[str]:
        return [self.parent.elements[a] for a in self.sorted_members]

    @classmethod
    def trivial(cls, G: FinGroupTable) -> "Subgroup":
        return cls(G, frozenset({G.identity}))

    @classmethod
    def whole(cls, G: FinGroupTable) -> "Subgroup":
        return cls(G, frozenset(range(len(G))))

    @classmethod
    def generated(cls, G: FinGroupTable, gens: Sequence[int]) -> "Subgroup":
        return cls(G, _closure(G, set(gens)))

    def left_cosets(self) -> list[tuple[int, ...]]:
        """Left cosets ``kL`` ordered by smallest member."""
        G = self.parent
        seen: set[int] = set()
        out = []
        for k in range(len(G)):
            if k in seen:
                continue
            c = tuple(sorted(G.mult[k][l] for l in self.members))
            seen.update(c)
            out.append(c)
        return out


def _closure(G: FinGroupTable, s: set[int]) -> frozenset[int]:
    out = {G.identity} | set(s)
    frontier = list(out)
    while frontier:
        a = frontier.pop()
        for b in list(out):
            for c in (G.mult[a][b], G.mult[b][a]):
                if c not in out:
                    out.add(c)
                    frontier.append(c)
    return frozenset(out)


def all_subgroups(G: FinGroupTable, limit: int = SUBGROUP_LIMIT) -> list[Subgroup]:
    """Every subgroup, ordered by size and then by sorted member indices."""
    if len(G) > limit:
        raise BudgetExceeded(f"subgroup enumeration limited to groups of order {limit}")
    found: set[frozenset[int]] = {_closure(G, {a}) for a in range(len(G))}
    frontier = list(found)
    while frontier:
        H = frontier.pop()
        for a in range(len(G)):
            if a not in H:
                J = _closure(G, set(H) | {a})
                if J not in found:
                    found.add(J)
                    frontier.append(J)
    subs = sorted(found, key=lambda h: (len(h), sorted(h)))
    return [Subgroup(G, h) for h in subs]


# cocycles -------------------------------------------------------------------------


COCYCLE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["elements", "mult", "cocycle"],
    "properties": {
        "elements": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "mult": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
        "cocycle": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": {"type": "string"}},
        },
        "subgroup": {"type": "array", "items": {"type": "string"}},
        "base": {"type": "string"},
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True, eq=False)
class Cocycle:
    """Generator values ``ρ_s(y)`` of a cocycle ``Y × Γ -> K``.

    Values on words follow from the cocycle law.  The acting group is the one
    generated by the skew-product permutations of ``Y × K``, on which the
    extension by the law is well defined.
    """

    base: FinSystem
    group: FinGroupTable
    values: Mapping[tuple[int, str], int]

    def __post_init__(self):
        for y in range(self.base.n):
            for label in self.base.labels:
                v = self.values.get((y, label))
                if v is None:
                    raise ValidationError(f"cocycle missing value at ({self.base.atoms[y]}, {label})")
                if not 0 <= v < len(self.group):
                    raise ValidationError("cocycle value outside the group")

    def value(self, y: int, label: str) -> int:
        return self.values[(y, label)]

    def on_word(self, word: Sequence[str]) -> list[int]:
        """``ρ_w(y)`` for every ``y``, via ``ρ_{aw'}(y) = ρ_a(S^{w'} y) ρ_{w'}(y)``."""
        G = self.group
        n = self.base.n
        pos = list(range(n))
        acc = [G.identity] * n
        for label in reversed(tuple(word)):
            perm = self.base.perm(label)
            for y in range(n):
                acc[y] = G.mult[self.values[(pos[y], label)]][acc[y]]
                pos[y] = perm[pos[y]]
        return acc

    @classmethod
    def trivial(cls, base: FinSystem, group: FinGroupTable) -> "Cocycle":
        return cls(base, group, {(y, a): group.identity for y in range(base.n) for a in base.labels})

    @classmethod
    def from_dict(cls, base: FinSystem, group: FinGroupTable, values: Mapping[str, Mapping[str, str]]) -> "Cocycle":
        out = {}
        for ya, row in values.items():
            if ya not in base.index:
                raise ValidationError(f"cocycle mentions unknown atom {ya!r}")
            for label, g in row.items():
                if label not in base.labels:
                    raise ValidationError(f"cocycle mentions unknown generator {label!r}")
                out[(base.index[ya], label)] = group.index(g)
        return cls(base, group, out)

    def to_dict(self) -> dict[str, dict[str, str]]:
        G = self.group
        return {
            self.base.atoms[y]: {a: G.elements[self.values[(y, a)]] for a in self.base.labels}
            for y in range(self.base.n)
        }

    def to_json(self, subgroup: Subgroup | None = None) -> dict[str, Any]:
        out = {**self.group.to_json(), "cocycle": self.to_dict()}
        if subgroup is not None:
            out["subgroup"] = subgroup.names()
        return out

    @cached_property
    def realization(self) -> tuple[FinSystem, FactorMap]:
        return skew_build(self.base, self, self.group, Subgroup.trivial(self.group))


def load_cocycle(document: str | Path | Mapping[str, Any], base: FinSystem) -> tuple[Cocycle, Subgroup]:
    """Parse a cocycle document against its base system; returns the cocycle and subgroup ``L``."""
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        document = Path(document).read_text(encoding="utf-8")
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    try:
        jsonschema.validate(document, COCYCLE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"schema violation: {exc.message}") from None
    G = FinGroupTable.from_names(document["elements"], document["mult"])
    rho = Cocycle.from_dict(base, G, document["cocycle"])
    if "subgroup" in document:
        L = Subgroup(G, frozenset(G.index(a) for a in document["subgroup"]))
    else:
        L = Subgroup.trivial(G)
    return rho, L


def cocycle_table(rho: Cocycle, cap: int = DEFAULT_GROUP_CAP):
    """Acting group elements (on ``Y × K``) with ``ρ_g`` evaluated along each element's word."""
    X, _ = rho.realization
    elements = enumerate_group(X, cap)
    return elements, {g.perm: rho.on_word(g.word) for g in elements}


def verify_cocycle(
    rho: Cocycle, cap: int = DEFAULT_GROUP_CAP, table: Mapping[tuple[int, ...], Sequence[int]] | None = None
) -> Report:
    """Check ``ρ_{gh} = (ρ_g ∘ S^h) ρ_h`` for every pair of group elements.

    ``table`` may override the values per element (keyed by the element's
    permutation of ``Y × K``).
    """
    G = rho.group
    elements, computed = cocycle_table(rho, cap)
    vals = dict(computed) if table is None else dict(table)
    nk, e = len(G), G.identity
    rep = Report("cocycle")
    witness = None
    for g in elements:
        for h in elements:
            gh = compose(g.perm, h.perm)
            lhs = vals[gh]
            for y in range(rho.base.n):
                # Y-image of y under h: project the image of (y, e)
                sy = h.perm[y * nk + e] // nk
                if lhs[y] != G.mult[vals[g.perm][sy]][vals[h.perm][y]]:
                    witness = {"g": g.name(), "h": h.name(), "y": rho.base.atoms[y]}
                    break
            if witness:
                break
        if witness:
            break
    rep.add("cocycle law", witness is None, "" if witness is None else "law fails", witness)
    # each realised permutation sends (y, e) to (S y, ρ(y))
    consistent = all(
        g.perm[y * nk + e] % nk == vals[g.perm][y] for g in elements for y in range(rho.base.n)
    )
    rep.add("matches skew action", consistent)
    rep.add("pairs checked", True, f"{len(elements) ** 2} pairs")
    return rep


# skew products -------------------------------------------------------------------


def _coset_name(G: FinGroupTable, coset: Sequence[int]) -> str:
    return "+".join(G.elements[a] for a in coset)


def skew_build(Y: FinSystem, rho: Cocycle, K: FinGroupTable, L: Subgroup | None = None) -> tuple[FinSystem, FactorMap]:
    """Homogeneous skew product ``Y ⋊_ρ K/L`` and its projection to ``Y``.

    Atoms ``y|kL`` with weight ``ν(y)/[K:L]``; ``T^s(y, kL) = (S^s y, ρ_s(y) kL)``.
    """
    if rho.group is not K:
        raise ValidationError("cocycle takes values in a different group")
    if rho.base is not Y and rho.base != Y:
        raise ValidationError("cocycle lives on a different base")
    L = L if L is not None else Subgroup.trivial(K)
    if L.parent is not K:
        raise ValidationError("L is not a subgroup of K")
    cosets = L.left_cosets()
    coset_of = {}
    for c_i, c in enumerate(cosets):
        for k in c:
            coset_of[k] = c_i
    nc = len(cosets)
    weights = [
        (f"{Y.atoms[y]}|{_coset_name(K, c)}", Y.weights[y] / nc) for y in range(Y.n) for c in cosets
    ]
    gens = {}
    for label in Y.labels:
        S = Y.perm(label)
        p = []
        for y in range(Y.n):
            r = rho.value(y, label)
            for c in cosets:
                p.append(S[y] * nc + coset_of[K.mult[r][c[0]]])
        gens[label] = p
    X = make_system(weights, gens, name=f"{Y.name}x{nc}" if Y.name else "skew")
    pi = FactorMap(X, Y, tuple(y for y in range(Y.n) for _ in cosets), tuple((a, a) for a in Y.labels))
    return X, checked_factor(pi)


@dataclass
class MackeyResult:
    H: Subgroup
    transfer: dict[str, str]
    nodes: int

    def to_json(self) -> dict[str, Any]:
        return {"H": self.H.names(), "order": len(self.H), "transfer": self.transfer, "search_nodes": self.nodes}


def mackey_range(Y: FinSystem, rho: Cocycle, K: FinGroupTable, budget: int = DEFAULT_MACKEY_BUDGET) -> MackeyResult:
    """Smallest subgroup ``H`` (by size, then member order) with a transfer ``b`` such that
    ``b(S y)^{-1} ρ_s(y) b(y) ∈ H`` for every generator ``s`` and atom ``y``."""
    if not invariant_factor(Y).ergodic:
        raise NotErgodicError("base is not ergodic")
    if len(K) ** Y.n > budget:
        raise BudgetExceeded(f"|K|^|Y| = {len(K) ** Y.n} exceeds budget {budget}")
    inv = K.inverse
    constraints = []  # (y, Sy, rho) with both endpoints known once max(y, Sy) is assigned
    for label in Y.labels:
        S = Y.perm(label)
        for y in range(Y.n):
            constraints.append((y, S[y], rho.value(y, label)))
    by_last: dict[int, list] = {}
    for c in constraints:
        by_last.setdefault(max(c[0], c[1]), []).append(c)
    nodes = 0
    for H in all_subgroups(K):
        members = H.members
        b = [0] * Y.n

        def ok(i):
            for y, sy, r in by_last.get(i, ()):
                if K.mult[K.mult[inv[b[sy]]][r]][b[y]] not in members:
                    return False
            return True

        def search(i):
            nonlocal nodes
            if i == Y.n:
                return True
            for k in range(len(K)):
                nodes += 1
                if nodes > budget:
                    raise BudgetExceeded(f"search exceeded {budget} nodes")
                b[i] = k
                if ok(i) and search(i + 1):
                    return True
            return False

        if search(0):
            return MackeyResult(H, {Y.atoms[y]: K.elements[b[y]] for y in range(Y.n)}, nodes)
    raise AssertionError("the whole group always works")


def skew_is_compact_check(Y: FinSystem, rho: Cocycle, K: FinGroupTable, L: Subgroup | None = None):
    from .structure import classify_compact

    _, pi = skew_build(Y, rho, K, L)
    rep = classify_compact(pi)
    if not rep.compact:
        raise AssertionError(f"skew product failed compactness criteria: {rep.criteria}")
    return rep


# unitary cocycle extraction --------------------------------------------------------


@dataclass
class ModuleCocycle:
    dimension: int
    frame: list[Observable]
    elements: list[Any]
    lambdas: dict[tuple[int, ...], np.ndarray]  # perm -> (ny, d, d)
    unitary_error: float
    frame_error: float
    law_error: float
    unimodular: bool

    def ok(self, tol: float = TOL) -> bool:
        return max(self.unitary_error, self.frame_error, self.law_error) <= tol

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "dimension": self.dimension,
            "unitary_error": self.unitary_error,
            "frame_error": self.frame_error,
            "cocycle_law_error": self.law_error,
            "unimodular_frame": self.unimodular,
            "frame": [f.to_json() for f in self.frame],
            "lambda": {},
        }
        for g in self.elements:
            L = self.lambdas[g.perm]
            out["lambda"][g.name()] = [
                [[[float(v.real), float(v.imag)] for v in row] for row in L[y]] for y in range(L.shape[0])
            ]
        return out


@dataclass
class UnitaryCocycleBundle:
    factor: FactorMap
    modules: list[ModuleCocycle]

    @property
    def ok(self) -> bool:
        return all(m.ok() for m in self.modules)

    def to_json(self) -> dict[str, Any]:
        return {
            "base_atoms": list(self.factor.target.atoms),
            "modules": [m.to_json() for m in self.modules],
            "all_checks_pass": self.ok,
        }


def constant_rank_frame(mod: CondModule) -> list[Observable]:
    """Glue a module's Gram-Schmidt frames into ``d`` vectors; needs constant cdim."""
    frame = mod.normal_form
    cd = mod.cdim()
    if len(set(cd.tolist())) != 1:
        ya = mod.factor.target.atoms
        lo, hi = int(np.argmin(cd)), int(np.argmax(cd))
        raise NotErgodicError(
            "conditional dimension is not constant",
            {ya[lo]: int(cd[lo]), ya[hi]: int(cd[hi])},
        )
    d = int(cd[0])
    n = mod.factor.source.n
    out = []
    for k in range(d):
        vals = np.zeros(n, dtype=complex)
        for key, hs in frame.frames.items():
            if key != frame.e0:
                vals += hs[k].values
        out.append(Observable(mod.factor.source, vals))
    return out


def _module_cocycle(pi: FactorMap, frame: list[Observable], cap: int) -> ModuleCocycle:
    X, Y = pi.source, pi.target
    d = len(frame)
    elements = enumerate_group(X, cap)
    by_perm = {g.perm: g for g in elements}
    lambdas: dict[tuple[int, ...], np.ndarray] = {}
    unit_err = frame_err = 0.0
    F = np.stack([f.values for f in frame])  # d × n
    for g in elements:
        FT = np.stack([koopman(g, f).values for f in frame])
        Lam = np.zeros((Y.n, d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                Lam[:, i, j] = cond_inner(frame[i], Observable(X, FT[j]), pi).values
        lambdas[g.perm] = Lam
        for y in range(Y.n):
            unit_err = max(unit_err, float(np.max(np.abs(Lam[y] @ Lam[y].conj().T - np.eye(d)))))
        # F(x) = Λ_g(π x) F(T^g x)
        recon = np.einsum("xij,jx->ix", Lam[pi.fiber_index], FT)
        frame_err = max(frame_err, float(np.max(np.abs(recon - F))))
    # ρ_g = Λ_g^*  satisfies  ρ_{gh}(y) = ρ_g(S^h y) ρ_h(y)
    law_err = 0.0
    for g in elements:
        for h in elements:
            gh = by_perm[compose(g.perm, h.perm)]
            Sh = pi.target_element(h).perm
            rg, rh, rgh = (lambdas[e.perm].conj().transpose(0, 2, 1) for e in (g, h, gh))
            for y in range(Y.n):
                law_err = max(law_err, float(np.max(np.abs(rgh[y] - rg[Sh[y]] @ rh[y]))))
    unimodular = bool(all(np.allclose(np.abs(f.values), 1.0, atol=1e-9) for f in frame))
    return ModuleCocycle(d, frame, elements, lambdas, unit_err, frame_err, law_err, unimodular)


def extract_cocycle(
    pi: FactorMap,
    generator: Observable | None = None,
    cap: int = DEFAULT_GROUP_CAP,
) -> UnitaryCocycleBundle:
    """Unitary cocycles of the invariant modules of an extension of an ergodic base.

    With ``generator`` the single module generated by its orbit is used;
    otherwise the irreducible invariant modules.
    """
    from .structure import _vector_orbit, irreducible_modules

    inv = invariant_factor(pi.target)
    if not inv.ergodic:
        raise NotErgodicError("base is not ergodic", {"orbits": inv.inv_dimension})
    if generator is not None:
        mods = [CondModule(_vector_orbit(generator, cap), pi)]
        frames = [constant_rank_frame(m) for m in mods]
    else:
        frames = []
        for m in irreducible_modules(pi):
            if len(set(m.cdim.tolist())) != 1:
                ya = pi.target.atoms
                raise NotErgodicError("conditional dimension is not constant", {ya[y]: int(c) for y, c in enumerate(m.cdim)})
            frames.append(m.frame())
    return UnitaryCocycleBundle(pi, [_module_cocycle(pi, f, cap) for f in frames if f])


# products and quotients -------------------------------------------------------------


@dataclass
class ProductQuotient:
    cocycle: Cocycle
    group: FinGroupTable
    subgroup: Subgroup
    coset_map: dict[str, tuple[str, ...]]
    bijective: bool


def cocycle_product_quotient(
    cocycles: Sequence[Cocycle], subgroups: Sequence[Subgroup] | None = None
) -> ProductQuotient:
    """Componentwise product of cocycles over a common base, with the quotient by ``Π L_α``.

    ``coset_map`` sends each coset of the product subgroup to the tuple of
    component cosets; ``bijective`` certifies ``ΠK/ΠL ≅ Π(K/L)``.
    """
    if not cocycles:
        raise ValueError("need at least one cocycle")
    base = cocycles[0].base
    for c in cocycles[1:]:
        if c.base is not base and c.base != base:
            raise ValidationError("cocycles live on different bases")
    subgroups = list(subgroups) if subgroups is not None else [Subgroup.trivial(c.group) for c in cocycles]
    if len(subgroups) != len(cocycles):
        raise ValueError("one subgroup per cocycle")
    G = cocycles[0].group
    index_tuples = [(a,) for a in range(len(G))]
    for c in cocycles[1:]:
        G2 = FinGroupTable.direct_product(G, c.group)
        index_tuples = [t + (b,) for t in index_tuples for b in range(len(c.group))]
        G = G2
    pos = {t: i for i, t in enumerate(index_tuples)}
    values = {
        (y, a): pos[tuple(c.value(y, a) for c in cocycles)] for y in range(base.n) for a in base.labels
    }
    rho = Cocycle(base, G, values)
    members = frozenset(
        pos[t] for t in itertools.product(*[sorted(L.members) for L in subgroups])
    )
    L = Subgroup(G, members)
    comp_cosets = [
        {k: ci for ci, cs in enumerate(Lc.left_cosets()) for k in cs} for Lc in subgroups
    ]
    coset_map = {}
    images = set()
    for coset in L.left_cosets():
        t = index_tuples[coset[0]]
        img = tuple(
            _coset_name(c.group, Lc.left_cosets()[cc[k]]) for c, Lc, cc, k in zip(cocycles, subgroups, comp_cosets, t)
        )
        coset_map[_coset_name(G, coset)] = img
        images.add(img)
    n_target = int(np.prod([len(Lc.left_cosets()) for Lc in subgroups]))
    return ProductQuotient(rho, G, L, coset_map, len(images) == len(coset_map) == n_target)
