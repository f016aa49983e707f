"""Finite probability spaces with measure-preserving permutation actions.

A system is a finite set of atoms carrying exact rational weights together
with a group generated by labelled permutations of the atoms.  Factor maps
are equivariant, measure-preserving surjections of atoms.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
import numpy as np

DEFAULT_GROUP_CAP = 10_000

Perm = tuple[int, ...]


class FinSysError(ValueError):
    """Base class for errors raised while building systems and factors."""


class SchemaError(FinSysError):
    """Input document is not well-formed (JSON syntax or schema)."""


class ValidationError(FinSysError):
    """Input is well-formed but violates a mathematical invariant."""


class GroupCapExceeded(FinSysError):
    pass


SYSTEM_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["atoms", "generators"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "weight"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "weight": {
                        "type": "string",
                        "pattern": r"^\s*-?[0-9]+(\.[0-9]+|\s*/\s*[0-9]+)?\s*$",
                    },
                },
            },
        },
        "generators": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "perm"],
                "additionalProperties": False,
                "properties": {
                    "label": {"type": "string"},
                    "perm": {
                        "type": "object",
                        "additionalProperties": {"type": "string"},
                    },
                },
            },
        },
    },
    "additionalProperties": False,
}

FACTOR_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["source", "target", "map", "gen_map"],
    "properties": {
        "source": {"type": ["string", "object"]},
        "target": {"type": ["string", "object"]},
        "map": {"type": "object", "additionalProperties": {"type": "string"}},
        "gen_map": {"type": "object", "additionalProperties": {"type": "string"}},
    },
    "additionalProperties": False,
}


def parse_weight(text: str) -> Fraction:
    try:
        return Fraction(text.replace(" ", ""))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"bad weight {text!r}: {exc}") from None


def format_fraction(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class FinProbSpace:
    """Atoms in canonical order with strictly positive rational weights summing to 1."""

    atoms: tuple[str, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.atoms) != len(self.weights):
            raise ValidationError("atoms and weights differ in length")
        if not self.atoms:
            raise ValidationError("a probability space needs at least one atom")
        seen = set()
        for a in self.atoms:
            if a in seen:
                raise ValidationError(f"duplicate atom id {a!r}")
            seen.add(a)
        for a, w in zip(self.atoms, self.weights):
            if w <= 0:
                raise ValidationError(f"atom {a!r} has non-positive weight {w}")
        total = sum(self.weights, Fraction(0))
        if total != 1:
            raise ValidationError(f"weights sum to {total}, not 1")

    @cached_property
    def index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.atoms)}

    @cached_property
    def float_weights(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def __len__(self):
        return len(self.atoms)


@dataclass(frozen=True)
class GroupElement:
    """A permutation of atoms together with a word producing it.

    The word ``(a, b, c)`` denotes ``T^a ∘ T^b ∘ T^c``.
    """

    perm: Perm
    word: tuple[str, ...] = ()

    def __call__(self, i: int) -> int:
        return self.perm[i]

    @property
    def is_identity(self) -> bool:
        return all(i == p for i, p in enumerate(self.perm))

    def name(self) -> str:
        return "*".join(self.word) if self.word else "e"


@dataclass(frozen=True)
class GroupAction:
    generators: tuple[tuple[str, Perm], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.generators)

    @cached_property
    def _by_label(self) -> dict[str, Perm]:
        return dict(self.generators)

    def perm(self, label: str) -> Perm:
        try:
            return self._by_label[label]
        except KeyError:
            raise KeyError(f"unknown generator label {label!r}") from None


def compose(p: Perm, q: Perm) -> Perm:
    """Return ``p ∘ q``."""
    return tuple(p[i] for i in q)


def invert(p: Perm) -> Perm:
    out = [0] * len(p)
    for i, j in enumerate(p):
        out[j] = i
    return tuple(out)


def _check_perm(p: Sequence[int], n: int) -> bool:
    return len(p) == n and sorted(p) == list(range(n))


@dataclass(frozen=True)
class FinSystem:
    """A finite probability space with a measure-preserving group action."""

    space: FinProbSpace
    action: GroupAction
    name: str = field(default="", compare=False)

    def __post_init__(self):
        n = len(self.space)
        labels = set()
        for label, perm in self.action.generators:
            if label in labels:
                raise ValidationError(f"duplicate generator label {label!r}")
            labels.add(label)
            if not _check_perm(perm, n):
                raise ValidationError(f"generator {label!r} is not a permutation of the atoms")
            for i, j in enumerate(perm):
                if self.space.weights[i] != self.space.weights[j]:
                    a, b = self.space.atoms[i], self.space.atoms[j]
                    raise ValidationError(
                        f"generator {label!r} is not measure-preserving: "
                        f"{a} -> {b} but weights {self.space.weights[i]} != {self.space.weights[j]}"
                    )

    @property
    def atoms(self) -> tuple[str, ...]:
        return self.space.atoms

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return self.space.weights

    @property
    def n(self) -> int:
        return len(self.space)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.action.labels

    @property
    def index(self) -> dict[str, int]:
        return self.space.index

    @property
    def fweights(self) -> np.ndarray:
        return self.space.float_weights

    def perm(self, label: str) -> Perm:
        return self.action.perm(label)

    def element(self, word: Sequence[str]) -> GroupElement:
        """Group element for a word of generator labels (leftmost applied last)."""
        p: Perm = tuple(range(self.n))
        for label in reversed(tuple(word)):
            p = compose(self.perm(label), p)
        return GroupElement(p, tuple(word))

    @cached_property
    def _group_cache(self) -> dict:
        return {}


def make_system(
    weights: Mapping[str, Fraction | int | str] | Sequence[tuple[str, Fraction | int | str]],
    generators: Mapping[str, Sequence[int] | Mapping[str, str]] = (),
    name: str = "",
) -> FinSystem:
    """Convenience constructor.

    ``weights`` maps atom ids to weights (in order); generator permutations may
    be index sequences or partial ``{atom: image}`` dicts (unlisted atoms fixed).
    """
    items = list(weights.items()) if isinstance(weights, Mapping) else list(weights)
    atoms = tuple(a for a, _ in items)
    ws = tuple(w if isinstance(w, Fraction) else Fraction(w) for _, w in items)
    space = FinProbSpace(atoms, ws)
    gens = []
    gen_items = generators.items() if isinstance(generators, Mapping) else generators
    for label, entry in gen_items:
        gens.append((label, _perm_from_entry(entry, space)))
    return FinSystem(space, GroupAction(tuple(gens)), name=name)


def _perm_from_entry(entry, space: FinProbSpace) -> Perm:
    n = len(space)
    if isinstance(entry, Mapping):
        out = list(range(n))
        for a, b in entry.items():
            if a not in space.index or b not in space.index:
                raise ValidationError(f"permutation mentions unknown atom ({a!r} -> {b!r})")
            out[space.index[a]] = space.index[b]
        if sorted(out) != list(range(n)):
            raise ValidationError("permutation is not a bijection")
        return tuple(out)
    p = tuple(int(i) for i in entry)
    if not _check_perm(p, n):
        raise ValidationError("permutation is not a bijection")
    return p


def load_system(document: str | bytes | Mapping[str, Any], name: str = "") -> FinSystem:
    """Parse and validate a system document (JSON text or already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    try:
        jsonschema.validate(document, SYSTEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"schema violation: {exc.message}") from None
    weights = [(a["id"], parse_weight(a["weight"])) for a in document["atoms"]]
    gens = [(g["label"], g["perm"]) for g in document["generators"]]
    return make_system(weights, gens, name=name or document.get("name", ""))


def load_system_file(path: str | Path) -> FinSystem:
    path = Path(path)
    return load_system(path.read_text(encoding="utf-8"), name=path.stem)


def system_to_dict(sys: FinSystem) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if sys.name:
        out["name"] = sys.name
    out["atoms"] = [{"id": a, "weight": format_fraction(w)} for a, w in zip(sys.atoms, sys.weights)]
    out["generators"] = [
        {"label": label, "perm": {sys.atoms[i]: sys.atoms[j] for i, j in enumerate(p) if i != j}}
        for label, p in sys.action.generators
    ]
    return out


def enumerate_group(sys: FinSystem, cap: int = DEFAULT_GROUP_CAP) -> list[GroupElement]:
    """All elements of the permutation group generated by ``sys``'s generators.

    Breadth-first in generator order, so each element carries a shortest word
    and the identity comes first.  Raises :class:`GroupCapExceeded` when the
    group has more than ``cap`` elements.
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    cache = sys._group_cache
    if "elements" in cache:
        elems = cache["elements"]
        if len(elems) > cap:
            raise GroupCapExceeded(f"group order {len(elems)} exceeds cap {cap}")
        return list(elems)
    ident: Perm = tuple(range(sys.n))
    seen = {ident: GroupElement(ident, ())}
    queue = deque([ident])
    gens = sys.action.generators
    while queue:
        p = queue.popleft()
        word = seen[p].word
        for label, g in gens:
            q = compose(g, p)
            if q not in seen:
                seen[q] = GroupElement(q, (label,) + word)
                if len(seen) > cap:
                    raise GroupCapExceeded(f"group order exceeds cap {cap}")
                queue.append(q)
    elems = list(seen.values())
    cache["elements"] = elems
    return list(elems)


def orbits(n: int, perms: Iterable[Perm]) -> list[list[int]]:
    """Orbits of the group generated by ``perms`` on ``range(n)``, in atom order."""
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for p in perms:
        for i, j in enumerate(p):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


# ---------------------------------------------------------------------------
# factor maps


@dataclass(frozen=True)
class FactorMap:
    """A map of atoms ``source -> target`` with a generator correspondence.

    Construction does not validate; use :func:`validate_factor` or
    :func:`checked_factor`.
    """

    source: FinSystem
    target: FinSystem
    mapping: tuple[int, ...]
    gen_map: tuple[tuple[str, str], ...]

    @cached_property
    def gens(self) -> dict[str, str]:
        return dict(self.gen_map)

    @cached_property
    def fiber_index(self) -> np.ndarray:
        return np.asarray(self.mapping, dtype=np.intp)

    @cached_property
    def fibers(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.target.n)]
        for x, y in enumerate(self.mapping):
            out[y].append(x)
        return tuple(tuple(f) for f in out)

    @cached_property
    def cond_weights_exact(self) -> tuple[Fraction, ...]:
        """``μ(x)/ν(π(x))`` for every source atom."""
        return tuple(
            self.source.weights[x] / self.target.weights[y] for x, y in enumerate(self.mapping)
        )

    @cached_property
    def cond_weights(self) -> np.ndarray:
        return np.array([float(w) for w in self.cond_weights_exact])

    def image(self, atom: str) -> str:
        return self.target.atoms[self.mapping[self.source.index[atom]]]

    def target_perm(self, label: str) -> Perm:
        return self.target.perm(self.gens[label])

    def target_element(self, g: GroupElement) -> GroupElement:
        """The element of the target action induced by a source word."""
        return self.target.element([self.gens[a] for a in g.word])

    @property
    def is_isomorphism(self) -> bool:
        return self.source.n == self.target.n and len(set(self.mapping)) == self.source.n


def factor_from_ids(
    source: FinSystem,
    target: FinSystem,
    mapping: Mapping[str, str],
    gen_map: Mapping[str, str] | None = None,
) -> FactorMap:
    """Build a (not yet validated) factor map from atom-id dictionaries."""
    try:
        m = tuple(target.index[mapping[a]] for a in source.atoms)
    except KeyError as exc:
        raise ValidationError(f"factor map does not cover atom or names unknown atom: {exc}") from None
    if gen_map is None:
        gen_map = {label: label for label in source.labels}
    return FactorMap(source, target, m, tuple(gen_map.items()))


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""
    witness: Any = None

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "ok": self.ok, "detail": self.detail, "witness": self.witness}


@dataclass
class Report:
    """Pass/fail record of named checks."""

    title: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, detail: str = "", witness: Any = None) -> Check:
        c = Check(name, bool(ok), detail, witness)
        self.checks.append(c)
        return c

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def to_json(self) -> dict[str, Any]:
        return {"title": self.title, "passed": self.passed, "checks": [c.to_json() for c in self.checks]}


def validate_factor(pi: FactorMap) -> Report:
    """Check surjectivity, measure preservation and equivariance, with witnesses."""
    rep = Report("factor")
    src, tgt = pi.source, pi.target

    bad_labels = [a for a in src.labels if a not in pi.gens or pi.gens[a] not in tgt.labels]
    rep.add(
        "generator correspondence",
        not bad_labels,
        "" if not bad_labels else "source generators without a target generator",
        bad_labels[0] if bad_labels else None,
    )

    if len(pi.mapping) != src.n or any(not 0 <= y < tgt.n for y in pi.mapping):
        rep.add("well-defined", False, "mapping has wrong length or out-of-range targets")
        return rep

    hit = set(pi.mapping)
    missing = [tgt.atoms[y] for y in range(tgt.n) if y not in hit]
    rep.add("surjective", not missing, "" if not missing else "not surjective", missing[0] if missing else None)

    mass = [Fraction(0)] * tgt.n
    for x, y in enumerate(pi.mapping):
        mass[y] += src.weights[x]
    bad = [y for y in range(tgt.n) if mass[y] != tgt.weights[y]]
    rep.add(
        "measure-preserving",
        not bad,
        ""
        if not bad
        else f"pushforward mass {mass[bad[0]]} != target weight {tgt.weights[bad[0]]}",
        tgt.atoms[bad[0]] if bad else None,
    )

    witness = None
    for label in src.labels:
        if label in bad_labels:
            continue
        t, s = src.perm(label), pi.target_perm(label)
        for x in range(src.n):
            if pi.mapping[t[x]] != s[pi.mapping[x]]:
                witness = {"generator": label, "atom": src.atoms[x]}
                break
        if witness:
            break
    rep.add("equivariant", witness is None, "" if witness is None else "not equivariant", witness)
    return rep


def checked_factor(pi: FactorMap) -> FactorMap:
    rep = validate_factor(pi)
    if not rep.passed:
        c = rep.failures()[0]
        raise ValidationError(f"invalid factor map: {c.name} ({c.detail}; witness {c.witness})")
    return pi


def compose_factors(outer: FactorMap, inner: FactorMap) -> FactorMap:
    """``outer ∘ inner`` for ``inner: X -> Y`` and ``outer: Y -> Z``."""
    if inner.target is not outer.source and inner.target != outer.source:
        raise ValueError("factor maps are not composable")
    m = tuple(outer.mapping[y] for y in inner.mapping)
    g = tuple((a, outer.gens[b]) for a, b in inner.gen_map)
    return FactorMap(inner.source, outer.target, m, g)


def quotient(sys: FinSystem, classes: Sequence[Sequence[int]], name: str = "") -> FactorMap:
    """Factor of ``sys`` onto a partition of its atoms.

    The partition must be invariant; classes are re-sorted by their first atom.
    Atom ids of the quotient join member ids with ``+``.
    """
    classes = sorted((sorted(c) for c in classes), key=lambda c: c[0])
    cls_of = [-1] * sys.n
    for k, c in enumerate(classes):
        for x in c:
            cls_of[x] = k
    if min(cls_of) < 0:
        raise ValueError("classes do not cover the atoms")
    weights = []
    for c in classes:
        weights.append(("+".join(sys.atoms[x] for x in c), sum((sys.weights[x] for x in c), Fraction(0))))
    gens = []
    for label, p in sys.action.generators:
        img = [-1] * len(classes)
        for k, c in enumerate(classes):
            targets = {cls_of[p[x]] for x in c}
            if len(targets) != 1:
                raise ValidationError(
                    f"induced action ill-defined: generator {label!r} splits class {weights[k][0]!r}"
                )
            img[k] = targets.pop()
        gens.append((label, tuple(img)))
    target = make_system(weights, gens, name=name)
    return FactorMap(sys, target, tuple(cls_of), tuple((a, a) for a in sys.labels))


def trivial_factor(sys: FinSystem) -> FactorMap:
    return quotient(sys, [list(range(sys.n))], name="trivial")


def identity_factor(sys: FinSystem) -> FactorMap:
    return FactorMap(sys, sys, tuple(range(sys.n)), tuple((a, a) for a in sys.labels))


def _cluster_rows(rows: np.ndarray, tol: float) -> list[list[int]]:
    classes: list[list[int]] = []
    reps: list[np.ndarray] = []
    for i, r in enumerate(rows):
        for k, rep in enumerate(reps):
            if np.max(np.abs(r - rep), initial=0.0) <= tol:
                classes[k].append(i)
                break
        else:
            classes.append([i])
            reps.append(r)
    return classes


def invariant_refinement(sys: FinSystem, classes: Sequence[Sequence[int]]) -> list[list[int]]:
    """Coarsest invariant partition refining ``classes``.

    Two atoms stay together iff every generator sends them to a common
    class, iterated to a fixed point.
    """
    label = [0] * sys.n
    for k, c in enumerate(classes):
        for x in c:
            label[x] = k
    perms = [p for _, p in sys.action.generators]
    while True:
        keys = [(label[x],) + tuple(label[p[x]] for p in perms) for x in range(sys.n)]
        ids: dict[tuple, int] = {}
        new = [ids.setdefault(k, len(ids)) for k in keys]
        if len(ids) == len(set(label)):
            break
        label = new
    groups: dict[int, list[int]] = {}
    for x in range(sys.n):
        groups.setdefault(label[x], []).append(x)
    return sorted(groups.values(), key=lambda g: g[0])


def factor_from_functions(sys: FinSystem, fns: Sequence[Any], tol: float = 1e-7) -> FactorMap:
    """Factor generated by functions and all their translates.

    Atoms are first grouped by the values of ``fns`` (up to ``tol`` relative
    to the largest value), then the grouping is refined until it is
    invariant.  Each entry of ``fns`` is an observable on ``sys`` or a plain
    array of values in atom order.
    """
    cols = []
    for f in fns:
        v = np.asarray(getattr(f, "values", f), dtype=complex)
        if v.shape != (sys.n,):
            raise ValueError("function does not live on this system")
        cols.append(v)
    if not cols:
        return trivial_factor(sys)
    rows = np.stack(cols, axis=1)
    scale = max(1.0, float(np.max(np.abs(rows))))
    classes = invariant_refinement(sys, _cluster_rows(rows, tol * scale))
    pi = quotient(sys, classes, name=f"{sys.name}/F" if sys.name else "")
    return checked_factor(pi)


def load_factor(document: str | Path | Mapping[str, Any], base_dir: str | Path | None = None) -> FactorMap:
    """Load a factor document; ``source``/``target`` are paths (relative to
    ``base_dir``) or inline system objects."""
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        path = Path(document)
        base_dir = path.parent if base_dir is None else base_dir
        text = path.read_text(encoding="utf-8")
    else:
        text = document
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    else:
        doc = text
    try:
        jsonschema.validate(doc, FACTOR_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"schema violation: {exc.message}") from None
    base = Path(base_dir) if base_dir is not None else Path(".")

    def _sys(ref):
        if isinstance(ref, str):
            return load_system_file(base / ref)
        return load_system(ref)

    return factor_from_ids(_sys(doc["source"]), _sys(doc["target"]), doc["map"], doc["gen_map"])


def factor_to_dict(pi: FactorMap, inline: bool = True) -> dict[str, Any]:
    return {
        "source": system_to_dict(pi.source) if inline else pi.source.name,
        "target": system_to_dict(pi.target) if inline else pi.target.name,
        "map": {a: pi.target.atoms[y] for a, y in zip(pi.source.atoms, pi.mapping)},
        "gen_map": dict(pi.gen_map),
    }
