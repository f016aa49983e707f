"""Command-line interface: ``fz <command> ...``.

Exit codes: 0 pass, 1 I/O or schema error, 2 validation failure,
3 disagreement between characterisations that must agree.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import condlinalg, ergodic, skew, structure
from .finsys import (
    DEFAULT_GROUP_CAP,
    FinSysError,
    GroupCapExceeded,
    SchemaError,
    ValidationError,
    checked_factor,
    factor_to_dict,
    load_factor,
    load_system_file,
    trivial_factor,
    validate_factor,
)
from .hilbert import Observable, cond_inner, cond_norm, l2_inner, l2_norm

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_EQUIVALENCE = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    inputs: list[str]
    tol: float = 1e-9
    group_cap: int = DEFAULT_GROUP_CAP
    mackey_budget: int = skew.DEFAULT_MACKEY_BUDGET
    max_rank: int | None = None
    out: str | None = None
    fmt: str = "json"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.group_cap < 1 or self.mackey_budget < 1:
            raise ValueError("caps must be positive")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError("max rank must be positive")


def corpus_dir() -> Path:
    env = os.environ.get("FZ_CORPUS")
    if env:
        return Path(env)
    return Path(str(resources.files("fzstructure") / "corpus"))


def resolve(path: str) -> Path:
    """A path as given, or the file of that name in the corpus."""
    p = Path(path)
    if p.exists():
        return p
    q = corpus_dir() / path
    if q.exists():
        return q
    raise FileNotFoundError(f"no such file: {path}")


# commands -----------------------------------------------------------------------------


def cmd_validate(cfg: RunConfig) -> tuple[dict, int]:
    sysfile = resolve(cfg.inputs[0])
    X = load_system_file(sysfile)
    out: dict[str, Any] = {"system": X.name, "atoms": X.n, "generators": list(X.labels), "valid": True}
    code = EXIT_OK
    if len(cfg.inputs) > 1:
        fac = resolve(cfg.inputs[1])
        pi = load_factor(fac)
        if pi.source.atoms != X.atoms:
            raise ValidationError("factor source does not match the system")
        rep = validate_factor(pi)
        out["factor"] = rep.to_json()
        out["valid"] = rep.passed
        code = EXIT_OK if rep.passed else EXIT_VALIDATION
    out["ergodic"] = ergodic.invariant_factor(X).ergodic
    return out, code


def _load_pair(cfg: RunConfig):
    X = load_system_file(resolve(cfg.inputs[0]))
    if len(cfg.inputs) > 1:
        pi = checked_factor(load_factor(resolve(cfg.inputs[1])))
        if pi.source.atoms != X.atoms or pi.source.weights != X.weights:
            raise ValidationError("factor source does not match the system")
        return pi
    return trivial_factor(X)


def cmd_classify(cfg: RunConfig) -> tuple[dict, int]:
    pi = _load_pair(cfg)
    rep = structure.classify_compact(pi, cfg.tol, cfg.group_cap, strict=False)
    return rep.to_json(), EXIT_OK if rep.agreement else EXIT_EQUIVALENCE


def cmd_tower(cfg: RunConfig) -> tuple[dict, int]:
    X = load_system_file(resolve(cfg.inputs[0]))
    rep = structure.furstenberg_tower(X, cfg.max_rank, cfg.tol, cfg.group_cap)
    ok = rep.compositions_ok and rep.top_wm.is_wm
    return rep.to_json(), EXIT_OK if ok else EXIT_VALIDATION


def _load_cocycle(cfg: RunConfig, base_arg: str | None):
    path = resolve(cfg.inputs[0])
    doc = json.loads(path.read_text(encoding="utf-8"))
    if base_arg is not None:
        base_path = resolve(base_arg)
    elif isinstance(doc, dict) and "base" in doc:
        base_path = path.parent / doc["base"]
    else:
        raise SchemaError("cocycle document has no base; pass --base")
    Y = load_system_file(base_path)
    rho, L = skew.load_cocycle(doc, Y)
    return Y, rho, L


def cmd_skew(cfg: RunConfig, base: str | None = None) -> tuple[dict, int]:
    Y, rho, L = _load_cocycle(cfg, base)
    ver = skew.verify_cocycle(rho, cfg.group_cap)
    X, pi = skew.skew_build(Y, rho, rho.group, L)
    comp = structure.classify_compact(pi, cfg.tol, cfg.group_cap, strict=False)
    inv = ergodic.invariant_factor(X)
    out = {
        "cocycle": ver.to_json(),
        "skew_product": factor_to_dict(pi),
        "ergodic": inv.ergodic,
        "orbits": inv.to_json()["orbits"],
        "compactness": comp.to_json(),
    }
    if not comp.agreement:
        return out, EXIT_EQUIVALENCE
    return out, EXIT_OK if ver.passed and comp.compact else EXIT_VALIDATION


def cmd_mackey(cfg: RunConfig, base: str | None = None) -> tuple[dict, int]:
    Y, rho, _ = _load_cocycle(cfg, base)
    res = skew.mackey_range(Y, rho, rho.group, cfg.mackey_budget)
    X, _ = skew.skew_build(Y, rho, rho.group)
    out = res.to_json()
    out["group_order"] = len(rho.group)
    out["skew_ergodic"] = ergodic.invariant_factor(X).ergodic
    consistent = (len(res.H) == len(rho.group)) == out["skew_ergodic"]
    out["consistent_with_ergodicity"] = consistent
    return out, EXIT_OK if consistent else EXIT_EQUIVALENCE


def cmd_extract(cfg: RunConfig, generator: str | None = None) -> tuple[dict, int]:
    pi = _load_pair(cfg)
    gen = None
    if generator is not None:
        vals = [complex(v.strip().replace(" ", "")) for v in generator.split(",")]
        gen = Observable(pi.source, np.array(vals))
    bundle = skew.extract_cocycle(pi, gen, cfg.group_cap)
    out = bundle.to_json()
    ok = all(m.ok(cfg.tol) for m in bundle.modules)
    return out, EXIT_OK if ok else EXIT_VALIDATION


# selftest -----------------------------------------------------------------------------


def _classify_doc(path: Path) -> str:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "cocycle" in doc:
        return "cocycle"
    if isinstance(doc, dict) and "map" in doc:
        return "factor"
    return "system"


def _selftest_checks(cfg: RunConfig, path: Path) -> list[tuple[str, Callable[[], bool]]]:
    kind = _classify_doc(path)
    tol = cfg.tol
    rng = np.random.default_rng(0)
    checks: list[tuple[str, Callable[[], bool]]] = []
    if kind == "system":
        X = load_system_file(path)
        f = Observable(X, rng.standard_normal(X.n) + 1j * rng.standard_normal(X.n))
        g = Observable(X, rng.standard_normal(X.n))

        def ab():
            P = ergodic.ab_project(f, cfg.group_cap)
            return (
                l2_norm(ergodic.ab_project(P, cfg.group_cap) - P) <= tol
                and abs(l2_inner(P, g) - l2_inner(f, ergodic.ab_project(g, cfg.group_cap))) <= tol
                and l2_norm(ergodic.convex_min_norm_oracle(f) - P) <= max(tol, 1e-6)
            )

        def tower():
            rep = structure.furstenberg_tower(X, None, tol, cfg.group_cap)
            return rep.compositions_ok and rep.top_wm.is_wm and rep.length == (0 if X.n == 1 else 1)

        checks += [("alaoglu-birkhoff projection", ab), ("tower", tower)]
    elif kind == "factor":
        pi = checked_factor(load_factor(path))
        X = pi.source

        def gs():
            gens = [Observable(X, rng.standard_normal(X.n)) for _ in range(3)]
            fr = condlinalg.gram_schmidt(gens, pi)
            for key, hs in fr.frames.items():
                if key == fr.e0:
                    continue
                ys = sorted(fr.partition.blocks[key])
                for i, h in enumerate(hs):
                    if np.max(np.abs(cond_norm(h, pi).values[ys] - 1)) > tol:
                        return False
                    for h2 in hs[i + 1 :]:
                        if np.max(np.abs(cond_inner(h, h2, pi).values[ys])) > tol:
                            return False
            mod = condlinalg.CondModule(gens, pi)
            return all(np.max(condlinalg.module_project(mod, h)[1].values.real) <= tol for h in gens)

        def compact():
            rep = structure.classify_compact(pi, tol, cfg.group_cap)
            return rep.compact

        def dich():
            rep = structure.dichotomy(pi, tol, cfg.group_cap)
            return not rep.wm_basis and rep.oracle_wm_dim == 0 and rep.cross <= tol and len(rep.ap_basis) == X.n

        def wm():
            res = structure.rel_wm_extension(pi, tol, cfg.group_cap)
            return res.is_wm == pi.is_isomorphism

        checks += [("gram-schmidt", gs), ("compactness", compact), ("dichotomy", dich), ("weak mixing routes", wm)]
    else:
        sub = RunConfig("skew", [str(path)], tol, cfg.group_cap, cfg.mackey_budget)

        def cocycle():
            _, rho, _ = _load_cocycle(sub, None)
            return skew.verify_cocycle(rho, cfg.group_cap).passed

        def sk():
            return cmd_skew(sub)[1] == EXIT_OK

        def mk():
            return cmd_mackey(sub)[1] == EXIT_OK

        checks += [("cocycle law", cocycle), ("skew product compact", sk), ("mackey range", mk)]
    return checks


def cmd_selftest(cfg: RunConfig) -> tuple[dict, int]:
    root = Path(cfg.inputs[0]) if cfg.inputs else corpus_dir()
    files = sorted(root.glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no corpus files in {root}")
    results = []
    code = EXIT_OK
    for path in files:
        try:
            checks = _selftest_checks(cfg, path)
        except (OSError, json.JSONDecodeError, SchemaError) as exc:
            results.append({"file": path.name, "check": "load", "ok": False, "error": str(exc)})
            code = max(code, EXIT_IO) if code != EXIT_EQUIVALENCE else code
            continue
        except FinSysError as exc:
            results.append({"file": path.name, "check": "load", "ok": False, "error": str(exc)})
            code = EXIT_VALIDATION if code != EXIT_EQUIVALENCE else code
            continue
        for name, fn in checks:
            entry: dict[str, Any] = {"file": path.name, "check": name}
            try:
                entry["ok"] = bool(fn())
            except structure.EquivalenceError as exc:
                entry["ok"], entry["error"] = False, str(exc)
                code = EXIT_EQUIVALENCE
            except Exception as exc:  # noqa: BLE001 - reported, never swallowed silently
                entry["ok"], entry["error"] = False, f"{type(exc).__name__}: {exc}"
            if not entry["ok"] and code == EXIT_OK:
                code = EXIT_VALIDATION
            results.append(entry)
    passed = sum(r["ok"] for r in results)
    return {"corpus": str(root), "passed": passed, "failed": len(results) - passed, "results": results}, code


# rendering and entry point ----------------------------------------------------------


def render_text(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{pad}{k}:")
                lines.append(render_text(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {v}")
    elif isinstance(obj, list):
        for v in obj:
            if isinstance(v, (dict, list)):
                lines.append(f"{pad}-")
                lines.append(render_text(v, indent + 1))
            else:
                lines.append(f"{pad}- {v}")
    else:
        lines.append(f"{pad}{obj}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-9, help="numerical tolerance (default 1e-9)")
    common.add_argument("--group-cap", type=int, default=DEFAULT_GROUP_CAP, help="largest group to enumerate")
    common.add_argument("--mackey-budget", type=int, default=skew.DEFAULT_MACKEY_BUDGET, help="transfer-map search budget")
    common.add_argument("--max-rank", type=int, default=None, help="bounded-rank tower steps")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="fz", description="Structure theory of finite measure-preserving systems.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("validate", parents=[common], help="validate a system and optionally a factor map")
    s.add_argument("system")
    s.add_argument("factor", nargs="?")
    s = sub.add_parser("classify", parents=[common], help="relative compactness criteria")
    s.add_argument("system")
    s.add_argument("factor", nargs="?", help="factor map file (default: trivial factor)")
    s = sub.add_parser("tower", parents=[common], help="Furstenberg tower of a system")
    s.add_argument("system")
    for name, helptext in (("skew", "build a skew product from a cocycle"), ("mackey", "Mackey range of a cocycle")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("cocycle")
        s.add_argument("--base", default=None, help="base system (default: the cocycle's base entry)")
    s = sub.add_parser("extract", parents=[common], help="unitary cocycles of invariant modules")
    s.add_argument("system")
    s.add_argument("factor", nargs="?")
    s.add_argument("--generator", default=None, help="comma-separated values of a module generator")
    s = sub.add_parser("selftest", parents=[common], help="run invariant checks on the corpus")
    s.add_argument("corpus", nargs="?", default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    inputs = [
        v for v in (getattr(args, k, None) for k in ("system", "factor", "cocycle", "corpus")) if v is not None
    ]
    try:
        cfg = RunConfig(
            args.command, inputs, args.tol, args.group_cap, args.mackey_budget, args.max_rank, args.out, args.format
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if cfg.command == "validate":
            report, code = cmd_validate(cfg)
        elif cfg.command == "classify":
            report, code = cmd_classify(cfg)
        elif cfg.command == "tower":
            report, code = cmd_tower(cfg)
        elif cfg.command == "skew":
            report, code = cmd_skew(cfg, args.base)
        elif cfg.command == "mackey":
            report, code = cmd_mackey(cfg, args.base)
        elif cfg.command == "extract":
            report, code = cmd_extract(cfg, args.generator)
        else:
            report, code = cmd_selftest(cfg)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except structure.EquivalenceError as exc:
        print(f"equivalence failure: {exc}", file=sys.stderr)
        return EXIT_EQUIVALENCE
    except (FinSysError, GroupCapExceeded, skew.BudgetExceeded, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    text = json.dumps(report, indent=2) if cfg.fmt == "json" else render_text(report)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
