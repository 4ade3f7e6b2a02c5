"""Command-line front end: model fact tables and checks on TOML system files.

    premulti demo r8
    premulti demo em --check kernel
    premulti check system.toml related --d1 D1 --d2 D3 --output json

Exit codes: 0 pass, 1 check failure, 2 input or usage error.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import math
import operator
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .exterior import (
    DEFAULT_FD_STEP,
    FiberedChart,
    FormField,
    FormValue,
    JetChartMeta,
    VectorField,
    _sort_sign,
)
from .kernels import TOL_ALG, is_variational_point, kernel_distribution_point
from .reduction import QuotientError, build_quotient, check_reduced_multisymplectic
from .sections import Section, section_is_solution, weak_kernel_test
from .solutions import Distribution, PremultisymplecticSystem, is_expanded_solution_point, is_involutive_point

SCHEMA = 1
TOL_FD = 1e-5
CHECKS = ("variational", "kernel", "expanded", "related", "involutive", "section", "reduce", "weak-kernel")


class InputError(ValueError):
    """Malformed system file or arguments (exit code 2)."""


# ---------------------------------------------------------------------------
# expressions


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def compile_expr(src, names: Sequence[str]) -> Callable[[np.ndarray], float]:
    """Compile a coefficient expression over coordinate names.

    Grammar: real literals, coordinate names, + - * / and ^ (read as **),
    unary signs, parentheses and sqrt(...).
    """
    if isinstance(src, bool):
        raise InputError(f"expression expected, got {src!r}")
    if isinstance(src, (int, float)):
        c = float(src)
        return lambda p: c
    if not isinstance(src, str) or not src.strip():
        raise InputError(f"empty or non-string expression {src!r}")
    try:
        tree = ast.parse(src.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {src!r}: {exc.msg}") from None
    index = {n: i for i, n in enumerate(names)}

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            c = float(node.value)
            return lambda p: c
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise InputError(f"unknown coordinate {node.id!r} in {src!r}")
            i = index[node.id]
            return lambda p: p[i]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, a, b = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda p: op(a(p), b(p))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            op, a = _UNOPS[type(node.op)], build(node.operand)
            return lambda p: op(a(p))
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id == "sqrt"
            and len(node.args) == 1
            and not node.keywords
        ):
            a = build(node.args[0])
            return lambda p: math.sqrt(a(p))
        raise InputError(f"unsupported syntax in {src!r}")

    fn = build(tree)
    return lambda p: float(fn(p))


def substitute_expr(src, values: Dict[str, float]) -> str:
    """Replace coordinate names by numbers, keeping the rest of the text."""
    if isinstance(src, (int, float)):
        return repr(float(src))

    class Sub(ast.NodeTransformer):
        def visit_Name(self, node):
            if node.id in values:
                return ast.copy_location(ast.Constant(float(values[node.id])), node)
            return node

    tree = Sub().visit(ast.parse(str(src).strip().replace("^", "**"), mode="eval"))
    return ast.unparse(ast.fix_missing_locations(tree))


# ---------------------------------------------------------------------------
# system files


@dataclass
class SystemFile:
    """Parsed system file; `raw` keeps the TOML tables for re-emission."""

    raw: dict
    system: PremultisymplecticSystem
    distributions: Dict[str, Distribution] = field(default_factory=dict)
    sections: Dict[str, Section] = field(default_factory=dict)
    fields: Dict[str, VectorField] = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @property
    def chart(self) -> FiberedChart:
        return self.system.chart


def _names(table, key) -> List[str]:
    vals = table.get(key, [])
    if not isinstance(vals, list) or not all(isinstance(v, str) and v for v in vals):
        raise InputError(f"chart.{key} must be a list of names")
    return vals


def parse_chart(raw: dict) -> FiberedChart:
    table = raw.get("chart")
    if not isinstance(table, dict):
        raise InputError("missing [chart] table")
    base, fiber = _names(table, "base"), _names(table, "fiber")
    names = tuple(base + fiber)
    jet = None
    if "jet" in table:
        pos = {n: i for i, n in enumerate(names)}
        vel = {}
        for v, pair in table["jet"].items():
            if v not in pos or not isinstance(pair, list) or len(pair) != 2 or any(a not in pos for a in pair):
                raise InputError(f"bad jet pairing for {v!r}")
            vel[pos[v]] = (pos[pair[0]], pos[pair[1]])
        jet = JetChartMeta(vel)
    try:
        return FiberedChart(len(base), len(fiber), names, jet)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _form_field(chart: FiberedChart, terms) -> FormField:
    if not isinstance(terms, list) or not terms:
        raise InputError("at least one [[form]] term is required")
    compiled = []
    degree = None
    for t in terms:
        cov = t.get("covectors")
        if not isinstance(cov, list) or not cov:
            raise InputError("form term needs a non-empty covectors list")
        try:
            idx = [chart.index(c) for c in cov]
        except (KeyError, ValueError):
            raise InputError(f"unknown covector in {cov}") from None
        sign, key = _sort_sign(idx)
        if not sign:
            raise InputError(f"repeated covector in {cov}")
        if degree is not None and len(key) != degree:
            raise InputError("form terms have different degrees")
        degree = len(key)
        compiled.append((key, sign, compile_expr(t.get("coeff", 1.0), chart.names)))

    def ev(p):
        acc: Dict[tuple, float] = {}
        for key, sign, f in compiled:
            acc[key] = acc.get(key, 0.0) + sign * f(p)
        return FormValue._raw(degree, chart.dim, {k: v for k, v in acc.items() if v != 0.0})

    return FormField(chart, degree, ev)


def _vector(chart: FiberedChart, comps, label: str) -> VectorField:
    if not isinstance(comps, dict) or not comps:
        raise InputError(f"vector {label!r} must be a non-empty table of components")
    fns = []
    for name, expr in comps.items():
        if name not in chart.names:
            raise InputError(f"unknown coordinate {name!r} in {label!r}")
        fns.append((chart.index(name), compile_expr(expr, chart.names)))

    def ev(p):
        v = np.zeros(chart.dim)
        for i, f in fns:
            v[i] += f(p)
        return v

    if len(comps) == 1 and list(comps.values())[0] in (1, 1.0, "1"):
        label = f"d/d{list(comps)[0]}"
    return VectorField(chart, ev, label)


def _section(chart: FiberedChart, comps, label: str) -> Section:
    if not isinstance(comps, dict):
        raise InputError(f"section {label!r} must be a table")
    base = chart.names[: chart.m]
    fns = []
    for name, expr in comps.items():
        if name not in chart.names[chart.m :]:
            raise InputError(f"section {label!r} sets non-fiber coordinate {name!r}")
        fns.append((chart.index(name) - chart.m, compile_expr(expr, base)))

    def fiber(x):
        y = np.zeros(chart.n)
        for j, f in fns:
            y[j] = f(x)
        return y

    return Section.from_fiber(chart, fiber, label)


def load_system(text: str, name: str = "system") -> SystemFile:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"TOML parse error: {exc}") from None
    chart = parse_chart(raw)
    omega = _form_field(chart, raw.get("form"))
    if omega.degree != chart.m + 1:
        raise InputError(f"form degree {omega.degree} does not match base dimension {chart.m} + 1")
    system = PremultisymplecticSystem(chart, omega, raw.get("name", name))
    out = SystemFile(raw, system)
    for dname, gens in raw.get("distributions", {}).items():
        if not isinstance(gens, list) or not gens:
            raise InputError(f"distribution {dname!r} needs a list of generators")
        vecs = tuple(_vector(chart, g, f"{dname}[{k}]") for k, g in enumerate(gens))
        out.distributions[dname] = Distribution(chart, vecs, dname)
    for sname, comps in raw.get("sections", {}).items():
        out.sections[sname] = _section(chart, comps, sname)
    for fname, comps in raw.get("fields", {}).items():
        out.fields[fname] = _vector(chart, comps, fname)
    out.sampling = dict(raw.get("sampling", {}))
    out.tolerances = dict(raw.get("tolerances", {}))
    return out


def reduced_system_toml(sf: SystemFile, dropped: Sequence[str], beta: Dict[str, float]) -> dict:
    """System file for the quotient: drop coordinates, substitute the slice values.

    Terms containing a dropped covector vanish on the slice; remaining
    coefficients are evaluated at the slice values of the dropped coordinates.
    """
    raw = sf.raw
    chart = dict(raw["chart"])
    chart["fiber"] = [n for n in chart["fiber"] if n not in dropped]
    if "jet" in chart:
        chart["jet"] = {v: pr for v, pr in chart["jet"].items() if v not in dropped and pr[0] not in dropped}
        if not chart["jet"]:
            del chart["jet"]
    vals = {d: float(beta.get(d, 0.0)) for d in dropped}
    form = [
        {"coeff": substitute_expr(t.get("coeff", 1.0), vals), "covectors": list(t["covectors"])}
        for t in raw["form"]
        if not set(t["covectors"]) & set(dropped)
    ]
    out = {"name": f"{raw.get('name', 'system')}/K", "chart": chart, "form": form}
    dists = {}
    for dname, gens in raw.get("distributions", {}).items():
        proj = [{k: v for k, v in g.items() if k not in dropped} for g in gens]
        proj = [g for g in proj if g]
        if proj:
            dists[dname] = proj
    if dists:
        out["distributions"] = dists
    secs = {s: {k: v for k, v in c.items() if k not in dropped} for s, c in raw.get("sections", {}).items()}
    if secs:
        out["sections"] = secs
    for key in ("sampling", "tolerances"):
        if key in raw:
            out[key] = raw[key]
    return out


# ---------------------------------------------------------------------------
# sampling


def sample_points(chart: FiberedChart, count: int, seed: int, box, mode: str = "random") -> List[np.ndarray]:
    lo, hi = box
    if mode == "random":
        rng = np.random.default_rng(seed)
        return list(rng.uniform(lo, hi, size=(count, chart.dim)))
    if mode == "grid":
        # rank-1 lattice: deterministic, evenly spread, independent of the seed
        alpha = np.sqrt(np.arange(2, chart.dim + 2) + 0.5) % 1.0
        return [lo + (hi - lo) * (((i + 0.5) / count + (i + 1) * alpha) % 1.0) for i in range(count)]
    raise InputError(f"unknown sampling mode {mode!r}")


# ---------------------------------------------------------------------------
# verdicts


def format_form(omega: FormValue, names: Sequence[str]) -> str:
    if omega.is_zero():
        return "0"
    parts = []
    for idx, c in sorted(omega.items()):
        basis = "^".join(f"d{names[i]}" for i in idx) or "1"
        parts.append(f"{c:+.6g}*{basis}")
    return " ".join(parts)


def _digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _verdict(check: str, digest: str, passed: bool, residuals: dict, witnesses=None, details=None) -> dict:
    return {
        "check": check,
        "args_digest": digest,
        "passed": bool(passed),
        "residuals": residuals,
        "witnesses": witnesses,
        "details": details or {},
    }


def _pmap(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _need(mapping: dict, key: Optional[str], what: str):
    if not key:
        raise InputError(f"a {what} name is required")
    if key not in mapping:
        raise InputError(f"unknown {what} {key!r}; available: {sorted(mapping)}")
    return mapping[key]


def run_check(sf: SystemFile, check: str, args, points: List[np.ndarray], digest: str) -> List[dict]:
    system, chart = sf.system, sf.chart
    tol_alg = args.tol if args.tol is not None else float(sf.tolerances.get("alg", TOL_ALG))
    tol_fd = args.tol if args.tol is not None else float(sf.tolerances.get("fd", TOL_FD))
    h = args.fd_step if args.fd_step is not None else float(sf.tolerances.get("fd_step", DEFAULT_FD_STEP))
    jobs = args.jobs
    names = chart.names

    if check == "variational":
        reps = _pmap(lambda p: is_variational_point(system.at(p), chart, tol_alg), points, jobs)
        bad = next((r for r in reps if not r.variational), None)
        wit = [names[i] for i in bad.witness] if bad else None
        return [_verdict("variational", digest, bad is None, {"max": max(r.residual for r in reps)}, wit)]

    if check == "kernel":
        reps = _pmap(lambda p: kernel_distribution_point(system.at(p), chart, tol_alg), points, jobs)
        dims = sorted({(r.ker1_dim, r.K_dim) for r in reps})
        ok = len(dims) == 1
        if args.expect_dim is not None:
            ok = ok and dims[0][1] == args.expect_dim
        details = {
            "ker1_dim": [d[0] for d in dims],
            "K_dim": [d[1] for d in dims],
            "K_basis_first_point": [np.round(v, 12).tolist() for v in reps[0].K_basis],
        }
        return [_verdict("kernel", digest, ok, {"max": max(r.max_residual for r in reps)}, None, details)]

    if check == "expanded":
        D = _need(sf.distributions, args.d, "distribution")
        reps = _pmap(lambda p: is_expanded_solution_point(D, system, p, tol_alg), points, jobs)
        return [_expanded_verdict("expanded", digest, D, reps, names)]

    if check == "related":
        D1 = _need(sf.distributions, args.d1, "distribution")
        D2 = _need(sf.distributions, args.d2, "distribution")
        joint = D1 + D2
        reps = _pmap(lambda p: is_expanded_solution_point(joint, system, p, tol_alg), points, jobs)
        return [_expanded_verdict("related", digest, joint, reps, names)]

    if check == "involutive":
        D = _need(sf.distributions, args.d, "distribution")
        reps = _pmap(lambda p: is_involutive_point(D, p, h, tol_fd), points, jobs)
        return [_verdict("involutive", digest, all(r[0] for r in reps), {"max": max(r[1] for r in reps)})]

    if check == "section":
        phi = _need(sf.sections, args.section, "section")
        base = [p[: chart.m] for p in points]
        ok, res = section_is_solution(phi, system, base, h, tol_fd)
        return [_verdict("section", digest, ok, {"max": res})]

    if check == "weak-kernel":
        Y = _need(sf.fields, args.field, "field")
        if chart.jet is None:
            raise InputError("weak-kernel needs a [chart] jet pairing")
        ok, res = weak_kernel_test(Y, system, points, tol_alg)
        return [_verdict("weak-kernel", digest, ok, {"max": res})]

    if check == "reduce":
        q = sf.raw.get("quotient")
        if not isinstance(q, dict) or not q.get("drop"):
            raise InputError("reduce needs a quotient table with a non-empty drop list")
        dropped = list(q["drop"])
        beta = dict(q.get("beta", {}))
        for n in dropped + list(beta):
            if n not in names[chart.m :]:
                raise InputError(f"quotient names non-fiber coordinate {n!r}")
        idx = [chart.index(n) for n in dropped]
        try:
            red = build_quotient(system, idx, points, h, tol_fd, {chart.index(k): float(v) for k, v in beta.items()}, args.seed)
        except QuotientError as exc:
            return [_verdict("reduce", digest, False, {}, exc.witness, {"error": str(exc)})]
        chk = check_reduced_multisymplectic(red, [red.quotient.xi(p) for p in points], h, tol_fd)
        reduced = reduced_system_toml(sf, dropped, beta)
        details = {"reduced_check": chk.to_json(), "reduced_system": tomli_w.dumps(reduced)}
        if args.emit:
            Path(args.emit).write_text(details["reduced_system"], encoding="utf-8")
            details["emitted"] = str(args.emit)
        return [_verdict("reduce", digest, True, red.certificate, None, details)]

    raise InputError(f"unknown check {check!r}")


def _expanded_verdict(check: str, digest: str, D: Distribution, reps, names) -> dict:
    bad = next((r for r in reps if not r.passed), None)
    witness = None
    if bad is not None and bad.transverse:
        labels = [D.generators[i].label for i in bad.witness]
        witness = {
            "wedge": labels,
            "contraction": bad.witness_contraction.to_json(),
            "contraction_text": format_form(bad.witness_contraction, names),
        }
    elif bad is not None:
        witness = {"transverse": False}
    return _verdict(check, digest, bad is None, {"max": max(r.residual for r in reps)}, witness)


# ---------------------------------------------------------------------------
# commands


def _emit(report: dict, output: str, out) -> None:
    if output == "json":
        out.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        return
    out.write(f"{report['command']} {report['target']}: {'PASS' if report['passed'] else 'FAIL'}\n")
    for v in report["verdicts"]:
        line = f"  [{'PASS' if v['passed'] else 'FAIL'}] {v['check']}"
        if "residuals" in v and v["residuals"]:
            line += "  " + " ".join(f"{k}={val:.3g}" for k, val in sorted(v["residuals"].items()) if isinstance(val, float))
        if "value" in v:
            line += f"  value={json.dumps(v['value'])} expected={json.dumps(v['expected'])}"
        out.write(line + "\n")
        wit = v.get("witnesses")
        if isinstance(wit, dict) and "wedge" in wit:
            wedge = "".join(f"i({g})" for g in wit["wedge"])
            out.write(f"      witness: {wedge}Omega = {wit['contraction_text']}\n")
        elif wit:
            out.write(f"      witness: {json.dumps(wit)}\n")
        if v.get("details", {}).get("error"):
            out.write(f"      {v['details']['error']}\n")


def cmd_demo(args, out=None) -> int:
    out = out or sys.stdout
    from .models import MODELS

    if args.model not in MODELS:
        sys.stderr.write(f"unknown model {args.model!r}; available: {', '.join(sorted(MODELS))}\n")
        return 2
    spec = MODELS[args.model]()
    facts = spec.facts
    if args.check:
        prefix = f"{spec.facts[0].name.split('.')[0]}." if spec.facts else ""
        facts = [f for f in facts if f.name[len(prefix):] == args.check or f.name[len(prefix):].startswith(args.check + ".")]
        if not facts:
            sys.stderr.write(f"no check matches {args.check!r}\n")
            return 2
    results = sorted(_pmap(lambda f: f.evaluate(), facts, args.jobs), key=lambda r: r["check"])
    verdicts = []
    for r in results:
        r = dict(r)
        r.pop("elapsed")
        verdicts.append(r)
    report = {
        "schema": SCHEMA,
        "command": "demo",
        "target": args.model,
        "args_digest": _digest({"model": args.model, "check": args.check}),
        "passed": all(v["passed"] for v in verdicts),
        "verdicts": verdicts,
    }
    _emit(report, args.output, out)
    return 0 if report["passed"] else 1


def cmd_check(args, out=None) -> int:
    out = out or sys.stdout
    path = Path(args.file)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        sys.stderr.write(f"cannot read {path}: {exc}\n")
        return 2
    try:
        sf = load_system(text, path.stem)
        count = args.points if args.points is not None else int(sf.sampling.get("points", 8))
        seed = args.seed if args.seed is not None else int(sf.sampling.get("seed", 0))
        args.seed = seed
        box = args.box if args.box is not None else tuple(sf.sampling.get("box", (-1.0, 1.0)))
        if count < 1 or len(box) != 2 or not box[0] < box[1]:
            raise InputError("need points >= 1 and a box lo < hi")
        points = sample_points(sf.chart, count, seed, box, sf.sampling.get("mode", "random"))
        payload = {
            "file_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "check": args.check,
            "d": args.d,
            "d1": args.d1,
            "d2": args.d2,
            "section": args.section,
            "field": args.field,
            "points": count,
            "seed": seed,
            "box": list(box),
            "tol": args.tol,
            "fd_step": args.fd_step,
            "expect_dim": args.expect_dim,
        }
        digest = _digest(payload)
        t0 = time.perf_counter()
        verdicts = run_check(sf, args.check, args, points, digest)
        elapsed = time.perf_counter() - t0
    except InputError as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return 2
    report = {
        "schema": SCHEMA,
        "command": f"check {args.check}",
        "target": path.name,
        "args_digest": digest,
        "passed": all(v["passed"] for v in verdicts),
        "verdicts": sorted(verdicts, key=lambda v: v["check"]),
    }
    _emit(report, args.output, out)
    if args.output != "json":
        out.write(f"  elapsed {elapsed:.3f}s\n")
    return 0 if report["passed"] else 1


def _box(text: str):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo,hi") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="premulti", description="Kernel and solution checks for premultisymplectic systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", choices=("text", "json"), default="text")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")

    demo = sub.add_parser("demo", parents=[common], help="run a built-in model's fact table")
    demo.add_argument("model")
    demo.add_argument("--check", help="run only facts under this name (e.g. kernel, related.S)")
    demo.set_defaults(func=cmd_demo)

    check = sub.add_parser("check", parents=[common], help="run one check on a TOML system file")
    check.add_argument("file")
    check.add_argument("check", choices=CHECKS)
    check.add_argument("--d", help="distribution name")
    check.add_argument("--d1")
    check.add_argument("--d2")
    check.add_argument("--section")
    check.add_argument("--field")
    check.add_argument("--points", type=int)
    check.add_argument("--seed", type=int)
    check.add_argument("--tol", type=float)
    check.add_argument("--fd-step", type=float)
    check.add_argument("--box", type=_box, help="lo,hi for every coordinate")
    check.add_argument("--expect-dim", type=int, help="kernel: required dim of K")
    check.add_argument("--emit", help="reduce: write the reduced system file here")
    check.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    if getattr(args, "jobs", 1) < 1:
        sys.stderr.write("--jobs must be >= 1\n")
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
