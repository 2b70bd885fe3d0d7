"""Command line interface: system files, commands and run reports.

System files are UTF-8 JSON.  Complex scalars are written as ``[re, im]``
(plain numbers are read as real), matrices as row-major nested arrays::

    {
      "rank": 1,
      "elements": [
        {"kind": "orbit", "id": "g", "index": 1, "period": 1.0,
         "twist": 1, "orientation": 1, "holonomy": [[2.0]]}
      ],
      "split": true
    }

Optional keys are ``"chain_model"`` (``dims``, ``differentials``,
``levels``), ``"surgery"`` (orbit id to ``tau``, ``n_a``, ``n_a_prime``,
``gram_x``, ``gram_x_prime``) and ``"dimension"``.

Exit codes: 0 when every check passes, 1 on a numerical failure, 2 on an
input error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import jsonschema
import numpy as np

from .algebra_core import (
    DEFAULT_TOL,
    AntisymMatrix,
    GramMetric,
    det,
    pfaffian,
    pfaffian_berezin,
    psi_dim_one,
    psi_dim_one_quadrature,
)
from .complex_engine import (
    CochainComplex,
    FilteredComplex,
    canonical_element_norm,
    fusion_order_invariance_check,
)
from .errors import HypothesisError, IllConditionedError, NotAcyclicError, TorsionError
from .flow_model import (
    ClosedOrbitDatum,
    FixedPointDatum,
    MorseSmaleSystem,
    SurgeryDatum,
    circle_complex,
    compare_milnor,
    milnor_metric,
)
from .rs_circle import CircleRSSpec, HurwitzParams, bz_check_circle
from .sampling import (
    random_acyclic_complex,
    random_filtered_complex,
    random_graded_metric,
    random_holonomy,
    random_invertible,
    random_surgery,
    random_system,
    random_unitary,
)
from .zeta import Pole, ZetaSpec, check_prop, order_at, ruelle_eval, zeros_poles_in_rect

# --------------------------------------------------------------------------
# schema

_SCALAR = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _SCALAR}}
_SIGN = {"enum": [1, -1]}
_INDEX = {"type": "integer", "minimum": 0}
_ID = {"type": "string", "minLength": 1}

SYSTEM_SCHEMA: dict = {
    "type": "object",
    "required": ["rank", "elements"],
    "additionalProperties": False,
    "properties": {
        "rank": {"type": "integer", "minimum": 1},
        "dimension": {"type": "integer", "minimum": 0},
        "split": {"type": "boolean"},
        "elements": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["kind", "id", "index", "gram"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"const": "fixed"},
                            "id": _ID,
                            "index": _INDEX,
                            "gram": _MATRIX,
                        },
                    },
                    {
                        "type": "object",
                        "required": ["kind", "id", "index", "period", "twist", "orientation", "holonomy"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"const": "orbit"},
                            "id": _ID,
                            "index": _INDEX,
                            "period": {"type": "number", "exclusiveMinimum": 0},
                            "twist": _SIGN,
                            "orientation": _SIGN,
                            "holonomy": _MATRIX,
                        },
                    },
                ]
            },
        },
        "chain_model": {
            "type": "object",
            "required": ["dims", "differentials", "levels"],
            "additionalProperties": False,
            "properties": {
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "differentials": {"type": "array", "items": _MATRIX},
                "levels": {"type": "array", "items": {"type": "array", "items": _INDEX}},
            },
        },
        "surgery": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["tau", "n_a", "n_a_prime", "gram_x", "gram_x_prime"],
                "additionalProperties": False,
                "properties": {
                    "tau": _MATRIX,
                    "n_a": _SIGN,
                    "n_a_prime": _SIGN,
                    "gram_x": _MATRIX,
                    "gram_x_prime": _MATRIX,
                },
            },
        },
    },
}


class InputError(Exception):
    """Malformed or inconsistent input; exit code 2."""


def _where(path: Sequence) -> str:
    return "/".join(str(p) for p in path) or "<root>"


def validate_document(doc: Any):
    """Raise :class:`InputError` naming the path of the first schema violation."""
    validator = jsonschema.Draft202012Validator(SYSTEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        field_name = err.absolute_path[-1] if err.absolute_path else None
        where = _where(err.absolute_path)
        detail = f"field {field_name!r}: " if isinstance(field_name, str) else ""
        raise InputError(f"schema violation at {where}: {detail}{err.message}")


def _scalar(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, list) else complex(x)


def _matrix(rows, shape=None, where: str = "") -> np.ndarray:
    if shape is not None and (shape[0] == 0 or shape[1] == 0):
        if any(len(r) for r in rows) or (rows and len(rows) != shape[0]):
            raise InputError(f"{where}: expected an empty {shape[0]}x{shape[1]} matrix")
        return np.zeros(shape, dtype=complex)
    if not rows:
        raise InputError(f"{where}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InputError(f"{where}: ragged matrix rows")
    m = np.array([[_scalar(x) for x in r] for r in rows], dtype=complex)
    if shape is not None and m.shape != tuple(shape):
        raise InputError(f"{where}: expected shape {tuple(shape)}, got {m.shape}")
    return m


def _dump_scalar(z: complex):
    z = complex(z)
    return float(z.real) if z.imag == 0 else [float(z.real), float(z.imag)]


def _dump_matrix(m: np.ndarray) -> list:
    return [[_dump_scalar(x) for x in row] for row in np.asarray(m)]


@dataclass(frozen=True)
class SystemFile:
    system: MorseSmaleSystem
    surgery: Mapping[str, SurgeryDatum] = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False, compare=False)


def parse_document(doc: Any, tol: float = DEFAULT_TOL) -> SystemFile:
    """Validate a decoded JSON document and build the system it describes."""
    validate_document(doc)
    rank = doc["rank"]
    elements = []
    for i, e in enumerate(doc["elements"]):
        where = f"elements/{i}"
        try:
            if e["kind"] == "fixed":
                g = _matrix(e["gram"], where=f"{where}/gram")
                elements.append(FixedPointDatum(e["id"], e["index"], GramMetric(g)))
            else:
                h = _matrix(e["holonomy"], where=f"{where}/holonomy")
                elements.append(
                    ClosedOrbitDatum(e["id"], e["index"], float(e["period"]), e["twist"], h, e["orientation"])
                )
        except TorsionError as exc:
            raise InputError(f"{where} ({e['id']}): {exc}") from exc
    model = None
    if "chain_model" in doc:
        cm = doc["chain_model"]
        dims = tuple(cm["dims"])
        if len(cm["differentials"]) != len(dims) - 1:
            raise InputError(
                f"chain_model/differentials: {len(dims)} degrees need {len(dims) - 1} differentials"
            )
        if len(cm["levels"]) != len(dims) or any(len(l) != n for l, n in zip(cm["levels"], dims)):
            raise InputError("chain_model/levels: one level per basis vector in every degree")
        ds = [
            _matrix(d, (dims[k + 1], dims[k]), f"chain_model/differentials/{k}")
            for k, d in enumerate(cm["differentials"])
        ]
        try:
            c = CochainComplex(dims, tuple(ds), d2_tol=1e-9)
            model = FilteredComplex(c, tuple(np.asarray(l, dtype=int) for l in cm["levels"]), len(elements), tol=1e-9)
        except TorsionError as exc:
            raise InputError(f"chain_model: {exc}") from exc
    try:
        system = MorseSmaleSystem(rank, tuple(elements), model, bool(doc.get("split", False)), doc.get("dimension"), tol)
    except TorsionError as exc:
        raise InputError(str(exc)) from exc
    surgery = {}
    for oid, s in doc.get("surgery", {}).items():
        where = f"surgery/{oid}"
        try:
            orbit = system.element(oid)
        except KeyError:
            raise InputError(f"{where}: no orbit with id {oid!r}") from None
        if not isinstance(orbit, ClosedOrbitDatum):
            raise InputError(f"{where}: {oid!r} is a fixed point, not an orbit")
        try:
            datum = SurgeryDatum(
                _matrix(s["tau"], where=f"{where}/tau"),
                s["n_a"],
                s["n_a_prime"],
                GramMetric(_matrix(s["gram_x"], where=f"{where}/gram_x")),
                GramMetric(_matrix(s["gram_x_prime"], where=f"{where}/gram_x_prime")),
            )
            datum.check_signs(orbit)
        except TorsionError as exc:
            raise InputError(f"{where}: {exc}") from exc
        if datum.tau.shape[0] != rank:
            raise InputError(f"{where}/tau: expected a {rank}x{rank} matrix")
        surgery[oid] = datum
    return SystemFile(system, surgery, doc)


def load_document(path) -> SystemFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return parse_document(doc)


def parse_system(path) -> MorseSmaleSystem:
    """Load and validate a system file."""
    return load_document(path).system


def serialize_system(sys_: MorseSmaleSystem, surgery: Mapping[str, SurgeryDatum] | None = None) -> dict:
    """The JSON document of a system (inverse of :func:`parse_document`)."""
    elements = []
    for e in sys_.elements:
        if isinstance(e, FixedPointDatum):
            elements.append({"kind": "fixed", "id": e.id, "index": e.index, "gram": _dump_matrix(e.gram.entries)})
        else:
            elements.append({
                "kind": "orbit",
                "id": e.id,
                "index": e.index,
                "period": float(e.period),
                "twist": e.twist,
                "orientation": e.orientation,
                "holonomy": _dump_matrix(e.holonomy),
            })
    doc: dict = {"rank": sys_.rank, "elements": elements, "split": bool(sys_.split)}
    if sys_.dimension is not None:
        doc["dimension"] = sys_.dimension
    if sys_.chain_model is not None:
        c = sys_.chain_model.complex
        doc["chain_model"] = {
            "dims": list(c.dims),
            "differentials": [_dump_matrix(d) for d in c.differentials],
            "levels": [[int(x) for x in l] for l in sys_.chain_model.levels],
        }
    if surgery:
        doc["surgery"] = {
            oid: {
                "tau": _dump_matrix(s.tau),
                "n_a": s.n_a,
                "n_a_prime": s.n_a_prime,
                "gram_x": _dump_matrix(s.gram_x.entries),
                "gram_x_prime": _dump_matrix(s.gram_x_prime.entries),
            }
            for oid, s in surgery.items()
        }
    return doc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# reports


@dataclass
class RunReport:
    command: str
    inputs_digest: str
    outputs: dict
    tol: float
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "tol": self.tol,
            "outputs": self.outputs,
            "checks": self.checks,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [_jsonable(float(x.real)), _jsonable(float(x.imag))]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def fmt(x: float) -> str:
    """17 significant digits, ``inf``/``-inf``/``nan`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def cmd_milnor(args) -> RunReport:
    doc = load_document(args.system)
    res = milnor_metric(doc.system, args.tol)
    out = {"log_norm": res.line.log_norm, "norm": res.line.norm, "betti": list(res.betti)}
    checks = {"finite": math.isfinite(res.line.log_norm)}
    if not doc.system.fixed_points and doc.system.orbits:
        try:
            prop = check_prop(doc.system, tol=max(args.tol, 1e-10))
        except HypothesisError:
            pass
        else:
            out["zeta_inverse_at_0"] = prop.zeta_inverse
            out["prop_residual"] = prop.residual
            checks["prop_identity"] = prop.passed
    return RunReport("milnor", digest(doc.source), out, args.tol, checks)


ZETA_HEADER = ("re_s", "im_s", "re_R", "im_R", "log_abs_R", "order_flag")


def _zeta_row(spec: ZetaSpec, s: complex) -> dict:
    order = order_at(spec, s)
    value = ruelle_eval(spec, s)
    if isinstance(value, Pole):
        return {"s": s, "R": None, "log_abs_R": math.inf, "order": order}
    log_abs = -math.inf if order > 0 else math.log(abs(value))
    return {"s": s, "R": complex(value), "log_abs_R": log_abs, "order": order}


def _grid(args) -> list[complex]:
    if args.grid is None:
        return [complex(args.s_re, args.s_im)]
    re0, re1, nre, im0, im1, nim = args.grid
    nre, nim = int(nre), int(nim)
    if nre < 1 or nim < 1:
        raise InputError("grid sizes must be positive")
    res = np.linspace(re0, re1, nre) if nre > 1 else np.array([re0])
    ims = np.linspace(im0, im1, nim) if nim > 1 else np.array([im0])
    return [complex(a, b) for a in res for b in ims]


def cmd_zeta(args) -> RunReport:
    doc = load_document(args.system)
    spec = ZetaSpec.from_system(doc.system)
    rows = [_zeta_row(spec, s) for s in _grid(args)]
    out: dict = {"rows": rows}
    if args.rect is not None:
        out["zeros_poles"] = [
            {"s": s, "order": o} for s, o in zeros_poles_in_rect(spec, args.rect)
        ]
    inputs = {"system": doc.source, "points": [[p.real, p.imag] for p in _grid(args)], "rect": args.rect}
    checks = {"finite": all(r["R"] is None or np.isfinite(r["R"]) for r in rows)}
    return RunReport("zeta", digest(inputs), out, args.tol, checks)


def zeta_csv(report: RunReport) -> str:
    lines = []
    for r in report.outputs["rows"]:
        s, value = r["s"], r["R"]
        lines.append([
            fmt(s.real),
            fmt(s.imag),
            "" if value is None else fmt(value.real),
            "" if value is None else fmt(value.imag),
            fmt(r["log_abs_R"]),
            str(r["order"]),
        ])
    return write_csv(ZETA_HEADER, lines)


def cmd_franks_compare(args) -> RunReport:
    doc = load_document(args.system)
    if not doc.surgery:
        raise InputError("franks-compare needs a \"surgery\" section")
    cmp = compare_milnor(doc.system, doc.surgery, args.tol)
    out = {"lhs": cmp.lhs, "rhs": cmp.rhs, "residual": cmp.residual}
    return RunReport("franks-compare", digest(doc.source), out, args.tol, {"comparison": cmp.passed})


def _circle_spec(args) -> tuple[CircleRSSpec, dict]:
    if (args.phases is None) == (args.holonomy is None):
        raise InputError("rs-circle needs exactly one of --phases or --holonomy")
    try:
        if args.phases is not None:
            return CircleRSSpec.from_phases(args.phases), {"phases": list(args.phases)}
        try:
            rows = json.loads(args.holonomy)
        except json.JSONDecodeError as exc:
            raise InputError(f"--holonomy: invalid JSON ({exc.msg})") from exc
        jsonschema.validate(rows, _MATRIX)
        return CircleRSSpec.from_matrix(_matrix(rows, where="holonomy")), {"holonomy": rows}
    except jsonschema.ValidationError as exc:
        raise InputError(f"--holonomy: {exc.message}") from exc
    except TorsionError as exc:
        raise InputError(str(exc)) from exc


def cmd_rs_circle(args) -> RunReport:
    spec, inputs = _circle_spec(args)
    p = _hurwitz(args)
    try:
        res = bz_check_circle(spec, p, max(args.tol, 1e-8))
    except NotAcyclicError as exc:
        raise InputError(str(exc)) from exc
    out = {"phases": list(spec.phases), "rs": res.rs, "milnor": res.milnor, "residual": res.residual}
    inputs.update(M=p.M, K=p.K)
    return RunReport("rs-circle", digest(inputs), out, args.tol, {"rs_equals_milnor": res.passed})


def _hurwitz(args) -> HurwitzParams:
    try:
        return HurwitzParams(args.hurwitz_M, args.hurwitz_K)
    except TorsionError as exc:
        raise InputError(str(exc)) from exc


# --------------------------------------------------------------------------
# self check


def _suite_circle_norm(rng, tol, p):
    worst = 0.0
    for _ in range(10):
        r = int(rng.integers(1, 4))
        a = random_holonomy(rng, r)
        got = canonical_element_norm(circle_complex(a), method="wedge", tol=tol)
        want = 1 / abs(det(np.eye(r) - np.linalg.inv(a)))
        worst = max(worst, abs(got / want - 1))
    return 10, worst, 1e-9


def _suite_prop(rng, tol, p):
    worst = 0.0
    for _ in range(10):
        s = random_system(rng, int(rng.integers(1, 4)), 0, 3, chain_model=bool(rng.integers(2)))
        worst = max(worst, check_prop(s).residual)
    return 10, worst, 1e-10


def _suite_fusion(rng, tol, p):
    worst = 0.0
    for _ in range(4):
        f = random_filtered_complex(rng, 4, 4)
        metrics = [random_graded_metric(rng, f.piece(q).dims) for q in range(f.n_levels)]
        worst = max(worst, fusion_order_invariance_check(f, metrics, 3, int(rng.integers(1 << 30)), tol))
    return 4, worst, 1e-9


def _suite_franks(rng, tol, p):
    worst = 0.0
    for _ in range(6):
        s = random_system(rng, int(rng.integers(1, 3)), int(rng.integers(0, 3)), 2, chain_model=bool(rng.integers(2)))
        worst = max(worst, compare_milnor(s, random_surgery(rng, s), tol).residual)
    return 6, worst, 1e-9


def _suite_rs(rng, tol, p):
    worst = 0.0
    n = 0
    while n < 10:
        a = random_unitary(rng, int(rng.integers(1, 4)))
        if np.min(np.abs(np.linalg.eigvals(a) - 1)) < 0.05:
            continue
        worst = max(worst, bz_check_circle(CircleRSSpec.from_matrix(a), p).residual)
        n += 1
    return 10, worst, 1e-8


def _suite_pfaffian(rng, tol, p):
    worst = 0.0
    for _ in range(10):
        n = int(rng.choice([2, 4, 6]))
        m = rng.normal(size=(n, n))
        a = AntisymMatrix(m - m.T)
        pf = pfaffian(a)
        worst = max(worst, abs(pf**2 - np.linalg.det(a.entries)) / max(abs(pf**2), 1e-300))
        worst = max(worst, abs(pfaffian_berezin(a) - pf) / max(abs(pf), 1e-300))
        b = random_invertible(rng, n).real + np.eye(n)
        moved = b @ a.entries @ b.T
        want = np.linalg.det(b) * pf
        worst = max(worst, abs(pfaffian(AntisymMatrix.from_matrix(moved)) - want) / max(abs(want), 1e-300))
    return 10, worst, 1e-9


def _suite_psi(rng, tol, p):
    worst = max(abs(psi_dim_one_quadrature(y) - psi_dim_one(y)) for y in (-2, -1, -0.5, 0.5, 1, 2))
    return 6, worst, 1e-6


def _suite_multiplicativity(rng, tol, p):
    worst = 0.0
    for _ in range(10):
        c1, c2 = random_acyclic_complex(rng), random_acyclic_complex(rng)
        g1, g2 = random_graded_metric(rng, c1.dims), random_graded_metric(rng, c2.dims)
        t = canonical_element_norm(c1.direct_sum(c2), g1.direct_sum(g2), tol=tol)
        t1, t2 = canonical_element_norm(c1, g1, tol=tol), canonical_element_norm(c2, g2, tol=tol)
        worst = max(worst, abs(t / (t1 * t2) - 1))
    return 10, worst, 1e-9


SUITES: dict[str, Callable] = {
    "circle_norm": _suite_circle_norm,
    "prop_identity": _suite_prop,
    "fusion_order": _suite_fusion,
    "franks_comparison": _suite_franks,
    "rs_equals_milnor": _suite_rs,
    "pfaffian": _suite_pfaffian,
    "psi_rank_one": _suite_psi,
    "multiplicativity": _suite_multiplicativity,
}


def cmd_selfcheck(args) -> RunReport:
    seed = 0 if args.seed is None else args.seed
    p = _hurwitz(args)
    out = {}
    checks = {}
    for i, (name, suite) in enumerate(SUITES.items()):
        rng = np.random.default_rng([seed, i])
        try:
            n, worst, bound = suite(rng, args.tol, p)
            ok = bool(worst < bound)
            out[name] = {"cases": n, "max_error": worst, "bound": bound}
        except (TorsionError, IllConditionedError) as exc:
            ok = False
            out[name] = {"error": str(exc)}
        checks[name] = ok
    return RunReport("selfcheck", digest({"seed": seed, "M": p.M, "K": p.K}), out, args.tol, checks)


def selfcheck_table(report: RunReport) -> str:
    lines = [f"{'suite':<20} {'cases':>5} {'max_error':>12} {'bound':>8}  result"]
    for name, ok in report.checks.items():
        o = report.outputs[name]
        if "error" in o:
            lines.append(f"{name:<20} {'-':>5} {'-':>12} {'-':>8}  FAIL ({o['error']})")
        else:
            lines.append(
                f"{name:<20} {o['cases']:>5} {o['max_error']:>12.3e} {o['bound']:>8.0e}  {'PASS' if ok else 'FAIL'}"
            )
    lines.append(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="numerical tolerance (default 1e-9)")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="output format")
    common.add_argument("--hurwitz-M", dest="hurwitz_M", type=int, default=50, help="Euler-Maclaurin truncation")
    common.add_argument("--hurwitz-K", dest="hurwitz_K", type=int, default=6, help="Euler-Maclaurin depth")

    parser = argparse.ArgumentParser(prog="morse-torsion", description="Torsion invariants of Morse-Smale flows.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("milnor", parents=[common], help="Milnor metric of a system file")
    p.add_argument("system")
    p.set_defaults(func=cmd_milnor)

    p = sub.add_parser("zeta", parents=[common], help="Ruelle zeta function of a system file")
    p.add_argument("system")
    p.add_argument("--s", dest="s_re", type=float, default=0.0, help="real part of s")
    p.add_argument("--s-im", dest="s_im", type=float, default=0.0, help="imaginary part of s")
    p.add_argument(
        "--grid", nargs=6, type=float, metavar=("RE_MIN", "RE_MAX", "N_RE", "IM_MIN", "IM_MAX", "N_IM"),
        help="evaluate on a rectangular grid",
    )
    p.add_argument(
        "--rect", nargs=4, type=float, metavar=("RE_MIN", "RE_MAX", "IM_MIN", "IM_MAX"),
        help="also list zeros and poles in this rectangle",
    )
    p.set_defaults(func=cmd_zeta)

    p = sub.add_parser("franks-compare", parents=[common], help="Milnor metrics before and after Franks surgery")
    p.add_argument("system")
    p.set_defaults(func=cmd_franks_compare)

    p = sub.add_parser("rs-circle", parents=[common], help="Ray-Singer against Milnor on the circle")
    p.add_argument("--phases", nargs="+", type=float, help="eigenvalue phases alpha, eigenvalues exp(2 pi i alpha)")
    p.add_argument("--holonomy", help="unitary holonomy as a JSON matrix")
    p.set_defaults(func=cmd_rs_circle)

    p = sub.add_parser("selfcheck", parents=[common], help="run every property suite")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def render(report: RunReport, fmt_: str) -> str:
    if report.command == "zeta" and fmt_ == "csv":
        return zeta_csv(report)
    if report.command == "selfcheck" and fmt_ == "csv":
        rows = []
        for name, ok in report.checks.items():
            o = report.outputs[name]
            rows.append([name, str(o.get("cases", "")), fmt(o["max_error"]) if "max_error" in o else "",
                         fmt(o["bound"]) if "bound" in o else "", "pass" if ok else "fail"])
        return write_csv(("suite", "cases", "max_error", "bound", "result"), rows)
    if fmt_ == "csv":
        rows = [[k, canonical_json(_jsonable(v))] for k, v in sorted(report.outputs.items())]
        rows.append(["passed", "true" if report.passed else "false"])
        return write_csv(("key", "value"), rows)
    if report.command == "selfcheck":
        return selfcheck_table(report) + report.to_json()
    return report.to_json()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except HypothesisError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (TorsionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(render(report, args.format))
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
