"""Command-line front end.

Subcommands: ``kernel``, ``hfun``, ``green``, ``solve`` and ``verify``.
Exit status is 0 on success, 1 when a check fails or output cannot be
written, and 2 for invalid input.  ``FRACGREEN_NUM_THREADS`` caps the
numba thread pool.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import verify as _verify
from ._accel import set_num_threads_from_env
from .fractional import TimeGrid
from .kernels import (
    KernelQuery,
    SPDOperator,
    kernel_spec,
    y0_derivative,
    y0_eval,
    z0_derivative,
    z0_eval,
    z0_time_derivative,
)
from .levi import CoefficientField, OperatorSpec, SpaceTimeGrid, green_tables
from .solver import CauchyProblem, solve_cauchy
from .specfun import HFunctionSpec, hfun_eval

__all__ = [
    "CONFIG_SCHEMA",
    "Config",
    "ConfigError",
    "OutputRecord",
    "config_to_dict",
    "load_config",
    "main",
    "run",
    "save_config",
    "write_output",
]

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


class ConfigError(ValueError):
    """Configuration that does not parse or violates the schema."""


# ---------------------------------------------------------------------------
# configuration

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_GAMMA = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

_FIELD_SCHEMA = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "object",
            "properties": {"family": {"const": "constant"}, "value": {"type": "number"},
                           "holder_gamma": _GAMMA},
            "required": ["family", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"family": {"const": "trig"}, "base": {"type": "number"},
                           "amplitude": {"type": "number"}, "wavevector": _NUMBER_LIST,
                           "phase": {"type": "number"}, "holder_gamma": _GAMMA},
            "required": ["family", "base", "amplitude", "wavevector"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"family": {"const": "bump"}, "base": {"type": "number"},
                           "amplitude": {"type": "number"}, "center": _NUMBER_LIST,
                           "width": {"type": "number", "exclusiveMinimum": 0},
                           "holder_gamma": _GAMMA},
            "required": ["family", "base", "amplitude", "center", "width"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "alpha": {"type": "number"},
        "dim": {"type": "integer"},
        "T": {"type": "number"},
        "operator": {
            "type": "object",
            "properties": {
                "a": {"type": "array", "items": {"type": "array", "items": _FIELD_SCHEMA}},
                "b": {"type": "array", "items": _FIELD_SCHEMA},
                "c": _FIELD_SCHEMA,
                "delta": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "u0": _FIELD_SCHEMA,
        "f": {"oneOf": [{"type": "null"}, _FIELD_SCHEMA]},
        "grid": {
            "type": "object",
            "properties": {
                "lower": _NUMBER_LIST,
                "upper": _NUMBER_LIST,
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 1},
                "time_intervals": {"type": "integer", "minimum": 1},
                "grading": {"type": "number", "minimum": 1},
                "periodic": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "sources": {"type": "array", "items": _NUMBER_LIST},
        "kind": {"enum": ["Z", "Y"]},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": {"type": "integer", "minimum": 1},
        "method": {"enum": ["march", "picard"]},
        "output": {
            "type": "object",
            "properties": {"path": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
    "required": ["alpha", "dim"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class GridConfig:
    lower: tuple
    upper: tuple
    counts: tuple
    time_intervals: int
    grading: float
    periodic: bool


@dataclass(frozen=True)
class Config:
    """Validated run parameters; fields mirror the JSON keys."""

    alpha: float
    dim: int
    T: float
    a: tuple
    b: tuple
    c: CoefficientField
    delta: float | None
    u0: CoefficientField
    f: CoefficientField | None
    grid: GridConfig
    sources: tuple
    kind: str = "Z"
    tolerance: float = 1e-6
    max_iterations: int = 50
    method: str = "march"
    output_path: str | None = None
    output_format: str = "json"
    seed: int = _verify.DEFAULT_SEED

    def operator(self) -> OperatorSpec:
        return OperatorSpec(self.alpha, self.a, self.b, self.c, self.delta)

    def space_time_grid(self) -> SpaceTimeGrid:
        g = self.grid
        time = TimeGrid.graded(self.T, g.time_intervals, g.grading)
        return SpaceTimeGrid(time, g.lower, g.upper, g.counts, g.periodic)

    def problem(self) -> CauchyProblem:
        return CauchyProblem(self.alpha, self.T, self.operator(), self.u0, self.f)


def _field_from_json(value, where: str, n: int) -> CoefficientField:
    if isinstance(value, (int, float)):
        return CoefficientField.constant(float(value))
    gamma = float(value.get("holder_gamma", 1.0))
    fam = value["family"]
    if fam == "constant":
        return CoefficientField("constant", (value["value"],), gamma)
    if fam == "trig":
        if len(value["wavevector"]) != n:
            raise ConfigError(f"{where}.wavevector must have {n} entries")
        return CoefficientField.trig(value["base"], value["amplitude"], value["wavevector"],
                                     value.get("phase", 0.0), gamma)
    if len(value["center"]) != n:
        raise ConfigError(f"{where}.center must have {n} entries")
    return CoefficientField.bump(value["base"], value["amplitude"], value["center"], value["width"], gamma)


def _field_to_json(f: CoefficientField):
    p = f.params
    if f.family == "constant":
        if f.holder_gamma == 1.0:
            return p[0]
        return {"family": "constant", "value": p[0], "holder_gamma": f.holder_gamma}
    if f.family == "trig_perturbation":
        return {"family": "trig", "base": p[0], "amplitude": p[1], "phase": p[2],
                "wavevector": list(p[3:]), "holder_gamma": f.holder_gamma}
    return {"family": "bump", "base": p[0], "amplitude": p[1], "width": p[2],
            "center": list(p[3:]), "holder_gamma": f.holder_gamma}


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return f"config error at {where}: {err.message}"


def config_from_dict(data: dict) -> Config:
    """Validate a parsed JSON object and build a :class:`Config`."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(_schema_message(err)) from None
    alpha, n = float(data["alpha"]), int(data["dim"])
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"config error at alpha: must lie in (0, 1), got {alpha}")
    if n < 1:
        raise ConfigError(f"config error at dim: must be positive, got {n}")
    T = float(data.get("T", 1.0))
    if not T > 0:
        raise ConfigError(f"config error at T: must be positive, got {T}")
    opd = data.get("operator", {})
    a_raw = opd.get("a", [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)])
    if len(a_raw) != n or any(len(row) != n for row in a_raw):
        raise ConfigError(f"config error at operator.a: must be {n} x {n}")
    a = tuple(tuple(_field_from_json(v, f"operator.a.{i}.{j}", n) for j, v in enumerate(row))
              for i, row in enumerate(a_raw))
    b_raw = opd.get("b", [0.0] * n)
    if len(b_raw) != n:
        raise ConfigError(f"config error at operator.b: must have {n} entries")
    b = tuple(_field_from_json(v, f"operator.b.{i}", n) for i, v in enumerate(b_raw))
    c = _field_from_json(opd.get("c", 0.0), "operator.c", n)
    gd = data.get("grid", {})
    lower = tuple(float(v) for v in gd.get("lower", [-math.pi] * n))
    upper = tuple(float(v) for v in gd.get("upper", [math.pi] * n))
    counts = tuple(int(v) for v in gd.get("counts", [32 if n == 1 else 12] * n))
    if not len(lower) == len(upper) == len(counts) == n:
        raise ConfigError(f"config error at grid: lower, upper and counts need {n} entries")
    grid = GridConfig(lower, upper, counts, int(gd.get("time_intervals", 16)),
                      float(gd.get("grading", 2.0 / alpha)), bool(gd.get("periodic", True)))
    sources = tuple(tuple(float(v) for v in s) for s in data.get("sources", [[0.0] * n]))
    if any(len(s) != n for s in sources):
        raise ConfigError(f"config error at sources: each source needs {n} coordinates")
    f_raw = data.get("f")
    out = data.get("output", {})
    try:
        return Config(
            alpha, n, T, a, b, c, opd.get("delta"),
            _field_from_json(data.get("u0", 1.0), "u0", n),
            None if f_raw is None else _field_from_json(f_raw, "f", n),
            grid, sources, data.get("kind", "Z"), float(data.get("tolerance", 1e-6)),
            int(data.get("max_iterations", 50)), data.get("method", "march"),
            out.get("path"), out.get("format", "json"), int(data.get("seed", _verify.DEFAULT_SEED)),
        )
    except ValueError as err:
        raise ConfigError(f"config error: {err}") from None


def config_to_dict(cfg: Config) -> dict:
    """JSON-ready form that :func:`config_from_dict` maps back to ``cfg``."""
    g = cfg.grid
    data = {
        "alpha": cfg.alpha,
        "dim": cfg.dim,
        "T": cfg.T,
        "operator": {
            "a": [[_field_to_json(f) for f in row] for row in cfg.a],
            "b": [_field_to_json(f) for f in cfg.b],
            "c": _field_to_json(cfg.c),
        },
        "u0": _field_to_json(cfg.u0),
        "f": None if cfg.f is None else _field_to_json(cfg.f),
        "grid": {"lower": list(g.lower), "upper": list(g.upper), "counts": list(g.counts),
                 "time_intervals": g.time_intervals, "grading": g.grading, "periodic": g.periodic},
        "sources": [list(s) for s in cfg.sources],
        "kind": cfg.kind,
        "tolerance": cfg.tolerance,
        "max_iterations": cfg.max_iterations,
        "method": cfg.method,
        "output": {"format": cfg.output_format},
        "seed": cfg.seed,
    }
    if cfg.delta is not None:
        data["operator"]["delta"] = cfg.delta
    if cfg.output_path is not None:
        data["output"]["path"] = cfg.output_path
    return data


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    return config_from_dict(data)


def save_config(cfg: Config, path) -> None:
    _atomic_write(Path(path), json.dumps(config_to_dict(cfg), indent=2) + "\n")


# ---------------------------------------------------------------------------
# output


@dataclass(frozen=True)
class OutputRecord:
    t: float
    x: tuple
    value: float
    error_estimate: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)


_META_KEYS = ("alpha", "n", "operator", "version")


def _git_version() -> str:
    """Package version, suffixed with the short commit hash when run from a checkout."""
    head = Path(__file__).resolve().parents[2] / ".git" / "HEAD"
    try:
        ref = head.read_text().strip()
        if ref.startswith("ref: "):
            ref = (head.parent / ref[5:]).read_text().strip()
        return f"{__version__}+g{ref[:7]}"
    except OSError:
        return __version__


def make_metadata(alpha: float, n: int, operator: str) -> dict:
    return {"alpha": float(alpha), "n": int(n), "operator": operator, "version": _git_version()}


def _num(v: float, digits: int) -> str:
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return f"{v:.{digits}g}"


def _json_text(records: Sequence[OutputRecord], metadata: dict) -> str:
    lines = ["{", f'  "metadata": {json.dumps(metadata, sort_keys=True)},', '  "records": [']
    for i, r in enumerate(records):
        x = ", ".join(_num(v, 17) for v in r.x)
        sep = "," if i + 1 < len(records) else ""
        lines.append(f'    {{"t": {_num(r.t, 17)}, "x": [{x}], "value": {_num(r.value, 17)}, '
                     f'"error_estimate": {_num(r.error_estimate, 17)}}}{sep}')
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def _csv_text(records: Sequence[OutputRecord], metadata: dict, n: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *(f"x{i + 1}" for i in range(n)), "value", "error_estimate", *_META_KEYS])
    meta = [metadata.get(k, "") for k in _META_KEYS]
    for r in records:
        w.writerow([_num(r.t, 12), *(_num(v, 12) for v in r.x), _num(r.value, 12),
                    _num(r.error_estimate, 12), *meta])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_output(records: Sequence[OutputRecord], fmt: str, metadata: dict | None = None,
                  n: int | None = None) -> str:
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown output format {fmt!r}")
    metadata = dict(metadata if metadata is not None else (records[0].metadata if records else {}))
    if n is None:
        n = len(records[0].x) if records else int(metadata.get("n", 1))
    return _json_text(records, metadata) if fmt == "json" else _csv_text(records, metadata, n)


def write_output(records: Sequence[OutputRecord], path, fmt: str = "json", metadata: dict | None = None,
                 n: int | None = None) -> None:
    """Write records atomically; CSV columns are t, x1..xn, value, error_estimate, then metadata."""
    _atomic_write(Path(path), format_output(records, fmt, metadata, n))


def read_json_output(path) -> tuple[dict, list[OutputRecord]]:
    data = json.loads(Path(path).read_text())
    recs = [OutputRecord(r["t"], tuple(r["x"]), r["value"], r["error_estimate"], data["metadata"])
            for r in data["records"]]
    return data["metadata"], recs


# ---------------------------------------------------------------------------
# subcommands


class _Invalid(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise _Invalid(f"alpha must lie in (0, 1), got {alpha}")


def _matrix_arg(text: str | None, n: int) -> np.ndarray:
    if text is None:
        return np.eye(n)
    try:
        a = np.atleast_2d(np.asarray(json.loads(text), dtype=float))
    except (json.JSONDecodeError, ValueError, TypeError):
        raise _Invalid(f"--matrix must be a JSON matrix, got {text!r}") from None
    if a.shape != (n, n):
        raise _Invalid(f"--matrix must be {n} x {n}")
    return a


def kernel_value(kind: str, op: SPDOperator, alpha: float, t: float, x, m=(), time_derivative=False) -> float:
    """The library call behind ``fracgreen kernel``."""
    q = KernelQuery(alpha, t, np.asarray(x, dtype=float), tuple(m))
    if time_derivative:
        if kind != "z" or q.order:
            raise _Invalid("--dt is available for Z0 without spatial derivatives")
        return z0_time_derivative(op, q)
    if q.order:
        return (z0_derivative if kind == "z" else y0_derivative)(op, q)
    return (z0_eval if kind == "z" else y0_eval)(op, q)


def _cmd_kernel(args) -> tuple[list[OutputRecord], dict, int]:
    _check_alpha(args.alpha)
    n = args.dim
    x = args.x if args.x is not None else [0.0] * n
    if len(x) % n:
        raise _Invalid(f"--x needs a multiple of {n} coordinates")
    if any(t <= 0 for t in args.t):
        raise _Invalid("times must be positive")
    op = SPDOperator(_matrix_arg(args.matrix, n))
    pts = np.asarray(x, dtype=float).reshape(-1, n)
    m = tuple(args.m) if args.m else ()
    meta = make_metadata(args.alpha, n, "constant")
    recs = [OutputRecord(t, tuple(float(v) for v in p),
                         kernel_value(args.kind, op, args.alpha, t, p, m, args.dt), 0.0, meta)
            for t in args.t for p in pts]
    return recs, meta, n


def _cmd_hfun(args) -> tuple[list[OutputRecord], dict, int]:
    if any(z <= 0 for z in args.z):
        raise _Invalid("z must be positive")
    if args.upper is not None or args.lower is not None:
        try:
            upper = [tuple(p) for p in json.loads(args.upper or "[]")]
            lower = [tuple(p) for p in json.loads(args.lower or "[]")]
        except (json.JSONDecodeError, TypeError):
            raise _Invalid("--upper/--lower must be JSON lists of pairs") from None
        spec = HFunctionSpec(args.mu, 0, len(upper), len(lower), tuple(upper), tuple(lower))
        label = "custom"
    else:
        _check_alpha(args.alpha)
        spec = kernel_spec(args.kind, args.dim, args.alpha, args.shift)
        label = f"kernel_{args.kind}"
    meta = make_metadata(args.alpha if args.alpha is not None else math.nan, args.dim, label)
    recs = []
    for z in args.z:
        res = hfun_eval(spec, z)
        recs.append(OutputRecord(0.0, (z,), res.value, res.abs_error_estimate, meta))
    return recs, meta, 1


def _operator_label(op: OperatorSpec) -> str:
    if op.constant_principal and op.lower_order_zero:
        return "constant"
    fams = sorted({f.family for f in op.fields() if not f.is_constant})
    return "variable:" + "+".join(fams) if fams else "constant+lower_order"


def _grid_records(grid: SpaceTimeGrid, values: np.ndarray, err: float, meta: dict,
                  skip_first: bool = False) -> list[OutputRecord]:
    pts = [tuple(float(v) for v in p) for p in grid.points]
    recs = []
    for k, t in enumerate(grid.times):
        if skip_first and k == 0:
            continue
        recs.extend(OutputRecord(float(t), p, float(v), err, meta) for p, v in zip(pts, values[k]))
    return recs


def _load(args) -> Config:
    cfg = load_config(args.config)
    if getattr(args, "format", None) is None:
        args.format = cfg.output_format
    if getattr(args, "output", None) is None:
        args.output = cfg.output_path
    return cfg


def _cmd_solve(args) -> tuple[list[OutputRecord], dict, int]:
    cfg = _load(args)
    problem = cfg.problem()
    grid = cfg.space_time_grid()
    sol = solve_cauchy(problem, grid)
    meta = make_metadata(cfg.alpha, cfg.dim, _operator_label(problem.spec))
    return _grid_records(grid, sol.u, sol.error_estimate, meta), meta, cfg.dim


def _cmd_green(args) -> list[tuple[list[OutputRecord], dict, int]]:
    cfg = _load(args)
    op = cfg.operator()
    grid = cfg.space_time_grid()
    tables = green_tables(op, grid, cfg.sources, cfg.kind, tol=cfg.tolerance,
                          max_iterations=cfg.max_iterations, method=cfg.method)
    out = []
    for src, tab in zip(cfg.sources, tables):
        meta = make_metadata(cfg.alpha, cfg.dim, _operator_label(op))
        meta.update({"kind": cfg.kind, "source": list(src), "iterations": tab.iteration_count})
        out.append((_grid_records(grid, tab.values, tab.residual_norm, meta, skip_first=True), meta, cfg.dim))
    return out


SUITES = ("normalization", "zero_mass", "lemma1", "msd", "envelopes", "nonnegativity")


def run_suite(name: str, seed: int = _verify.DEFAULT_SEED, quick: bool = True) -> list:
    """Reports of one named check suite at its default resolution."""
    if name in ("normalization", "zero_mass"):
        check = _verify.check_normalization if name == "normalization" else _verify.check_zero_mass
        return [check(op, alpha, (1.0,))
                for n in (1, 2, 3) for op in _verify.standard_operators(n).values()
                for alpha in ((0.5,) if quick else (0.3, 0.5, 0.8))]
    if name == "lemma1":
        return [_verify.check_lemma1(100_000, beta, seed) for beta in (0.25, 0.9)]
    if name == "msd":
        return [_verify.check_msd((0.5,), n=1), _verify.check_msd((0.8,), n=2)]
    if name == "envelopes":
        cases = [("Z0", 1, 0), ("Z0", 3, 2), ("Y0", 1, 2), ("Z0_dt", 3, 0), ("M", 1, 0), ("K", 1, 0)]
        if not quick:
            cases += [("M_diff", 1, 0), ("K_diff", 1, 0), ("Q", 1, 0), ("Psi", 1, 0)]
        return [_verify.check_envelopes(kid, n, 0.5, m, seed=seed) for kid, n, m in cases]
    if name == "nonnegativity":
        return [_verify.check_nonnegativity(_verify.desk_nonnegativity_suite(0.5, seed, quick))]
    raise _Invalid(f"unknown suite {name!r}")


def _cmd_verify(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    reports = [r for s in names for r in run_suite(s, args.seed, not args.full)]
    text = _verify.reports_to_json(reports) + "\n"
    if args.output:
        _atomic_write(Path(args.output), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _emit(recs, meta, n, fmt: str, output: str | None) -> None:
    text = format_output(recs, fmt or "json", meta, n)
    if output:
        _atomic_write(Path(output), text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracgreen", description="Kernels and Green matrices of "
                                "time-fractional diffusion equations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def outputs(sp, default_format="json"):
        sp.add_argument("--format", choices=("json", "csv"), default=default_format)
        sp.add_argument("--output", "-o", help="file to write (stdout if omitted)")

    k = sub.add_parser("kernel", help="evaluate Z0 or Y0 and their derivatives")
    k.add_argument("--alpha", type=float, required=True)
    k.add_argument("--dim", type=int, default=1)
    k.add_argument("--t", type=_float_list, required=True, help="time(s), comma separated")
    k.add_argument("--x", type=_float_list, help="point(s), dim coordinates each")
    k.add_argument("--kind", choices=("z", "y"), default="z")
    k.add_argument("--m", type=_int_list, help="derivative multi-index")
    k.add_argument("--dt", action="store_true", help="time derivative of Z0")
    k.add_argument("--matrix", help="coefficient matrix as JSON (identity by default)")
    outputs(k)

    h = sub.add_parser("hfun", help="evaluate a Fox H-function")
    h.add_argument("--z", type=_float_list, required=True)
    h.add_argument("--kind", choices=("z", "y"), default="z")
    h.add_argument("--dim", type=int, default=1)
    h.add_argument("--alpha", type=float)
    h.add_argument("--shift", type=int, default=0)
    h.add_argument("--mu", type=int, default=2)
    h.add_argument("--upper", help="JSON list of (c, gamma) pairs")
    h.add_argument("--lower", help="JSON list of (d, delta) pairs")
    outputs(h)

    for name, text in (("green", "assemble Z or Y tables by the parametrix method"),
                       ("solve", "solve the Cauchy problem")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--format", choices=("json", "csv"))
        sp.add_argument("--output", "-o")

    v = sub.add_parser("verify", help="run check suites and print a JSON report")
    v.add_argument("--suite", choices=SUITES + ("all",), default="normalization")
    v.add_argument("--seed", type=int, default=_verify.DEFAULT_SEED)
    v.add_argument("--full", action="store_true", help="full parameter grid instead of the quick one")
    v.add_argument("--output", "-o")
    return p


def run(argv: Sequence[str] | None = None) -> int:
    """Execute one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    set_num_threads_from_env()
    try:
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "green":
            results = _cmd_green(args)
            for i, (recs, meta, n) in enumerate(results):
                out = args.output
                if out and len(results) > 1:
                    path = Path(out)
                    out = str(path.with_name(f"{path.stem}_src{i}{path.suffix}"))
                _emit(recs, meta, n, args.format, out)
            return EXIT_OK
        handler = {"kernel": _cmd_kernel, "hfun": _cmd_hfun, "solve": _cmd_solve}[args.command]
        recs, meta, n = handler(args)
        _emit(recs, meta, n, args.format, args.output)
        return EXIT_OK
    except (_Invalid, ConfigError, ValueError) as err:
        print(f"fracgreen {args.command}: error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as err:
        print(f"fracgreen {args.command}: cannot write output: {err}", file=sys.stderr)
        return EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
