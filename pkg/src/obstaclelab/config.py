"""Experiment configuration: YAML schema, expression strings and operator descriptors."""

from __future__ import annotations

import ast
import hashlib
import inspect
import json
import operator as _op
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from . import operators as ops
from .fixtures import CATALOG, Fixture
from .grid import GridDomain, ProblemSpec, build_domain
from .solver import SolverConfig


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------- expressions

_BINOPS = {ast.Add: _op.add, ast.Sub: _op.sub, ast.Mult: _op.mul, ast.Div: _op.truediv, ast.Pow: _op.pow}
_UNARY = {ast.USub: _op.neg, ast.UAdd: _op.pos}
_FUNCS = {
    "pos": lambda a: np.maximum(a, 0.0),
    "abs": np.abs,
    "sqrt": np.sqrt,
}


def _check_expr(node: ast.AST, names: set) -> None:
    if isinstance(node, ast.Expression):
        _check_expr(node.body, names)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ConfigError(f"operator {type(node.op).__name__} not allowed")
        _check_expr(node.left, names)
        _check_expr(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ConfigError(f"operator {type(node.op).__name__} not allowed")
        _check_expr(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords or len(node.args) != 1:
            raise ConfigError(f"only one-argument calls to {sorted(_FUNCS)} are allowed")
        _check_expr(node.args[0], names)
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ConfigError(f"unknown name {node.id!r}; use x1..x3, r or {sorted(_FUNCS)}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ConfigError("only numeric constants are allowed")
    else:
        raise ConfigError(f"syntax {type(node).__name__} not allowed in expressions")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](_eval(node.args[0], env))
    if isinstance(node, ast.Name):
        return env[node.id]
    return float(node.value)


def parse_expression(text, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression in ``x1..x_dim`` and ``r = |x|`` to a vectorised function.

    Allowed: numbers, ``+ - * / **``, and ``pos`` (positive part), ``abs``, ``sqrt``.
    Plain numbers are accepted as constants.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ConfigError(f"expression must be a string or number, got {type(text).__name__}")
    names = {f"x{i + 1}" for i in range(dim)} | {"r"} | set(_FUNCS)
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    _check_expr(tree, names)

    def fn(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        env = {f"x{i + 1}": x[:, i] for i in range(dim)}
        env["r"] = np.sqrt(np.sum(x * x, axis=1))
        with np.errstate(all="ignore"):
            out = _eval(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(x),)).copy()

    fn.expression = text
    return fn


# ---------------------------------------------------------------- operators

def build_operator(desc: Optional[dict]) -> ops.EllipticOperator:
    """Operator from ``{"kind": ..., params}``; ``None`` means the Laplacian."""
    if desc is None:
        return ops.trace_operator()
    if isinstance(desc, str):
        desc = {"kind": desc}
    d = dict(desc)
    kind = d.pop("kind", None)
    try:
        if kind == "trace":
            op = ops.trace_operator()
        elif kind in ("pucci_minus", "pucci_plus"):
            op = ops.pucci(kind.split("_")[1], float(d.pop("lambda")), float(d.pop("Lambda")))
        elif kind == "bellman":
            table = [np.asarray(A, dtype=float) for A in d.pop("table")]
            op = ops.bellman(table)
        elif kind == "isaacs":
            tables = [[np.asarray(A, dtype=float) for A in row] for row in d.pop("tables")]
            op = ops.isaacs(tables, float(d.pop("lambda")), float(d.pop("Lambda")))
        elif kind in ("p_laplacian", "p_laplacian_normalized"):
            op = ops.p_laplacian(float(d.pop("p")))
        elif kind == "m_momentum":
            op = ops.m_momentum(int(d.pop("m")), d.pop("sigma"))
        elif kind in ("special_lagrangian", "special_lagrangian_perturbed"):
            op = ops.special_lagrangian(d.pop("h"))
        elif kind == "recession_of":
            op = ops.recession_of(build_operator(d.pop("base")))
        else:
            raise ConfigError(f"unknown operator kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"operator {kind!r} is missing parameter {exc.args[0]!r}") from None
    if d:
        raise ConfigError(f"unexpected operator parameters {sorted(d)} for {kind!r}")
    return op


# ---------------------------------------------------------------- config

@dataclass
class GridConfig:
    dim: int = 2
    h: float = 1 / 64
    radius: float = 1.0
    levels: int = 1
    closed: bool = True

    def __post_init__(self):
        if isinstance(self.h, str):
            try:
                self.h = float(Fraction(self.h.replace(" ", "")))
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"grid.h {self.h!r} is not a number or fraction") from None
        self.h = float(self.h)
        self.dim = int(self.dim)
        self.levels = int(self.levels)

    def domain(self, level: int = 0) -> GridDomain:
        return build_domain(self.dim, self.h / 2**level, self.radius, self.closed)


@dataclass
class ExperimentConfig:
    problem: dict
    grid: GridConfig = field(default_factory=GridConfig)
    solver: dict = field(default_factory=dict)
    measurements: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.grid.levels < 1:
            raise ConfigError("grid.levels must be >= 1")
        fixture = self.problem.get("fixture")
        if fixture is not None and fixture not in CATALOG:
            raise ConfigError(f"unknown fixture {fixture!r}; catalog: {sorted(CATALOG)}")

    # -- components
    def solver_config(self) -> SolverConfig:
        known = {f.name for f in fields(SolverConfig)}
        extra = set(self.solver) - known
        if extra:
            raise ConfigError(f"unknown solver keys {sorted(extra)}")
        try:
            return SolverConfig(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def fixture(self) -> Fixture:
        """Problem instance from the catalog or from expression strings."""
        p = dict(self.problem)
        name = p.pop("fixture", None)
        if name is not None:
            params = dict(p.pop("params", {}) or {})
            factory = CATALOG[name]
            if "dim" in inspect.signature(factory).parameters:
                params.setdefault("dim", self.grid.dim)
            try:
                fx = factory(**params)
            except TypeError as exc:
                raise ConfigError(f"bad parameters for fixture {name!r}: {exc}") from None
            if p:
                raise ConfigError(f"keys {sorted(p)} are not allowed next to a fixture")
            return fx
        dim = self.grid.dim
        try:
            spec = ProblemSpec(
                gamma=float(p.pop("gamma", 0.0)),
                operator=build_operator(p.pop("operator", None)),
                obstacle=parse_expression(p.pop("obstacle"), dim),
                source=parse_expression(p.pop("source"), dim),
                boundary=parse_expression(p.pop("boundary"), dim),
                alpha=float(p.pop("alpha", 1.0)),
                radius=self.grid.radius,
            )
        except KeyError as exc:
            raise ConfigError(f"problem is missing {exc.args[0]!r}") from None
        exact = parse_expression(p.pop("exact"), dim) if "exact" in p else None
        if p:
            raise ConfigError(f"unknown problem keys {sorted(p)}")
        return Fixture("expression", spec, exact)

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d, default=_jsonable))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    data = dict(data)
    unknown = set(data) - {"problem", "grid", "solver", "measurements", "seed", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "problem" not in data:
        raise ConfigError("configuration needs a 'problem' section")
    grid = data.pop("grid", {}) or {}
    try:
        grid_cfg = GridConfig(**grid)
    except TypeError as exc:
        raise ConfigError(f"bad grid section: {exc}") from None
    return ExperimentConfig(
        problem=dict(data.pop("problem") or {}),
        grid=grid_cfg,
        solver=dict(data.pop("solver", {}) or {}),
        measurements=dict(data.pop("measurements", {}) or {}),
        seed=int(data.pop("seed", 0)),
        output_dir=str(data.pop("output_dir", "out")),
    )


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def jsonable(obj: Any):
    """Recursively convert numpy scalars and arrays for JSON output."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
