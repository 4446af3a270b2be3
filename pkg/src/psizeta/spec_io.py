"""Operator specifications, run configuration and result files.

An operator spec is JSON::

    {
      "dim": 1, "fiber_dim": 1, "truncation": 4,
      "grid": {"x_modes": 8, "angular_nodes": 2},
      "k0_override": [[[1.0, 0.0]]],
      "spectral_floor": 0.5,
      "terms": [
        {"offset": 0, "kind": "multiplier",
         "coefficients": [{"angular": 0, "matrix": [[[1.0, 0.0]]]}]},
        {"offset": 1, "kind": "full",
         "coefficients": [{"x": [1], "angular": 0, "matrix": [[[0.15, 0.0]]]},
                          {"x": [-1], "angular": 0, "matrix": [[[0.15, 0.0]]]}]}
      ]
    }

Term ``offset = j`` is homogeneous of degree ``1 - j`` and equals
``sum_c matrix_c exp(i x_c . x) exp(i angular_c theta)`` on the cosphere, with
``theta`` the polar angle of ``xi`` (for ``dim = 1`` the sheets ``xi = +1, -1``
are ``theta = 0, pi``, so ``angular = 1`` is ``sign(xi)``).  Complex numbers
are ``[re, im]`` pairs; matrices are row-major nested lists.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._validation import MAX_FIBER_DIM, SpecError
from .fiber import PDMatrix
from .symbols import ClassicalSymbol, CosphereGrid

__all__ = [
    "OperatorSpec",
    "RunConfig",
    "load_spec",
    "parse_spec",
    "dump_spec",
    "load_config",
    "symbol_to_json",
    "complex_to_json",
    "matrix_to_json",
    "write_json",
    "write_text",
    "write_csv",
    "dumps",
]

TERM_KINDS = ("multiplier", "full")


def complex_to_json(z):
    z = complex(z)
    return [float(z.real) + 0.0, float(z.imag) + 0.0]


def matrix_to_json(a):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 0:
        return complex_to_json(a)
    return [matrix_to_json(row) for row in a]


def _complex_from(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if (
        isinstance(v, list)
        and len(v) == 2
        and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in v)
    ):
        z = complex(v[0], v[1])
        if np.isfinite(z.real) and np.isfinite(z.imag):
            return z
    raise SpecError(f"expected a finite [re, im] pair, got {v!r}", where)


def _matrix_from(v, n, where):
    if not isinstance(v, list) or len(v) != n or any(not isinstance(r, list) or len(r) != n for r in v):
        raise SpecError(f"expected a {n}x{n} matrix of [re, im] pairs", where)
    return np.array(
        [[_complex_from(v[i][j], f"{where}[{i}][{j}]") for j in range(n)] for i in range(n)],
        dtype=np.complex128,
    )


def _int_field(d, key, where, minimum=None, choices=None):
    if key not in d:
        raise SpecError("missing field", f"{where}{key}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(f"expected an integer, got {v!r}", f"{where}{key}")
    if minimum is not None and v < minimum:
        raise SpecError(f"must be >= {minimum}, got {v}", f"{where}{key}")
    if choices is not None and v not in choices:
        raise SpecError(f"must be one of {choices}, got {v}", f"{where}{key}")
    return v


@dataclass(frozen=True)
class _Coefficient:
    x: tuple
    angular: int
    matrix: np.ndarray


@dataclass(frozen=True)
class _Term:
    offset: int
    kind: str
    coefficients: tuple


class OperatorSpec:
    """A validated operator specification; build the symbol with :meth:`to_symbol`."""

    def __init__(self, dim, fiber_dim, truncation, x_modes, angular_nodes, terms,
                 k0_override=None, spectral_floor=None):
        self.dim = dim
        self.fiber_dim = fiber_dim
        self.truncation = truncation
        self.x_modes = x_modes
        self.angular_nodes = angular_nodes
        self.terms = tuple(sorted(terms, key=lambda t: t.offset))
        n = fiber_dim
        self.k0_override = np.eye(n, dtype=np.complex128) if k0_override is None else k0_override
        self.spectral_floor = spectral_floor
        self.grid = CosphereGrid(dim, x_modes, angular_nodes, fiber_dim)
        self._validate()

    # -- validation -------------------------------------------------------

    def _validate(self):
        offsets = [t.offset for t in self.terms]
        if 0 not in offsets:
            raise SpecError("leading term (offset 0) missing", "terms")
        if len(set(offsets)) != len(offsets):
            raise SpecError(f"duplicate offsets {offsets}", "terms")
        for i, t in enumerate(self.terms):
            where = f"terms[{i}]"
            if not 0 <= t.offset <= self.truncation:
                raise SpecError(f"offset {t.offset} outside [0, truncation={self.truncation}]", f"{where}.offset")
            for c, coef in enumerate(t.coefficients):
                cw = f"{where}.coefficients[{c}]"
                if any(abs(v) > self.x_modes for v in coef.x):
                    raise SpecError(f"x mode {coef.x} exceeds x_modes={self.x_modes}", f"{cw}.x")
                if t.kind == "multiplier" and any(coef.x):
                    raise SpecError("multiplier terms must not depend on x", f"{cw}.x")
                limit = 1 if self.dim == 1 else self.angular_nodes // 2 - 1
                if abs(coef.angular) > limit:
                    raise SpecError(f"angular mode {coef.angular} not resolved (|p| <= {limit})", f"{cw}.angular")
        lead = self.to_symbol().terms[0]
        try:
            PDMatrix(lead, floor=self.spectral_floor)
        except ValueError as exc:
            raise SpecError(f"leading term is not Hermitian positive definite on the grid: {exc}", "terms[0]") from exc

    # -- construction -----------------------------------------------------

    def term_samples(self, term):
        grid = self.grid
        xs = np.meshgrid(*([grid.x_points] * grid.dim), indexing="ij")
        out = grid.zeros()
        for coef in term.coefficients:
            phase = np.zeros(grid.x_shape)
            for j, kx in enumerate(coef.x):
                phase = phase + kx * xs[j]
            ang = np.exp(1j * coef.angular * grid.theta)
            val = np.exp(1j * phase)[..., None] * ang
            out += val[..., None, None] * coef.matrix
        return out

    def to_symbol(self):
        terms = self.grid.zeros((self.truncation + 1,))
        for t in self.terms:
            terms[t.offset] = self.term_samples(t)
        return ClassicalSymbol(1, terms, self.grid)

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        d = {
            "dim": self.dim,
            "fiber_dim": self.fiber_dim,
            "truncation": self.truncation,
            "grid": {"x_modes": self.x_modes, "angular_nodes": self.angular_nodes},
            "k0_override": matrix_to_json(self.k0_override),
            "terms": [],
        }
        if self.spectral_floor is not None:
            d["spectral_floor"] = float(self.spectral_floor)
        for t in self.terms:
            coefs = []
            for c in sorted(t.coefficients, key=lambda c: (c.x, c.angular)):
                e = {"angular": c.angular, "matrix": matrix_to_json(c.matrix)}
                if t.kind == "full":
                    e["x"] = list(c.x)
                coefs.append(e)
            d["terms"].append({"offset": t.offset, "kind": t.kind, "coefficients": coefs})
        return d

    def __eq__(self, other):
        return isinstance(other, OperatorSpec) and dumps(self.to_dict()) == dumps(other.to_dict())


def parse_spec(obj):
    """Validate a decoded JSON object and return an :class:`OperatorSpec`.

    Raises
    ------
    SpecError
        With ``field`` naming the offending entry.
    """
    if not isinstance(obj, dict):
        raise SpecError("spec must be a JSON object", "$")
    known = {"dim", "fiber_dim", "truncation", "grid", "k0_override", "spectral_floor", "terms", "order"}
    extra = sorted(set(obj) - known)
    if extra:
        raise SpecError(f"unknown fields {extra}", "$")
    dim = _int_field(obj, "dim", "", choices=(1, 2))
    n = _int_field(obj, "fiber_dim", "", minimum=1)
    if n > MAX_FIBER_DIM:
        raise SpecError(f"fiber_dim {n} exceeds {MAX_FIBER_DIM}", "fiber_dim")
    K = _int_field(obj, "truncation", "", minimum=0)
    if "order" in obj and _complex_from(obj["order"], "order") != 1:
        raise SpecError("only order-one operators are supported", "order")
    grid = obj.get("grid")
    if not isinstance(grid, dict):
        raise SpecError("missing or malformed grid object", "grid")
    X = _int_field(grid, "x_modes", "grid.", minimum=1)
    if dim == 1:
        A = grid.get("angular_nodes", 2)
        if A != 2:
            raise SpecError("dim=1 has exactly 2 angular nodes", "grid.angular_nodes")
    else:
        A = _int_field(grid, "angular_nodes", "grid.", minimum=8)
        if A % 2:
            raise SpecError("angular_nodes must be even", "grid.angular_nodes")
    k0 = None
    if "k0_override" in obj:
        k0 = _matrix_from(obj["k0_override"], n, "k0_override")
    floor = None
    if "spectral_floor" in obj:
        floor = obj["spectral_floor"]
        if isinstance(floor, bool) or not isinstance(floor, (int, float)) or not floor > 0:
            raise SpecError(f"must be a positive number, got {floor!r}", "spectral_floor")
        floor = float(floor)
    raw_terms = obj.get("terms")
    if not isinstance(raw_terms, list) or not raw_terms:
        raise SpecError("expected a non-empty list", "terms")
    terms = []
    for i, t in enumerate(raw_terms):
        where = f"terms[{i}]"
        if not isinstance(t, dict):
            raise SpecError("expected an object", where)
        offset = _int_field(t, "offset", f"{where}.", minimum=0)
        kind = t.get("kind")
        if kind not in TERM_KINDS:
            raise SpecError(f"kind must be one of {TERM_KINDS}, got {kind!r}", f"{where}.kind")
        coefs = t.get("coefficients")
        if not isinstance(coefs, list) or not coefs:
            raise SpecError("expected a non-empty list", f"{where}.coefficients")
        parsed = []
        for c, e in enumerate(coefs):
            cw = f"{where}.coefficients[{c}]"
            if not isinstance(e, dict):
                raise SpecError("expected an object", cw)
            ang = _int_field(e, "angular", f"{cw}.") if "angular" in e else 0
            x = e.get("x", [0] * dim)
            if (
                not isinstance(x, list)
                or len(x) != dim
                or any(isinstance(v, bool) or not isinstance(v, int) for v in x)
            ):
                raise SpecError(f"expected {dim} integer x modes", f"{cw}.x")
            if kind == "multiplier" and "x" in e and any(x):
                raise SpecError("multiplier terms must not depend on x", f"{cw}.x")
            if "matrix" not in e:
                raise SpecError("missing field", f"{cw}.matrix")
            parsed.append(_Coefficient(tuple(x), ang, _matrix_from(e["matrix"], n, f"{cw}.matrix")))
        terms.append(_Term(offset, kind, tuple(parsed)))
    return OperatorSpec(dim, n, K, X, A, terms, k0, floor)


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path)) from exc
    return parse_spec(obj)


def dumps(obj):
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def dump_spec(spec):
    return dumps(spec.to_dict())


@dataclass(frozen=True)
class RunConfig:
    """Numerical settings shared by the commands; every field has a default."""

    N: int = 10_000
    B: int = 512
    K: int = 4
    tail_order: int = 6
    cauchy_radius: float = 0.01
    defect_tol: float = 1e-7
    cocycle_tol: float = 1e-8
    samples: int = 10
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "K", "tail_order"):
                if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                    raise SpecError(f"must be a non-negative integer, got {v!r}", f.name)
            elif not (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0):
                raise SpecError(f"must be positive, got {v!r}", f.name)

    def replace(self, **changes):
        d = asdict(self)
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(**d)


def load_config(path=None):
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise SpecError("config must be a JSON object", str(path))
    names = {f.name for f in fields(RunConfig)}
    extra = sorted(set(obj) - names)
    if extra:
        raise SpecError(f"unknown fields {extra}", str(path))
    return RunConfig(**obj)


def symbol_to_json(symbol):
    """Term samples of a symbol on its grid, as nested ``[re, im]`` pairs."""
    g = symbol.grid
    return {
        "order": complex_to_json(symbol.order),
        "dim": g.dim,
        "fiber_dim": g.fiber_dim,
        "grid": {"x_modes": g.x_modes, "angular_nodes": g.angular_nodes},
        "terms": [
            {"degree": complex_to_json(symbol.order - j), "samples": matrix_to_json(symbol.terms[j])}
            for j in range(symbol.truncation + 1)
        ],
    }


def write_text(path, text):
    """Write ``text`` to ``path`` atomically (temporary file, then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    write_text(path, dumps(obj))


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    write_text(path, buf.getvalue())
