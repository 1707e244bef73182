"""Scenario ingestion and the builtin fixture catalog.

Scenarios are plain JSON. Polynomial data is a list of term objects
``{"coeff": real, "exps": [e1, ..., em]}``; bivector entries are given for
i < j only and completed by skewness. The eta specification is one of

* ``{"kind": "poly", "components": [[term, ...], ...]}`` - polynomials in u,
  evaluated at cell midpoints;
* ``{"kind": "random", "degree": d, "scale": s}`` - seeded uniform[-s, s]
  polynomial coefficients in u, drawn once per (scenario, seed);
* ``{"kind": "loop_rate", "axis": [...]}`` - the constant covector
  2 N tan(pi/N) * axis, the rate at which the midpoint step closes a full
  rotation orbit exactly on an N-cell loop grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ParseError
from .fields import BivectorField, ConnectionField, LevelSetSubmanifold, PolyScalarField
from .paths import TimeDependentOneForm

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "coisolab scenario",
    "type": "object",
    "required": ["name", "dim", "mode", "x0", "grid", "pi", "eta"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "dim": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["interval", "circle"]},
        "x0": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "pi": {"type": "array", "items": {"$ref": "#/$defs/bivector_entry"}},
        "connection": {"type": "array", "items": {"$ref": "#/$defs/christoffel_entry"}},
        "c0": {"type": "array", "items": {"$ref": "#/$defs/poly"}, "minItems": 1},
        "c1": {"type": "array", "items": {"$ref": "#/$defs/poly"}, "minItems": 1},
        "eta": {"type": "object"},
        "gauge_covector": {"type": "array", "items": {"type": "number"}},
        "boundary_form": {"type": "object"},
        "tolerances": {"type": "object"},
        "expect_poisson": {"type": "boolean"},
        "expect_coisotropic": {"type": "boolean"},
        "expected_reduced_dim": {"type": ["integer", "null"]},
        "expect_fail_checks": {"type": "array", "items": {"type": "string"}},
    },
    "$defs": {
        "term": {
            "type": "object",
            "required": ["coeff", "exps"],
            "additionalProperties": False,
            "properties": {
                "coeff": {"type": "number"},
                "exps": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "poly": {"type": "array", "items": {"$ref": "#/$defs/term"}},
        "bivector_entry": {
            "type": "object",
            "required": ["i", "j", "poly"],
            "additionalProperties": False,
            "properties": {
                "i": {"type": "integer", "minimum": 0},
                "j": {"type": "integer", "minimum": 0},
                "poly": {"$ref": "#/$defs/poly"},
            },
        },
        "christoffel_entry": {
            "type": "object",
            "required": ["i", "j", "k", "poly"],
            "additionalProperties": False,
            "properties": {
                "i": {"type": "integer", "minimum": 0},
                "j": {"type": "integer", "minimum": 0},
                "k": {"type": "integer", "minimum": 0},
                "poly": {"$ref": "#/$defs/poly"},
            },
        },
    },
}


def _poly_to_json(f: PolyScalarField) -> list[dict[str, Any]]:
    return [{"coeff": c, "exps": list(e)} for c, e in f.terms]


def _poly_from_json(dim: int, data: Sequence[Mapping[str, Any]]) -> PolyScalarField:
    return PolyScalarField.from_terms(dim, [(t["coeff"], t["exps"]) for t in data])


@dataclass(frozen=True)
class Scenario:
    """A named fixture: fields, boundaries, eta recipe, grids, expectations."""

    name: str
    dim: int
    mode: str
    x0: np.ndarray
    grid: tuple[int, ...]
    pi: BivectorField
    connection: ConnectionField
    c0: LevelSetSubmanifold | None
    c1: LevelSetSubmanifold | None
    eta_spec: dict[str, Any]
    gauge_covector: np.ndarray
    boundary_form_spec: dict[str, Any]
    tol_overrides: dict[str, float] = field(default_factory=dict)
    expect_poisson: bool = True
    expect_coisotropic: bool = True
    expected_reduced_dim: int | None = None
    expect_fail_checks: tuple[str, ...] = ()

    @property
    def periodic(self) -> bool:
        return self.mode == "circle"

    def realize_eta(self, n_cells: int, rng: np.random.Generator) -> np.ndarray:
        """Cell-midpoint coefficient vectors for an N-cell grid."""
        kind = self.eta_spec.get("kind", "poly")
        mids = (np.arange(n_cells) + 0.5) / n_cells
        if kind == "poly":
            comps = self.eta_spec["components"]
            if len(comps) != self.dim:
                raise ParseError("eta components must match the dimension")
            out = np.zeros((n_cells, self.dim))
            for j, comp in enumerate(comps):
                poly = _poly_from_json(1, comp)
                out[:, j] = poly(mids[:, None])
            return out
        if kind == "random":
            degree = int(self.eta_spec.get("degree", 3))
            scale = float(self.eta_spec.get("scale", 1.0))
            coeffs = rng.uniform(-scale, scale, size=(self.dim, degree + 1))
            powers = mids[:, None] ** np.arange(degree + 1)
            return powers @ coeffs.T
        if kind == "loop_rate":
            axis = np.asarray(self.eta_spec["axis"], dtype=float)
            if axis.shape != (self.dim,):
                raise ParseError("loop_rate axis must match the dimension")
            rate = 2.0 * n_cells * np.tan(np.pi / n_cells)
            return np.tile(rate * axis, (n_cells, 1))
        raise ParseError(f"unknown eta kind {kind!r}")

    def boundary_form(self, n_cells: int) -> TimeDependentOneForm:
        spec = self.boundary_form_spec
        kind = spec.get("kind", "constant")
        if kind == "constant":
            comps = [_poly_from_json(self.dim, c) for c in spec["components"]]
            return TimeDependentOneForm.constant(comps, n_cells)
        if kind == "affine":
            start = [_poly_from_json(self.dim, c) for c in spec["start"]]
            end = [_poly_from_json(self.dim, c) for c in spec["end"]]
            return TimeDependentOneForm.affine(start, end, n_cells)
        raise ParseError(f"unknown boundary form kind {kind!r}")

    def to_dict(self) -> dict[str, Any]:
        m = self.dim
        out: dict[str, Any] = {
            "name": self.name,
            "dim": m,
            "mode": self.mode,
            "x0": [float(v) for v in self.x0],
            "grid": list(self.grid),
            "pi": [
                {"i": i, "j": j, "poly": _poly_to_json(self.pi.comps[i][j])}
                for i in range(m) for j in range(i + 1, m)
                if not self.pi.comps[i][j].is_zero
            ],
            "eta": self.eta_spec,
        }
        conn_entries = [
            {"i": i, "j": j, "k": k, "poly": _poly_to_json(self.connection.christoffel[i][j][k])}
            for i in range(m) for j in range(m) for k in range(j, m)
            if not self.connection.christoffel[i][j][k].is_zero
        ]
        if conn_entries:
            out["connection"] = conn_entries
        if self.c0 is not None:
            out["c0"] = [_poly_to_json(f) for f in self.c0.constraints]
        if self.c1 is not None:
            out["c1"] = [_poly_to_json(f) for f in self.c1.constraints]
        out["gauge_covector"] = [float(v) for v in self.gauge_covector]
        out["boundary_form"] = self.boundary_form_spec
        if self.tol_overrides:
            out["tolerances"] = dict(self.tol_overrides)
        out["expect_poisson"] = self.expect_poisson
        out["expect_coisotropic"] = self.expect_coisotropic
        out["expected_reduced_dim"] = self.expected_reduced_dim
        if self.expect_fail_checks:
            out["expect_fail_checks"] = list(self.expect_fail_checks)
        return out


def validate_scenario_dict(data: Mapping[str, Any]) -> None:
    import jsonschema

    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ParseError(f"scenario failed schema validation: {exc.message}") from exc


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    validate_scenario_dict(data)
    m = int(data["dim"])
    if len(data["x0"]) != m:
        raise ParseError("x0 length must equal dim")
    if not data["grid"]:
        raise ParseError("grid list must be non-empty")
    entries: dict[tuple[int, int], PolyScalarField] = {}
    for item in data["pi"]:
        i, j = int(item["i"]), int(item["j"])
        if not 0 <= i < j < m:
            raise ParseError(f"bivector entry ({i},{j}) must satisfy 0 <= i < j < dim")
        entries[(i, j)] = _poly_from_json(m, item["poly"])
    pi = BivectorField.from_upper(m, entries)
    if "connection" in data:
        conn_entries = {
            (int(it["i"]), int(it["j"]), int(it["k"])): _poly_from_json(m, it["poly"])
            for it in data["connection"]
        }
        conn = ConnectionField.from_entries(m, conn_entries)
    else:
        conn = ConnectionField.flat(m)

    def parse_sub(key: str) -> LevelSetSubmanifold | None:
        if key not in data:
            return None
        return LevelSetSubmanifold.from_constraints(
            m, [_poly_from_json(m, poly) for poly in data[key]])

    mode = data["mode"]
    c0, c1 = parse_sub("c0"), parse_sub("c1")
    if mode == "circle" and (c0 is not None or c1 is not None):
        raise ParseError("circle scenarios take no boundary submanifolds")
    gauge = np.asarray(data.get("gauge_covector", [1.0] + [0.0] * (m - 1)), dtype=float)
    if gauge.shape != (m,):
        raise ParseError("gauge covector length must equal dim")
    bform = data.get("boundary_form") or _default_bform(m)
    return Scenario(
        name=data["name"],
        dim=m,
        mode=mode,
        x0=np.asarray(data["x0"], dtype=float),
        grid=tuple(int(n) for n in data["grid"]),
        pi=pi,
        connection=conn,
        c0=c0,
        c1=c1,
        eta_spec=dict(data["eta"]),
        gauge_covector=gauge,
        boundary_form_spec=dict(bform),
        tol_overrides={k: float(v) for k, v in data.get("tolerances", {}).items()},
        expect_poisson=bool(data.get("expect_poisson", True)),
        expect_coisotropic=bool(data.get("expect_coisotropic", True)),
        expected_reduced_dim=data.get("expected_reduced_dim"),
        expect_fail_checks=tuple(data.get("expect_fail_checks", ())),
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    return parse_scenario(data)


# ---------------------------------------------------------------------------
# builtin catalog
# ---------------------------------------------------------------------------

def _term(coeff: float, *exps: int) -> dict[str, Any]:
    return {"coeff": coeff, "exps": list(exps)}


def _const_eta(values: Sequence[float]) -> dict[str, Any]:
    return {"kind": "poly", "components": [[_term(v, 0)] if v else [] for v in values]}


def _default_bform(m: int) -> dict[str, Any]:
    dx1 = [[_term(1.0, *([0] * m))] if j == 0 else [] for j in range(m)]
    # the "coeff, exps" of a constant covector component: exps all zero
    return {"kind": "constant", "components": dx1}


def _line_bform() -> dict[str, Any]:
    # affine blend dx2 -> dx1: pulls back to zero on {x2 = 0} and {x1 = 0}
    dx2 = [[], [_term(1.0, 0, 0)]]
    dx1 = [[_term(1.0, 0, 0)], []]
    return {"kind": "affine", "start": dx2, "end": dx1}


def _catalog_dicts() -> list[dict[str, Any]]:
    x2_zero = [[_term(1.0, 0, 1)]]          # constraint x2 = 0 on R^2
    x1_zero = [[_term(1.0, 1, 0)]]          # constraint x1 = 0 on R^2
    so3_pi = [
        {"i": 0, "j": 1, "poly": [_term(1.0, 0, 0, 1)]},    # pi^{12} = x3
        {"i": 0, "j": 2, "poly": [_term(-1.0, 0, 1, 0)]},   # pi^{13} = -x2
        {"i": 1, "j": 2, "poly": [_term(1.0, 1, 0, 0)]},    # pi^{23} = x1
    ]
    r4_const = [
        {"i": 0, "j": 1, "poly": [_term(1.0, 0, 0, 0, 0)]},
        {"i": 2, "j": 3, "poly": [_term(1.0, 0, 0, 0, 0)]},
    ]
    r4_nonpoisson = [
        {"i": 0, "j": 1, "poly": [_term(1.0, 0, 0, 0, 0)]},
        {"i": 2, "j": 3, "poly": [_term(1.0, 1, 0, 0, 0)]},   # pi^{34} = x1
    ]
    origin_r4 = [
        [_term(1.0, 1, 0, 0, 0)], [_term(1.0, 0, 1, 0, 0)],
        [_term(1.0, 0, 0, 1, 0)], [_term(1.0, 0, 0, 0, 1)],
    ]
    wobble = [_term(-2.0, 0), _term(4.0, 1)]   # 4(u - 1/2), midpoint sums vanish exactly
    return [
        {
            "name": "zero-pi-r2", "dim": 2, "mode": "interval",
            "x0": [0.25, -0.4], "grid": [4, 8, 16],
            "pi": [], "eta": _const_eta([0.7, -0.3]),
            "expected_reduced_dim": 4,
        },
        {
            "name": "symplectic-r2", "dim": 2, "mode": "interval",
            "x0": [1.0, 0.0], "grid": [4, 8, 16],
            "pi": [{"i": 0, "j": 1, "poly": [_term(1.0, 0, 0)]}],
            "c0": x2_zero, "c1": x1_zero,
            "eta": _const_eta([-1.0, -1.0]),
            "gauge_covector": [1.0, 1.0],
            "boundary_form": _line_bform(),
            "expected_reduced_dim": 0,
        },
        {
            "name": "symplectic-r4", "dim": 4, "mode": "interval",
            "x0": [0.1, 0.2, -0.3, 0.4], "grid": [4, 8, 16],
            "pi": r4_const, "eta": _const_eta([0.5, -0.25, 0.8, 0.1]),
            "expected_reduced_dim": 8,
        },
        {
            "name": "symplectic-r4-point", "dim": 4, "mode": "interval",
            "x0": [0.0, 0.0, 0.0, 0.0], "grid": [4, 8, 16],
            "pi": r4_const, "c0": origin_r4,
            "eta": _const_eta([0.3, 0.4, -0.2, 0.6]),
            "expect_coisotropic": False,
            "expect_fail_checks": ["path-coisotropy"],
            "expected_reduced_dim": None,
        },
        {
            "name": "so3-lie-poisson", "dim": 3, "mode": "interval",
            "x0": [1.0, 0.0, 0.0], "grid": [4, 8, 16],
            "pi": so3_pi, "eta": _const_eta([0.0, 0.0, 1.0]),
            "expected_reduced_dim": None,
        },
        {
            "name": "nonpoisson-r4", "dim": 4, "mode": "interval",
            "x0": [1.0, 0.0, 0.0, 0.0], "grid": [16, 32, 64],
            "pi": r4_nonpoisson, "eta": _const_eta([0.0, 1.0, 0.0, 0.0]),
            "expect_poisson": False, "expect_coisotropic": False,
            "expect_fail_checks": ["poisson-field", "path-coisotropy"],
            "expected_reduced_dim": None,
        },
        {
            "name": "zero-pi-intersecting-lines", "dim": 2, "mode": "interval",
            "x0": [0.0, 0.0], "grid": [4, 8, 16],
            "pi": [], "c0": x2_zero, "c1": x1_zero,
            "eta": _const_eta([0.7, -0.3]),
            "gauge_covector": [1.0, 1.0],
            "boundary_form": _line_bform(),
            "expected_reduced_dim": 0,
        },
        {
            "name": "circle-so3", "dim": 3, "mode": "circle",
            "x0": [1.0, 0.0, 0.0], "grid": [8, 16, 32],
            "pi": so3_pi, "eta": {"kind": "loop_rate", "axis": [0.0, 0.0, 1.0]},
            "expected_reduced_dim": None,
        },
        {
            "name": "circle-nonpoisson-r4", "dim": 4, "mode": "circle",
            "x0": [1.0, 0.0, 0.0, 0.0], "grid": [8, 16, 32],
            "pi": r4_nonpoisson,
            "eta": {"kind": "poly", "components": [wobble, wobble, [], []]},
            "expect_poisson": False, "expect_coisotropic": False,
            "expect_fail_checks": ["poisson-field", "path-coisotropy"],
            "expected_reduced_dim": None,
        },
    ]


def catalog() -> list[Scenario]:
    """Builtin scenarios, schema-validated and parse round-trip stable."""
    return [parse_scenario(d) for d in _catalog_dicts()]


def catalog_names() -> list[str]:
    return [d["name"] for d in _catalog_dicts()]


def get_scenario(name: str) -> Scenario:
    for d in _catalog_dicts():
        if d["name"] == name:
            return parse_scenario(d)
    raise ParseError(f"no builtin scenario named {name!r}")
