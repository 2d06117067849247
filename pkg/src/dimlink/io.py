"""Scenario JSON, CSV tables and legacy-VTK output."""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .mesh import Circle, Ellipse, MeshError, QuadMesh, Rect
from .scenario import (
    ConstantSource,
    DirichletSide,
    FieldResult,
    FixedAverage,
    MeshSpec,
    NoSource,
    Scenario,
    ScenarioError,
    SineModeSource,
    TabulatedSource,
    WavySource,
    Wire,
    check_scenario,
)


class ConfigError(ValueError):
    """Invalid scenario document; ``path`` is a JSON path such as ``$.wires[0].kappa``."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.reason = message


class VTKFormatError(ValueError):
    pass


# Scenario <-> JSON ----------------------------------------------------------

def scenario_schema() -> dict:
    return json.loads(resources.files("dimlink").joinpath("scenario.schema.json").read_text())


def _reject_constant(token):
    raise ConfigError(f"non-finite number {token!r} is not allowed")


def _finite_float(token):
    v = float(token)
    if not math.isfinite(v):
        raise ConfigError(f"number {token} overflows to infinity")
    return v


def parse_json(text: str):
    try:
        return json.loads(text, parse_constant=_reject_constant, parse_float=_finite_float)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc


def _region_from(d):
    if d["shape"] == "circle":
        return Circle(tuple(d["center"]), d["radius"])
    if d["shape"] == "ellipse":
        return Ellipse(tuple(d["center"]), tuple(d["semi_axes"]))
    return Rect(tuple(d["min_corner"]), tuple(d["max_corner"]))


def _region_to(p) -> dict:
    if isinstance(p, Circle):
        return {"shape": "circle", "center": list(p.center), "radius": p.radius}
    if isinstance(p, Ellipse):
        return {"shape": "ellipse", "center": list(p.center), "semi_axes": list(p.semi_axes)}
    return {"shape": "rect", "min_corner": list(p.min_corner), "max_corner": list(p.max_corner)}


def _source_from(d):
    kind = d["kind"]
    if kind == "none":
        return NoSource()
    if kind == "constant":
        return ConstantSource(d["value"])
    if kind == "sine_mode":
        return SineModeSource(d.get("amplitude", 1.0))
    if kind == "wavy":
        return WavySource(tuple(d["center"]), d["radius"], d.get("amplitude", 1.0))
    return TabulatedSource(tuple(d["values"]))


def _source_to(s) -> dict:
    if isinstance(s, ConstantSource):
        return {"kind": "constant", "value": s.value}
    if isinstance(s, SineModeSource):
        return {"kind": "sine_mode", "amplitude": s.amplitude}
    if isinstance(s, WavySource):
        return {"kind": "wavy", "center": list(s.center), "radius": s.radius, "amplitude": s.amplitude}
    if isinstance(s, TabulatedSource):
        return {"kind": "tabulated", "values": list(s.values)}
    return {"kind": "none"}


def scenario_from_dict(doc) -> Scenario:
    """Validate ``doc`` against the schema and build a :class:`Scenario`."""
    validator = jsonschema.Draft202012Validator(scenario_schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise ConfigError(err.message, err.json_path)

    def build(path, fn):
        try:
            return fn()
        except (ScenarioError, MeshError) as exc:
            raise ConfigError(str(exc), path) from exc

    m = doc["mesh"]
    mesh = MeshSpec(tuple(m["origin"]), tuple(m["size"]), m["nx"], m["ny"], m.get("broken", False))
    dirichlet = tuple(
        build(f"$.dirichlet[{i}]", lambda d=d: DirichletSide(
            d["side"], d.get("value", 0.0), d.get("profile", "constant"),
            tuple(d["values"]) if "values" in d else None))
        for i, d in enumerate(doc.get("dirichlet", []))
    )
    source = build("$.source", lambda: _source_from(doc.get("source", {"kind": "none"})))
    wires = tuple(
        build(f"$.wires[{i}]", lambda w=w: Wire(
            w["kappa"], _region_from(w["start"]), _region_from(w["end"]),
            w.get("length", "auto"), w.get("n_seg", 8), w.get("source", 0.0)))
        for i, w in enumerate(doc.get("wires", []))
    )
    averages = tuple(
        build(f"$.fixed_averages[{i}]", lambda a=a: FixedAverage(_region_from(a["region"]), a["value"]))
        for i, a in enumerate(doc.get("fixed_averages", []))
    )
    return build("$", lambda: Scenario(mesh, doc["kappa"], dirichlet, source, wires, averages))


def scenario_to_dict(sc: Scenario) -> dict:
    def num(v):
        return v if isinstance(v, str) else float(v)

    dirichlet = []
    for d in sc.dirichlet:
        item = {"side": d.side, "value": float(d.value), "profile": d.profile}
        if d.values is not None:
            item["values"] = list(d.values)
        dirichlet.append(item)
    return {
        "mesh": {
            "origin": [float(v) for v in sc.mesh.origin],
            "size": [float(v) for v in sc.mesh.size],
            "nx": int(sc.mesh.nx),
            "ny": int(sc.mesh.ny),
            "broken": bool(sc.mesh.broken),
        },
        "kappa": float(sc.kappa),
        "dirichlet": dirichlet,
        "source": _source_to(sc.source),
        "wires": [
            {"kappa": float(w.kappa), "start": _region_to(w.start), "end": _region_to(w.end),
             "length": num(w.length), "n_seg": int(w.n_seg), "source": float(w.source)}
            for w in sc.wires
        ],
        "fixed_averages": [{"region": _region_to(a.region), "value": float(a.value)} for a in sc.fixed_averages],
    }


def load_scenario(path, check_regions: bool = True) -> Scenario:
    """Read and validate a scenario file.

    With ``check_regions`` the mesh is built to reject empty or overlapping
    wire regions before any solve.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    sc = scenario_from_dict(parse_json(text))
    if check_regions:
        try:
            check_scenario(sc)
        except (ScenarioError, MeshError) as exc:
            raise ConfigError(str(exc)) from exc
    return sc


def dump_scenario(sc: Scenario, path):
    write_text_atomic(path, json.dumps(scenario_to_dict(sc), indent=2) + "\n")


# Tables ---------------------------------------------------------------------

def write_text_atomic(path, text: str):
    path = Path(path)
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


def format_float(v) -> str:
    return repr(float(v))


def csv_text(rows, header) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(c) if isinstance(c, (float, np.floating)) else c for c in row])
    return buf.getvalue()


def write_csv(path, rows, header=("resolution", "quantity", "value")):
    write_text_atomic(path, csv_text(rows, header))


def read_csv(path) -> list[tuple]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [(int(a), b, float(c)) for a, b, c in r]


# Legacy VTK -----------------------------------------------------------------

def _vtk_text(points3, cells, cell_type, fields, title) -> str:
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(points3)} double")
    lines += [" ".join(format_float(c) for c in p) for p in points3]
    size = sum(len(c) + 1 for c in cells)
    lines.append(f"CELLS {len(cells)} {size}")
    lines += [" ".join(str(int(v)) for v in [len(c), *c]) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(cell_type)] * len(cells)
    lines.append(f"POINT_DATA {len(points3)}")
    for name, values in fields.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [format_float(v) for v in values]
    return "\n".join(lines) + "\n"


def export_vtk(mesh: QuadMesh, field, path, name: str = "temperature", title: str = "dimlink bulk field"):
    """Write the bulk field as quads (cell type 9)."""
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_nodes,):
        raise ValueError(f"field has {field.size} values, mesh has {mesh.n_nodes} nodes")
    pts = np.column_stack([mesh.nodes, np.zeros(mesh.n_nodes)])
    write_text_atomic(path, _vtk_text(pts, mesh.elements, 9, {name: field}, title))


def export_wires_vtk(result: FieldResult, path, name: str = "temperature"):
    """Write every wire as a polyline between its region centroids (cell type 3)."""
    pts, cells, vals = [], [], []
    for (ra, rb), theta in zip(result.regions.wire_regions, result.thetas):
        a, b = np.asarray(ra.centroid), np.asarray(rb.centroid)
        s = np.linspace(0.0, 1.0, len(theta))
        base = len(pts)
        pts += [(*(a + t * (b - a)), 0.0) for t in s]
        cells += [(base + k, base + k + 1) for k in range(len(theta) - 1)]
        vals += list(theta)
    write_text_atomic(path, _vtk_text(np.array(pts).reshape(-1, 3), cells, 3, {name: vals}, "dimlink wires"))


def read_vtk(path) -> dict:
    """Parse the subset of legacy ASCII VTK written by this module.

    Returns ``points`` (n x 3), ``cells`` (list of index arrays),
    ``cell_types`` and ``point_data`` (name -> array).
    """
    tokens_by_line = [ln.strip() for ln in Path(path).read_text().splitlines()]
    if len(tokens_by_line) < 4 or not tokens_by_line[0].startswith("# vtk DataFile Version"):
        raise VTKFormatError("missing legacy VTK header")
    if tokens_by_line[2] != "ASCII":
        raise VTKFormatError("only ASCII files are supported")
    if tokens_by_line[3] != "DATASET UNSTRUCTURED_GRID":
        raise VTKFormatError("expected DATASET UNSTRUCTURED_GRID")
    words = " ".join(tokens_by_line[4:]).split()
    pos = 0

    def take(n=1):
        nonlocal pos
        if pos + n > len(words):
            raise VTKFormatError("unexpected end of file")
        out = words[pos:pos + n]
        pos += n
        return out

    def expect(keyword):
        w = take()[0]
        if w != keyword:
            raise VTKFormatError(f"expected {keyword}, found {w!r}")

    try:
        expect("POINTS")
        n_pts, _ = int(take()[0]), take()[0]
        points = np.array(take(3 * n_pts), dtype=float).reshape(n_pts, 3)
        expect("CELLS")
        n_cells, size = int(take()[0]), int(take()[0])
        flat = np.array(take(size), dtype=int)
        cells, k = [], 0
        for _ in range(n_cells):
            m = flat[k]
            cells.append(flat[k + 1:k + 1 + m])
            k += m + 1
        if k != size:
            raise VTKFormatError("CELLS size does not match connectivity")
        expect("CELL_TYPES")
        if int(take()[0]) != n_cells:
            raise VTKFormatError("CELL_TYPES count differs from CELLS")
        cell_types = np.array(take(n_cells), dtype=int)
        point_data = {}
        if pos < len(words):
            expect("POINT_DATA")
            if int(take()[0]) != n_pts:
                raise VTKFormatError("POINT_DATA count differs from POINTS")
            while pos < len(words):
                expect("SCALARS")
                name, _, ncomp = take(3)
                expect("LOOKUP_TABLE")
                take()
                point_data[name] = np.array(take(n_pts * int(ncomp)), dtype=float)
    except ValueError as exc:
        if isinstance(exc, VTKFormatError):
            raise
        raise VTKFormatError(f"bad token: {exc}") from exc
    for c in cells:
        if c.size and (c.min() < 0 or c.max() >= n_pts):
            raise VTKFormatError("cell references a point out of range")
    return {"points": points, "cells": cells, "cell_types": cell_types, "point_data": point_data}
