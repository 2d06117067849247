import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from dimlink import experiments as ex
from dimlink.io import (
    ConfigError,
    VTKFormatError,
    csv_text,
    dump_scenario,
    export_vtk,
    export_wires_vtk,
    load_scenario,
    parse_json,
    read_csv,
    read_vtk,
    scenario_from_dict,
    scenario_schema,
    scenario_to_dict,
    write_csv,
)
from dimlink.mesh import build_rect_mesh
from dimlink.scenario import run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def example_doc():
    return scenario_to_dict(ex.dissimilar_regions_scenario(16))


def test_schema_is_valid_json_schema():
    import jsonschema

    jsonschema.Draft202012Validator.check_schema(scenario_schema())


@pytest.mark.parametrize("name,builtin", [
    ("example1.json", lambda: ex.dissimilar_regions_scenario(256)),
    ("example2_grid4.json", lambda: ex.region_grid_scenario(4)),
    ("example3_reference.json", lambda: ex.inference_reference_scenario()),
    ("manufactured32.json", lambda: ex.manufactured_scenario(32)),
])
def test_shipped_configs_match_builtins(name, builtin):
    assert load_scenario(CONFIGS / name) == builtin()


def test_round_trip(tmp_path):
    for sc in (ex.dissimilar_regions_scenario(32), ex.region_grid_scenario(2), ex.inference_reference_scenario()):
        dump_scenario(sc, tmp_path / "s.json")
        assert load_scenario(tmp_path / "s.json") == sc


def test_unknown_key_reports_path():
    doc = example_doc()
    doc["wires"][0]["colour"] = "red"
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.path == "$.wires[0]"


def test_missing_key_reports_path():
    doc = example_doc()
    del doc["mesh"]["nx"]
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.path == "$.mesh"
    assert "nx" in str(info.value)


def test_bad_value_reports_path():
    doc = example_doc()
    doc["wires"][0]["kappa"] = -1.0
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.path.startswith("$.wires[0]")


@pytest.mark.parametrize("text", ['{"kappa": NaN}', '{"kappa": Infinity}', '{"kappa": -Infinity}', '{"kappa": 1e999}'])
def test_non_finite_rejected(text):
    with pytest.raises(ConfigError):
        parse_json(text)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError, match="malformed"):
        load_scenario(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "missing.json")


def test_overlapping_regions_rejected(tmp_path):
    doc = example_doc()
    doc["wires"][0]["end"] = {"shape": "circle", "center": [-0.5, -0.5], "radius": 0.4}
    p = tmp_path / "overlap.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="disjoint"):
        load_scenario(p)


def test_semantic_errors_get_a_path():
    doc = example_doc()
    doc["dirichlet"][0]["profile"] = "tabulated"
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(doc)
    assert info.value.path == "$.dirichlet[0]"


def test_csv_uses_round_trip_floats(tmp_path):
    rows = [(8, "a", 0.1), (16, "b", 1 / 3), (32, "c", -2.5e-300)]
    write_csv(tmp_path / "t.csv", rows)
    assert read_csv(tmp_path / "t.csv") == rows
    assert csv_text(rows, ("resolution", "quantity", "value")).splitlines()[2] == "16,b,0.3333333333333333"


def test_vtk_single_element(tmp_path):
    m = build_rect_mesh((0, 0), (1, 1), 1, 1)
    export_vtk(m, np.arange(4.0), tmp_path / "one.vtk")
    d = read_vtk(tmp_path / "one.vtk")
    assert d["points"].shape == (4, 3) and len(d["cells"]) == 1
    np.testing.assert_array_equal(d["cell_types"], [9])


def test_vtk_round_trip(tmp_path):
    m = build_rect_mesh((-1, -1), (2, 2), 7, 5)
    field = np.sin(m.nodes[:, 0] * 3.1) * 400 + np.pi
    export_vtk(m, field, tmp_path / "f.vtk")
    d = read_vtk(tmp_path / "f.vtk")
    np.testing.assert_allclose(d["points"][:, :2], m.nodes, rtol=0, atol=1e-12)
    np.testing.assert_allclose(d["point_data"]["temperature"], field, rtol=1e-12)
    np.testing.assert_array_equal(np.array(d["cells"]), m.elements)
    with pytest.raises(ValueError):
        export_vtk(m, field[:-1], tmp_path / "g.vtk")


def test_vtk_readable_by_meshio(tmp_path):
    meshio = pytest.importorskip("meshio")
    m = build_rect_mesh((0, 0), (2, 1), 4, 2)
    export_vtk(m, m.nodes[:, 0], tmp_path / "f.vtk")
    mm = meshio.read(tmp_path / "f.vtk")
    assert mm.points.shape == (15, 3)
    assert mm.cells[0].type == "quad" and len(mm.cells[0].data) == 8
    np.testing.assert_allclose(np.ravel(mm.point_data["temperature"]), m.nodes[:, 0])


def test_wire_vtk(tmp_path):
    r = run(ex.dissimilar_regions_scenario(16))
    export_wires_vtk(r, tmp_path / "w.vtk")
    d = read_vtk(tmp_path / "w.vtk")
    assert len(d["cells"]) == 8 and set(d["cell_types"]) == {3}
    np.testing.assert_allclose(d["point_data"]["temperature"], r.thetas[0], rtol=1e-15)


def test_vtk_reader_rejects_garbage(tmp_path):
    p = tmp_path / "x.vtk"
    p.write_text("hello\n")
    with pytest.raises(VTKFormatError):
        read_vtk(p)


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10, 300) | st.floats(-1e3, 1e3) | st.text(max_size=6),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=20,
)


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(doc=json_values)
def test_fuzz_arbitrary_documents(doc):
    try:
        scenario_from_dict(doc)
    except ConfigError:
        pass


MUTATION_KEYS = ["mesh", "kappa", "dirichlet", "source", "wires", "fixed_averages", "nx", "radius", "side"]


def _mutate(doc, key, value):
    if isinstance(doc, dict):
        return {k: (value if k == key else _mutate(v, key, value)) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_mutate(v, key, value) for v in doc]
    return doc


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(key=st.sampled_from(MUTATION_KEYS), value=json_values)
def test_fuzz_mutated_documents(tmp_path_factory, key, value):
    doc = _mutate(scenario_to_dict(ex.dissimilar_regions_scenario(4)), key, value)
    p = tmp_path_factory.mktemp("fz") / "s.json"
    p.write_text(json.dumps(doc))
    try:
        load_scenario(p)
    except ConfigError:
        pass
