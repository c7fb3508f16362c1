import json

import jsonschema
import numpy as np
import pytest

from bundlereach.expr import ParseError
from bundlereach.geometry import Box, LinearSystem, LinearSystemSet, box_to_bundle, bundle_from_box_offsets
from bundlereach.modelio import (format_problem, load_model_file, parse_model_file, project_bundle, read_flowpipe,
                                 read_param_sets, read_projection, write_flowpipe, write_param_sets,
                                 write_projection)
from bundlereach.polynomial import AffineForm
from bundlereach.reachability import Flowpipe, compute_flowpipe
from bundlereach.sampling import sample_bundle
from bundlereach.stl import Globally, Interval

from conftest import MODELS

SCHEMAS = MODELS.parents[2] / "docs" / "schemas"


def schema(name):
    return json.loads((SCHEMAS / name).read_text())


class TestParse:
    def test_minimal(self):
        p = parse_model_file("var x; dynamics { x' = 0.5*x; } init box { x in [0,1]; } option steps 3;")
        assert p.model.dim == 1 and p.model.num_params == 0
        assert p.options.steps == 3 and p.spec is None
        assert p.initial_set == box_to_bundle(Box([0.0], [1.0]))

    def test_sir_reach_file(self):
        p = load_model_file(MODELS / "sir_reach.model")
        assert p.model.state_vars == ("s", "i", "r") and p.model.param_vars == ("beta", "gamma")
        assert p.param_set.as_box[0].tolist() == [0.34, 0.05] == p.param_set.as_box[1].tolist()
        assert p.initial_set == box_to_bundle(Box([0.79, 0.19, 0.0], [0.80, 0.20, 0.0]))
        assert p.options.steps == 300

    def test_sir_synth_file(self):
        p = load_model_file(MODELS / "sir_synth.model")
        lo, hi = p.param_set.as_box
        assert lo.tolist() == [0.18, 0.05] and hi.tolist() == [0.20, 0.06]
        assert isinstance(p.spec, Globally) and p.spec.interval == Interval(50, 100)

    def test_dynamics_coefficients(self):
        p = load_model_file(MODELS / "sir_synth.model")
        s_next = p.model.dynamics[0]
        assert s_next.coefficient((1, 1, 0)) == AffineForm(0.0, [-1.0, 0.0])
        assert s_next.coefficient((1, 0, 0)) == AffineForm(1.0, [0.0, 0.0])

    def test_bundle_with_offsets(self):
        text = """var x, y;
        dynamics { x' = x; y' = y; }
        init bundle {
          directions { [1, 0]; [0, 1]; [1, 1]; }
          offsets { [0, 1]; [0, 1]; [0.5, 1.5]; }
          templates { [0, 1]; [1, 2]; }
        }"""
        X = parse_model_file(text).initial_set
        np.testing.assert_array_equal(X.upper, [1.0, 1.0, 1.5])
        np.testing.assert_array_equal(X.lower, [0.0, 0.0, -0.5])
        assert X.templates == ((0, 1), (1, 2))

    def test_bundle_box_offsets(self):
        X = load_model_file(MODELS / "sir_bundle.model").initial_set
        box = Box([0.79, 0.19, 0.0], [0.80, 0.20, 0.0])
        want = bundle_from_box_offsets([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [1, 0, 1], [0, 1, 1]],
                                       [(0, 1, 2), (3, 4, 5), (0, 3, 5)], box)
        assert X == want

    def test_paramset_rows(self):
        p = parse_model_file("""var x; param a in [0, 1]; param b;
            paramset { a + b <= 1.5; b >= -2; }
            dynamics { x' = a*x + b; } init box { x in [0, 1]; }""")
        np.testing.assert_array_equal(p.param_set.A, [[1, 0], [-1, 0], [1, 1], [0, -1]])
        np.testing.assert_array_equal(p.param_set.b, [1, 0, 1.5, 2])

    @pytest.mark.parametrize("text, message, line, col", [
        ("var x;\ndynamics { x' = y; }\ninit box { x in [0,1]; }", "unknown identifier 'y'", 2, 17),
        ("var x; param a; param b;\ndynamics { x' = a*b*x; }\ninit box { x in [0,1]; }", "affine in the parameters",
         2, 18),
        ("var x; param a;\ndynamics { x' = a^2; }\ninit box { x in [0,1]; }", "not affine", 2, 18),
        ("var x;\ndynamics { x' = x / x; }\ninit box { x in [0,1]; }", "division", 2, 19),
        ("var x;\ndynamics { x' = x; }\ninit box { x in [1,0]; }", "malformed interval", 3, 17),
        ("var x, y;\ndynamics { x' = x; y' = y; }\ninit bundle { directions { [1,1]; [2,2]; }\n"
         "offsets { [0,1]; [0,1]; } templates { [0,1]; } }", "singular template", 3, 1),
        ("var x;\ndynamics { x' = x; }", "no initial set", 2, 21),
        ("var x, y;\ndynamics { x' = x; }\ninit box { x in [0,1]; y in [0,1]; }", "missing dynamics for y", 3, 37),
        ("var x;\ndynamics { x' = x; }\ninit box { x in [0,1]; }\nspec !(x <= 1);", "negation", 4, 6),
        ("var x;\ndynamics { x' = sin(x); }\ninit box { x in [0,1]; }", "unknown identifier 'sin'", 2, 17),
        ("var x;\ndynamics { x' = x; }\ninit box { x in [0,1]; }\noption bogus 1;", "unknown option", 4, 8),
        ("var x;\nvar x;", "already declared", 2, 5),
        ("var x; param a in [0, 1];\nparamset { a >= 2; }\ndynamics { x' = x; }\ninit box { x in [0,1]; }",
         "parameter set is empty", 0, 0),
    ])
    def test_errors(self, text, message, line, col):
        with pytest.raises(ParseError, match=message) as info:
            parse_model_file(text)
        assert (info.value.line, info.value.col) == (line, col)

    def test_round_trip_corpus(self):
        paths = sorted(MODELS.glob("*.model"))
        assert len(paths) >= 5
        for path in paths:
            problem = load_model_file(path)
            again = parse_model_file(format_problem(problem))
            assert again == problem, path.name
            assert format_problem(again) == format_problem(problem)


def sir_flowpipe(steps=20, bundle=False):
    p = load_model_file(MODELS / ("sir_bundle.model" if bundle else "sir_reach.model"))
    return compute_flowpipe(p.model, p.initial_set, p.param_set, steps)


class TestFlowpipeJson:
    def test_schema_and_step_count(self, tmp_path):
        fp = sir_flowpipe(12)
        write_flowpipe(fp, tmp_path / "f.json")
        data = json.loads((tmp_path / "f.json").read_text())
        jsonschema.validate(data, schema("flowpipe.schema.json"))
        assert len(data["steps"]) == 13 and data["model"] == "sir"

    def test_bit_exact_round_trip(self, tmp_path):
        fp = sir_flowpipe(12, bundle=True)
        write_flowpipe(fp, tmp_path / "f.json")
        back = read_flowpipe(tmp_path / "f.json")
        for a, b in zip(fp.steps, back.steps):
            assert a == b

    def test_deterministic_bytes(self, tmp_path):
        write_flowpipe(sir_flowpipe(15), tmp_path / "a.json")
        write_flowpipe(sir_flowpipe(15), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_seventeen_digits(self, tmp_path):
        write_flowpipe(sir_flowpipe(1), tmp_path / "f.json")
        assert "0.79000000000000004" in (tmp_path / "f.json").read_text()

    def test_sir_300_steps_validates(self, tmp_path):
        write_flowpipe(sir_flowpipe(300), tmp_path / "f.json")
        data = json.loads((tmp_path / "f.json").read_text())
        jsonschema.validate(data, schema("flowpipe.schema.json"))
        assert len(data["steps"]) == 301

    def test_io_error_names_path(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            write_flowpipe(sir_flowpipe(1), tmp_path / "missing" / "f.json")


class TestParamSetsJson:
    def test_empty(self, tmp_path):
        write_param_sets(LinearSystemSet([], dim=2), tmp_path / "p.json")
        assert json.loads((tmp_path / "p.json").read_text()) == {"members": []}
        jsonschema.validate(json.loads((tmp_path / "p.json").read_text()), schema("param_sets.schema.json"))

    def test_singleton_box(self, tmp_path):
        s = LinearSystemSet([LinearSystem.from_box([0.18, 0.05], [0.2, 0.06])])
        write_param_sets(s, tmp_path / "p.json")
        jsonschema.validate(json.loads((tmp_path / "p.json").read_text()), schema("param_sets.schema.json"))
        assert read_param_sets(tmp_path / "p.json") == s

    def test_sir_synthesized_set_nonempty(self, tmp_path):
        from bundlereach.synthesis import synthesize
        p = load_model_file(MODELS / "sir_synth.model")
        result = synthesize(p.model, p.initial_set, p.param_set, p.spec)
        write_param_sets(result, tmp_path / "p.json")
        data = json.loads((tmp_path / "p.json").read_text())
        jsonschema.validate(data, schema("param_sets.schema.json"))
        assert len(data["members"]) >= 1


class TestProjection:
    def test_box_gives_rectangle(self):
        poly = project_bundle(box_to_bundle(Box([0.0, 1.0, 5.0], [2.0, 3.0, 6.0])), (0, 1))
        corners = {tuple(np.round(v, 12)) for v in poly}
        assert corners == {(0.0, 1.0), (2.0, 1.0), (2.0, 3.0), (0.0, 3.0)}

    def test_counter_clockwise(self):
        fp = sir_flowpipe(30, bundle=True)
        for b in fp.steps[1:]:
            poly = project_bundle(b, (0, 1))
            x, y = poly[:, 0], poly[:, 1]
            assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) >= 0

    def test_contains_sampled_points(self):
        fp = sir_flowpipe(40, bundle=True)
        for b in fp.steps[::5]:
            poly = project_bundle(b, (0, 1))
            pts = sample_bundle(b, 300)[:, :2]
            edges = np.roll(poly, -1, axis=0) - poly
            # inside a counter-clockwise polygon every cross product is >= 0
            cross = edges[None, :, 0] * (pts[:, None, 1] - poly[None, :, 1]) - \
                edges[None, :, 1] * (pts[:, None, 0] - poly[None, :, 0])
            scale = 1e-9 * max(1.0, np.abs(poly).max())
            assert np.all(cross >= -scale)

    def test_degenerate_step(self):
        b = box_to_bundle(Box([0.0, 0.5, 0.0], [1.0, 0.5, 0.0]))
        poly = project_bundle(b, (0, 1))
        assert len(poly) >= 1
        np.testing.assert_allclose(poly[:, 1], 0.5)
        flat = box_to_bundle(Box([0.2, 0.5], [0.2, 0.5]))
        np.testing.assert_allclose(project_bundle(flat, (0, 1)), [[0.2, 0.5]])

    def test_csv_and_script(self, tmp_path):
        fp = sir_flowpipe(5)
        script = write_projection(fp, ("s", "i"), tmp_path / "proj.csv")
        lines = (tmp_path / "proj.csv").read_text().splitlines()
        assert lines[0] == "step,vertex_index,x,y"
        polys = read_projection(tmp_path / "proj.csv")
        assert sorted(polys) == list(range(6)) and all(len(v) == 4 for v in polys.values())
        assert script.name == "proj_plot.py" and "proj.csv" in script.read_text()
        compile(script.read_text(), str(script), "exec")

    def test_unknown_axis(self, tmp_path):
        with pytest.raises(ValueError, match="unknown axis"):
            write_projection(sir_flowpipe(1), ("s", "q"), tmp_path / "p.csv")

    def test_flowpipe_record_projection(self, tmp_path):
        write_flowpipe(sir_flowpipe(3), tmp_path / "f.json")
        write_projection(read_flowpipe(tmp_path / "f.json"), ("i", "r"), tmp_path / "p.csv")
        assert len(read_projection(tmp_path / "p.csv")) == 4
        assert isinstance(sir_flowpipe(0), Flowpipe)
