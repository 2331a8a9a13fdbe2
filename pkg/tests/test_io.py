"""Tests for scenario/plan/report JSON and surface/trace CSV round-trips."""
from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from ablateplan.feedback import TraceRow
from ablateplan.io import (
    ParseError,
    PlanFile,
    config_hash,
    load_plan,
    load_scenario,
    read_surface_csv,
    save_plan,
    save_report,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    write_surface_csv,
    write_trace_csv,
)
from ablateplan.model import LaserAction, TissueSurface
from ablateplan.scenarios import ScenarioValidationError, gen_tumor_3d, gen_two_cut


@pytest.fixture(scope="module")
def scenario():
    return gen_two_cut(n=20)


class TestScenarioRoundTrip:
    def test_json_round_trip(self, scenario, tmp_path):
        path = tmp_path / "scenario.json"
        save_scenario(scenario, path)
        loaded = load_scenario(path)
        assert loaded.kind == scenario.kind
        assert loaded.dimension == scenario.dimension
        assert np.array_equal(loaded.initial_surface.points, scenario.initial_surface.points)
        assert np.array_equal(loaded.objective.z, scenario.objective.z)
        assert np.array_equal(loaded.constraint.z, scenario.constraint.z)
        assert loaded.nominal_params == scenario.nominal_params
        assert loaded.sampler == scenario.sampler
        assert loaded.solver == scenario.solver
        assert loaded.seed == scenario.seed

    def test_3d_round_trip(self, tmp_path):
        scenario = gen_tumor_3d(nx=10, ny=12, torus=None)
        path = tmp_path / "scenario.json"
        save_scenario(scenario, path)
        loaded = load_scenario(path)
        assert loaded.initial_surface.grid_shape == (10, 12)
        assert np.array_equal(loaded.initial_surface.points, scenario.initial_surface.points)

    def test_save_is_deterministic(self, scenario, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_scenario(scenario, a)
        save_scenario(scenario, b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_field(self, scenario):
        data = scenario_to_dict(scenario)
        del data["objective"]
        with pytest.raises(ParseError):
            scenario_from_dict(data)

    def test_unsupported_schema(self, scenario):
        data = scenario_to_dict(scenario)
        data["schema"] = 99
        with pytest.raises(ParseError):
            scenario_from_dict(data)

    def test_dimension_mismatch(self, scenario):
        data = scenario_to_dict(scenario)
        data["dimension"] = 3
        with pytest.raises(ParseError):
            scenario_from_dict(data)

    def test_load_validates_ordering(self, scenario, tmp_path):
        data = scenario_to_dict(scenario)
        # Push the constraint above the objective everywhere.
        data["constraint"]["z"] = [z + 10.0 for z in data["constraint"]["z"]]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(ScenarioValidationError):
            load_scenario(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ParseError):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(tmp_path / "nope.json")


class TestPlanRoundTrip:
    def make_plan(self):
        return PlanFile(
            algorithm="graph",
            seed=7,
            config_hash="abc123",
            dt=1.0,
            actions=[
                LaserAction.vertical(-1.0, 5.0),
                LaserAction((0.5,), (0.3,), 2.0),
            ],
            predicted_costs=[3.5, 1.25],
            predicted_final_mse=0.125,
        )

    def test_round_trip(self, tmp_path):
        plan = self.make_plan()
        path = tmp_path / "plan.json"
        save_plan(plan, path)
        loaded = load_plan(path)
        assert loaded == plan

    def test_byte_identical_saves(self, tmp_path):
        plan = self.make_plan()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_plan(plan, a)
        save_plan(plan, b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_field(self, tmp_path):
        plan = self.make_plan()
        path = tmp_path / "plan.json"
        save_plan(plan, path)
        data = json.loads(path.read_text(encoding="utf-8"))
        del data["actions"]
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(ParseError):
            load_plan(path)

    def test_malformed_action(self, tmp_path):
        plan = self.make_plan()
        path = tmp_path / "plan.json"
        save_plan(plan, path)
        data = json.loads(path.read_text(encoding="utf-8"))
        del data["actions"][0]["power"]
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(ParseError):
            load_plan(path)


class TestSurfaceCsv:
    def test_2d_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        surface = TissueSurface(rng.normal(size=(17, 2)))
        path = tmp_path / "surface.csv"
        write_surface_csv(surface, path)
        loaded = read_surface_csv(path)
        assert np.array_equal(loaded.points, surface.points)

    def test_3d_round_trip_with_grid(self, tmp_path):
        scenario = gen_tumor_3d(nx=6, ny=5, torus=None)
        path = tmp_path / "surface.csv"
        write_surface_csv(scenario.initial_surface, path)
        loaded = read_surface_csv(path, grid_shape=(6, 5))
        assert np.array_equal(loaded.points, scenario.initial_surface.points)
        assert loaded.grid_shape == (6, 5)

    def test_header_required(self, tmp_path):
        path = tmp_path / "surface.csv"
        path.write_text("a,b\n1.0,2.0\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_surface_csv(path)

    def test_bad_number(self, tmp_path):
        path = tmp_path / "surface.csv"
        path.write_text("x,z\n1.0,oops\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_surface_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            read_surface_csv(tmp_path / "nope.csv")


class TestTraceCsv:
    def test_2d_header_and_rows(self, tmp_path):
        trace = [
            TraceRow(1, LaserAction.vertical(-1.0, 5.0), 0.5, 0),
            TraceRow(2, LaserAction((0.5,), (0.3,), 2.0), 0.25, 1),
        ]
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, 2, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "cut,x,theta,power,mse,violations"
        assert len(lines) == 3
        assert lines[1].startswith("1,-1.0,0.0,5.0,")

    def test_3d_header(self, tmp_path):
        trace = [TraceRow(1, LaserAction((0.0, 0.0), (0.0, 0.0), 1.0), 0.1, 0)]
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, 3, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "cut,x,y,theta_x,theta_y,power,mse,violations"
        assert len(lines) == 2


class TestReportAndHash:
    def test_report_has_schema(self, tmp_path):
        path = tmp_path / "report.json"
        save_report({"mse": 0.5}, path)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["schema"] == 1
        assert data["mse"] == 0.5

    def test_config_hash_stable_and_discriminating(self, scenario):
        h1 = config_hash(scenario.sampler)
        h2 = config_hash(scenario.sampler)
        assert h1 == h2 and len(h1) == 16
        bumped = dataclasses.replace(scenario.sampler, k_f=scenario.sampler.k_f + 1)
        assert config_hash(bumped) != h1
