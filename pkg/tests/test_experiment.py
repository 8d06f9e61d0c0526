import math

import pytest

from gibbsmle.config import ConfigError, parse_keyvalue
from gibbsmle.experiment import (
    ConsistencyReport,
    ExperimentSpec,
    plot_from_csv,
    read_csv,
    run_consistency,
    simulate_observation,
)
from gibbsmle.geometry import Window
from gibbsmle.models import GibbsModel

HC = GibbsModel.hardcore_strauss(0.0, 0.3, 0.1, 0.05)


def test_spec_from_keys_round_trip():
    text = ("kind = hardcore_strauss\nz = 0\nbeta = 0.3\nR = 0.1\ndelta = 0.05\n"
            "ladder = 2, 4\nreplicates = 3\nestimator = hardcore\n"
            "box.z = -1:1\ndelta_interval = 0:0.5\n")
    spec = ExperimentSpec.from_keys(parse_keyvalue(text))
    assert spec.model == HC and spec.ladder == (2.0, 4.0) and spec.box == {"z": (-1.0, 1.0)}
    assert spec.parameters == ("delta",)
    assert ExperimentSpec.from_keys(spec.to_keys()) == spec


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec(HC, ladder=(4, 2))
    with pytest.raises(ConfigError):
        ExperimentSpec(HC, replicates=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(HC, estimator="bayes")
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentSpec.from_keys({"kind": "poisson", "z": "0", "colour": "red"})


def test_simulate_observation_window():
    spec = ExperimentSpec(HC, sim_sweeps=50)
    data, w = simulate_observation(spec, 2.0, 1)
    assert w == Window.centered(2.0) and data.window == w
    again, _ = simulate_observation(spec, 2.0, 1)
    assert again == data


def test_single_rung_single_replicate():
    spec = ExperimentSpec(HC, ladder=(2,), replicates=1, sim_sweeps=50, estimator="hardcore")
    report = run_consistency(spec)
    assert len(report.rows) == 1
    assert report.rows[0]["status"] == "ok"
    assert report.rows[0]["est_delta"] >= 0.05
    with pytest.raises(ValueError):
        ConsistencyReport(spec, report.rows * 2)


def test_hardcore_error_decreases():
    spec = ExperimentSpec(HC, ladder=(2, 4, 8), replicates=6, sim_sweeps=100,
                          estimator="hardcore", seed=3)
    med = run_consistency(spec).medians("delta")
    assert med[0] > med[1] > med[2]


def test_failures_recorded_and_rung_flagged():
    # almost every pattern is empty, so the fits fail
    spec = ExperimentSpec(GibbsModel.strauss(6.0, 0.5, 0.1), ladder=(0.5,), replicates=4,
                          sim_sweeps=20)
    report = run_consistency(spec)
    assert report.failed_rungs == [0.5]
    assert all(r["status"].startswith("InfeasibleData") for r in report.rows if r["status"] != "ok")
    s = report.summary()[0]
    assert s["successes"] < 2 and (s["successes"] or math.isnan(s["median_z"]))


def test_outputs_deterministic_and_plot_regenerable(tmp_path):
    spec = ExperimentSpec(HC, ladder=(2, 3), replicates=2, sim_sweeps=50, estimator="hardcore")
    a = run_consistency(spec).write(tmp_path / "a")
    b = run_consistency(spec).write(tmp_path / "b")
    for key in ("replicates", "summary", "plot", "spec"):
        assert a[key].read_bytes() == b[key].read_bytes()
    rows = read_csv(a["replicates"])
    assert len(rows) == 4 and rows[0]["status"] == "ok"
    plot_from_csv(a["summary"], tmp_path / "again.svg")
    assert (tmp_path / "again.svg").read_bytes() == a["plot"].read_bytes()
    assert a["plot"].read_text().startswith("<svg")
