from __future__ import annotations

import csv
import io
import json
import os
import re
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pemsim.cli import builtin_configs, main, read_config_text
from pemsim.harness.config import ConfigError, ConfigWarning, parse_experiment_config
from pemsim.harness.io import parse_csv, read_csv, records_to_csv, write_outputs
from pemsim.harness.plot import BINS, bin_color, density_bins, emit_scatter, scatter_svg
from pemsim.harness.runner import RunRecord, episode_seed, make_record, run_experiment, splitmix64
from pemsim.metrics import EpisodeMetrics

MINIMAL = """
schema: 1
base_seed: 1
runs_per_cell: 1
scenarios: [{name: s, id: TC4, pems: [perfect]}]
pems: [{name: perfect, models: {daylight: {all: {}}}}]
"""

MARKOV = """
schema: 1
base_seed: 99
runs_per_cell: 3
scenarios:
  - {name: tc1, id: TC1, params: {lead_speed: [7, 10]}, pems: [markov]}
pems:
  - name: markov
    models:
      daylight:
        all:
          false_negative: {steady_state_p: $p, mean_sojourn_s: $sojourn}
    grid: {sojourn: [5, 0.5], p: [0.9, 0.5]}
"""


class TestConfig:
    def test_minimal(self):
        m = parse_experiment_config(MINIMAL)
        assert len(m.cells) == 1 and m.episode_count == 1

    def test_shipped_tc1_3_grid(self):
        m = parse_experiment_config(read_config_text("@tc1_3_markov"))
        assert len(m.cells) == 75 and m.episode_count == 2250

    def test_shipped_default(self):
        m = parse_experiment_config(read_config_text("@default_experiment"))
        assert m.runs_per_cell == 30
        assert len({c.cell_id for c in m.cells}) == len(m.cells)

    def test_all_builtins_validate(self):
        for name in builtin_configs():
            assert parse_experiment_config(read_config_text("@" + name)).cells

    def test_sojourn_zero_rejected(self):
        bad = MARKOV.replace("sojourn: [5, 0.5]", "sojourn: [0, 0.5]")
        with pytest.raises(ConfigError, match=re.escape("(0.0s,10s]")):
            parse_experiment_config(bad)

    def test_grid_order(self):
        m = parse_experiment_config(MARKOV)
        got = [(dict(c.scenario_params)["lead_speed"], dict(c.pem_params)["p"], dict(c.pem_params)["sojourn"])
               for c in m.cells]
        assert got == [(7, 0.5, 0.5), (7, 0.5, 5), (7, 0.9, 0.5), (7, 0.9, 5),
                       (10, 0.5, 0.5), (10, 0.5, 5), (10, 0.9, 0.5), (10, 0.9, 5)]
        assert [c.cell_id for c in m.cells] == [f"c{i:05d}" for i in range(8)]
        assert m.pem_vars == ("p", "sojourn")

    def test_sigma_warning_not_error(self):
        doc = MINIMAL.replace("all: {}", "all: {position_noise: {sigma_d: 0.2, sigma_theta_deg: 1.0}}")
        with pytest.warns(ConfigWarning, match="sigma_d"):
            m = parse_experiment_config(doc)
        assert m.warnings

    @pytest.mark.parametrize("mutation,path", [
        (("runs_per_cell: 1", "runs_per_cell: 1\nbogus: 3"), "bogus"),
        (("id: TC4", "id: TC7"), "scenarios[0].id"),
        (("pems: [perfect]", "pems: [nope]"), "scenarios[0].pems[0]"),
        (("schema: 1", "schema: 2"), "schema"),
        (("all: {}", "all: {tracking_loss: {p_tl: 1.5}}"), "p_tl"),
        (("all: {}", "all: {false_negative: {steady_state_p: 0.5}}"), "mean_sojourn_s"),
        (("all: {}", "all: {teleport: {}}"), "teleport"),
        (("{name: s, id: TC4,", "{name: s, id: TC4, params: {ped_distance: 1000},"), "params"),
    ])
    def test_errors_name_the_path(self, mutation, path):
        doc = MINIMAL.replace(*mutation)
        with pytest.raises(ConfigError) as info:
            parse_experiment_config(doc)
        assert path in str(info.value)

    def test_unused_axis(self):
        with pytest.raises(ConfigError, match="never referenced"):
            parse_experiment_config(MARKOV.replace("p: [0.9, 0.5]", "p: [0.9, 0.5], q: [1]"))

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError):
            parse_experiment_config("schema: [1")


class TestSeeds:
    def test_splitmix_reference_values(self):
        # reference outputs of the SplitMix64 generator seeded with 0
        state, outs = 0, []
        for _ in range(3):
            outs.append(splitmix64(state))
            state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
        assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    @pytest.mark.slow
    def test_no_collisions_over_a_million(self):
        seen = set()
        for c in range(1000):
            for r in range(1000):
                seen.add(episode_seed(20220607, c, r))
        assert len(seen) == 1_000_000


PRINTABLE = st.characters(blacklist_categories=("Cc", "Cs"))


def _metrics(x):
    return EpisodeMetrics(x, 1.5, 60.0, False, 0.75, 0.3, None, "goal_reached")


class TestCsv:
    def _records(self, n=3):
        m = parse_experiment_config(MARKOV)
        recs = []
        for i, cell in enumerate(m.cells[:n]):
            for r in range(2):
                rec = make_record(cell, r, episode_seed(1, i, r), _metrics(1.0 / 3 + i))
                recs.append(rec)
        return m, recs

    def test_single_record(self):
        m, recs = self._records(n=1)
        text = records_to_csv(recs[:1], m.pem_vars)
        assert len(text.splitlines()) == 2
        header = text.splitlines()[0].split(",")
        assert header[:5] == ["cell_id", "run_index", "seed", "scenario", "scenario_id"]
        assert header[-9:-3] == ["min_spatial_m", "min_temporal_s", "collided", "detection_freq",
                                 "max_nondetect_s", "outcome"]

    def test_round_trip(self):
        m, recs = self._records()
        text = records_to_csv(recs, m.pem_vars)
        assert parse_csv(text) == sorted(recs, key=lambda r: r.key)
        assert "0.333333" in text

    def test_sorted_output(self):
        m, recs = self._records()
        text = records_to_csv(list(reversed(recs)), m.pem_vars)
        keys = [(row[0], int(row[1])) for row in list(csv.reader(io.StringIO(text)))[1:]]
        assert keys == sorted(keys)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            records_to_csv([])

    @settings(max_examples=100)
    @given(st.text(PRINTABLE, min_size=1, max_size=30), st.text(PRINTABLE, max_size=60))
    def test_fuzzed_names_survive(self, name, anomaly):
        rec = RunRecord("c00000", 0, 5, name, "TC1", (("lead_speed", 7.0),), name[::-1], (("p", 0.5),),
                        1.0, 2.0, False, 0.5, 0.1, "goal_reached", 3.0, None, anomaly)
        text = records_to_csv([rec], ["p"])
        rows = list(csv.reader(io.StringIO(text, newline="")))
        assert len(rows) == 2 and len(rows[1]) == len(rows[0])
        assert parse_csv(text) == [rec]


class TestSvg:
    def _parse(self, svg):
        root = ET.fromstring(svg)
        ns = {"s": "http://www.w3.org/2000/svg"}
        g = root.find(".//s:g[@id='points']", ns)
        return root, g, g.findall("s:circle", ns)

    @staticmethod
    def _data_xy(g, circle):
        x0, y0, w, h = map(float, g.get("data-plot").split())
        xmin, xmax = float(g.get("data-xmin")), float(g.get("data-xmax"))
        ymin, ymax = float(g.get("data-ymin")), float(g.get("data-ymax"))
        px, py = map(float, re.match(r"translate\(([^,]+),([^)]+)\)", circle.get("transform")).groups())
        return xmin + (px - x0) / w * (xmax - xmin), ymin + (y0 + h - py) / h * (ymax - ymin)

    def test_single_point(self):
        _, g, circles = self._parse(scatter_svg([0.7], [2.5], "detection_freq", "min_temporal_s"))
        assert len(circles) == 1
        x, y = self._data_xy(g, circles[0])
        assert x == pytest.approx(0.7, abs=1e-3) and y == pytest.approx(2.5, abs=1e-3)

    def test_two_identical_points(self):
        _, _, circles = self._parse(scatter_svg([1.0, 1.0], [2.0, 2.0], "a", "b"))
        assert len(circles) == 1
        assert circles[0].get("data-count") == "2"
        assert circles[0].get("fill") == bin_color(2, 2) == "#ffff00"

    def test_colour_ramp(self):
        assert bin_color(1, 10) == "#0000ff"
        assert bin_color(10, 10) == "#ffff00"

    def test_binning_grid(self):
        xs = [i / 999 for i in range(1000)]
        cells, _ = density_bins(xs, xs)
        assert len(cells) == BINS
        assert sum(c for *_, c in cells) == 1000

    def test_labels_and_determinism(self):
        a = scatter_svg([1, 2, 3], [3, 1, 2], "min_spatial_m", "success_rate")
        assert a == scatter_svg([1, 2, 3], [3, 1, 2], "min_spatial_m", "success_rate")
        assert "min_spatial_m (m)" in a and "success_rate (fraction)" in a

    def test_empty_selection(self, tmp_path):
        with pytest.raises(ValueError):
            emit_scatter([], "a", "b", tmp_path / "x.svg")


def crashing_runner(cell, policy, seed):
    if seed % 3 == 0:
        raise RuntimeError("injected failure")
    return _metrics(float(seed % 7))


class TestRunner:
    def test_parallel_matches_serial(self):
        m = parse_experiment_config(MARKOV)
        a = run_experiment(m, 1)
        b = run_experiment(m, 2)
        assert records_to_csv(a.records, m.pem_vars) == records_to_csv(b.records, m.pem_vars)
        assert a.summaries == b.summaries

    def test_crash_isolation(self):
        m = parse_experiment_config(MARKOV)
        for workers in (1, 2):
            res = run_experiment(m, workers, runner=crashing_runner)
            assert len(res.records) == m.episode_count
            bad = [r for r in res.records if r.anomaly]
            assert bad and all(r.seed % 3 == 0 and r.outcome == "anomaly" for r in bad)
            assert all("injected failure" in r.anomaly for r in bad)
            assert sum(s.anomalies for _, s in res.summaries) == len(bad)

    def test_perfect_cell_baseline(self):
        m = parse_experiment_config(MINIMAL.replace("runs_per_cell: 1", "runs_per_cell: 3"))
        (cell, summary), = run_experiment(m, 1).summaries
        assert summary.success_rate == 1.0

    def test_env_parallelism(self, monkeypatch):
        from pemsim.harness.runner import default_parallelism
        monkeypatch.setenv("PEMSIM_WORKERS", "3")
        assert default_parallelism() == 3
        monkeypatch.setenv("PEMSIM_WORKERS", "zero")
        with pytest.raises(ValueError):
            default_parallelism()

    def test_outputs_and_manifest(self, tmp_path):
        m = parse_experiment_config(MINIMAL)
        res = run_experiment(m, 1)
        man = write_outputs(tmp_path, MINIMAL, m, res)
        assert man["status"] == "complete"
        assert sorted(os.listdir(tmp_path)) == ["manifest.json", "runs.csv", "summary.csv", "summary.json"]
        assert read_csv(tmp_path / "runs.csv") == list(res.records)
        json.loads((tmp_path / "summary.json").read_text())

    def test_partial_manifest_on_io_error(self, tmp_path):
        m = parse_experiment_config(MINIMAL)
        res = run_experiment(m, 1)
        (tmp_path / "summary.csv").mkdir()  # makes the second write fail
        with pytest.raises(OSError):
            write_outputs(tmp_path, MINIMAL, m, res)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["status"] == "partial" and list(man["files"]) == ["runs.csv"]


class TestCli:
    def test_validate_default(self, capsys):
        assert main(["validate", "--config", "@default_experiment"]) == 0
        assert "cells" in capsys.readouterr().out

    def test_missing_config(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path / "o")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["validate", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand(self):
        assert main([]) == 1

    def test_bad_config(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(MINIMAL.replace("schema: 1", "schema: 9"))
        assert main(["validate", "--config", str(p)]) == 1

    def test_io_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        p = tmp_path / "c.yaml"
        p.write_text(MINIMAL)
        assert main(["run", "--config", str(p), "--out", str(blocker / "sub"), "--parallel", "1", "--quiet"]) == 2

    def test_list_scenarios(self, capsys):
        assert main(["list-scenarios"]) == 0
        out = capsys.readouterr().out
        assert all(s in out for s in ("TC1", "TC4", "TC5"))

    @pytest.mark.slow
    def test_end_to_end_tc5b(self, tmp_path):
        out = tmp_path / "tc5b"
        assert main(["run", "--config", "@tc5b_tracking_loss", "--out", str(out), "--parallel", "2", "--quiet"]) == 0
        svg = tmp_path / "p_tl.svg"
        assert main(["plot", "--in", str(out / "summary.csv"), "--x", "p_tl", "--y", "success_rate",
                     "--out", str(svg)]) == 0
        root = ET.parse(svg).getroot()
        assert root.tag.endswith("svg")
        with open(out / "summary.csv", newline="") as fh:
            rates = [float(r["success_rate"]) for r in csv.DictReader(fh)]
        assert rates[0] == 1.0 and rates[0] > rates[2]

    def test_plot_errors(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b\n1,2\n")
        assert main(["plot", "--in", str(p), "--x", "a", "--y", "zzz", "--out", str(tmp_path / "o.svg")]) == 1
        assert main(["plot", "--in", str(p), "--x", "a", "--y", "b", "--where", "a=9",
                     "--out", str(tmp_path / "o.svg")]) == 1
        assert main(["plot", "--in", str(tmp_path / "nope.csv"), "--x", "a", "--y", "b",
                     "--out", str(tmp_path / "o.svg")]) == 2
