import json
import subprocess
import sys

import pytest

from rescurve.cli import main, parse_step
from rescurve.errors import ConfigError

SHAPES = {
    "fast": [0.6, 0.45, 0.3, 0.15, 0.05, 0.0, 0.0, 0.0, 0.0],
    "slow": [0.7, 0.7, 0.7, 0.7, 0.56, 0.42, 0.28, 0.14, 0.0],
}


def write_csv(path, units, schema="count", hour=9):
    rows = ["unit_id,timestamp,affected,total" if schema == "count" else "unit_id,timestamp,outage_fraction"]
    for uid, fractions in units.items():
        for day, f in enumerate(fractions):
            ts = f"2021-08-{30 + day:02d}T{hour:02d}:00:00Z" if day < 2 else f"2021-09-{day - 1:02d}T{hour:02d}:00:00Z"
            rows.append(f"{uid},{ts},{round(f * 2000)},2000" if schema == "count" else f"{uid},{ts},{f}")
    path.write_text("\n".join(rows) + "\n")
    return path


def ida_units():
    units = {f"700{i:02d}": [x * (1 - 0.03 * i) for x in SHAPES["fast" if i % 2 else "slow"]] for i in range(6)}
    units["70099"] = [0.05, 0.04, 0.02, 0, 0, 0, 0, 0, 0]
    return units


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run("synth", "--preset", "triangular=40", "--preset", "trapezoidal=40",
               "--noise-sigma", "0.02", "--seed", "7", "--out", d) == 0
    return d


class TestIngest:
    def test_daily_csv(self, tmp_path):
        csv = write_csv(tmp_path / "ida.csv", ida_units())
        assert run("ingest", csv, "--out", tmp_path / "o", "--event", "ida") == 0
        cs = load(tmp_path / "o" / "curveset.json")
        assert len(cs["curves"]) == 6
        assert all(len(c["values"]) == 10 and c["values"][0] == 0 for c in cs["curves"])
        drops = load(tmp_path / "o" / "drop_report.json")["dropped"]
        assert [d["unit_id"] for d in drops] == ["70099"]

    def test_only_low_impact_exits_3(self, tmp_path, capsys):
        csv = write_csv(tmp_path / "low.csv", {"1": [0.05, 0.02, 0.0], "2": [0.08, 0.01, 0.0]})
        assert run("ingest", csv, "--out", tmp_path / "o") == 3
        assert "10%" in capsys.readouterr().err

    def test_fraction_form_matches_count_form(self, tmp_path):
        units = ida_units()
        a = write_csv(tmp_path / "a.csv", units)
        b = write_csv(tmp_path / "b.csv", {u: [round(f * 2000) / 2000 for f in v] for u, v in units.items()},
                      schema="fraction")
        assert run("ingest", a, "--out", tmp_path / "a") == 0
        assert run("ingest", b, "--schema", "fraction", "--out", tmp_path / "b") == 0
        ca, cb = load(tmp_path / "a" / "curveset.json"), load(tmp_path / "b" / "curveset.json")
        assert ca["curves"] == cb["curves"] and ca["grid"] == cb["grid"]

    def test_config_file_and_flag_precedence(self, tmp_path):
        csv = write_csv(tmp_path / "ida.csv", ida_units())
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"min_peak": 0.9, "event": "from-file"}))
        assert run("ingest", csv, "--config", cfg, "--out", tmp_path / "o") == 3
        assert run("ingest", csv, "--config", cfg, "--min-peak", "0.1", "--out", tmp_path / "o") == 0
        assert load(tmp_path / "o" / "curveset.json")["event_name"] == "from-file"

    @pytest.mark.parametrize("content", ['{"colour": 1}', "[1, 2]", "not json", '{"min_peak": 3}'])
    def test_bad_config_exits_2(self, tmp_path, content):
        csv = write_csv(tmp_path / "ida.csv", ida_units())
        cfg = tmp_path / "cfg.json"
        cfg.write_text(content)
        assert run("ingest", csv, "--config", cfg, "--out", tmp_path / "o") == 2

    def test_missing_file_exits_3(self, tmp_path):
        assert run("ingest", tmp_path / "nope.csv", "--out", tmp_path / "o") == 3

    def test_six_hour_grid(self, tmp_path):
        csv = write_csv(tmp_path / "ice.csv", ida_units())
        assert run("ingest", csv, "--grid-step", "6h", "--max-missing-ratio", "0.9", "--out", tmp_path / "o") == 0
        assert load(tmp_path / "o" / "curveset.json")["grid"]["step_seconds"] == 6 * 3600


def test_parse_step():
    assert parse_step("6h").total_seconds() == 21600
    assert parse_step("1d").total_seconds() == 86400
    assert parse_step("900s").total_seconds() == 900
    with pytest.raises(ConfigError):
        parse_step("soon")


class TestSelectK:
    def test_nine_rows_recommends_two_and_is_repeatable(self, synth_dir, tmp_path):
        args = ("select-k", synth_dir / "curveset.json", "--k-min", 2, "--k-max", 10, "--seed", 1, "--restarts", 1)
        assert run(*args, "--out", tmp_path / "a") == 0
        assert run(*args, "--out", tmp_path / "b") == 0
        rep = load(tmp_path / "a" / "ksweep.json")
        assert [r["k"] for r in rep["rows"]] == list(range(2, 11))
        assert rep["recommended_k"] == 2
        assert (tmp_path / "a" / "ksweep.json").read_bytes() == (tmp_path / "b" / "ksweep.json").read_bytes()

    def test_seed_is_mandatory(self, synth_dir, tmp_path, capsys):
        assert run("select-k", synth_dir / "curveset.json", "--out", tmp_path) == 2
        assert "--seed" in capsys.readouterr().err

    def test_bad_range(self, synth_dir, tmp_path):
        assert run("select-k", synth_dir / "curveset.json", "--seed", 0, "--k-min", 5, "--k-max", 3,
                   "--out", tmp_path) == 2

    def test_bad_curveset_is_data_error(self, tmp_path):
        (tmp_path / "cs.json").write_text("{}")
        assert run("select-k", tmp_path / "cs.json", "--seed", 0, "--out", tmp_path) == 3


class TestAnalyze:
    def test_mixed_k2(self, synth_dir, tmp_path):
        assert run("analyze", synth_dir / "curveset.json", "--k", 2, "--seed", 0, "--out", tmp_path) == 0
        labels = sorted(r["label"] for r in load(tmp_path / "archetypes.json")["reports"])
        assert labels == ["Trapezoidal", "Triangular"]

    def test_k1_single_report(self, synth_dir, tmp_path):
        assert run("analyze", synth_dir / "curveset.json", "--k", 1, "--seed", 0, "--out", tmp_path) == 0
        assert len(load(tmp_path / "archetypes.json")["reports"]) == 1
        assert len(load(tmp_path / "clusters.json")["clusters"][0]["members"]) == 80

    def test_flat_heavy_lists_fake_peaks(self, tmp_path):
        d = tmp_path / "flat"
        assert run("synth", "--preset", "flat=30", "--preset", "triangular=6", "--noise-sigma", "0.02",
                   "--seed", "3", "--out", d) == 0
        assert run("analyze", d / "curveset.json", "--k", 2, "--seed", 0, "--out", d) == 0
        reps = load(d / "archetypes.json")["reports"]
        flat = [r for r in reps if r["label"] == "Flat"]
        assert len(flat) == 1
        assert any(e["kind"] == "fake peak" for e in flat[0]["evidence"])

    def test_requires_k(self, synth_dir, tmp_path):
        assert run("analyze", synth_dir / "curveset.json", "--seed", 0, "--out", tmp_path) == 2


class TestPlot:
    def test_counts_and_determinism(self, synth_dir, tmp_path):
        assert run("analyze", synth_dir / "curveset.json", "--k", 2, "--seed", 0, "--out", tmp_path) == 0
        assert run("plot", tmp_path, "--out", tmp_path / "p1") == 0
        assert run("plot", tmp_path, "--out", tmp_path / "p2") == 0
        svgs = sorted(p.name for p in (tmp_path / "p1").glob("*.svg"))
        assert svgs == ["clusters.svg", "triptych_cluster0.svg", "triptych_cluster1.svg"]
        assert (tmp_path / "p1" / "plot_data.json").exists()
        for name in svgs:
            assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()

    def test_empty_report_exits_2(self, tmp_path):
        (tmp_path / "ksweep.json").write_text(json.dumps({"rows": []}))
        assert run("plot", tmp_path) == 2

    def test_malformed_report_exits_2(self, tmp_path):
        (tmp_path / "clusters.json").write_text("{broken")
        (tmp_path / "archetypes.json").write_text("{}")
        assert run("plot", tmp_path) == 2

    def test_no_reports_exits_2(self, tmp_path):
        assert run("plot", tmp_path) == 2


def test_synth_writes_ground_truth(synth_dir):
    truth = load(synth_dir / "ground_truth.json")
    assert len(truth["labels"]) == 80 and set(truth["labels"].values()) == {"triangular", "trapezoidal"}


def test_synth_errors(tmp_path):
    assert run("synth", "--preset", "triangular=4", "--out", tmp_path) == 2
    assert run("synth", "--preset", "hexagonal=4", "--seed", 1, "--out", tmp_path) == 2
    assert run("synth", "--seed", 1, "--out", tmp_path) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rescurve.cli", "synth", "--preset", "flat=2", "--seed", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "curveset.json").exists()
