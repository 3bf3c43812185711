import csv
import json
import math
import re
from xml.etree import ElementTree

import pytest
import yaml
from click.testing import CliRunner
from hypothesis import given, settings
from hypothesis import strategies as st

from polyzeros.harness.cli import main
from polyzeros.harness.config import ConfigError, Expectation, parse_text, validate
from polyzeros.harness.plot import SchemaMismatch, emit_plot
from polyzeros.harness.registry import ACCEPTANCE, REGISTRY, Check, Report, UnknownExperiment, reproduce
from polyzeros.harness.runner import (EXIT_COMPUTE, EXIT_FAIL, EXIT_PASS, EXIT_USAGE, ComputeError,
                                      run_config, run_experiment)

ELLIPTIC_ORACLE = """
name: elliptic_exact
scheme: elliptic_rescaled
n: 100
atom: gaussian_real
statistic: oracle_integral_real_intensity
expect: {target: 10.0, abs_tol: 1.0e-6}
"""

COUNTS = """
name: kac_counts
scheme: kac
n: 30
trials: 20
master_seed: 7
statistic: counts
region: {disk: {center: [0, 0], radius: 0.9}}
"""


def write(tmp_path, text, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_missing_degree(self):
        with pytest.raises(ConfigError) as err:
            validate({"scheme": "flat", "statistic": "counts", "trials": 10})
        assert err.value.field == "n"

    def test_too_few_trials(self):
        with pytest.raises(ConfigError) as err:
            parse_text(COUNTS.replace("trials: 20", "trials: 0"))
        assert err.value.field == "trials"

    def test_missing_trials_for_monte_carlo(self):
        with pytest.raises(ConfigError, match="trials"):
            parse_text(COUNTS.replace("trials: 20\n", ""))

    def test_parse_error_reports_position(self):
        with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
            parse_text("scheme: [flat\nn: 3\n")

    @pytest.mark.parametrize("patch, field", [
        ({"statistic": "median"}, "statistic"),
        ({"bogus": 1}, "bogus"),
        ({"atom": "cauchy"}, "atom"),
        ({"master_seed": -1}, "master_seed"),
        ({"region": {"interval": [2, 1]}}, "region"),
    ])
    def test_rejections_name_the_field(self, patch, field):
        raw = yaml.safe_load(COUNTS)
        raw.update(patch)
        with pytest.raises(ConfigError) as err:
            validate(raw)
        assert err.value.field.startswith(field)

    def test_real_line_needs_real_atom(self):
        raw = yaml.safe_load(COUNTS)
        raw.update(atom="gaussian_complex", region={"interval": [0, 1]})
        with pytest.raises(ConfigError, match="atom"):
            validate(raw)

    def test_round_trip(self):
        cfg = parse_text(COUNTS)
        again = parse_text(cfg.dump())
        assert again == cfg and again.digest == cfg.digest

    def test_digest_ignores_name_and_output(self):
        a = parse_text(COUNTS)
        b = parse_text(COUNTS.replace("kac_counts", "other") + "output: {dir: elsewhere}\n")
        assert a.digest == b.digest

    def test_digest_tracks_seed(self):
        assert parse_text(COUNTS).digest != parse_text(COUNTS.replace("seed: 7", "seed: 8")).digest

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(["flat", "elliptic", "elliptic_rescaled", "kac"]), st.integers(1, 10_000),
           st.integers(2, 10**6), st.integers(0, 2**64 - 1),
           st.sampled_from(["gaussian_real", "bernoulli", "uniform_real"]))
    def test_canonical_round_trip(self, kind, n, trials, seed, atom):
        cfg = validate({"scheme": kind, "n": n, "trials": trials, "master_seed": seed, "atom": atom,
                        "statistic": "counts", "region": {"interval": [-1.5, 2.5]}})
        assert validate(cfg.canonical()) == cfg

    def test_expectation(self):
        e = Expectation(target=1.0, sigmas=3.0)
        assert e.check(1.2, 0.1) and not e.check(1.4, 0.1)
        assert Expectation(min=0.99).check(0.995) and not Expectation(min=0.99).check(0.985)
        assert Expectation(target=2.0, rel_tol=0.05).check(2.09)


class TestRunner:
    def test_elliptic_oracle_experiment(self, tmp_path):
        rec = run_experiment(write(tmp_path, ELLIPTIC_ORACLE), tmp_path)
        assert rec.passed and rec.exit_code == EXIT_PASS
        assert rec.results[0]["value"] == pytest.approx(10.0, abs=1e-6)
        rows = read_csv(tmp_path / "elliptic_exact.csv")
        assert float(rows[0]["value"]) == pytest.approx(10.0, abs=1e-6)

    def test_failed_expectation(self, tmp_path):
        rec = run_experiment(write(tmp_path, ELLIPTIC_ORACLE.replace("10.0", "11.0")), tmp_path)
        assert rec.passed is False and rec.exit_code == EXIT_FAIL

    def test_replay_is_identical_and_logged(self, tmp_path):
        path = write(tmp_path, COUNTS)
        a = run_experiment(path, tmp_path / "a")
        first = (tmp_path / "a" / "kac_counts.csv").read_text()
        b = run_experiment(path, tmp_path / "a")
        assert a.results == b.results
        assert (tmp_path / "a" / "kac_counts.csv").read_text() == first
        log = (tmp_path / "a" / "runs.jsonl").read_text().splitlines()
        assert len(log) == 2
        entry = json.loads(log[0])
        assert entry["config_digest"] == a.config_digest and entry["passed"] is None

    def test_threads_do_not_change_rows(self, tmp_path):
        path = write(tmp_path, COUNTS)
        assert run_experiment(path, tmp_path, 1).results == run_experiment(path, tmp_path, 3).results

    def test_seed_override(self, tmp_path):
        path = write(tmp_path, COUNTS)
        base = run_experiment(path, tmp_path)
        other = run_experiment(path, tmp_path, seed=8)
        assert other.config_digest != base.config_digest

    def test_compute_error(self, tmp_path):
        cfg = validate({"scheme": "kac", "n": 10, "statistic": "oracle_grid",
                        "grid": {"kind": "rho_01", "points": [0.5]}})
        with pytest.raises(ComputeError):
            run_config(cfg, tmp_path)

    def test_oracle_grid_rows(self, tmp_path):
        cfg = validate({"scheme": "elliptic_rescaled", "n": 100, "statistic": "oracle_grid",
                        "grid": {"kind": "rho_10", "lo": -5, "hi": 5, "num": 11}})
        rec = run_config(cfg, tmp_path)
        for row in rec.results:
            assert row["value"] == pytest.approx(1 / (math.pi * (1 + row["x"] ** 2 / 100)), rel=1e-12)


class TestPlots:
    def test_roots_plot_with_reference_circle(self, tmp_path):
        runner = CliRunner()
        res = runner.invoke(main, ["roots", "--scheme", "flat", "--n", "400", "--trials", "1",
                                   "--seed", "3", "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        rows = read_csv(tmp_path / "roots.csv")
        assert len(rows) == 400
        svg = emit_plot(tmp_path / "roots.csv", "roots").read_text()
        circles = re.findall(r"<circle [^>]*>", svg)
        assert len(circles) == 401
        assert sum("stroke-dasharray" in c for c in circles) == 1

    def test_intensity_plot_with_reference(self, tmp_path):
        runner = CliRunner()
        res = runner.invoke(main, ["intensity", "--scheme", "elliptic_rescaled", "--n", "100",
                                   "--lo", "-20", "--hi", "20", "--num", "41", "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        rows = read_csv(tmp_path / "intensity.csv")
        assert len(rows) == 41
        svg = emit_plot(tmp_path / "intensity.csv", "intensity").read_text()
        assert svg.count("<polyline") == 2

    def test_edge_plot(self, tmp_path):
        src = tmp_path / "edge.csv"
        src.write_text("a,value\n0,0.0265\n1,0.02\n2,0.01\n")
        root = ElementTree.parse(emit_plot(src, "edge", tmp_path / "e.svg")).getroot()
        assert root.tag.endswith("svg")
        assert len(root.findall(".//{http://www.w3.org/2000/svg}circle")) == 3

    def test_schema_mismatch(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("x,y\n1,2\n")
        with pytest.raises(SchemaMismatch, match="missing columns"):
            emit_plot(src, "roots")

    def test_empty_csv(self, tmp_path):
        src = tmp_path / "empty.csv"
        src.write_text("re,im\n")
        with pytest.raises(SchemaMismatch, match="no data rows"):
            emit_plot(src, "roots")


class TestCli:
    def invoke(self, *args):
        return CliRunner().invoke(main, [str(a) for a in args])

    def test_run_pass(self, tmp_path):
        res = self.invoke("run", write(tmp_path, ELLIPTIC_ORACLE), "--out", tmp_path)
        assert res.exit_code == EXIT_PASS and "expectation: pass" in res.output

    def test_run_fail(self, tmp_path):
        res = self.invoke("run", write(tmp_path, ELLIPTIC_ORACLE.replace("10.0", "9.0")), "--out",
                          tmp_path)
        assert res.exit_code == EXIT_FAIL and "expectation: FAIL" in res.output

    def test_run_usage_error(self, tmp_path):
        res = self.invoke("run", write(tmp_path, "scheme: flat\nstatistic: counts\n"))
        assert res.exit_code == EXIT_USAGE and "n: missing required field" in res.output

    def test_run_compute_error(self, tmp_path):
        text = "scheme: kac\nn: 10\nstatistic: oracle_grid\ngrid: {kind: rho_01, points: [0.5]}\n"
        res = self.invoke("run", write(tmp_path, text), "--out", tmp_path)
        assert res.exit_code == EXIT_COMPUTE

    def test_counts_command(self, tmp_path):
        res = self.invoke("counts", "--scheme", "kac", "--n", 30, "--trials", 10, "--disk", 0, 0, 0.9,
                          "--out", tmp_path)
        assert res.exit_code == EXIT_PASS, res.output
        assert "mean count" in res.output

    def test_sample_command(self, tmp_path):
        res = self.invoke("sample", "--scheme", "kac", "--n", 4, "--trials", 2, "--out", tmp_path)
        assert res.exit_code == EXIT_PASS, res.output
        rows = read_csv(tmp_path / "coeffs.csv")
        assert len(rows) == 10 and set(rows[0]) == {"trial", "i", "re", "im", "log_scale"}

    def test_reproduce_unknown(self):
        res = self.invoke("reproduce", "no-such-thing")
        assert res.exit_code == EXIT_USAGE and "elliptic-exact" in res.output

    def test_reproduce_list(self):
        res = self.invoke("reproduce", "--list")
        assert res.exit_code == EXIT_PASS
        assert all(k in res.output for k in REGISTRY)

    def test_reproduce_fast_entry(self, tmp_path):
        res = self.invoke("reproduce", "elliptic-exact", "--out", tmp_path)
        assert res.exit_code == EXIT_PASS and "verdict" in res.output
        assert (tmp_path / "elliptic-exact.txt").exists()

    def test_plot_schema_mismatch(self, tmp_path):
        src = tmp_path / "bad.csv"
        src.write_text("x,y\n1,2\n")
        res = self.invoke("plot", src, "--kind", "roots")
        assert res.exit_code == EXIT_USAGE

    def test_unknown_option(self):
        assert self.invoke("counts", "--nope").exit_code == EXIT_USAGE


class TestRegistry:
    def test_acceptance_ids_are_registered(self):
        assert sorted(ACCEPTANCE) == list(range(1, 11))
        assert all(i in REGISTRY for ids in ACCEPTANCE.values() for i in ids)

    def test_unknown(self):
        with pytest.raises(UnknownExperiment):
            reproduce("nope")

    def test_report_table(self):
        rep = Report("x", "title", 1, [Check("a", "1", "2", True), Check("b", "3", "4", False)], 0.5)
        assert not rep.passed
        lines = rep.table().splitlines()
        assert lines[0].startswith("x: title") and lines[-1].rstrip().endswith("FAIL")


@pytest.mark.parametrize("text, value", [("1.0e9", 1e9), ("-1.0e9", -1e9), ("-inf", -math.inf),
                                         ("2", 2.0)])
def test_numeric_strings_in_yaml(text, value):
    cfg = parse_text(f"scheme: kac\nn: 5\nstatistic: counts\ntrials: 2\natom: gaussian_real\n"
                     f"region: {{interval: [{text}, 1.0e10]}}\n")
    assert cfg.params["region"].a == value


def test_non_numeric_string_rejected():
    with pytest.raises(ConfigError, match="expected a number"):
        parse_text("scheme: kac\nn: 5\nstatistic: concentration\ntrials: 2\nz: abc\n")
