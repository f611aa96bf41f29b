import json

import numpy as np
import pytest

from distclust.cli import main, parse_metric_spec, parse_sigma_grid
from distclust.distributions import SyntheticConfig, generate_synthetic, save_jsonl
from distclust.graph import load_distance_matrix


@pytest.fixture(scope="module")
def small_jsonl(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.jsonl"
    save_jsonl(generate_synthetic(SyntheticConfig(n_per_class=6, m=16, seed=7)), path)
    return path


@pytest.fixture(scope="module")
def default_jsonl(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "bench.jsonl"
    save_jsonl(generate_synthetic(SyntheticConfig(seed=7)), path)
    return path


class TestParsers:
    def test_metric_spec_plain(self):
        assert parse_metric_spec("mmd") == ("mmd", {})

    def test_metric_spec_sinkhorn_epsilon(self):
        assert parse_metric_spec("sinkhorn:5") == ("sinkhorn", {"epsilon": 5.0})

    def test_metric_spec_rejects_other_suffixes(self):
        with pytest.raises(ValueError):
            parse_metric_spec("mmd:2")

    def test_sigma_grid(self):
        grid = parse_sigma_grid("0:3:0.25")
        assert len(grid) == 13
        assert grid[0] == 0.0
        assert grid[-1] == 3.0

    def test_sigma_grid_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            parse_sigma_grid("3:0:0.25")


class TestSynth:
    def test_writes_records_and_manifest(self, tmp_path):
        out = tmp_path / "run"
        assert main(["synth", "--seed", "42", "--out", str(out)]) == 0
        data = (out / "synthetic.jsonl").read_text().strip().split("\n")
        assert len(data) == 40
        labels = (out / "labels.csv").read_text().strip().split("\n")
        assert labels[0] == "id,label"
        assert len(labels) == 41
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 42
        assert manifest["command"] == "synth"

    def test_same_seed_bit_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["synth", "--seed", "5", "--out", str(out1)])
        main(["synth", "--seed", "5", "--out", str(out2)])
        assert (out1 / "synthetic.jsonl").read_bytes() == (out2 / "synthetic.jsonl").read_bytes()
        assert (out1 / "labels.csv").read_bytes() == (out2 / "labels.csv").read_bytes()

    def test_n_per_class_flag(self, tmp_path):
        out = tmp_path / "c"
        main(["synth", "--seed", "1", "--out", str(out), "--n-per-class", "5"])
        assert len((out / "synthetic.jsonl").read_text().strip().split("\n")) == 10

    def test_seed_required(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["synth", "--out", str(tmp_path)])
        assert err.value.code == 1


class TestDistmat:
    def test_shape_and_cache_reload(self, tmp_path, small_jsonl):
        out = tmp_path / "dm"
        code = main(["distmat", "--in", str(small_jsonl), "--out", str(out),
                     "--metric", "mmd", "--sigma", "1.0", "--seed", "3"])
        assert code == 0
        cache = list(out.glob("distmat-*-mmd-*.csv"))
        assert len(cache) == 1
        D = load_distance_matrix(cache[0])
        assert D.N == 12
        before = cache[0].read_bytes()
        assert main(["distmat", "--in", str(small_jsonl), "--out", str(out),
                     "--metric", "mmd", "--sigma", "1.0", "--seed", "3"]) == 0
        assert cache[0].read_bytes() == before

    def test_fraction_mask_density(self, tmp_path, small_jsonl):
        out = tmp_path / "dmf"
        main(["distmat", "--in", str(small_jsonl), "--out", str(out),
              "--metric", "mmd", "--sigma", "1.0", "--fraction", "0.5", "--seed", "3"])
        D = load_distance_matrix(next(out.glob("*.csv")))
        computed_offdiag = (D.mask.sum() - D.N) // 2
        assert computed_offdiag == int(np.ceil(0.5 * D.N * (D.N - 1) / 2))

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["distmat", "--in", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path), "--metric", "mmd", "--seed", "0"]) == 2


class TestCluster:
    def test_ddsc_mmd_reports_perfect_ami(self, tmp_path, default_jsonl):
        out = tmp_path / "run"
        code = main(["cluster", "--in", str(default_jsonl), "--out", str(out),
                     "--method", "ddsc", "--metric", "mmd", "--sigma", "1.0",
                     "--k", "2", "--seed", "7"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ami"] == pytest.approx(1.0)
        assert report["ari"] == pytest.approx(1.0)
        assert set(report["diagnostics"]) == {"alpha", "delta", "n", "tau", "gamma"}
        assert set(report["timings"]) >= {"distmat", "eig", "kmeans"}
        lines = (out / "labels.csv").read_text().strip().split("\n")
        assert lines[0] == "id,label"
        assert len(lines) == 41

    def test_replay_reproduces_labels(self, tmp_path, default_jsonl):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            main(["cluster", "--in", str(default_jsonl), "--out", str(out),
                  "--method", "kmeans-mean", "--k", "2", "--seed", "11"])
            outs.append((out / "labels.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_d2_baseline_fails_on_benchmark(self, tmp_path, default_jsonl):
        out = tmp_path / "d2run"
        code = main(["cluster", "--in", str(default_jsonl), "--out", str(out),
                     "--method", "d2", "--k", "2", "--seed", "5"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ami"] <= 0.05

    def test_isolated_node_is_solver_error(self, tmp_path, small_jsonl):
        # a nearly empty mask leaves zero-degree nodes behind
        code = main(["cluster", "--in", str(small_jsonl), "--out", str(tmp_path / "x"),
                     "--method", "ddsc", "--metric", "mmd", "--sigma", "1.0",
                     "--k", "2", "--seed", "1", "--fraction", "0.06"])
        assert code == 3

    def test_ddsc_requires_metric(self, tmp_path, default_jsonl):
        assert main(["cluster", "--in", str(default_jsonl), "--out", str(tmp_path / "x"),
                     "--method", "ddsc", "--k", "2", "--seed", "1"]) == 1


class TestNoiseSweep:
    def test_row_count_and_zero_sigma(self, tmp_path, small_jsonl):
        out = tmp_path / "sweep"
        code = main(["noise-sweep", "--in", str(small_jsonl), "--out", str(out),
                     "--sigmas", "0:1:0.5", "--metrics", "mmd,sinkhorn:5", "--seed", "3"])
        assert code == 0
        lines = (out / "noise_sweep.csv").read_text().strip().split("\n")
        assert lines[0] == "sigma,metric,median_relative_error"
        assert len(lines) == 1 + 3 * 2
        for line in lines[1:]:
            sigma, metric, err = line.split(",")
            if float(sigma) == 0.0:
                assert float(err) == 0.0


class TestBounds:
    def test_report_driven_run(self, tmp_path, default_jsonl):
        run = tmp_path / "cluster"
        main(["cluster", "--in", str(default_jsonl), "--out", str(run),
              "--method", "ddsc", "--metric", "mmd", "--sigma", "1.0",
              "--k", "2", "--seed", "7"])
        code = main(["bounds", "--report", str(run / "report.json"),
                     "--m", "40", "--epsilon", "1.0", "--json"])
        assert code == 0

    def test_vacuous_bound_still_exits_zero(self, capsys):
        code = main(["bounds", "--m", "4", "--epsilon", "0.2",
                     "--alpha", "1e-9", "--delta", "0.5", "--n", "40",
                     "--gamma", "1.0", "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert "vacuous" in payload["verdict"]

    def test_json_round_trip(self, capsys):
        code = main(["bounds", "--m", "100", "--epsilon", "1.0",
                     "--alpha", "0.5", "--delta", "0.3", "--n", "40",
                     "--gamma", "0.2", "--xi", "0.4", "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert {"zeta", "consistency_bound", "verdict", "correctness"} <= set(payload)

    def test_missing_diagnostics_is_data_error(self, tmp_path):
        report = tmp_path / "report.json"
        report.write_text(json.dumps({"diagnostics": {"alpha": 0.5}}))
        assert main(["bounds", "--report", str(report), "--m", "10",
                     "--epsilon", "1.0"]) == 2
