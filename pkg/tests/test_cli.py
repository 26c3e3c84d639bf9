"""Command-line pipeline: artifacts, round trips, exit codes."""

import csv
import datetime as dt

import numpy as np
import pytest

from flowcast.cli import main
from flowcast.frames import read_count_csv


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run(["simulate", "--sites", 5, "--days", 21, "--seed", 3,
                "--out", out, "--set", "tau_seasonal=80", "--set", "tau_temporal_iid=150",
                "--set", "tau_spatial_structured=4", "--set", "tau_spatial_iid=6"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    cfg = out / "model.cfg"
    cfg.write_text("period = 12\nhyperprior_shape = 0.001\nhyperprior_rate = 0.001\n")
    code = run(["fit", "--data", sim_dir / "counts.csv", "--graph", sim_dir / "graph.txt",
                "--config", cfg, "--predict-from", "2024-01-15", "--predict-to", "2024-01-21",
                "--out", out])
    assert code == 0
    return out


class TestSimulate:
    def test_artifacts_exist(self, sim_dir):
        for name in ("counts.csv", "graph.txt", "truth_lambda.csv", "truth_counts.csv",
                     "truth.json", "presence_grid.csv"):
            assert (sim_dir / name).exists()

    def test_counts_round_trip(self, sim_dir):
        frame = read_count_csv(sim_dir / "counts.csv")
        assert frame.bins_per_day == 12
        assert frame.n_sites == 5
        assert len(frame) == 5 * 21 * 12

    def test_presence_grid_shape(self, sim_dir):
        rows = (sim_dir / "presence_grid.csv").read_text().strip().splitlines()
        assert len(rows) == 5
        assert all(len(r.split(",")) == 5 for r in rows)

    def test_determinism(self, sim_dir, tmp_path):
        again = tmp_path / "again"
        run(["simulate", "--sites", 5, "--days", 21, "--seed", 3, "--out", again,
             "--set", "tau_seasonal=80", "--set", "tau_temporal_iid=150",
             "--set", "tau_spatial_structured=4", "--set", "tau_spatial_iid=6"])
        assert (again / "counts.csv").read_text() == (sim_dir / "counts.csv").read_text()


class TestFit:
    def test_artifacts(self, fit_dir):
        assert (fit_dir / "fitted.csv").exists()
        assert (fit_dir / "hyper.json").exists()
        assert (fit_dir / "predictions.csv").exists()

    def test_predictions_cover_range(self, fit_dir):
        preds = read_count_csv(fit_dir / "predictions.csv")
        assert all(dt.date(2024, 1, 15) <= d <= dt.date(2024, 1, 21) for d in preds.dates)
        assert np.all(np.isfinite(preds.values))

    def test_predict_subcommand_matches(self, fit_dir, tmp_path):
        out = tmp_path / "p.csv"
        code = run(["predict", "--fitted", fit_dir / "fitted.csv",
                    "--predict-from", "2024-01-15", "--predict-to", "2024-01-21",
                    "--out", out])
        assert code == 0
        a = read_count_csv(out)
        b = read_count_csv(fit_dir / "predictions.csv")
        np.testing.assert_allclose(a.values, b.values, rtol=1e-6)


class TestEvaluateReportBaseline:
    def test_evaluate_prints_mpe(self, sim_dir, fit_dir, capsys):
        code = run(["evaluate", "--data", sim_dir / "truth_counts.csv",
                    "--predictions", fit_dir / "predictions.csv"])
        assert code == 0
        out = capsys.readouterr().out
        assert "MPE:" in out

    def test_report_artifacts(self, sim_dir, fit_dir, tmp_path):
        out = tmp_path / "report"
        code = run(["report", "--data", sim_dir / "truth_counts.csv",
                    "--predictions", fit_dir / "predictions.csv", "--out", out])
        assert code == 0
        for name in ("mpe_overall.csv", "mpe_by_site.csv", "mpe_by_day.csv",
                     "mpe_by_time.csv", "mpe_by_day_time.csv"):
            assert (out / name).exists()
        with open(out / "mpe_by_site.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 5  # header plus one row per site
        assert (out / "mpe_by_site.png").exists()
        assert (out / "mpe_by_day_time.png").exists()
        assert (out / "observed_vs_predicted.png").exists()

    def test_report_no_figures_flag(self, sim_dir, fit_dir, tmp_path):
        out = tmp_path / "nofig"
        code = run(["report", "--data", sim_dir / "truth_counts.csv",
                    "--predictions", fit_dir / "predictions.csv",
                    "--no-figures", "--out", out])
        assert code == 0
        assert not (out / "mpe_by_site.png").exists()

    def test_baseline_and_comparison(self, sim_dir, fit_dir, tmp_path):
        out = tmp_path / "base"
        code = run(["baseline", "--data", sim_dir / "counts.csv",
                    "--predict-from", "2024-01-15", "--predict-to", "2024-01-21",
                    "--history-weeks", 2,
                    "--predictions", fit_dir / "predictions.csv",
                    "--actual", sim_dir / "truth_counts.csv",
                    "--out", out])
        assert code == 0
        assert (out / "baseline.csv").exists()
        with open(out / "comparison.csv") as fh:
            header = fh.readline().strip()
        assert header == "Date,TimeBin,ID,ActualY,pred,mean,meanPE,predPE"

    def test_report_with_baseline_figure(self, sim_dir, fit_dir, tmp_path):
        base_out = tmp_path / "b"
        run(["baseline", "--data", sim_dir / "counts.csv",
             "--predict-from", "2024-01-15", "--predict-to", "2024-01-21",
             "--history-weeks", 2, "--out", base_out])
        rep_out = tmp_path / "r"
        code = run(["report", "--data", sim_dir / "truth_counts.csv",
                    "--predictions", fit_dir / "predictions.csv",
                    "--baseline", base_out / "baseline.csv", "--out", rep_out])
        assert code == 0
        assert (rep_out / "comparison.csv").exists()
        assert (rep_out / "comparison.png").exists()


class TestClean:
    def test_clean_pipeline(self, tmp_path):
        raw = tmp_path / "raw.csv"
        lines = ["Date,Time,Site,Detector,Count"]
        for half in range(14, 18):
            start = half * 30
            end = start + 30
            label = f"{start // 60:02d}:{start % 60:02d}-{end // 60:02d}:{end % 60:02d}"
            lines.append(f"16/10/17,{label},7,1,{40 + half}")
            lines.append(f"16/10/17,{label},7,2,{10}")
        raw.write_text("\n".join(lines) + "\n")
        keep = tmp_path / "keep.cfg"
        keep.write_text("7: 1 2\n")
        out = tmp_path / "cleaned"
        code = run(["clean", "--data", raw, "--keep-detectors", keep, "--out", out])
        assert code == 0
        hourly = read_count_csv(out / "counts.csv")
        assert len(hourly) == 2  # 07:00-08:00 and 08:00-09:00
        assert hourly.values[0] == (40 + 14 + 10) + (40 + 15 + 10)
        assert (out / "missing_by_week.csv").exists()
        assert (out / "id_map.csv").exists()


class TestWeekpart:
    def test_disjoint_fits(self, sim_dir, tmp_path):
        outs = {}
        for part in ("weekday", "weekend"):
            out = tmp_path / part
            code = run(["fit", "--data", sim_dir / "counts.csv",
                        "--graph", sim_dir / "graph.txt",
                        "--weekpart", part,
                        "--set", "hyperprior_shape=0.001", "--set", "hyperprior_rate=0.001",
                        "--out", out])
            assert code == 0
            with open(out / "fitted.csv") as fh:
                rows = list(csv.reader(fh))[1:]
            outs[part] = {r[0] for r in rows}
        assert outs["weekday"].isdisjoint(outs["weekend"])
        assert all(dt.date.fromisoformat(d).weekday() < 5 for d in outs["weekday"])
        assert all(dt.date.fromisoformat(d).weekday() >= 5 for d in outs["weekend"])


class TestCovariates:
    def test_fit_with_covariate_file(self, tmp_path):
        sim = tmp_path / "sim"
        run(["simulate", "--sites", 3, "--days", 4, "--seed", 2, "--out", sim,
             "--set", "period=4"])
        frame = read_count_csv(sim / "counts.csv")
        cov = tmp_path / "cov.csv"
        with open(cov, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Date", "TimeBin", "ID", "weather"])
            for d, t, s in zip(frame.dates, frame.time_bins, frame.sites):
                writer.writerow([d.isoformat(), int(t), int(s), 0.1 * int(t)])
        out = tmp_path / "fit"
        code = run(["fit", "--data", sim / "counts.csv", "--graph", sim / "graph.txt",
                    "--covariates", cov, "--set", "period=4", "--set", "covariates=weather",
                    "--out", out])
        assert code == 0
        assert (out / "fitted.csv").exists()


class TestSimulateConfigFile:
    def test_generator_config(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("period = 6\nintercept = 4.0\nstuck_low = true\n")
        out = tmp_path / "sim"
        code = run(["simulate", "--sites", 6, "--days", 4, "--seed", 9,
                    "--config", cfg, "--out", out])
        assert code == 0
        frame = read_count_csv(out / "counts.csv")
        assert frame.bins_per_day == 6
        import json
        truth = json.loads((out / "truth.json").read_text())
        assert len(truth["fault_cells"]) == 1


class TestExitCodes:
    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["fit", "--bogus-flag"])
        assert exc.value.code == 2

    def test_data_error(self, tmp_path):
        code = run(["fit", "--data", tmp_path / "nope.csv",
                    "--graph", tmp_path / "nope.txt", "--out", tmp_path / "o"])
        assert code == 3

    def test_numeric_error(self, sim_dir, tmp_path):
        code = run(["fit", "--data", sim_dir / "counts.csv",
                    "--graph", sim_dir / "graph.txt",
                    "--set", "max_evals=2", "--out", tmp_path / "o"])
        assert code == 4
