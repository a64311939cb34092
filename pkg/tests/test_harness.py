import csv
import dataclasses
import json

import numpy as np
import pytest

from ordinalkit import harness
from ordinalkit.config import DatasetSpec, ExperimentConfig
from ordinalkit.errors import IngestionError, RunNotFoundError
from ordinalkit.losses import LossSpec
from ordinalkit.model import TrainConfig
from ordinalkit.properties import um_fraction
from ordinalkit.simplex import LabelSpace


def small_config(**changes):
    cfg = ExperimentConfig(
        dataset=DatasetSpec(N=400, D=8, K=5, sigma=0.8, seed=2),
        space=LabelSpace.of_size(5),
        losses=(LossSpec("CE"), LossSpec("OLL"), LossSpec("MLL", lam=0.5)),
        fractions=(1.0,),
        seeds=(0, 1, 2, 3, 4),
        train=TrainConfig(lr=0.05, epochs=5, batch_size=32),
        name="tiny",
    )
    return dataclasses.replace(cfg, **changes)


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    cfg = small_config(losses=small_config().losses + (LossSpec("BINOMIAL_NLL"),))
    out, records = harness.cmd_bench(cfg, tmp_path_factory.mktemp("bench"))
    return out, records


def _table_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


class TestIngest:
    def test_numeric_infers_K(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("label,f1,f2\n1,0.5,1.0\n2,0.1,0.2\n3,-1.0,2.5\n")
        data = harness.ingest_file(path)
        assert (data.y.size, data.K, data.D) == (3, 3, 2)
        np.testing.assert_array_equal(data.y, [1, 2, 3])

    def test_label_outside_space(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,f1\n1,0.0\n6,1.0\n")
        with pytest.raises(IngestionError) as err:
            harness.ingest_file(path, LabelSpace.of_size(5))
        assert err.value.line == 3

    def test_text_rows_normalised(self, tmp_path):
        path = tmp_path / "reviews.tsv"
        path.write_text("label\ttext\n1\tterrible plot\n3\tfine\n5\tloved every minute\n")
        data = harness.ingest_file(path, text_dim=128)
        np.testing.assert_allclose(np.linalg.norm(data.X, axis=1), 1.0, atol=1e-12)
        assert data.provenance["schema"] == "text"

    def test_named_labels(self, tmp_path):
        path = tmp_path / "named.csv"
        path.write_text("label,text\nlow,meh\nhigh,great\nmid,ok\n")
        data = harness.ingest_file(path, LabelSpace(("low", "mid", "high")), text_dim=64)
        np.testing.assert_array_equal(data.y, [1, 3, 2])

    @pytest.mark.parametrize("body, line", [
        ("", 1),
        ("label,f1\n", 2),
        ("label,f1\n1,0.0\n2,0.1,0.2\n", 3),
        ("label,f1\n1,abc\n", 2),
        ("label,f1\n1,nan\n", 2),
        ("label,f1\nx,1.0\n", 2),
        ("target,f1\n1,1.0\n", 1),
    ])
    def test_errors_name_line(self, tmp_path, body, line):
        path = tmp_path / "broken.csv"
        path.write_text(body)
        with pytest.raises(IngestionError) as err:
            harness.ingest_file(path)
        assert err.value.line == line

    def test_persisted_round_trip(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("label,f1\n1,0.5\n2,0.1\n2,0.3\n")
        stem, target, summary = harness.cmd_ingest(path, tmp_path / "runs")
        assert stem == "tiny"
        assert summary == {"N": 3, "D": 1, "K": 2, "histogram": {"1": 1, "2": 2}}
        back = harness.load_saved_dataset(target)
        np.testing.assert_array_equal(back.y, [1, 2, 2])
        assert back.provenance["source"] == "file"

    def test_missing_saved_dataset(self, tmp_path):
        with pytest.raises(RunNotFoundError):
            harness.load_saved_dataset(tmp_path)


class TestBench:
    def test_three_losses_three_rows(self, tmp_path):
        out, records = harness.cmd_bench(small_config(), tmp_path)
        rows = _table_rows(out / "results.tsv")
        assert len(rows) == 3
        assert all(r["runs"] == "5/5" for r in rows)
        assert len(records) == 15

    def test_cell_format(self, bench_dir):
        out, _ = bench_dir
        for row in _table_rows(out / "results.tsv"):
            for col in ("F1", "MSE", "MAE", "OB1"):
                mean, std = row[col].split(" (")
                float(mean), float(std.rstrip(")"))

    def test_ob1_in_unit_interval(self, bench_dir):
        _, records = bench_dir
        assert all(0.0 <= r.metrics["ob_k"]["1"] <= 1.0 for r in records)

    def test_table_traces_to_records(self, bench_dir):
        out, _ = bench_dir
        rebuilt = [harness.RunRecord(**{k: v for k, v in rec.items() if k != "run_id"})
                   for rec in harness.load_runs(out)]
        assert harness.results_table(rebuilt) == (out / "results.tsv").read_text()

    def test_plot_data_long_format(self, bench_dir):
        out, records = bench_dir
        rows = [json.loads(line) for line in (out / "plot_data.jsonl").read_text().splitlines()]
        assert len(rows) == 5 * len(records)
        assert {r["metric"] for r in rows} == {"F1", "MSE", "MAE", "OB1", "UM"}

    def test_rerun_byte_identical(self, tmp_path):
        cfg = small_config(seeds=(0, 1))
        a, _ = harness.cmd_bench(cfg, tmp_path / "a")
        b, _ = harness.cmd_bench(cfg, tmp_path / "b")
        for name in ("results.tsv", "plot_data.jsonl", "runs.jsonl", "config.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_failed_cells_recorded(self, tmp_path):
        cfg = small_config(train=TrainConfig(lr=1e3, epochs=5, batch_size=32), seeds=(0, 1))
        out, records = harness.cmd_bench(cfg, tmp_path)
        assert len(records) == 6
        assert all(r.status == "failed" and "TrainingDivergedError" in r.reason for r in records)
        row = _table_rows(out / "results.tsv")[0]
        assert row["runs"] == "0/2" and row["F1"] == ""
        assert "seed 0 failed" in row["note"]

    def test_binomial_loss_uses_binomial_head(self, bench_dir):
        _, records = bench_dir
        assert {r.model for r in records if r.loss == "BINOMIAL_NLL"} == {"binomial"}


class TestUmReport:
    def test_covers_every_loss(self, bench_dir):
        out, records = bench_dir
        rows = harness.cmd_um_report(out)
        assert {r["loss"] for r in rows} == {r.loss for r in records}

    def test_binomial_full(self, bench_dir):
        out, _ = bench_dir
        row = next(r for r in harness.cmd_um_report(out) if r["loss"] == "BINOMIAL_NLL")
        assert row["um_percent"] == 100.0

    def test_matches_stored_matrices(self, bench_dir):
        out, records = bench_dir
        for rec in records:
            P = np.load(out / "predictions" / f"{rec.run_id}.npy")
            assert 100.0 * um_fraction(P) == rec.um

    def test_missing_run(self, tmp_path):
        with pytest.raises(RunNotFoundError):
            harness.cmd_um_report(tmp_path / "nope")


@pytest.fixture(scope="module")
def outcome(tmp_path_factory):
    out = tmp_path_factory.mktemp("certify")
    return harness.cmd_certify(out_dir=out, golden=True, trials=2000, restarts=8), out


class TestCertify:
    def test_golden_agrees(self, outcome):
        result, _ = outcome
        assert result.mismatches == []
        assert result.exit_code() == 0

    def test_soft_not_psr(self, outcome):
        result, _ = outcome
        row = next(r.row() for r in result.reports if r.loss.kind == "SOFT")
        assert row["PSR"] == "no"

    def test_wkl_witness_serialised(self, outcome):
        _, out = outcome
        details = [json.loads(line) for line in (out / "properties_details.jsonl").read_text().splitlines()]
        wkl = next(d for d in details if d["loss"] == "WKL")
        assert wkl["row"]["CX"] == "no"
        assert wkl["convex"]["witness"]["violation"] > 0

    def test_golden_mismatch_exit_code(self, tmp_path):
        golden = tmp_path / "golden.tsv"
        golden.write_text("loss\tPSR\tUM\tCX\tOrd\nCE\tno\tnot guaranteed\tyes\tFLAT\n")
        result = harness.cmd_certify([LossSpec("CE")], golden=golden, trials=1000, restarts=2)
        assert result.exit_code() == 1
        assert any("CE PSR" in m for m in result.mismatches)

    def test_strict_gates_inconclusive(self):
        result = harness.CertifyOutcome([], [], ["SOFT"], "")
        assert result.exit_code() == 0
        assert result.exit_code(strict=True) == 2

    def test_missing_golden(self, tmp_path):
        with pytest.raises(RunNotFoundError):
            harness.read_golden(tmp_path / "absent.tsv")
