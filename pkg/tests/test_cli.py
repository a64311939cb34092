import json

import pytest

from ordinalkit.cli import build_parser, main

TINY = """
name = "tiny"
seeds = [0, 1]
[dataset]
N = 300
D = 6
sigma = 0.5
[[losses]]
kind = "CE"
[[losses]]
kind = "BINOMIAL_NLL"
[train]
epochs = 3
batch_size = 32
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


class TestParser:
    def test_verbs(self):
        parser = build_parser()
        for verb in ("certify", "bench", "um-report", "ingest", "profile"):
            assert parser.parse_args([verb] + (["x"] if verb in ("um-report", "ingest") else [])).command == verb

    def test_loss_flags(self):
        args = build_parser().parse_args(["profile", "--loss", "oll", "--loss", "MLL", "--lambda", "0.3"])
        assert args.loss == ["OLL", "MLL"]
        assert args.lam == 0.3

    def test_golden_optional_path(self):
        assert build_parser().parse_args(["certify", "--golden"]).golden is True
        assert build_parser().parse_args(["certify", "--golden", "g.tsv"]).golden == "g.tsv"

    def test_unknown_loss(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["profile", "--loss", "HINGE"])


class TestCommands:
    def test_bench_then_um_report(self, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["bench", "--config", str(config_file), "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert text.startswith("dataset\tfraction\tloss")
        assert "# 4 runs, 0 failed" in text
        assert main(["um-report", str(out)]) == 0
        report = capsys.readouterr().out
        assert "BINOMIAL_NLL\tbinomial\t2\t100.0 (0.0)" in report

    def test_bench_overrides(self, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        main(["bench", "--config", str(config_file), "--out", str(out), "--loss", "OLL",
              "--alpha", "2", "--seeds", "3", "--fractions", "0.5"])
        runs = [json.loads(line) for line in (out / "runs.jsonl").read_text().splitlines()]
        assert [(r["loss"], r["seed"], r["fraction"]) for r in runs] == [("OLL(alpha=2)", 3, 0.5)]

    def test_um_report_missing(self, tmp_path, capsys):
        assert main(["um-report", str(tmp_path / "none")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_ingest(self, tmp_path, capsys):
        data = tmp_path / "reviews.csv"
        data.write_text("label,text\nbad,awful\ngood,great fun\nok,fine\n")
        code = main(["ingest", str(data), "--labels", "bad,ok,good", "--out", str(tmp_path / "runs"),
                     "--text-dim", "64"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert summary == {"D": 64, "K": 3, "N": 3, "histogram": {"1": 1, "2": 1, "3": 1}}

    def test_ingest_error_exit(self, tmp_path, capsys):
        data = tmp_path / "bad.csv"
        data.write_text("label,f1\n1,0.1\n9,0.2\n")
        assert main(["ingest", str(data), "--labels", "a,b,c"]) == 1
        assert "line 3" in capsys.readouterr().err

    def test_profile(self, capsys):
        assert main(["profile", "--loss", "CE"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "loss\td\tvalue\tshape"
        assert all(line.endswith("FLAT") for line in lines[1:])

    def test_certify_golden(self, capsys):
        code = main(["certify", "--loss", "CE", "--loss", "SOFT", "--golden", "--trials", "1000",
                     "--restarts", "4"])
        out = capsys.readouterr().out
        assert code == 0
        assert "SOFT\tno\t" in out

    def test_certify_mismatch(self, tmp_path, capsys):
        golden = tmp_path / "g.tsv"
        golden.write_text("loss\tPSR\tUM\tCX\tOrd\nEMD\tyes\tnot guaranteed\tno\tINCREASING\n")
        code = main(["certify", "--loss", "EMD", "--golden", str(golden), "--trials", "1000",
                     "--restarts", "4"])
        assert code == 1
        assert "MISMATCH EMD CX" in capsys.readouterr().err
