"""CLI tests: subcommands, exit codes, precedence, idempotence."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest
import yaml

from adafuse.cli import main
from adafuse.fixtures import story_corpus
from adafuse.harness import read_records
from adafuse.ngram_lm import NgramLM
from adafuse.service import create_app

from util_server import LiveServer


@pytest.fixture()
def workdir(tmp_path) -> Path:
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("\n".join(story_corpus()) + "\n", encoding="utf-8")
    return tmp_path


def run_cli(*argv: str) -> int:
    return main(list(argv))


def train_model(workdir: Path, name: str = "char.json", **kw) -> Path:
    out = workdir / name
    code = run_cli(
        "train", "--corpus", str(workdir / "corpus.txt"),
        "--order", str(kw.get("order", 3)), "--alpha", str(kw.get("alpha", 0.05)),
        "--tokenizer", kw.get("tokenizer", "char"), "--out", str(out),
    )
    assert code == 0
    return out


def write_config(workdir: Path, models: list[dict], **decode) -> Path:
    config = workdir / "run.yaml"
    config.write_text(
        yaml.safe_dump({"models": models, "decode": decode}), encoding="utf-8"
    )
    return config


def write_input(workdir: Path, rows: list[dict], name: str = "input.jsonl") -> Path:
    path = workdir / name
    path.write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8"
    )
    return path


class TestTrain:
    def test_model_file_loads(self, workdir):
        out = train_model(workdir)
        model = NgramLM.load(out)
        assert model.order == 3

    def test_missing_corpus_names_path(self, workdir, capsys):
        code = run_cli(
            "train", "--corpus", str(workdir / "nope.txt"),
            "--order", "2", "--out", str(workdir / "m.json"),
        )
        assert code == 1
        assert "nope.txt" in capsys.readouterr().err

    def test_retrain_bit_identical(self, workdir):
        path = train_model(workdir, "m.json")
        first = hashlib.sha256(path.read_bytes()).hexdigest()
        train_model(workdir, "m.json")
        assert hashlib.sha256(path.read_bytes()).hexdigest() == first


class TestDecode:
    def test_records_written_in_order(self, workdir):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": str(model)}],
            tau_delta=0.0, max_new_words=8,
        )
        rows = [
            {"id": "one", "prompt": "the ", "references": ["whatever"]},
            {"id": "two", "prompt": "a bird ", "references": ["x"]},
        ]
        inp = write_input(workdir, rows)
        out = workdir / "out.jsonl"
        trace = workdir / "trace.jsonl"
        code = run_cli(
            "decode", "--config", str(config), "--input", str(inp),
            "--output", str(out), "--trace", str(trace),
        )
        assert code == 0
        records = read_records(out)
        assert [r.id for r in records] == ["one", "two"]
        assert all(r.prediction for r in records)
        traces = [json.loads(l) for l in trace.read_text().splitlines()]
        assert len(traces) == 2
        assert "wall_time" not in traces[0]["totals"]

    def test_malformed_record_isolated(self, workdir):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": str(model)}],
            tau_delta=0.0, max_new_words=6,
        )
        inp = workdir / "input.jsonl"
        inp.write_text('{"id": "ok", "prompt": "the "}\n{broken\n', encoding="utf-8")
        out = workdir / "out.jsonl"
        code = run_cli(
            "decode", "--config", str(config), "--input", str(inp),
            "--output", str(out),
        )
        assert code == 0
        records = read_records(out)
        assert records[0].error is None
        assert records[1].error is not None

    def test_rerun_byte_identical(self, workdir):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": str(model)}],
            tau_delta=0.7, max_new_words=8,
        )
        inp = write_input(workdir, [{"id": "r", "prompt": "the ", "references": []}])
        digests = []
        for name in ("one.jsonl", "two.jsonl"):
            out = workdir / name
            assert run_cli(
                "decode", "--config", str(config), "--input", str(inp),
                "--output", str(out),
            ) == 0
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_flag_overrides_config(self, workdir, capsys):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": str(model)}],
            tau_delta=0.9, max_new_words=8,
        )
        capsys.readouterr()  # drain the train output
        code = run_cli(
            "decode", "--config", str(config), "--tau-delta", "0.1",
            "--print-config",
        )
        assert code == 0
        effective = yaml.safe_load(capsys.readouterr().out)
        assert effective["decode"]["tau_delta"] == 0.1
        assert effective["decode"]["max_new_words"] == 8

    def test_env_var_overrides_locator(self, workdir, monkeypatch):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": "does-not-exist.json"}],
            max_new_words=4,
        )
        inp = write_input(workdir, [{"id": "r", "prompt": "the "}])
        out = workdir / "out.jsonl"
        monkeypatch.setenv("ADAFUSE_MODEL_0_LOCATOR", str(model))
        assert run_cli(
            "decode", "--config", str(config), "--input", str(inp),
            "--output", str(out),
        ) == 0

    def test_bad_config_exits_one(self, workdir):
        config = workdir / "bad.yaml"
        config.write_text("decode: {tau_delta: [not, a, number]}\n")
        code = run_cli("decode", "--config", str(config))
        assert code == 1

    def test_unknown_decode_key_exits_one(self, workdir):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": str(model)}],
            taudelta=0.5,
        )
        assert run_cli("decode", "--config", str(config)) == 1

    def test_unreachable_remote_exits_two(self, workdir):
        config = write_config(
            workdir,
            [{"kind": "remote", "locator": "http://127.0.0.1:9", "timeout": 0.2}],
            max_new_words=4,
        )
        inp = write_input(workdir, [{"id": "r", "prompt": "the "}])
        code = run_cli(
            "decode", "--config", str(config), "--input", str(inp),
            "--output", str(workdir / "out.jsonl"),
        )
        assert code == 2


class TestEval:
    def test_exact_match_on_own_predictions(self, workdir, capsys):
        preds = write_input(
            workdir,
            [
                {"id": "a", "prompt": "p", "references": ["x y"],
                 "prediction": "X  Y."},
                {"id": "b", "prompt": "p", "references": ["z"],
                 "prediction": "w"},
            ],
            name="preds.jsonl",
        )
        code = run_cli("eval", "--predictions", str(preds),
                       "--metric", "exact_match")
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report == {"metric": "exact_match", "value": 0.5, "items": 2}

    def test_bleu_metric(self, workdir, capsys):
        preds = write_input(
            workdir,
            [{"id": "a", "prompt": "p",
              "references": ["the cat sat on the mat"],
              "prediction": "the cat sat on the mat"}],
            name="preds.jsonl",
        )
        assert run_cli("eval", "--predictions", str(preds),
                       "--metric", "bleu") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["value"] == pytest.approx(1.0)


class TestSweep:
    def test_three_row_report(self, workdir, capsys):
        model = train_model(workdir)
        config = write_config(
            workdir, [{"kind": "ngram", "locator": str(model)}],
            max_new_words=6,
        )
        inp = write_input(workdir, [{"id": "r", "prompt": "the "}])
        csv_path = workdir / "sweep.csv"
        capsys.readouterr()  # drain the train output
        code = run_cli(
            "sweep", "--config", str(config), "--axis", "tau_delta",
            "--values", "0,0.7,1.01", "--input", str(inp),
            "--csv", str(csv_path),
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert len(report["rows"]) == 3
        assert len(csv_path.read_text().strip().splitlines()) == 4


class TestRemoteDecode:
    def test_cli_decodes_through_a_live_server(self, workdir):
        model_path = train_model(workdir)
        app = create_app(NgramLM.load(model_path))
        inp = write_input(workdir, [{"id": "r", "prompt": "the "}])
        out_direct = workdir / "direct.jsonl"
        out_remote = workdir / "remote.jsonl"
        with LiveServer(app) as server:
            remote_cfg = write_config(
                workdir, [{"kind": "remote", "locator": server.url}],
                tau_delta=0.0, max_new_words=8,
            )
            assert run_cli(
                "decode", "--config", str(remote_cfg), "--input", str(inp),
                "--output", str(out_remote),
            ) == 0
        direct_cfg = write_config(
            workdir, [{"kind": "ngram", "locator": str(model_path)}],
            tau_delta=0.0, max_new_words=8,
        )
        assert run_cli(
            "decode", "--config", str(direct_cfg), "--input", str(inp),
            "--output", str(out_direct),
        ) == 0
        direct = read_records(out_direct)[0]
        remote = read_records(out_remote)[0]
        assert remote.prediction == direct.prediction


class TestServeCheck:
    def test_live_server_passes(self, workdir, capsys):
        model_path = train_model(workdir)
        app = create_app(NgramLM.load(model_path))
        with LiveServer(app) as server:
            code = run_cli("serve-check", "--url", server.url)
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("[PASS]") == 5

    def test_unreachable_exits_two(self, capsys):
        code = run_cli("serve-check", "--url", "http://127.0.0.1:9")
        assert code == 2
        assert "[FAIL]" in capsys.readouterr().out


class TestUsageErrors:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == 1

    def test_missing_required_flag(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["train", "--order", "2"])
        assert excinfo.value.code == 1
