import json
import os
import subprocess
import sys

import numpy as np
import pytest

from syngen.cli import main
from syngen.loss import normalize_rows, tensor_to_csv, tensor_to_json

from conftest import DATA

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PROMPTS = os.path.join(ROOT, "demos", "data", "prompts.conllu")
TOY = os.path.join(ROOT, "configs", "toy.json")
ANNOTATIONS = os.path.join(DATA, "annotations.csv")
CROWN = 4  # index of "a red crown and a golden strawberry" in the prompts file


def read(path):
    with open(path, "rb") as f:
        return f.read()


def tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for name in files:
            p = os.path.join(d, name)
            out[os.path.relpath(p, root)] = read(p)
    return out


@pytest.fixture
def bindings(tmp_path):
    path = tmp_path / "bindings.json"
    assert main(["extract", PROMPTS, "--out", str(path)]) == 0
    return str(path)


class TestExtract:
    def test_writes_sets(self, bindings):
        docs = json.loads(read(bindings))
        assert [d["sentence"] for d in docs][CROWN] == "a red crown and a golden strawberry"
        assert docs[0]["sets"][0]["pairs"] == [[2, 4], [3, 4]]

    def test_missing_file(self, tmp_path, capsys):
        assert main(["extract", str(tmp_path / "nope.conllu")]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_malformed_line(self, tmp_path, capsys):
        p = tmp_path / "bad.conllu"
        p.write_text("1\tdog\tdog\tNOUN\n")
        assert main(["extract", str(p)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_sentence_without_nouns(self, tmp_path, capsys):
        p = tmp_path / "v.conllu"
        p.write_text("1\trun\trun\tVERB\tVB\t_\t0\troot\t_\t_\n\n")
        assert main(["extract", str(p)]) == 0
        assert json.loads(capsys.readouterr().out)["sets"] == []


class TestLoss:
    def test_json_and_csv_agree(self, bindings, tmp_path):
        rng = np.random.default_rng(0)
        tensor = normalize_rows(rng.random((7, 16)) + 0.01, 4)
        (tmp_path / "m.json").write_text(tensor_to_json(tensor))
        (tmp_path / "m.csv").write_text(tensor_to_csv(tensor))
        outs = []
        for name in ("m.json", "m.csv"):
            out = tmp_path / f"{name}.loss.json"
            assert main(["loss", bindings, str(tmp_path / name), "--sentence", str(CROWN), "--out", str(out)]) == 0
            outs.append(json.loads(read(out)))
        assert outs[0] == outs[1]
        assert set(outs[0]["pair_dists"]) == {"2-3", "6-7"}

    def test_too_few_maps(self, bindings, tmp_path, capsys):
        tensor = normalize_rows(np.ones((3, 4)), 2)
        (tmp_path / "m.json").write_text(tensor_to_json(tensor))
        assert main(["loss", bindings, str(tmp_path / "m.json"), "--sentence", str(CROWN)]) == 2
        assert "needs 7 maps" in capsys.readouterr().err


class TestOptimize:
    def test_toy_run(self, bindings, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["optimize", bindings, "--sentence", str(CROWN), "--config", TOY, "--out", str(out)]) == 0
        lines = read(out / "trajectory.jsonl").decode().splitlines()
        assert len(lines) == 51
        summary = json.loads(capsys.readouterr().out)
        assert summary["final_ratio"] < summary["initial_ratio"]
        assert (out / "snapshots" / "tok2_step50.pgm").exists()

    def test_divergence_exit_code(self, bindings, tmp_path):
        code = main(["optimize", bindings, "--sentence", str(CROWN), "--alpha", "1e6", "--out", str(tmp_path)])
        assert code == 3
        assert not (tmp_path / "trajectory.jsonl").exists()

    def test_snapshots_off(self, bindings, tmp_path):
        assert main(["optimize", bindings, "--sentence", str(CROWN), "--snapshots", "off", "--out", str(tmp_path)]) == 0
        assert not (tmp_path / "snapshots").exists()

    def test_unknown_config_key(self, bindings, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"learning_rate": 0.1}')
        assert main(["optimize", bindings, "--config", str(cfg)]) == 2
        assert "learning_rate" in capsys.readouterr().err

    def test_sentence_out_of_range(self, bindings, capsys):
        assert main(["optimize", bindings, "--sentence", "40"]) == 2


class TestGenDvmp:
    def test_600_prompts(self, tmp_path):
        assert main(["gen-dvmp", "--seed", "1", "--count", "600", "--out", str(tmp_path)]) == 0
        assert len(read(tmp_path / "dvmp.txt").decode().splitlines()) == 600
        assert len(read(tmp_path / "dvmp.jsonl").decode().splitlines()) == 600

    def test_swap_outputs(self, tmp_path):
        assert main(["gen-dvmp", "--seed", "1", "--count", "40", "--swap", "--out", str(tmp_path)]) == 0
        swapped = [json.loads(x) for x in read(tmp_path / "dvmp_swapped.jsonl").decode().splitlines()]
        assert swapped and all(r["n_entities"] == 2 for r in swapped)

    def test_bad_count(self, tmp_path):
        assert main(["gen-dvmp", "--count", "0", "--out", str(tmp_path)]) == 2


class TestEval:
    def test_fixture_values(self, capsys):
        assert main(["eval", ANNOTATIONS]) == 0
        s = json.loads(capsys.readouterr().out)
        assert (s["proper_binding"], s["improper_binding"], s["entity_neglect"]) == (0.5, 0.5, 0.25)

    def test_malformed_row(self, tmp_path, capsys):
        p = tmp_path / "a.csv"
        p.write_text(read(ANNOTATIONS).decode() + "p4,2,two,0,1,1\n")
        assert main(["eval", str(p)]) == 2
        assert "row 5" in capsys.readouterr().err

    def test_empty_file(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("")
        assert main(["eval", str(p)]) == 2


def _invocations(base):
    b = os.path.join(base, "bindings.json")
    maps = os.path.join(base, "maps.json")
    return [
        ["extract", PROMPTS, "--out", b],
        ["loss", b, maps, "--sentence", str(CROWN), "--out", os.path.join(base, "loss.json")],
        ["optimize", b, "--sentence", str(CROWN), "--config", TOY, "--seed", "3", "--out", os.path.join(base, "opt")],
        ["gen-dvmp", "--seed", "7", "--count", "100", "--swap", "--out", os.path.join(base, "dvmp")],
        ["eval", ANNOTATIONS, "--out", os.path.join(base, "eval.json")],
    ]


def run_all_subcommands(base):
    """Every subcommand into ``base``; returns the produced file tree."""
    os.makedirs(base, exist_ok=True)
    rng = np.random.default_rng(11)
    with open(os.path.join(base, "maps.json"), "w") as f:
        f.write(tensor_to_json(normalize_rows(rng.random((7, 64)) + 0.01, 8)))
    for argv in _invocations(base):
        assert main(argv) == 0, argv
    return tree_bytes(base)


def test_byte_identical_reruns(tmp_path, capsys):
    a = run_all_subcommands(str(tmp_path / "a"))
    b = run_all_subcommands(str(tmp_path / "b"))
    capsys.readouterr()
    assert a.keys() == b.keys()
    assert all(a[k] == b[k] for k in a), [k for k in a if a[k] != b[k]]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "syngen", "eval", ANNOTATIONS],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["entity_neglect"] == 0.25
