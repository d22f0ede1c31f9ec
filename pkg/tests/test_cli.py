import json
import subprocess
import sys

import pytest

from ownvoice.cli import EXIT_HARNESS, EXIT_INPUT, EXIT_MODEL, build_parser, main


def test_defaults():
    p = build_parser()
    a = p.parse_args(["identify", "--manifest", "m.json"])
    assert (a.frame_length, a.alpha, a.filter_length, a.mu, a.eps, a.min_frames) == (128, 0.8, 128, 0.5, 1e-6, 10)
    s = p.parse_args(["synth", "--out", "x"])
    assert (s.fs, s.frame_length, s.seed) == (5000, 128, 0)


def test_end_to_end(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["synth", "--out", str(corpus), "--talkers", "2", "--utterances", "2", "--length", "4000"]) == 0
    manifest = str(corpus / "manifest.json")
    models = str(tmp_path / "models")
    sim = str(tmp_path / "sim")
    assert main(["identify", "--manifest", manifest, "--out", models, "--fs", "5000"]) == 0
    for cond in ("matched", "utterance_mismatch", "talker_mismatch"):
        assert main(["simulate", "--manifest", manifest, "--models", models, "--condition", cond,
                     "--out", sim, "--seed", "3"]) == 0
    report = tmp_path / "report.json"
    assert main(["evaluate", "--manifest", manifest, "--sim", sim, "--out", str(report)]) == 0
    rows = json.loads(report.read_text())["rows"]
    assert len(rows) == 3 * 2 + 3 * 2 + 5 * 2
    capsys.readouterr()
    assert main(["report", str(report)]) == 0
    assert "sd-averaged" in capsys.readouterr().out


def test_categorized_errors(tmp_path, capsys):
    assert main(["identify", "--manifest", str(tmp_path / "none.json")]) != 0
    (tmp_path / "bad.json").write_text("{}")
    assert main(["identify", "--manifest", str(tmp_path / "bad.json")]) == EXIT_INPUT
    assert "input data error" in capsys.readouterr().err

    corpus = tmp_path / "c"
    main(["synth", "--out", str(corpus), "--talkers", "1", "--utterances", "2", "--length", "3000"])
    manifest = str(corpus / "manifest.json")
    assert main(["identify", "--manifest", manifest, "--kind", "si-averaged", "--out", str(tmp_path / "m")]) == EXIT_HARNESS
    assert "harness error" in capsys.readouterr().err
    assert main(["identify", "--manifest", manifest, "--fs", "16000"]) == EXIT_INPUT

    main(["identify", "--manifest", manifest, "--kind", "si-individual", "--out", str(tmp_path / "m")])
    (tmp_path / "m" / "si-individual" / "t01.ovm").write_bytes(b"OWNVOICE-MODEL\n{}\n")
    assert main(["simulate", "--manifest", manifest, "--models", str(tmp_path / "m"), "--condition", "matched",
                 "--kind", "si-individual", "--out", str(tmp_path / "s")]) == EXIT_MODEL
    assert main(["simulate", "--manifest", manifest, "--models", str(tmp_path / "m"), "--condition", "matched",
                 "--kind", "sd-averaged"]) == EXIT_HARNESS


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--manifest", "m.json", "--condition", "nowhere"])
    assert exc.value.code == 2


def test_console_script_module():
    out = subprocess.run([sys.executable, "-m", "ownvoice.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "ownvoice" in out.stdout
