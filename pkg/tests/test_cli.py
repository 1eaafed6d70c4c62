import csv
import json

import pytest

from pathaug.cli import main
from pathaug.corpus import read_manifest

from pipeline import full_pipeline


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return full_pipeline(tmp_path_factory.mktemp("cli"), jobs=1)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_pipeline_outputs(ws):
    manifest = read_manifest(ws / "manifest.jsonl")
    assert len(manifest) == 20 and all(e.noisy_path for e in manifest)
    grown = read_manifest(ws / "manifest_fold0_NoiseAdd100.jsonl")
    assert len(grown) == 30
    report = read_rows(ws / "enhanced/Wiener/report.csv")
    assert [(r["group"], r["metric"]) for r in report] == [
        ("Neurotypical", "fwSSNR"), ("Neurotypical", "segSNR"),
        ("Pathological", "fwSSNR"), ("Pathological", "segSNR")]
    assert all(int(r["n"]) == 10 for r in report)
    assert len(read_rows(ws / "enhanced/Wiener/deltas.csv")) == 40


def test_identity_deltas_are_zero(ws):
    assert all(float(r["delta"]) == 0.0 for r in read_rows(ws / "enhanced/Identity/deltas.csv"))


def test_mix_is_idempotent(ws, tmp_path):
    before = (ws / "manifest.jsonl").read_bytes()
    assert main(["mix", "--seed", "42", "--workspace", str(ws),
                 "--noise", str(ws.parent / "fixture" / "noise")]) == 0
    assert (ws / "manifest.jsonl").read_bytes() == before


def test_report_command(ws, capsys):
    assert main(["report", "--input", str(ws / "enhanced/Wiener/report.csv")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and "ΔfwSSNR" in out[1]
    assert main(["report", "--deltas", str(ws / "enhanced/Wiener/deltas.csv")]) == 0
    assert capsys.readouterr().out.splitlines() == out


def test_dry_run_prints_plan(ws, capsys):
    assert main(["augment", "--seed", "42", "--workspace", str(ws), "--dry-run",
                 "--noise", str(ws.parent / "fixture" / "noise"),
                 "--strategy", "pitch", "--ratio", "25", "--fold", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    # two training speakers with five utterances: round(1.25) = 1 item each
    assert len(lines) == 2 and all("__ps" in json.loads(l)["utt_id"] for l in lines)
    assert not (ws / "manifest_fold1_PitchShift25.jsonl").exists()


def test_external_pesq_rows(ws, tmp_path):
    ids = [e.utt_id for e in read_manifest(ws / "manifest.jsonl")]
    for name, value in (("enh.csv", 3.0), ("noisy.csv", 2.5)):
        (tmp_path / name).write_text("utt_id,metric,value\n" + "".join(f"{u},pesq,{value}\n" for u in ids))
    assert main(["evaluate", "--seed", "42", "--workspace", str(ws), "--enhanced", "enhanced/Wiener",
                 "--external-enhanced", str(tmp_path / "enh.csv"),
                 "--external-noisy", str(tmp_path / "noisy.csv"), "--out", "reports/pesq"]) == 0
    rows = [r for r in read_rows(ws / "reports/pesq/report.csv") if r["metric"] == "ExternalPESQ"]
    assert len(rows) == 2 and all(float(r["mean"]) == pytest.approx(0.5) for r in rows)


def test_missing_enhanced_files(ws):
    d = ws / "enhanced" / "Partial"
    d.mkdir()
    src = ws / "enhanced" / "Wiener"
    for f in sorted(src.glob("*.wav"))[:5]:
        (d / f.name).write_bytes(f.read_bytes())
    base = ["evaluate", "--seed", "42", "--workspace", str(ws), "--enhanced", "enhanced/Partial"]
    assert main(base) == 1
    assert main(base + ["--allow-partial"]) == 0


def test_config_file_and_override(ws, tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 1, "workspace": str(ws), "strategies": [["noise", 25]]}))
    assert main(["augment", "--config", str(cfg), "--dry-run",
                 "--noise", str(ws.parent / "fixture" / "noise"), "--fold", "2"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2


class TestExitCodes:
    def test_missing_seed(self, ws):
        assert main(["split", "--workspace", str(ws)]) == 2

    def test_too_many_folds(self, ws, tmp_path):
        # four speakers cannot fill ten folds
        ws2 = tmp_path / "w"
        ws2.mkdir()
        (ws2 / "manifest.jsonl").write_bytes((ws / "manifest.jsonl").read_bytes())
        assert main(["split", "--seed", "1", "--workspace", str(ws2), "--folds", "10"]) == 2

    def test_unknown_strategy(self, ws):
        assert main(["augment", "--seed", "1", "--workspace", str(ws), "--strategy", "mixup",
                     "--ratio", "25", "--noise", str(ws.parent / "fixture" / "noise")]) == 2

    def test_synthetic_400(self, ws, tmp_path):
        (tmp_path / "syn" / "g").mkdir(parents=True)
        assert main(["augment", "--seed", "1", "--workspace", str(ws), "--strategy", "synthetic",
                     "--ratio", "400", "--noise", str(ws.parent / "fixture" / "noise"),
                     "--synthetic-dir", str(tmp_path / "syn"), "--generator", "g"]) == 2

    def test_bad_config_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"seed": 1, "colour": "red"}')
        assert main(["split", "--config", str(tmp_path / "c.json")]) == 2

    def test_missing_workspace(self, tmp_path):
        assert main(["split", "--seed", "1", "--workspace", str(tmp_path / "nope")]) == 2

    def test_argparse_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["enhance", "--method", "magic"])
        assert exc.value.code == 2
