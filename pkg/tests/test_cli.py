import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from bsmkit.cli import main
from bsmkit.dataset import read_manifest


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_missing_corpus_exit2(capsys, tmp_path):
    code, out, err = run(
        capsys, "dataset", "--seed", "7", "--scenes", "2",
        "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "d"),
    )
    assert code == 2
    assert json.loads(err.splitlines()[-1])["error"]["code"] == "CORPUS_NOT_FOUND"


def test_missing_hrir_exit2(capsys, tmp_path, corpus_dir):
    code, out, err = run(
        capsys, "dataset", "--seed", "7", "--scenes", "2",
        "--corpus", str(corpus_dir), "--out", str(tmp_path / "d"),
        "--hrir", str(tmp_path / "missing.hrir"),
    )
    assert code == 2
    assert json.loads(err.splitlines()[-1])["error"]["code"] == "HRTF_NOT_FOUND"


def test_config_unknown_key_rejected(capsys, tmp_path, corpus_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_section": {}}))
    code, out, err = run(
        capsys, "dataset", "--config", str(cfg), "--seed", "1", "--scenes", "2",
        "--corpus", str(corpus_dir), "--out", str(tmp_path / "d"),
    )
    assert code == 2
    assert "no_such_section" in json.loads(err.splitlines()[-1])["error"]["message"]


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("ds")
    code = main([
        "dataset", "--seed", "9", "--scenes", "10",
        "--corpus", str(corpus_dir), "--out", str(out / "d1"),
    ])
    assert code == 0
    return out / "d1"


@pytest.mark.slow
class TestEndToEnd:

    def test_split_summary(self, capsys, small_dataset, corpus_dir, tmp_path):
        code, out, _ = run(
            capsys, "dataset", "--seed", "9", "--scenes", "10",
            "--corpus", str(corpus_dir), "--out", str(tmp_path / "d2"),
        )
        assert code == 0
        summary = json.loads(out.splitlines()[-1])
        assert summary["splits"] == {"train": 8, "val": 1, "test": 1}
        # determinism: byte-identical trees
        assert tree_bytes(tmp_path / "d2") == tree_bytes(small_dataset)

    def test_render_zero_rotation_diff(self, capsys, small_dataset, corpus_dir, tmp_path):
        row = read_manifest(small_dataset / "manifest.jsonl")[0]
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(json.dumps(row["scene"]))
        clip = sorted(Path(corpus_dir).glob("*.wav"))[0]
        code, out, _ = run(
            capsys, "render", "--scene", str(scene_path), "--clip", str(clip),
            "--out", str(tmp_path / "r0"), "--rotation-deg", "0",
        )
        assert code == 0
        info = json.loads(out.splitlines()[-1])
        assert info["input_target_rel_diff"] == 0.0
        assert info["duration_s"] == pytest.approx(4.0)

    def test_render_missing_hrir(self, capsys, small_dataset, tmp_path, corpus_dir):
        row = read_manifest(small_dataset / "manifest.jsonl")[0]
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(json.dumps(row["scene"]))
        clip = sorted(Path(corpus_dir).glob("*.wav"))[0]
        code, _, err = run(
            capsys, "render", "--scene", str(scene_path), "--clip", str(clip),
            "--out", str(tmp_path / "r1"), "--hrir", str(tmp_path / "missing.pack"),
        )
        assert code == 2
        assert json.loads(err.splitlines()[-1])["error"]["code"] == "HRTF_NOT_FOUND"

    def test_evaluate_self_and_missing(self, capsys, small_dataset, tmp_path):
        rows = read_manifest(small_dataset / "manifest.jsonl")
        est = tmp_path / "est"
        est.mkdir()
        test_rows = [r for r in rows if r["split"] == "test"]
        for row in test_rows:
            shutil.copy(small_dataset / row["target_path"], est / f"{row['scene_id']}.wav")
        code, out, _ = run(
            capsys, "evaluate", "--manifest", str(small_dataset), "--est", str(est),
            "--out", str(tmp_path / "rep"), "--report-format", "json",
        )
        assert code == 0
        report = json.loads(out)
        overall = [g for g in report["groups"] if g["group"] == "overall"][0]
        assert overall["si_sdr"] == 120.0
        assert overall["l_ild"] == 0.0
        assert (tmp_path / "rep.csv").exists() and (tmp_path / "rep.json").exists()
        # remove one estimate: warning, partial report, exit 0
        (est / f"{test_rows[0]['scene_id']}.wav").unlink()
        extra = tmp_path / "est2"
        extra.mkdir()
        for row in rows:
            if row["split"] == "train":
                shutil.copy(
                    small_dataset / row["input_path"], extra / f"{row['scene_id']}.wav"
                )
        code, out, err = run(
            capsys, "evaluate", "--manifest", str(small_dataset), "--est", str(extra),
            "--out", str(tmp_path / "rep2"), "--split", "train",
        )
        assert code == 0

    def test_evaluate_input_shows_far_ear(self, capsys, small_dataset, tmp_path):
        rows = read_manifest(small_dataset / "manifest.jsonl")
        est = tmp_path / "est_in"
        est.mkdir()
        for row in rows:
            shutil.copy(small_dataset / row["input_path"], est / f"{row['scene_id']}.wav")
        code, out, _ = run(
            capsys, "evaluate", "--manifest", str(small_dataset), "--est", str(est),
            "--out", str(tmp_path / "rep3"), "--split", "all", "--report-format", "json",
        )
        assert code == 0
        report = json.loads(out)
        groups = {g["group"]: g for g in report["groups"]}
        assert groups["ear:right"]["si_sdr"] < groups["ear:left"]["si_sdr"]

    def test_cues_and_filters(self, capsys, small_dataset, tmp_path):
        row = read_manifest(small_dataset / "manifest.jsonl")[0]
        ref = small_dataset / row["target_path"]
        est = small_dataset / row["input_path"]
        code, out, _ = run(
            capsys, "cues", str(ref), str(est), "--out", str(tmp_path / "cues")
        )
        assert code == 0
        parts = json.loads(out.splitlines()[-1])
        assert parts["l_ild"] >= 0 and (tmp_path / "cues" / "reference.cues").exists()

        scene_path = tmp_path / "scene2.json"
        scene_path.write_text(json.dumps(row["scene"]))
        code, out, _ = run(
            capsys, "filters", "--scene", str(scene_path), "--out", str(tmp_path / "banks")
        )
        assert code == 0
        summary = json.loads(out.splitlines()[-1])
        assert summary["input"]["magls_bins"] == 417
        from bsmkit.bsm import load_filterbank

        bank = load_filterbank(summary["input"]["path"])
        assert bank.n_bins == 513
