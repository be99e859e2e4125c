import json

import pytest

from smokewatch.cli import main
from smokewatch.data import load_manifest, save_manifest, DatasetManifest, ManifestEntry, Annotation
from smokewatch.metrics import save_detections, save_ground_truths, Detection, GroundTruth
from smokewatch.synthetic import write_corpus

TINY = ["--input-size", "32", "--backbone-channels", "4,8,16,32,64",
        "--neck-channels", "64,64", "--hidden-dim", "16"]


def run_cli(*args):
    try:
        return main(list(args))
    except SystemExit as exc:  # argparse usage failures
        return exc.code


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "corpus", count=6, size=32, seed=0)


@pytest.fixture
def weights(corpus, tmp_path):
    path = tmp_path / "model.bin"
    code = run_cli("train", "--manifest", str(corpus), "--weights", str(path),
                   *TINY, "--epochs", "1", "--lr", "0.001", "--seed", "0")
    assert code == 0
    return path


class TestAugmentAndSplit:
    def test_augment_expands_manifest(self, corpus, tmp_path, capsys):
        out = tmp_path / "corpus" / "augmented.tsv"
        code = run_cli("augment", "--manifest", str(corpus), "--out", str(out),
                       "--variants", "2", "--seed", "1")
        assert code == 0
        assert "augmented 6 -> 18 entries (0 skipped)" in capsys.readouterr().out
        manifest = load_manifest(out)
        assert len(manifest) == 18
        for entry in manifest:
            if entry.provenance != "raw":
                assert (out.parent / entry.path).is_file()

    def test_augment_reports_skipped(self, corpus, tmp_path, capsys):
        (corpus.parent / "synthetic_0002.ppm").write_bytes(b"P6\n4 4\n255\nxx")
        out = tmp_path / "corpus" / "augmented.tsv"
        code = run_cli("augment", "--manifest", str(corpus), "--out", str(out),
                       "--variants", "1")
        assert code == 0
        captured = capsys.readouterr()
        assert "skipped synthetic_0002.ppm" in captured.err
        assert "(1 skipped)" in captured.out

    def test_split_writes_three_manifests(self, corpus, tmp_path, capsys):
        out_dir = tmp_path / "splits"
        code = run_cli("split", "--manifest", str(corpus), "--counts", "4,1,1",
                       "--out-dir", str(out_dir), "--seed", "2")
        assert code == 0
        assert "train 4 val 1 test 1" in capsys.readouterr().out
        sizes = [len(load_manifest(out_dir / f"{n}.tsv")) for n in ("train", "val", "test")]
        assert sizes == [4, 1, 1]
        # entries stay loadable from the new location
        entry = load_manifest(out_dir / "train.tsv").entries[0]
        assert (out_dir / entry.path).resolve().is_file()

    def test_split_bad_counts_writes_nothing(self, corpus, tmp_path, capsys):
        out_dir = tmp_path / "splits"
        assert run_cli("split", "--manifest", str(corpus), "--counts", "4,1",
                       "--out-dir", str(out_dir)) == 1
        assert run_cli("split", "--manifest", str(corpus), "--counts", "9,9,9",
                       "--out-dir", str(out_dir)) == 1
        assert not out_dir.exists()

    def test_augment_missing_manifest_is_data_error(self, tmp_path):
        assert run_cli("augment", "--manifest", str(tmp_path / "no.tsv"),
                       "--out", str(tmp_path / "o.tsv")) == 2


class TestTrainInferEval:
    def test_train_logs_epochs_and_saves(self, corpus, tmp_path, capsys):
        path = tmp_path / "model.bin"
        code = run_cli("train", "--manifest", str(corpus), "--weights", str(path),
                       *TINY, "--epochs", "2", "--lr", "0.001")
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("epoch ") == 2
        assert "epoch 1 loss " in out and " acc " in out
        assert f"saved weights to {path}" in out
        assert path.stat().st_size > 0

    def test_train_determinism(self, corpus, tmp_path, capsys):
        a = tmp_path / "a.bin"
        b = tmp_path / "b.bin"
        for path in (a, b):
            assert run_cli("train", "--manifest", str(corpus), "--weights", str(path),
                           *TINY, "--epochs", "1", "--lr", "0.01", "--seed", "5") == 0
        assert a.read_bytes() == b.read_bytes()

    def test_infer_prints_label_and_confidence(self, weights, corpus, capsys):
        code = run_cli("infer", "--weights", str(weights),
                       "--image", str(corpus.parent / "synthetic_0000.ppm"))
        assert code == 0
        out = capsys.readouterr().out.strip()
        label, conf = out.split()
        assert label in ("smoking", "not_smoking")
        assert conf.endswith("%") and 0.0 <= float(conf[:-1]) <= 100.0

    def test_eval_prints_table_and_writes_json(self, weights, corpus, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = run_cli("eval", "--weights", str(weights), "--manifest", str(corpus),
                       "--model-name", "Proposed", "--json", str(report_path))
        assert code == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "Model Acc Prec Rec F1 mAP@50"
        assert out.splitlines()[1].startswith("Proposed ")
        payload = json.loads(report_path.read_text())
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert payload["map50"] is None

    def test_eval_vocabulary_mismatch_is_contract_error(self, weights, tmp_path, corpus):
        bad = tmp_path / "bad.tsv"
        save_manifest(DatasetManifest([
            ManifestEntry("synthetic_0000.ppm", Annotation(7))]), bad)
        # entry path resolves against the manifest directory
        import shutil
        shutil.copy(corpus.parent / "synthetic_0000.ppm", tmp_path / "synthetic_0000.ppm")
        assert run_cli("eval", "--weights", str(weights), "--manifest", str(bad)) == 3

    def test_train_bad_lr_is_validation_error(self, corpus, tmp_path):
        assert run_cli("train", "--manifest", str(corpus),
                       "--weights", str(tmp_path / "w.bin"), *TINY,
                       "--epochs", "1", "--lr", "-0.5") == 1

    def test_infer_corrupt_weights_is_data_error(self, corpus, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"EXWTgarbage")
        assert run_cli("infer", "--weights", str(bad),
                       "--image", str(corpus.parent / "synthetic_0000.ppm")) == 2

    def test_unknown_flag_is_usage_error(self):
        assert run_cli("train", "--nonsense") == 1

    def test_missing_subcommand_is_usage_error(self):
        assert run_cli() == 1


class TestEvalDet:
    def test_reports_map_and_per_class(self, tmp_path, capsys):
        dets = [Detection("a", 0, 0.9, (0.5, 0.5, 0.2, 0.2)),
                Detection("a", 1, 0.8, (0.2, 0.2, 0.2, 0.2))]
        gts = [GroundTruth("a", 0, (0.5, 0.5, 0.2, 0.2)),
               GroundTruth("a", 1, (0.8, 0.8, 0.2, 0.2))]
        det_path = tmp_path / "dets.txt"
        gt_path = tmp_path / "gts.txt"
        save_detections(dets, det_path)
        save_ground_truths(gts, gt_path)
        report_path = tmp_path / "det_report.json"
        code = run_cli("eval-det", "--detections", str(det_path),
                       "--ground-truth", str(gt_path), "--json", str(report_path))
        assert code == 0
        out = capsys.readouterr().out
        assert "mAP@50 50.00" in out
        assert "class 0 AP 100.00" in out and "class 1 AP 0.00" in out
        payload = json.loads(report_path.read_text())
        assert payload["map50"] == pytest.approx(0.5)
        assert payload["per_class_ap"] == {"0": 1.0, "1": 0.0}

    def test_malformed_detections_is_data_error(self, tmp_path):
        det_path = tmp_path / "dets.txt"
        gt_path = tmp_path / "gts.txt"
        det_path.write_text("bad line\n")
        save_ground_truths([GroundTruth("a", 0, (0.5, 0.5, 0.2, 0.2))], gt_path)
        assert run_cli("eval-det", "--detections", str(det_path),
                       "--ground-truth", str(gt_path)) == 2

    def test_no_ground_truth_is_validation_error(self, tmp_path):
        det_path = tmp_path / "dets.txt"
        gt_path = tmp_path / "gts.txt"
        save_detections([Detection("a", 0, 0.9, (0.5, 0.5, 0.2, 0.2))], det_path)
        gt_path.write_text("")
        assert run_cli("eval-det", "--detections", str(det_path),
                       "--ground-truth", str(gt_path)) == 1


class TestBench:
    def test_prints_table_and_writes_json(self, tmp_path, capsys):
        report_path = tmp_path / "bench.json"
        code = run_cli("bench", "--mode", "pipe", "--frames", "6", "--warmup", "2",
                       "--resolution", "48x36", *TINY,
                       "--inject-delays", "1,2,1", "--device-label", "test-cpu",
                       "--notes", "ci", "--json", str(report_path))
        assert code == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("Device | Pre (ms) | Infer (ms)")
        assert "test-cpu" in out and "48×36" in out
        payload = json.loads(report_path.read_text())
        assert payload["mode"] == "pipelined" and payload["frames"] == 4

    def test_bad_resolution_is_usage_error(self):
        assert run_cli("bench", "--resolution", "wide") == 1

    def test_weights_drive_bench_config(self, weights, capsys):
        code = run_cli("bench", "--weights", str(weights), "--frames", "3",
                       "--warmup", "1", "--resolution", "32x32")
        assert code == 0
        assert "Device | " in capsys.readouterr().out
