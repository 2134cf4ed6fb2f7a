"""CLI workflow integration: every stage on the bundled synthetic fixture."""

from __future__ import annotations

import json

import pytest

from gazefusion.cli import ProjectConfig, main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Fixture corpus plus a project config pointing at it."""
    root = tmp_path_factory.mktemp("cliwork")
    config = ProjectConfig(
        media_root=str(root / "fixture/media"),
        manifest_csv=str(root / "fixture/manifests/heads.csv"),
        annotations_dir=str(root / "fixture/annotations"),
        output_dir=str(root / "out"),
        seeds=[1, 2],
        train={"learning_rate": 5e-3, "batch_size": 8, "max_epochs": 6},
    )
    config_path = root / "project.json"
    config.save(config_path)
    assert main(["fixture", "--root", str(root / "fixture"), "--seed", "0"]) == 0
    return root, str(config_path)


def run(workdir, *argv) -> int:
    _, config_path = workdir
    return main(["--config", config_path, *argv])


class TestPipelineStages:
    def test_stage_order_and_artifacts(self, workdir):
        root, _ = workdir
        out = root / "out"
        assert run(workdir, "sync") == 0
        offsets = json.loads((out / "offsets.json").read_text())
        assert offsets["s01"]["offset_s"] == pytest.approx(0.20, abs=0.02)
        assert offsets["s02"]["offset_s"] == pytest.approx(-0.35, abs=0.02)
        assert all(v["reliable"] for v in offsets.values())

        assert run(workdir, "sample") == 0
        index = json.loads((out / "frame_index.json").read_text())
        assert set(index) == {"s01", "s02", "s03"}

        assert run(workdir, "featurize") == 0
        assert any((out / "store").rglob("*.gzfs"))

        assert run(workdir, "dataset", "build") == 0
        assert run(workdir, "dataset", "split") == 0
        split = json.loads((out / "split_mg.json").read_text())
        assert split["held_out_sessions"] == ["s03"]
        assert all(row["session"] == "s03" for row in split["test"])

        assert run(workdir, "dataset", "balance") == 0
        balanced = json.loads((out / "split_mg_balanced.json").read_text())
        labels = [row["label"] for row in balanced["test"]]
        assert labels.count(0) == labels.count(1)

        assert run(workdir, "train") == 0
        assert (out / "runs/mg/seed1/checkpoint.gfck").exists()
        assert (out / "runs/mg/seed2/history.csv").exists()

        assert run(workdir, "eval") == 0
        report = json.loads((out / "report_mg.json").read_text())
        assert report["aggregate"]["run_count"] == 2
        for mean, low, high in report["aggregate"]["metrics"].values():
            assert low <= mean <= high

        ckpt = str(out / "runs/mg/seed1/checkpoint.gfck")
        assert run(workdir, "predict", "--checkpoint", ckpt, "--session", "s03") == 0
        predictions = (out / "predictions_mg.csv").read_text().splitlines()
        assert predictions[0] == "session,timestamp_s,task,probability,label"
        assert len(predictions) > 10

        annotations = root / "fixture/annotations/s03.csv"
        assert run(workdir, "export-timeline", "--predictions",
                   str(out / "predictions_mg.csv"), "--annotations", str(annotations)) == 0
        doc = (out / "timeline.gztl").read_text()
        assert doc.startswith("GZTL 1\n")

        assert run(workdir, "import-predictions", "--csv",
                   str(out / "predictions_mg.csv")) == 0

    def test_provenance_manifests_written(self, workdir):
        root, _ = workdir
        manifest = json.loads((root / "out/offsets.json.manifest.json").read_text())
        assert set(manifest) == {"artifact", "inputs", "params"}
        assert all(len(h) == 64 for h in manifest["inputs"].values())

    def test_rerun_is_byte_identical(self, workdir):
        root, _ = workdir
        out = root / "out"
        tracked = ["offsets.json", "frame_index.json", "dataset_mg.json",
                   "split_mg_balanced.json", "runs/mg/seed1/checkpoint.gfck",
                   "runs/mg/seed1/history.csv", "report_mg.json"]
        before = {name: (out / name).read_bytes() for name in tracked}
        for stage in (["sync"], ["sample"], ["featurize"], ["dataset", "build"],
                      ["dataset", "split"], ["dataset", "balance"], ["train"], ["eval"]):
            assert run(workdir, *stage) == 0
        for name in tracked:
            assert (out / name).read_bytes() == before[name], f"{name} changed on rerun"

    def test_bench_reports_throughput(self, workdir):
        root, _ = workdir
        assert run(workdir, "bench") == 0
        report = json.loads((root / "out/bench.json").read_text())
        assert report["samples_per_second"] > 0
        assert report["sample_count"] >= 100


class TestCliErrors:
    def test_sync_partial_failure_enumerates_sessions(self, tmp_path, capsys):
        from gazefusion.pipeline import write_wav
        import numpy as np

        assert main(["fixture", "--root", str(tmp_path / "fixture"), "--seed", "3"]) == 0
        # silence one session's audio: sync must fail for it, succeed elsewhere
        write_wav(tmp_path / "fixture/media/s02/audio_infant.wav", np.zeros(8000 * 3), 8000)
        config = ProjectConfig(media_root=str(tmp_path / "fixture/media"),
                               output_dir=str(tmp_path / "out"))
        config_path = tmp_path / "cfg.json"
        config.save(config_path)
        assert main(["--config", str(config_path), "sync"]) == 1
        captured = capsys.readouterr()
        assert "s02" in captured.err and "near-silent" in captured.err
        offsets = json.loads((tmp_path / "out/offsets.json").read_text())
        assert "s01" in offsets and "s03" in offsets and "s02" not in offsets

    def test_missing_upstream_artifact_names_producer(self, workdir, tmp_path, capsys):
        config = ProjectConfig(output_dir=str(tmp_path / "empty_out"),
                               media_root=str(tmp_path / "nope"))
        config_path = tmp_path / "cfg.json"
        config.save(config_path)
        assert main(["--config", str(config_path), "sample"]) == 1
        err = capsys.readouterr().err
        assert "gazefusion sync" in err

    def test_split_with_absent_held_out_session(self, workdir, capsys):
        assert run(workdir, "dataset", "split", "--held-out", "ghost") == 1
        err = capsys.readouterr().err
        assert "absent" in err

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        config_path = tmp_path / "bad.json"
        config_path.write_text('{"no_such_key": 1}')
        assert main(["--config", str(config_path), "sync"]) == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_config_round_trips_losslessly(self, tmp_path):
        config = ProjectConfig(task="JA", seeds=[5, 6, 7], val_fraction=0.2)
        path = tmp_path / "cfg.json"
        config.save(path)
        assert ProjectConfig.load(path) == config
