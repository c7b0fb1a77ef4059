"""Command-line workflows: synth, train, evaluate, sweep-k, config handling."""

import os

import pytest

from cips import data
from cips.cli import main
from cips.config import RunConfig, load_run_config, serialize_config
from cips.errors import ConfigError
from cips.evaluation import read_report
from cips.recsys import load_model


def run_cli(*args):
    return main(list(args))


def base_args(tmp_path, extra=()):
    world = str(tmp_path / "world")
    out = str(tmp_path / "out")
    return world, out


def write_config(tmp_path, **kv):
    lines = [f"{key} = {value}" for key, value in kv.items()]
    path = tmp_path / "run.cfg"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def fast_config(tmp_path, **kv):
    defaults = dict(num_users=30, num_items=20, num_true_clusters=2,
                    samples_per_user=4, epochs=2, cluster_epochs=2,
                    outer_iterations=1, num_clusters=2, embedding_dim=4,
                    hidden_dim=8, segment_size=10, profile="blocks")
    defaults.update(kv)
    return write_config(tmp_path, **defaults)


class TestConfig:
    def test_round_trip_canonicalization(self, tmp_path):
        path = write_config(tmp_path, seed=7, variant="mf", learning_rate=0.02,
                            k_values="2,4", squared_distance="true")
        cfg = load_run_config(path)
        canonical = serialize_config(cfg)
        reparsed = load_run_config(path=None, overrides=None)
        text_path = tmp_path / "canon.cfg"
        text_path.write_text(canonical)
        cfg2 = load_run_config(str(text_path))
        assert serialize_config(cfg2) == canonical
        assert cfg.seed == 7 and cfg.variant == "mf"
        assert cfg.k_values == [2, 4]
        assert cfg.squared_distance is True
        assert reparsed.seed == 0

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, bogus_knob=3)
        with pytest.raises(ConfigError, match="unknown config key"):
            load_run_config(path)

    def test_override_wins(self, tmp_path):
        path = write_config(tmp_path, seed=7)
        cfg = load_run_config(path, {"seed": 99})
        assert cfg.seed == 99

    def test_bad_value_type(self, tmp_path):
        path = write_config(tmp_path, epochs="many")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_run_config(path)

    def test_invalid_variant(self):
        with pytest.raises(ConfigError, match="variant"):
            RunConfig(variant="svd").validate()


class TestSynth:
    def test_writes_reloadable_world(self, tmp_path, capsys):
        cfg = fast_config(tmp_path)
        world = str(tmp_path / "world")
        assert run_cli("synth", "--config", cfg, "--out", world, "--seed", "3") == 0
        out = capsys.readouterr().out
        assert "non-empty clusters: 2 of 2" in out
        ds = data.load_dataset(world)
        assert ds.num_users == 30 and ds.num_items == 20
        truth = data.load_ground_truth(world)
        assert truth.num_clusters == 2

    def test_byte_identical_reruns(self, tmp_path):
        cfg = fast_config(tmp_path)
        w1, w2 = str(tmp_path / "w1"), str(tmp_path / "w2")
        run_cli("synth", "--config", cfg, "--out", w1, "--seed", "5")
        run_cli("synth", "--config", cfg, "--out", w2, "--seed", "5")
        for name in ("train.txt", "validation.txt", "test.txt", "meta.json",
                     "truth_cluster_item.txt", "truth_user_cluster.txt"):
            a = open(os.path.join(w1, name), "rb").read()
            b = open(os.path.join(w2, name), "rb").read()
            assert a == b, name


@pytest.fixture
def synth_world(tmp_path):
    cfg = fast_config(tmp_path)
    world = str(tmp_path / "world")
    run_cli("synth", "--config", cfg, "--out", world, "--seed", "3")
    return cfg, world


class TestTrain:
    def test_mf_checkpoint_loads_and_predicts(self, tmp_path, synth_world):
        cfg, world = synth_world
        out = str(tmp_path / "out")
        code = run_cli("train", "--config", cfg, "--data", world, "--out", out,
                       "--variant", "mf", "--seed", "4")
        assert code == 0
        model, meta = load_model(os.path.join(out, "checkpoint_mf.cips"))
        assert meta["variant"] == "mf"
        assert 0.0 < model.predict_pairs([0], [0])[0] < 1.0
        report = open(os.path.join(out, "train_report.csv")).read().splitlines()
        assert report[0] == "model,metric,K,segment,value,seed,epoch"
        assert len(report) > 1

    def test_cips_with_single_cluster_completes(self, tmp_path, synth_world):
        cfg, world = synth_world
        out = str(tmp_path / "out_k1")
        code = run_cli("train", "--config", cfg, "--data", world, "--out", out,
                       "--variant", "cips", "--k", "1", "--seed", "4")
        assert code == 0
        model, meta = load_model(os.path.join(out, "checkpoint_cips.cips"))
        assert meta["num_clusters"] == 1

    def test_missing_data_dir_fails_with_nonzero_exit(self, tmp_path, capsys):
        cfg = fast_config(tmp_path)
        code = run_cli("train", "--config", cfg, "--data", str(tmp_path / "nope"),
                       "--out", str(tmp_path / "out"))
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_idempotent_reruns(self, tmp_path, synth_world):
        cfg, world = synth_world
        out = str(tmp_path / "out_rerun")
        names = ("checkpoint_cips.cips", "train_report.csv", "config_used.txt")
        run_cli("train", "--config", cfg, "--data", world, "--out", out,
                "--variant", "cips", "--seed", "6")
        first = {n: open(os.path.join(out, n), "rb").read() for n in names}
        run_cli("train", "--config", cfg, "--data", world, "--out", out,
                "--variant", "cips", "--seed", "6")
        for name in names:
            assert open(os.path.join(out, name), "rb").read() == first[name], name

    def test_checkpoints_independent_of_output_path(self, tmp_path, synth_world):
        cfg, world = synth_world
        o1, o2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        for out in (o1, o2):
            run_cli("train", "--config", cfg, "--data", world, "--out", out,
                    "--variant", "cips", "--seed", "6")
        for name in ("checkpoint_cips.cips", "train_report.csv"):
            a = open(os.path.join(o1, name), "rb").read()
            b = open(os.path.join(o2, name), "rb").read()
            assert a == b, name


class TestEvaluate:
    def test_full_grid_and_reruns_identical(self, tmp_path, synth_world):
        cfg, world = synth_world
        out = str(tmp_path / "out")
        run_cli("train", "--config", cfg, "--data", world, "--out", out,
                "--variant", "mf", "--seed", "4")
        assert run_cli("evaluate", "--config", cfg, "--data", world, "--out", out,
                       "--variant", "mf", "--seed", "4") == 0
        report = read_report(os.path.join(out, "report.csv"))
        assert len(report.rows) == 18
        first = open(os.path.join(out, "report.csv")).read()
        run_cli("evaluate", "--config", cfg, "--data", world, "--out", out,
                "--variant", "mf", "--seed", "4")
        assert open(os.path.join(out, "report.csv")).read() == first

    def test_variant_mismatch_rejected(self, tmp_path, synth_world, capsys):
        cfg, world = synth_world
        out = str(tmp_path / "out")
        run_cli("train", "--config", cfg, "--data", world, "--out", out,
                "--variant", "mf", "--seed", "4")
        os.rename(os.path.join(out, "checkpoint_mf.cips"),
                  os.path.join(out, "checkpoint_wmf.cips"))
        code = run_cli("evaluate", "--config", cfg, "--data", world, "--out", out,
                       "--variant", "wmf", "--seed", "4")
        assert code == 1
        assert "does not match" in capsys.readouterr().err

    def test_missing_checkpoint_rejected(self, tmp_path, synth_world):
        cfg, world = synth_world
        code = run_cli("evaluate", "--config", cfg, "--data", world,
                       "--out", str(tmp_path / "fresh"), "--variant", "mf")
        assert code == 1


class TestSweepK:
    def test_two_values_produce_two_blocks(self, tmp_path, synth_world):
        cfg, world = synth_world
        out = str(tmp_path / "sweep")
        path = fast_config(tmp_path, k_values="2,4")
        assert run_cli("sweep-k", "--config", path, "--data", world, "--out", out,
                       "--seed", "4") == 0
        report = read_report(os.path.join(out, "sweep_report.csv"))
        models = {r.model for r in report.rows}
        assert models == {"cips_k2", "cips_k4"}
        assert len(report.rows) == 36
        assert os.path.exists(os.path.join(out, "checkpoint_cips_k2_seed4.cips"))

    def test_oversized_k_skipped_with_warning(self, tmp_path, synth_world, capsys):
        cfg, world = synth_world
        out = str(tmp_path / "sweep2")
        path = fast_config(tmp_path, k_values="2,500")
        assert run_cli("sweep-k", "--config", path, "--data", world, "--out", out,
                       "--seed", "4") == 0
        assert "skipped" in capsys.readouterr().err
        report = read_report(os.path.join(out, "sweep_report.csv"))
        assert {r.model for r in report.rows} == {"cips_k2"}
