"""Command-line interface: artifacts, config echo, exit codes.

Commands are driven through ``main(argv)`` in-process; one subprocess test
covers module invocation. Exit codes: 0 ok, 2 config problem, 3 data
problem.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from quadfuse.cli import ConfigError, _token_table, cfg_get, load_config, main
from quadfuse.records import (
    Dataset,
    QuadrupleRecord,
    load_dataset,
    save_dataset,
)

BASE_CFG = """
[synth]
n_records = 60
dealer_fraction = 0.2
noise_rate = 0.1
seed = 3

[train]
epochs = 5

[embed]
text_dim = 16
image_dim = 24

[fusion]
strategy = concat
protocol = quadruple
sketch_dim = 32

[experiment]
protocols = post_level, quadruple
strategies = concat
np_ratios = 2

[crawl]
seeds = xanax, lsd
dealer_threshold = 4
n_posts = 40
n_users = 16

[annotation]
tokens = tok-a:alice, tok-b:bob
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(BASE_CFG, encoding="utf-8")
    return str(path)


@pytest.fixture
def dataset(tmp_path, cfg):
    out = tmp_path / "gen"
    assert main(["gen-synth", "--config", cfg, "--out", str(out)]) == 0
    return str(out / "dataset.jsonl")


# ---------------------------------------------------------------------------
# happy paths


class TestGenSynth:
    def test_writes_dataset_and_echo(self, tmp_path, cfg):
        out = tmp_path / "o"
        assert main(["gen-synth", "--config", cfg, "--out", str(out)]) == 0
        assert len(load_dataset(out / "dataset.jsonl")) == 60
        echo = load_config(str(out / "config_used.ini"))
        assert echo.get("synth", "n_records") == "60"
        assert echo.get("synth", "seed") == "3"

    def test_seed_flag_overrides_config(self, tmp_path, cfg):
        out = tmp_path / "o"
        assert main(["gen-synth", "--config", cfg, "--seed", "9",
                     "--out", str(out)]) == 0
        echo = load_config(str(out / "config_used.ini"))
        assert echo.get("synth", "seed") == "9"

    def test_same_seed_same_bytes(self, tmp_path, cfg):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["gen-synth", "--config", cfg, "--out", str(a)])
        main(["gen-synth", "--config", cfg, "--out", str(b)])
        assert (a / "dataset.jsonl").read_bytes() == \
            (b / "dataset.jsonl").read_bytes()

    def test_works_without_config_file(self, tmp_path):
        out = tmp_path / "o"
        assert main(["gen-synth", "--out", str(out)]) == 0
        assert len(load_dataset(out / "dataset.jsonl")) == 500  # defaults


class TestEmbed:
    def test_writes_feature_arrays(self, tmp_path, cfg, dataset):
        out = tmp_path / "emb"
        assert main(["embed", "--config", cfg, "--data", dataset,
                     "--out", str(out)]) == 0
        arrays = np.load(out / "features.npz", allow_pickle=False)
        assert arrays["pc"].shape == (60, 16)
        assert arrays["pi"].shape == (60, 24)
        assert arrays["mask"].shape == (60, 4)
        assert arrays["y"].shape == (60,)


class TestTrainEval:
    def test_checkpoint_and_metrics(self, tmp_path, cfg, dataset):
        out = tmp_path / "tr"
        assert main(["train", "--config", cfg, "--data", dataset,
                     "--out", str(out)]) == 0
        assert (out / "model.ckpt").is_file()
        doc = json.loads((out / "train_metrics.json").read_text())
        assert 0.0 <= doc["accuracy"] <= 1.0
        assert "final_loss" in doc

    def test_eval_reproduces_train_metrics_on_same_data(self, tmp_path, cfg,
                                                        dataset):
        tr, ev = tmp_path / "tr", tmp_path / "ev"
        main(["train", "--config", cfg, "--data", dataset, "--out", str(tr)])
        assert main(["eval", "--config", cfg, "--data", dataset,
                     "--model", str(tr / "model.ckpt"), "--out", str(ev)]) == 0
        train_doc = json.loads((tr / "train_metrics.json").read_text())
        eval_doc = json.loads((ev / "metrics.json").read_text())
        for key in ("accuracy", "precision", "recall", "f1"):
            assert eval_doc[key] == train_doc[key]

    def test_eval_takes_strategy_from_checkpoint(self, tmp_path, dataset):
        # train compact-bilinear; eval config says concat but the checkpoint
        # header wins, so widths line up and the run succeeds
        train_cfg = BASE_CFG.replace("strategy = concat",
                                     "strategy = compact_bilinear")
        path = tmp_path / "cb.ini"
        path.write_text(train_cfg, encoding="utf-8")
        tr, ev = tmp_path / "tr", tmp_path / "ev"
        assert main(["train", "--config", str(path), "--data", dataset,
                     "--out", str(tr)]) == 0
        base = tmp_path / "base.ini"
        base.write_text(BASE_CFG, encoding="utf-8")
        assert main(["eval", "--config", str(base), "--data", dataset,
                     "--model", str(tr / "model.ckpt"), "--out", str(ev)]) == 0

    def test_eval_rejects_mismatched_embedding_dims(self, tmp_path, cfg,
                                                    dataset):
        tr = tmp_path / "tr"
        main(["train", "--config", cfg, "--data", dataset, "--out", str(tr)])
        other = tmp_path / "wide.ini"
        other.write_text(BASE_CFG.replace("text_dim = 16", "text_dim = 20"),
                         encoding="utf-8")
        rc = main(["eval", "--config", str(other), "--data", dataset,
                   "--model", str(tr / "model.ckpt"),
                   "--out", str(tmp_path / "ev")])
        assert rc == 3


class TestExperiment:
    def test_grid_rows_written(self, tmp_path, cfg):
        out = tmp_path / "ex"
        assert main(["experiment", "--config", cfg, "--out", str(out)]) == 0
        rows = json.loads((out / "results.json").read_text())
        assert len(rows) == 2  # 2 protocols x 1 strategy
        assert {r["protocol"] for r in rows} == {"post_level", "quadruple"}

    def test_decision_flag_appends_baseline(self, tmp_path, cfg):
        out = tmp_path / "ex"
        assert main(["experiment", "--config", cfg, "--decision",
                     "--out", str(out)]) == 0
        rows = json.loads((out / "results.json").read_text())
        assert rows[-1]["protocol"] == "decision_level"

    def test_dataset_file_input(self, tmp_path, cfg, dataset):
        out = tmp_path / "ex"
        assert main(["experiment", "--config", cfg, "--data", dataset,
                     "--out", str(out)]) == 0
        echo = load_config(str(out / "config_used.ini"))
        assert echo.get("experiment", "dataset_path") == dataset


class TestRatioSweep:
    def test_points_written(self, tmp_path, cfg):
        out = tmp_path / "rs"
        assert main(["ratio-sweep", "--config", cfg, "--out", str(out)]) == 0
        points = json.loads((out / "sweep.json").read_text())
        assert [p["ratio"] for p in points] == [2.0]
        assert points[0]["n_neg"] == 2 * points[0]["n_pos"]

    def test_infeasible_ratio_is_data_error(self, tmp_path):
        cfg_text = BASE_CFG.replace("dealer_fraction = 0.2",
                                    "dealer_fraction = 0.5")
        cfg_text = cfg_text.replace("np_ratios = 2", "np_ratios = 8")
        path = tmp_path / "bad.ini"
        path.write_text(cfg_text, encoding="utf-8")
        rc = main(["ratio-sweep", "--config", str(path),
                   "--out", str(tmp_path / "rs")])
        assert rc == 3


class TestCrawlSim:
    def test_generates_world_and_report(self, tmp_path, cfg):
        out = tmp_path / "cs"
        assert main(["crawl-sim", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "crawl_report.json").read_text())
        assert {"steps", "dealer_recall", "hashtag_coverage"} <= set(report)
        assert (out / "world.jsonl").is_file()

    def test_reuses_existing_world(self, tmp_path, cfg):
        first = tmp_path / "a"
        main(["crawl-sim", "--config", cfg, "--out", str(first)])
        second = tmp_path / "b"
        assert main(["crawl-sim", "--config", cfg,
                     "--world", str(first / "world.jsonl"),
                     "--out", str(second)]) == 0
        assert not (second / "world.jsonl").exists()
        a = json.loads((first / "crawl_report.json").read_text())
        b = json.loads((second / "crawl_report.json").read_text())
        assert a == b


class TestCommunitySunburst:
    def test_community_artifacts(self, tmp_path, cfg, dataset):
        out = tmp_path / "cm"
        assert main(["community", "--config", cfg, "--data", dataset,
                     "--out", str(out)]) == 0
        doc = json.loads((out / "community.json").read_text())
        assert doc["n_clusters"] == len(doc["clusters"])
        assert all(len(c) <= 10 for c in doc["clusters"])
        assert (out / "edges.txt").is_file()

    def test_sunburst_drug_type(self, tmp_path, cfg, dataset):
        out = tmp_path / "sb"
        assert main(["sunburst", "--config", cfg, "--data", dataset,
                     "--out", str(out)]) == 0
        doc = json.loads((out / "sunburst.json").read_text())
        level1 = sum(c["value"] for c in doc["children"])
        assert level1 == pytest.approx(1.0, abs=1e-9)

    def test_sunburst_geography_needs_seed_tag(self, tmp_path, cfg, dataset):
        rc = main(["sunburst", "--config", cfg, "--data", dataset,
                   "--grouping", "geography", "--out", str(tmp_path / "sb")])
        assert rc == 2

    def test_sunburst_geography_with_seed_tag(self, tmp_path, cfg, dataset):
        out = tmp_path / "sb"
        assert main(["sunburst", "--config", cfg, "--data", dataset,
                     "--grouping", "geography", "--seed-tag", "xanax",
                     "--out", str(out)]) == 0
        doc = json.loads((out / "sunburst.json").read_text())
        assert doc["name"] == "geography"


class TestAnnotationCommands:
    def test_serve_check_with_world(self, tmp_path, cfg):
        cs = tmp_path / "cs"
        main(["crawl-sim", "--config", cfg, "--out", str(cs)])
        rc = main(["serve-annotation", "--config", cfg,
                   "--world", str(cs / "world.jsonl"),
                   "--log", str(tmp_path / "log.jsonl"), "--check"])
        assert rc == 0
        assert (tmp_path / "log.jsonl").is_file()  # corpus events logged

    def test_serve_check_resumes_from_log(self, tmp_path, cfg):
        cs = tmp_path / "cs"
        main(["crawl-sim", "--config", cfg, "--out", str(cs)])
        log = tmp_path / "log.jsonl"
        main(["serve-annotation", "--config", cfg,
              "--world", str(cs / "world.jsonl"), "--log", str(log),
              "--check"])
        rc = main(["serve-annotation", "--config", cfg, "--log", str(log),
                   "--check"])
        assert rc == 0

    def test_serve_without_source_is_config_error(self, tmp_path, cfg):
        assert main(["serve-annotation", "--config", cfg, "--check"]) == 2

    def test_serve_without_tokens_is_config_error(self, tmp_path, dataset):
        bare = tmp_path / "bare.ini"
        bare.write_text("[synth]\nn_records = 10\n", encoding="utf-8")
        rc = main(["serve-annotation", "--config", str(bare),
                   "--log", str(tmp_path / "nope.jsonl"), "--check"])
        assert rc == 2

    def test_export_dataset_round_trip(self, tmp_path, cfg):
        cs = tmp_path / "cs"
        main(["crawl-sim", "--config", cfg, "--out", str(cs)])
        log = tmp_path / "log.jsonl"
        main(["serve-annotation", "--config", cfg,
              "--world", str(cs / "world.jsonl"), "--log", str(log),
              "--check"])
        out = tmp_path / "exp"
        assert main(["export-dataset", "--log", str(log),
                     "--out", str(out)]) == 0
        assert len(load_dataset(out / "labeled.jsonl")) == 0  # nothing done yet

    def test_export_dataset_missing_log_is_data_error(self, tmp_path):
        rc = main(["export-dataset", "--log", str(tmp_path / "missing.jsonl"),
                   "--out", str(tmp_path / "o")])
        assert rc == 3


# ---------------------------------------------------------------------------
# exit codes and config handling


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        rc = main(["gen-synth", "--config", str(tmp_path / "nope.ini"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_unparseable_config_value(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[synth]\nn_records = banana\n", encoding="utf-8")
        rc = main(["gen-synth", "--config", str(path),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_invalid_spec_value(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[synth]\ndealer_fraction = 1.5\n", encoding="utf-8")
        rc = main(["gen-synth", "--config", str(path),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_unknown_strategy_in_grid(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\nstrategies = warp\n", encoding="utf-8")
        rc = main(["experiment", "--config", str(path),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_missing_dataset_is_data_error(self, tmp_path, cfg):
        rc = main(["train", "--config", cfg,
                   "--data", str(tmp_path / "missing.jsonl"),
                   "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_dataset_without_hashtags_is_data_error(self, tmp_path, cfg):
        recs = [QuadrupleRecord(user_id=f"u{i}", post_id=f"p{i}", label=i % 2,
                                pc_text="hi", hb_text="bio")
                for i in range(4)]
        path = tmp_path / "no_tags.jsonl"
        save_dataset(Dataset(recs), path)
        rc = main(["community", "--config", cfg, "--data", str(path),
                   "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_missing_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_unknown_flag_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["gen-synth", "--out", str(tmp_path / "o"), "--bogus"])
        assert err.value.code == 2


class TestConfigHelpers:
    def test_cfg_get_casts(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[s]\na = 7\nb = true\nc = x, y , z\n",
                        encoding="utf-8")
        cp = load_config(str(path))
        assert cfg_get(cp, "s", "a", 0, int) == 7
        assert cfg_get(cp, "s", "b", False, bool) is True
        assert cfg_get(cp, "s", "c", (), tuple) == ("x", "y", "z")
        assert cfg_get(cp, "s", "missing", "fallback") == "fallback"

    def test_cfg_get_bad_cast_raises(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[s]\na = seven\n", encoding="utf-8")
        cp = load_config(str(path))
        with pytest.raises(ConfigError, match="cannot parse"):
            cfg_get(cp, "s", "a", 0, int)

    def test_token_table_parses_pairs(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[annotation]\ntokens = t1:alice, t2:bob\n",
                        encoding="utf-8")
        assert _token_table(load_config(str(path))) == \
            {"t1": "alice", "t2": "bob"}

    def test_token_table_rejects_bad_entry(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[annotation]\ntokens = justatoken\n",
                        encoding="utf-8")
        with pytest.raises(ConfigError, match="token"):
            _token_table(load_config(str(path)))


class TestSubprocess:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "o"
        proc = subprocess.run(
            [sys.executable, "-m", "quadfuse.cli", "gen-synth",
             "--seed", "1", "--out", str(out)],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        assert (out / "dataset.jsonl").is_file()

    def test_console_script_help(self):
        proc = subprocess.run(["quadfuse", "--help"], capture_output=True,
                              text=True, timeout=60)
        assert proc.returncode == 0
        assert "gen-synth" in proc.stdout
