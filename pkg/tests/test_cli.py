import json

import pytest
import torch

from csi_feedback.cli import build_parser, main
from csi_feedback.experiment import ExperimentConfig, read_results

torch.set_num_threads(1)

SUBCOMMANDS = ["gen-data", "train-anchor", "search-shift", "augment",
               "train-trans", "eval", "report"]


def _tiny_config_json(tmp_path):
    cfg = {
        "anchor": {"name": "anchor", "num_paths": 2, "max_delay_bins": 2.0},
        "new": {"name": "shifted", "num_paths": 2, "max_delay_bins": 2.0,
                "delay_offset_bins": 1.0},
        "dims": {"n_f": 8, "n_b": 4, "r_d": 4},
        "cr_list": [0.5],
        "n_iters": 2,
        "channels": 4,
        "train": {"epochs": 3, "batch_size": 16},
        "transfer_train": {"epochs": 2, "batch_size": 16},
        "augment": {"angular_shift_range": [-1, 1],
                    "delay_shift_range": [-1, 1], "target_size": 48},
        "n_train": 32,
        "n_test": 8,
        "n_new_measured": 8,
        "search_max_samples": 4,
        "seed": 3,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestParser:
    def test_all_subcommands_registered(self):
        parser = build_parser()
        for name in SUBCOMMANDS:
            args = parser.parse_args([name, "--seed", "1", "--out", "/tmp/x"])
            assert args.command == name
            assert args.seed == 1 and args.out == "/tmp/x"

    def test_shared_flags_default(self):
        args = build_parser().parse_args(["gen-data"])
        assert args.config is None and args.seed is None

    def test_missing_subcommand_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_report_accepts_results_flag(self):
        args = build_parser().parse_args(["report", "--results", "r.csv"])
        assert args.results == "r.csv"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _tiny_config_json(tmp)
    out = str(tmp / "run")
    for name in SUBCOMMANDS:
        main([name, "--config", cfg, "--out", out])
    return tmp, out


class TestPipeline:
    def test_datasets_written(self, run_dir):
        tmp, out = run_dir
        import os
        for name in ("anchor_train", "anchor_test", "new_train", "new_test",
                     "new_train_aug"):
            assert os.path.exists(os.path.join(out, "data", name, "manifest.json"))

    def test_checkpoint_and_plugin_written(self, run_dir):
        import os
        _, out = run_dir
        assert os.path.exists(os.path.join(out, "anchor_cr0.5", "manifest.json"))
        assert os.path.exists(os.path.join(out, "plugin_cr0.5", "translation.bin"))
        with open(os.path.join(out, "shift_cr0.5.json")) as f:
            d = json.load(f)
        assert set(d) == {"i", "j"}

    def test_results_csv(self, run_dir):
        _, out = run_dir
        rows = read_results(f"{out}/results.csv")
        methods = [r["method"] for r in rows]
        assert methods == ["retrained", "direct", "spa-align", "transnet-aug8"]

    def test_report_artifacts(self, run_dir):
        import os
        _, out = run_dir
        assert os.path.exists(os.path.join(out, "report", "summary.txt"))
        assert os.path.exists(os.path.join(out, "report", "method_comparison.png"))

    def test_seed_override_changes_experiment_id(self, run_dir):
        tmp, out = run_dir
        cfg = ExperimentConfig.from_json(tmp / "cfg.json")
        assert cfg.seed == 3
        cfg.seed = 4
        assert "data41" in cfg.experiment_id
