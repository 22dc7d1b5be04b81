import json

import numpy as np
import pytest
import torch

from csi_feedback.channel import ArrayDims, ScenarioConfig
from csi_feedback.decoder import TrainConfig
from csi_feedback.augment import AugmentConfig
from csi_feedback.experiment import (ExperimentConfig, StageError, RESULT_COLUMNS,
                                     run_experiment, write_results, read_results,
                                     report, anchor_recover)

torch.set_num_threads(1)

TINY = ArrayDims(n_f=8, n_b=4, r_d=4)


def _tiny_config(seed=3):
    return ExperimentConfig(
        anchor=ScenarioConfig(name="anchor", num_paths=2, max_delay_bins=2.0),
        new=ScenarioConfig(name="shifted", num_paths=2, max_delay_bins=2.0,
                           delay_offset_bins=1.0),
        dims=TINY,
        cr_list=[1 / 2],
        n_iters=2,
        channels=4,
        train=TrainConfig(epochs=3, batch_size=16),
        transfer_train=TrainConfig(epochs=2, batch_size=16),
        augment=AugmentConfig(angular_shift_range=(-1, 1),
                              delay_shift_range=(-1, 1), target_size=48),
        n_train=32,
        n_test=8,
        n_new_measured=8,
        search_max_samples=4,
        seed=seed,
    )


class TestExperimentConfig:
    def test_sub_seeds_distinct(self):
        seeds = _tiny_config(seed=7).sub_seeds
        assert len(set(seeds.values())) == 4

    def test_experiment_id_embeds_sub_seeds(self):
        cfg = _tiny_config(seed=7)
        for v in cfg.sub_seeds.values():
            assert str(v) in cfg.experiment_id

    def test_json_roundtrip(self, tmp_path):
        cfg = _tiny_config(seed=5)
        path = tmp_path / "cfg.json"
        cfg.to_json(path)
        back = ExperimentConfig.from_json(path)
        assert back.seed == 5
        assert back.dims == TINY
        assert back.anchor == cfg.anchor
        assert back.train == cfg.train
        assert back.augment == cfg.augment

    def test_from_dict_partial(self):
        cfg = ExperimentConfig.from_dict({"seed": 9, "channels": 2})
        assert cfg.seed == 9 and cfg.channels == 2
        assert cfg.dims == ArrayDims()


class TestResultsIO:
    def _rows(self):
        cfg = _tiny_config()
        return [{
            "experiment_id": cfg.experiment_id, "cr": 0.25, "scenario": "anchor",
            "method": "retrained", "nmse_linear": 0.1, "nmse_db": -10.0,
            "params_updated": 1830, "wall_time_s": 1.5,
        }]

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results(self._rows(), path)
        back = read_results(path)
        assert back == self._rows()

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results(self._rows(), a)
        write_results(self._rows(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_header_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(ValueError, match=":1:"):
            read_results(path)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        header = ",".join(RESULT_COLUMNS)
        path.write_text(header + "\nexp,0.25,anchor,m,not-a-number,-10,0,1\n")
        with pytest.raises(ValueError, match=":2:"):
            read_results(path)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    rows = run_experiment(_tiny_config(), out)
    return rows, out


class TestRunExperiment:
    def test_emits_all_methods(self, tiny_run):
        rows, _ = tiny_run
        methods = {r["method"] for r in rows}
        assert methods == {"retrained", "direct", "spa-align", "transnet-aug8"}

    def test_rows_have_all_columns(self, tiny_run):
        rows, _ = tiny_run
        for r in rows:
            assert list(r.keys()) == RESULT_COLUMNS

    def test_csv_written_and_parses(self, tiny_run):
        rows, out = tiny_run
        back = read_results(out / "results.csv")
        assert len(back) == len(rows)
        assert [r["method"] for r in back] == [r["method"] for r in rows]

    def test_plugin_row_counts_small_update(self, tiny_run):
        from csi_feedback.transnet import (TranslationNet, RetranslationNet,
                                           count_parameters)
        rows, _ = tiny_run
        plug = next(r for r in rows if r["method"].startswith("transnet"))
        expected = (count_parameters(TranslationNet())
                    + count_parameters(RetranslationNet()))
        assert plug["params_updated"] == expected
        assert plug["params_updated"] < 25000

    def test_stage_error_names_stage(self):
        cfg = _tiny_config()
        cfg.n_train = 0  # empty training set breaks the anchor stage
        with pytest.raises(StageError) as exc:
            run_experiment(cfg, "/tmp/does-not-matter-exp")
        assert exc.value.stage in ("gen-data", "train-anchor")


class TestReport:
    def test_outputs(self, tiny_run, tmp_path):
        _, out = tiny_run
        written = report(out / "results.csv", tmp_path / "rep")
        names = {p.split("/")[-1] for p in map(str, written)}
        assert "summary.txt" in names
        assert "method_comparison.png" in names
        assert any(n.startswith("nmse_vs_cr_") for n in names)
        summary = (tmp_path / "rep" / "summary.txt").read_text()
        assert "retrained" in summary and "spa-align" in summary

    def test_empty_results_still_summarized(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_results([], path)
        written = report(path, tmp_path / "rep")
        assert len(written) == 1
        assert "0 result rows" in (tmp_path / "rep" / "summary.txt").read_text()


class TestAnchorRecover:
    def test_scale_equivariant(self, tiny_run):
        # recovery rescales by the stored norm, so doubling the input doubles
        # the output exactly
        from csi_feedback.channel import generate_dataset
        from csi_feedback.decoder import UnfoldedDecoder
        dec = UnfoldedDecoder(cr=1 / 2, dims=TINY, n_iters=1, channels=2, seed=0)
        ds = generate_dataset(ScenarioConfig(seed=11, num_paths=2,
                                             max_delay_bins=2.0), 3, dims=TINY)
        rec1 = anchor_recover(dec, ds.samples)
        rec2 = anchor_recover(dec, 2.0 * ds.samples.astype(np.complex128))
        assert np.allclose(rec2, 2.0 * rec1, atol=1e-5)
