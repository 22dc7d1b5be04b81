"""Experiment orchestration: dataset generation, anchor training, scenario
transfer, evaluation, and reporting.

A single JSON config drives the full pipeline.  All randomness flows from
one root seed through named sub-seeds (data / init / augment / search),
which are echoed in the experiment id column of the results CSV.
"""

from dataclasses import dataclass, field, asdict
import csv
import json
import os
import time

import numpy as np
import torch

from .channel import (ArrayDims, ScenarioConfig, Dataset, generate_dataset,
                      save_dataset, load_dataset)
from .decoder import (TrainConfig, UnfoldedDecoder, train_anchor,
                      dataset_to_vectors, decode_vectors, save_checkpoint,
                      load_checkpoint)
from .augment import AugmentConfig, augment_dataset
from .transnet import (ShiftSteps, search_shift_steps, train_transnet,
                       evaluate_new_scenario, TranslationNet, RetranslationNet,
                       count_parameters, save_plugin, load_plugin)
from .metrics import nmse, nmse_db

RESULT_COLUMNS = ["experiment_id", "cr", "scenario", "method", "nmse_linear",
                  "nmse_db", "params_updated", "wall_time_s"]


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    anchor: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(name="anchor"))
    new: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(
        name="shifted", delay_offset_bins=4.0, seed=1))
    dims: ArrayDims = field(default_factory=ArrayDims)
    cr_list: list = field(default_factory=lambda: [1 / 4])
    n_iters: int = 3
    channels: int = 8
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))
    transfer_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    n_train: int = 2000
    n_test: int = 200
    n_new_measured: int = 200
    search_delay_range: list = None  # e.g. [-4, 4]; None means full grid
    search_angular_range: list = None
    search_max_samples: int = 16
    seed: int = 0

    @property
    def sub_seeds(self):
        base = self.seed
        return {"data": base * 10 + 1, "init": base * 10 + 2,
                "augment": base * 10 + 3, "search": base * 10 + 4}

    @property
    def experiment_id(self):
        s = self.sub_seeds
        return (f"exp{self.seed}-data{s['data']}-init{s['init']}"
                f"-aug{s['augment']}-search{s['search']}")

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key, typ in (("anchor", ScenarioConfig), ("new", ScenarioConfig),
                         ("dims", ArrayDims), ("train", TrainConfig),
                         ("transfer_train", TrainConfig), ("augment", AugmentConfig)):
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        if "augment" in d and isinstance(d["augment"], AugmentConfig):
            a = d["augment"]
            a.angular_shift_range = tuple(a.angular_shift_range)
            a.delay_shift_range = tuple(a.delay_shift_range)
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _search_ranges(cfg):
    rows = None if cfg.search_delay_range is None else range(
        cfg.search_delay_range[0], cfg.search_delay_range[1] + 1)
    cols = None if cfg.search_angular_range is None else range(
        cfg.search_angular_range[0], cfg.search_angular_range[1] + 1)
    return rows, cols


def anchor_recover(decoder, samples):
    """Plain anchor codec roundtrip for a batch of complex matrices."""
    samples = np.asarray(samples)
    flat = samples.reshape(samples.shape[0], -1)
    norms = np.linalg.norm(flat, axis=1)
    x = dataset_to_vectors(samples).to(decoder.phi.dtype)
    y = decoder.encode_vectors(x).detach()
    x_hat = decode_vectors(decoder, y).cpu().numpy()
    half = x_hat.shape[1] // 2
    shape = samples.shape
    units = (x_hat[:, :half] + 1j * x_hat[:, half:]).reshape(shape)
    return units * norms[:, None, None]


def _row(cfg, cr, scenario, method, value, params_updated, wall):
    return {
        "experiment_id": cfg.experiment_id,
        "cr": cr,
        "scenario": scenario,
        "method": method,
        "nmse_linear": value,
        "nmse_db": nmse_db(value),
        "params_updated": params_updated,
        "wall_time_s": round(wall, 3),
    }


def run_experiment(cfg, out_dir, verbose=False):
    """Full pipeline: generate -> train anchor -> search shift -> augment ->
    train plug-in -> evaluate.  Writes results.csv and returns the rows."""
    os.makedirs(out_dir, exist_ok=True)
    seeds = cfg.sub_seeds
    rows = []

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:  # surface the failing stage by name
            raise StageError(name, exc) from exc

    def _gen():
        anchor = ScenarioConfig(**{**asdict(cfg.anchor), "seed": seeds["data"]})
        new = ScenarioConfig(**{**asdict(cfg.new), "seed": seeds["data"] + 1})
        return {
            "anchor_train": generate_dataset(anchor, cfg.n_train, cfg.dims, "train"),
            "anchor_test": generate_dataset(anchor, cfg.n_test, cfg.dims, "test",
                                            start_index=cfg.n_train),
            "new_train": generate_dataset(new, cfg.n_new_measured, cfg.dims, "train"),
            "new_test": generate_dataset(new, cfg.n_test, cfg.dims, "test",
                                         start_index=cfg.n_new_measured),
        }

    data = stage("gen-data", _gen)

    for cr in cfg.cr_list:
        t0 = time.time()

        def _train():
            decoder = UnfoldedDecoder(cr=cr, dims=cfg.dims, n_iters=cfg.n_iters,
                                      channels=cfg.channels, seed=seeds["init"])
            train_anchor(data["anchor_train"], cfg.train, decoder, verbose=verbose)
            return decoder

        decoder = stage("train-anchor", _train)
        anchor_params = sum(p.numel() for p in decoder.parameters())
        wall = time.time() - t0

        def _eval_anchor():
            rec = anchor_recover(decoder, data["anchor_test"].samples)
            return nmse(data["anchor_test"].samples, rec)

        rows.append(_row(cfg, cr, cfg.anchor.name, "retrained",
                         stage("eval", _eval_anchor), anchor_params, wall))

        t0 = time.time()

        def _eval_direct():
            rec = anchor_recover(decoder, data["new_test"].samples)
            return nmse(data["new_test"].samples, rec)

        rows.append(_row(cfg, cr, cfg.new.name, "direct",
                         stage("eval", _eval_direct), 0, time.time() - t0))

        t0 = time.time()

        def _search():
            rng = np.random.default_rng(seeds["search"])
            d_range, a_range = _search_ranges(cfg)
            return search_shift_steps(data["new_train"].samples, decoder,
                                      delay_range=d_range, angular_range=a_range,
                                      max_samples=cfg.search_max_samples, rng=rng)

        steps = stage("search-shift", _search)

        def _eval_aligned():
            shifted = np.roll(data["new_test"].samples, (steps.i, steps.j),
                              axis=(1, 2))
            rec = np.roll(anchor_recover(decoder, shifted),
                          (-steps.i, -steps.j), axis=(1, 2))
            return nmse(data["new_test"].samples, rec)

        rows.append(_row(cfg, cr, cfg.new.name, "spa-align",
                         stage("eval", _eval_aligned), 0, time.time() - t0))

        t0 = time.time()

        def _transfer():
            aug_cfg = AugmentConfig(**{**asdict(cfg.augment),
                                       "seed": seeds["augment"]})
            aug_cfg.angular_shift_range = tuple(aug_cfg.angular_shift_range)
            aug_cfg.delay_shift_range = tuple(aug_cfg.delay_shift_range)
            aug_ds = augment_dataset(data["new_train"], aug_cfg, cfg.dims)
            tra, ret, _ = train_transnet(aug_ds, decoder, steps, cfg.transfer_train,
                                         verbose=verbose)
            rec = evaluate_new_scenario(data["new_test"].samples, steps, tra, ret,
                                        decoder)
            value = nmse(data["new_test"].samples, rec)
            return value, count_parameters(tra) + count_parameters(ret)

        value, n_params = stage("train-trans", _transfer)
        rows.append(_row(cfg, cr, cfg.new.name, f"transnet-aug{cfg.n_new_measured}",
                         value, n_params, time.time() - t0))

    write_results(rows, os.path.join(out_dir, "results.csv"))
    return rows


def write_results(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def read_results(path):
    """Parse a results CSV, reporting the line number of any malformed row."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ValueError(
                f"{path}:1: bad header {reader.fieldnames}, expected {RESULT_COLUMNS}")
        for row in reader:
            line = reader.line_num
            try:
                row["cr"] = float(row["cr"])
                row["nmse_linear"] = float(row["nmse_linear"])
                row["nmse_db"] = float(row["nmse_db"])
                row["params_updated"] = int(row["params_updated"])
                row["wall_time_s"] = float(row["wall_time_s"])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: malformed row: {exc}") from exc
            rows.append(row)
    return rows


def report(results_csv, out_dir):
    """Emit one NMSE-vs-CR chart per scenario, an augmentation/method bar
    chart, and a plain-text summary table.  Returns the files written."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_results(results_csv)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w") as f:
        f.write(f"{'scenario':<12} {'method':<18} {'CR':<8} {'NMSE (dB)':<10} "
                f"{'params':<10}\n")
        for r in rows:
            f.write(f"{r['scenario']:<12} {r['method']:<18} {r['cr']:<8.4f} "
                    f"{r['nmse_db']:<10.2f} {r['params_updated']:<10}\n")
        f.write(f"\n{len(rows)} result rows\n")
    written.append(summary_path)
    if not rows:
        return written

    scenarios = sorted({r["scenario"] for r in rows})
    for scen in scenarios:
        fig, ax = plt.subplots()
        subset = [r for r in rows if r["scenario"] == scen]
        for method in sorted({r["method"] for r in subset}):
            pts = sorted([(r["cr"], r["nmse_db"]) for r in subset
                          if r["method"] == method])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=method)
        ax.set_xlabel("compression ratio")
        ax.set_ylabel("NMSE (dB)")
        ax.set_title(scen)
        ax.legend()
        path = os.path.join(out_dir, f"nmse_vs_cr_{scen}.png")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    # bar chart comparing methods at the smallest-compression CR available
    cr0 = max(r["cr"] for r in rows)
    subset = [r for r in rows if r["cr"] == cr0]
    fig, ax = plt.subplots()
    labels = [f"{r['scenario']}\n{r['method']}" for r in subset]
    ax.bar(range(len(subset)), [r["nmse_db"] for r in subset])
    ax.set_xticks(range(len(subset)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("NMSE (dB)")
    ax.set_title(f"method comparison at CR={cr0:g}")
    path = os.path.join(out_dir, "method_comparison.png")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    return written
