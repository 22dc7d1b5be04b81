"""Command-line surface for the feedback pipeline.

Each subcommand runs one pipeline stage against an output directory, so a
full experiment is:

    gen-data -> train-anchor -> search-shift -> augment -> train-trans -> eval -> report

All subcommands share ``--config`` (JSON mirroring ExperimentConfig),
``--seed`` (overrides the config's root seed), and ``--out``.
"""

import argparse
import json
import os
import time

import numpy as np

from .channel import generate_dataset, save_dataset, load_dataset, ScenarioConfig
from .decoder import UnfoldedDecoder, train_anchor, save_checkpoint, load_checkpoint
from .augment import AugmentConfig, augment_dataset
from .transnet import (ShiftSteps, search_shift_steps, train_transnet,
                       evaluate_new_scenario, count_parameters, save_plugin,
                       load_plugin)
from .experiment import (ExperimentConfig, _search_ranges, anchor_recover, _row,
                         write_results, report)
from .metrics import nmse
from dataclasses import asdict


def _cr_tag(cr):
    return f"cr{cr:g}".replace("/", "_")


def _load_cfg(args):
    cfg = (ExperimentConfig.from_json(args.config) if args.config
           else ExperimentConfig())
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _data_dirs(out):
    return {name: os.path.join(out, "data", name)
            for name in ("anchor_train", "anchor_test", "new_train", "new_test")}


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    seeds = cfg.sub_seeds
    dirs = _data_dirs(args.out)
    anchor = ScenarioConfig(**{**asdict(cfg.anchor), "seed": seeds["data"]})
    new = ScenarioConfig(**{**asdict(cfg.new), "seed": seeds["data"] + 1})
    datasets = {
        "anchor_train": generate_dataset(anchor, cfg.n_train, cfg.dims, "train"),
        "anchor_test": generate_dataset(anchor, cfg.n_test, cfg.dims, "test",
                                        start_index=cfg.n_train),
        "new_train": generate_dataset(new, cfg.n_new_measured, cfg.dims, "train"),
        "new_test": generate_dataset(new, cfg.n_test, cfg.dims, "test",
                                     start_index=cfg.n_new_measured),
    }
    for name, ds in datasets.items():
        save_dataset(ds, dirs[name])
        print(f"wrote {dirs[name]} ({len(ds)} samples)")


def cmd_train_anchor(args):
    cfg = _load_cfg(args)
    dirs = _data_dirs(args.out)
    train_ds = load_dataset(dirs["anchor_train"])
    test_ds = load_dataset(dirs["anchor_test"])
    for cr in cfg.cr_list:
        decoder = UnfoldedDecoder(cr=cr, dims=cfg.dims, n_iters=cfg.n_iters,
                                  channels=cfg.channels, seed=cfg.sub_seeds["init"])
        ckpt = os.path.join(args.out, f"anchor_{_cr_tag(cr)}")
        log_path = os.path.join(args.out, f"train_log_{_cr_tag(cr)}.csv")
        train_anchor(train_ds, cfg.train, decoder, val_ds=test_ds,
                     log_path=log_path, verbose=args.verbose)
        save_checkpoint(decoder, ckpt, epoch=cfg.train.epochs)
        print(f"wrote {ckpt}")


def cmd_search_shift(args):
    cfg = _load_cfg(args)
    dirs = _data_dirs(args.out)
    new_train = load_dataset(dirs["new_train"])
    d_range, a_range = _search_ranges(cfg)
    for cr in cfg.cr_list:
        decoder = load_checkpoint(os.path.join(args.out, f"anchor_{_cr_tag(cr)}"))
        rng = np.random.default_rng(cfg.sub_seeds["search"])
        steps = search_shift_steps(new_train.samples, decoder,
                                   delay_range=d_range, angular_range=a_range,
                                   max_samples=cfg.search_max_samples, rng=rng)
        path = os.path.join(args.out, f"shift_{_cr_tag(cr)}.json")
        with open(path, "w") as f:
            json.dump({"i": steps.i, "j": steps.j}, f)
        print(f"wrote {path}: shift ({steps.i}, {steps.j})")


def cmd_augment(args):
    cfg = _load_cfg(args)
    dirs = _data_dirs(args.out)
    new_train = load_dataset(dirs["new_train"])
    aug_cfg = AugmentConfig(**{**asdict(cfg.augment), "seed": cfg.sub_seeds["augment"]})
    aug_cfg.angular_shift_range = tuple(aug_cfg.angular_shift_range)
    aug_cfg.delay_shift_range = tuple(aug_cfg.delay_shift_range)
    aug = augment_dataset(new_train, aug_cfg, cfg.dims)
    path = os.path.join(args.out, "data", "new_train_aug")
    save_dataset(aug, path)
    print(f"wrote {path} ({len(aug)} samples)")


def cmd_train_trans(args):
    cfg = _load_cfg(args)
    aug = load_dataset(os.path.join(args.out, "data", "new_train_aug"))
    for cr in cfg.cr_list:
        decoder = load_checkpoint(os.path.join(args.out, f"anchor_{_cr_tag(cr)}"))
        with open(os.path.join(args.out, f"shift_{_cr_tag(cr)}.json")) as f:
            d = json.load(f)
        steps = ShiftSteps(d["i"], d["j"])
        tra, ret, _ = train_transnet(aug, decoder, steps, cfg.transfer_train,
                                     verbose=args.verbose)
        path = os.path.join(args.out, f"plugin_{_cr_tag(cr)}")
        save_plugin(tra, ret, steps, path, decoder.checksum(),
                    scenario_name=cfg.new.name)
        print(f"wrote {path}")


def cmd_eval(args):
    cfg = _load_cfg(args)
    dirs = _data_dirs(args.out)
    anchor_test = load_dataset(dirs["anchor_test"])
    new_test = load_dataset(dirs["new_test"])
    rows = []
    for cr in cfg.cr_list:
        decoder = load_checkpoint(os.path.join(args.out, f"anchor_{_cr_tag(cr)}"))
        anchor_params = sum(p.numel() for p in decoder.parameters())

        t0 = time.time()
        rec = anchor_recover(decoder, anchor_test.samples)
        rows.append(_row(cfg, cr, cfg.anchor.name, "retrained",
                         nmse(anchor_test.samples, rec), anchor_params,
                         time.time() - t0))

        t0 = time.time()
        rec = anchor_recover(decoder, new_test.samples)
        rows.append(_row(cfg, cr, cfg.new.name, "direct",
                         nmse(new_test.samples, rec), 0, time.time() - t0))

        shift_path = os.path.join(args.out, f"shift_{_cr_tag(cr)}.json")
        if os.path.exists(shift_path):
            with open(shift_path) as f:
                d = json.load(f)
            steps = ShiftSteps(d["i"], d["j"])
            t0 = time.time()
            shifted = np.roll(new_test.samples, (steps.i, steps.j), axis=(1, 2))
            rec = np.roll(anchor_recover(decoder, shifted), (-steps.i, -steps.j),
                          axis=(1, 2))
            rows.append(_row(cfg, cr, cfg.new.name, "spa-align",
                             nmse(new_test.samples, rec), 0, time.time() - t0))

            plugin_path = os.path.join(args.out, f"plugin_{_cr_tag(cr)}")
            if os.path.isdir(plugin_path):
                tra, ret, steps, _ = load_plugin(plugin_path)
                t0 = time.time()
                rec = evaluate_new_scenario(new_test.samples, steps, tra, ret,
                                            decoder)
                rows.append(_row(cfg, cr, cfg.new.name,
                                 f"transnet-aug{cfg.n_new_measured}",
                                 nmse(new_test.samples, rec),
                                 count_parameters(tra) + count_parameters(ret),
                                 time.time() - t0))
    path = os.path.join(args.out, "results.csv")
    write_results(rows, path)
    print(f"wrote {path} ({len(rows)} rows)")


def cmd_report(args):
    results = args.results or os.path.join(args.out, "results.csv")
    written = report(results, os.path.join(args.out, "report"))
    for path in written:
        print(f"wrote {path}")


def build_parser():
    parser = argparse.ArgumentParser(prog="csi-feedback",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": cmd_gen_data,
        "train-anchor": cmd_train_anchor,
        "search-shift": cmd_search_shift,
        "augment": cmd_augment,
        "train-trans": cmd_train_trans,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="root seed override")
        p.add_argument("--out", default="runs/exp", help="output directory")
        p.add_argument("--verbose", action="store_true")
        if name == "report":
            p.add_argument("--results", default=None,
                           help="results CSV (default: <out>/results.csv)")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    args.fn(args)


if __name__ == "__main__":
    main()
