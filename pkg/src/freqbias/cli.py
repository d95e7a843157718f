"""``freqbias`` command line: run a pipeline, write CSV/JSON/PGM artifacts.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import pipelines
from .augment import manifest_json
from .data import DataError, load_cifar_binary, save_dataset
from .pipelines import RunConfig
from .priority import PriorityMatrix, change_rate_csv, msda_change_rate
from .smallnet import NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _path_list(text):
    return [p for p in text.split(",") if p]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", type=_int_list, help="seed list for compare, e.g. 0,1,2")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--per-class", type=int, dest="per_class")
    common.add_argument("--test-per-class", type=int, dest="test_per_class")
    common.add_argument("--epochs", type=int)
    common.add_argument("--r", type=_int_list, dest="radii", help="radius list, e.g. 4,8,12,16")
    common.add_argument("--variant", choices=["hars", "cdes-wcr", "cdes-scr"])
    common.add_argument("--augment", choices=["none", "mixup", "cutmix"])
    common.add_argument("--alpha", type=float)
    common.add_argument("--data-dir", dest="data_dir", help="directory with CIFAR-10 binary batches")
    common.add_argument("--train", type=_path_list, help="training batch files (comma-separated)")
    common.add_argument("--test", type=_path_list, help="test batch files (comma-separated)")
    common.add_argument("--synthetic", action="store_true", default=None, help="use the built-in synthetic data")

    p = argparse.ArgumentParser(prog="freqbias", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="low/high-pass datasets and their densities")
    sub.add_parser("density", parents=[common], help="mean spectral density per split and class")
    sub.add_parser("bias-report", parents=[common], help="accuracy and inter-class variance per band")
    sub.add_parser("priority", parents=[common], help="per-epoch gradient spectrum matrix")
    sub.add_parser("build", parents=[common], help="HARS or CDES dataset variant")
    cmp_ = sub.add_parser("compare", parents=[common], help="band accuracies of two training sets")
    cmp_.add_argument("--a", default="baseline", help="'baseline' or a directory written by build")
    cmp_.add_argument("--b", required=True, help="'baseline' or a directory written by build")
    return p


def resolve_config(args):
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
    for name in ("seed", "seeds", "per_class", "test_per_class", "epochs", "radii", "variant",
                 "augment", "alpha", "data_dir", "train", "test", "synthetic"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return RunConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _write(path, text):
    mode = "wb" if isinstance(text, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(text)


def _radii(config):
    try:
        return pipelines.check_radii(config.radii)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_decompose(config, out, args):
    radii = _radii(config)
    _, test = pipelines.load_splits(config)
    np.save(os.path.join(out, "labels.npy"), test.labels)
    _write(os.path.join(out, "density_original.csv"), pipelines.density_table(test)["all"].to_csv())
    for (kind, r), ds in pipelines.decompose_dataset(test, radii).items():
        np.save(os.path.join(out, f"{kind}_r{r}.npy"), ds.images)
        _write(os.path.join(out, f"density_{kind}_r{r}.csv"), pipelines.density_table(ds)["all"].to_csv())


def cmd_density(config, out, args):
    for ds in pipelines.load_splits(config):
        for key, dens in pipelines.density_table(ds, by_class=True).items():
            _write(os.path.join(out, f"density_{ds.split_tag}_{key}.csv"), dens.to_csv())


def cmd_bias_report(config, out, args):
    _radii(config)
    tr, te = pipelines.load_splits(config)
    rep = pipelines.bias_report(tr, te, config)
    _write(os.path.join(out, "bias_report.csv"), rep.to_csv())
    _write(os.path.join(out, "epoch_log.csv"), rep.log.to_csv())
    _write(os.path.join(out, "summary.json"),
           json.dumps({"spearman": rep.spearman, "clean_accuracy": rep.clean_accuracy}, indent=1, sort_keys=True))
    rep.net.save(os.path.join(out, "model.bin"))


def _baseline_priority(config, out, tr, te):
    """Baseline priority matrix, reused from ``out`` when its config matches."""
    key = {k: v for k, v in config.to_dict().items() if k not in ("augment", "alpha")}
    path = os.path.join(out, "baseline_priority_raw.csv")
    meta = os.path.join(out, "baseline_config.json")
    if os.path.exists(path) and os.path.exists(meta):
        with open(meta) as fh:
            if json.load(fh) == key:
                with open(path) as fh:
                    return PriorityMatrix.from_csv(fh.read())
    prio, _ = pipelines.priority_run(tr, te, config, "none")
    _write(path, prio.to_csv(raw=True))
    _write(meta, json.dumps(key, indent=1, sort_keys=True))
    return prio


def cmd_priority(config, out, args):
    tr, te = pipelines.load_splits(config)
    prio, log = pipelines.priority_run(tr, te, config, config.augment)
    _write(os.path.join(out, "priority.csv"), prio.to_csv())
    _write(os.path.join(out, "priority_raw.csv"), prio.to_csv(raw=True))
    _write(os.path.join(out, "priority.pgm"), prio.to_pgm())
    _write(os.path.join(out, "epoch_log.csv"), log.to_csv())
    if config.augment != "none":
        base = _baseline_priority(config, out, tr, te)
        _write(os.path.join(out, "change_rate.csv"), change_rate_csv(msda_change_rate(prio, base)))


def cmd_build(config, out, args):
    tr, te = pipelines.load_splits(config)
    built = pipelines.build_variant(config.variant, tr, te, config)
    save_dataset(built.train, os.path.join(out, "train.bin"), clamp=True)
    if config.variant != "hars":
        save_dataset(built.test, os.path.join(out, "test.bin"), clamp=True)
    for key, group in built.filters.items():
        _write(os.path.join(out, f"filters_{key}.json"), group.to_json())
    manifest = dict(built.manifest, config=config.to_dict())
    _write(os.path.join(out, "manifest.json"), manifest_json(manifest))


def _model_data(spec, tr, te):
    if spec == "baseline":
        return tr, te
    train_path = os.path.join(spec, "train.bin")
    test_path = os.path.join(spec, "test.bin")
    if not os.path.exists(train_path):
        raise DataError(f"{spec}: no train.bin (run 'freqbias build' first)")
    mtr = load_cifar_binary(train_path, "train")
    mte = load_cifar_binary(test_path, "test") if os.path.exists(test_path) else te
    return mtr, mte


def cmd_compare(config, out, args):
    _radii(config)
    tr, te = pipelines.load_splits(config)
    names = {"a": args.a, "b": args.b}
    models = {k: _model_data(v, tr, te) for k, v in names.items()}
    per_seed, summary = pipelines.compare(models, config)
    a, b = pipelines.compare_csv(per_seed, summary)
    _write(os.path.join(out, "compare_runs.csv"), a)
    _write(os.path.join(out, "compare.csv"), b)
    _write(os.path.join(out, "models.json"), json.dumps(names, indent=1, sort_keys=True))


COMMANDS = {
    "decompose": cmd_decompose,
    "density": cmd_density,
    "bias-report": cmd_bias_report,
    "priority": cmd_priority,
    "build": cmd_build,
    "compare": cmd_compare,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = resolve_config(args)
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "config.json"),
               json.dumps(dict(config.to_dict(), command=args.command), indent=1, sort_keys=True))
        COMMANDS[args.command](config, args.out, args)
    except (DataError, FileNotFoundError) as exc:
        print(f"freqbias: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError) as exc:
        print(f"freqbias: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"freqbias: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
