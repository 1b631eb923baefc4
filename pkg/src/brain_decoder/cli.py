"""Command-line front end: one subcommand per pipeline stage.

    brain-decoder synth       --config synth.cfg --out data/
    brain-decoder featurize   --dataset data/ --out feats/
    brain-decoder train       --train feats/train --val feats/val --config train.cfg --out model/
    brain-decoder predict     --model model/model.lstm --features feats/test --out pred/
    brain-decoder baseline    --train feats/train --val feats/val --test feats/test --out rf/
    brain-decoder eval        --pred pred/ --pred-b rf/ --truth feats/test --out eval/
    brain-decoder sensitivity --model model/model.lstm --features feats/test --out sens/

Every run writes ``manifest.txt`` next to its outputs.  Failures print one
``error=<kind> code=<n> message=<text>`` line to stderr.  Exit codes: 0 ok,
2 usage, 3 parse or shape, 4 numeric, 5 I/O.
"""

import argparse
from dataclasses import asdict, fields
import logging
import os
import sys

import numpy as np

from . import __version__, evaluation, fileio, forest, lstm, sensitivity, synth, trainer
from .errors import ConfigError, DecoderError, ShapeError
from .features import DEFAULT_SHIFT, check_labels, extract_features, row_normalize, shift_labels

log = logging.getLogger("brain_decoder")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

SPLITS = ("train", "val", "test")
FULL_SCALE_SPLIT = {"train": 400, "val": 50, "test": 40}
DESK_SPLIT = {"train": 20, "val": 5, "test": 10}

SCAN_FILE, FN_FILE, LABEL_FILE = "scan.csv", "fn.csv", "labels.csv"
FEATURE_FILE, PRED_FILE = "features.csv", "predictions.csv"
MODEL_FILE, FOREST_FILE, MANIFEST_FILE = "model.lstm", "forest.rf", "manifest.txt"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error=usage code={EXIT_USAGE} message={message}\n")
        self.exit(EXIT_USAGE)


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_config_flags(p, cls, skip=("seed",)):
    for f in fields(cls):
        if f.name not in skip:
            p.add_argument(_flag(f.name), dest=f"cfg_{f.name}", metavar="VALUE")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="seed (overrides the config file)")
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--out", required=True, help="output directory")

    parser = _Parser(prog="brain-decoder", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    _add_config_flags(p, synth.SynthConfig)
    for split in SPLITS:
        p.add_argument(_flag(f"n_{split}"), dest=f"cfg_n_{split}", metavar="N")

    p = sub.add_parser("featurize", parents=[common], help="network signatures and shifted labels")
    p.add_argument("--dataset", help="synthetic dataset tree to featurize")
    p.add_argument("--scan")
    p.add_argument("--fn")
    p.add_argument("--labels")
    p.add_argument("--shift", dest="cfg_shift", metavar="N",
                   help=f"BOLD delay in time points (default {DEFAULT_SHIFT})")

    p = sub.add_parser("train", parents=[common], help="train the LSTM decoder")
    p.add_argument("--train", required=True, dest="train_dir")
    p.add_argument("--val", required=True, dest="val_dir")
    p.add_argument("--n-states", dest="cfg_n_states", metavar="S")
    _add_config_flags(p, trainer.TrainConfig)

    p = sub.add_parser("predict", parents=[common], help="decode full-length sequences")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)

    p = sub.add_parser("eval", parents=[common], help="confusion matrices and paired statistics")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--pred-b", help="second model's predictions for a paired comparison")
    p.add_argument("--name-a", default="model_a")
    p.add_argument("--name-b", default="model_b")
    p.add_argument("--n-states", dest="cfg_n_states", metavar="S")

    p = sub.add_parser("baseline", parents=[common], help="random-forest baseline with grid search")
    p.add_argument("--train", required=True, dest="train_dir")
    p.add_argument("--val", required=True, dest="val_dir")
    p.add_argument("--test", dest="test_dir", help="feature tree to predict with the chosen forest")
    p.add_argument("--trees", dest="cfg_trees", metavar="N,N,...")
    p.add_argument("--min-leaf", dest="cfg_min_leaf", metavar="N,N,...")

    p = sub.add_parser("sensitivity", parents=[common], help="ablation sensitivity and PCA")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--top", dest="cfg_top", metavar="N")
    return parser


def _resolve(args, defaults):
    """Merge built-in defaults, the config file, flags and ``--seed`` into strings."""
    values = dict(defaults)
    if args.config:
        file_values = fileio.read_kv(args.config)
        unknown = sorted(set(file_values) - set(values))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r} in {args.config}")
        values.update(file_values)
    for key, value in vars(args).items():
        if key.startswith("cfg_") and value is not None:
            values[key[4:]] = value
    if args.seed is not None and "seed" in values:
        values["seed"] = str(args.seed)
    return values


def _defaults(cls):
    return {k: fileio.format_value(v) for k, v in asdict(cls()).items()}


def _find(root, filename):
    """``(relative_dir, path)`` of every ``filename`` under ``root``, sorted."""
    if os.path.isfile(root):
        return [(".", root)]
    if not os.path.isdir(root):
        raise FileNotFoundError(f"no such file or directory: {root}")
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        if filename in filenames:
            found.append((os.path.relpath(dirpath, root), os.path.join(dirpath, filename)))
    return sorted(found)


def _load_feature_set(root):
    """``[(subject, features, labels)]`` for every featurized subject under ``root``."""
    subjects = []
    for rel, path in _find(root, FEATURE_FILE):
        f, _ = fileio.read_matrix(path, header=True)
        y = fileio.read_labels(os.path.join(os.path.dirname(path), LABEL_FILE))
        if len(y) != f.shape[0]:
            raise ShapeError(f"{path}: {f.shape[0]} rows but {len(y)} labels")
        subjects.append((rel, f, y))
    if not subjects:
        raise FileNotFoundError(f"no {FEATURE_FILE} found under {root}")
    return subjects


def _load_tracks(root, preferred):
    """Label tracks keyed by relative subject directory."""
    if os.path.isfile(root):
        return {".": fileio.read_labels(root)}
    found = _find(root, preferred) or _find(root, LABEL_FILE)
    if not found:
        raise FileNotFoundError(f"no label tracks found under {root}")
    return {rel: fileio.read_labels(path) for rel, path in found}


def _subdir(out, rel):
    path = os.path.normpath(os.path.join(out, rel))
    os.makedirs(path, exist_ok=True)
    return path


def _manifest(out, command, config, inputs, outputs):
    items = [("command", command), ("tool_version", __version__)]
    if "seed" in config:
        items.append(("seed", config["seed"]))
    items += [(f"config.{k}", v) for k, v in config.items()]
    items += [(f"input.{k}", v) for k, v in inputs.items()]
    items += [(f"output.{k}", v) for k, v in outputs.items()]
    fileio.write_kv(os.path.join(out, MANIFEST_FILE), items)


def cmd_synth(args):
    defaults = _defaults(synth.SynthConfig)
    defaults.update({f"n_{s}": str(DESK_SPLIT[s]) for s in SPLITS})
    values = _resolve(args, defaults)
    split_sizes = {s: fileio.parse_value(values.pop(f"n_{s}"), int) for s in SPLITS}
    cfg, _ = fileio.config_from_kv(synth.SynthConfig, values)
    if cfg.n_subjects > sum(split_sizes.values()):
        raise ConfigError(f"n_subjects={cfg.n_subjects} exceeds the split sizes {split_sizes}")
    subjects = synth.generate(cfg)
    assignment = []
    remaining = list(range(cfg.n_subjects))
    for split in SPLITS:
        take, remaining = remaining[:split_sizes[split]], remaining[split_sizes[split]:]
        if len(take) < split_sizes[split]:
            log.warning("split %s gets %d of %d requested subjects", split, len(take),
                        split_sizes[split])
        assignment.append((split, take))
    os.makedirs(args.out, exist_ok=True)
    for split, members in assignment:
        os.makedirs(os.path.join(args.out, split), exist_ok=True)
        for i in members:
            d = _subdir(args.out, os.path.join(split, f"subject_{i:03d}"))
            s = subjects[i]
            fileio.write_matrix(os.path.join(d, SCAN_FILE), s.scan)
            fileio.write_matrix(os.path.join(d, FN_FILE), s.networks)
            fileio.write_labels(os.path.join(d, LABEL_FILE), s.paradigm)
    fileio.write_matrix(os.path.join(args.out, "loadings.csv"), subjects[0].loadings
                        if subjects else synth.state_loadings(cfg))
    config = {k: fileio.format_value(v) for k, v in asdict(cfg).items()}
    config.update({f"n_{s}": str(n) for s, n in split_sizes.items()})
    config.update({f"full_scale_split_{s}": str(n) for s, n in FULL_SCALE_SPLIT.items()})
    if cfg.temporal_ambiguity:
        config["ambiguity_bayes_bound"] = repr(synth.ambiguity_bayes_bound(cfg, subjects))
    _manifest(args.out, "synth", config, {"config": args.config or ""},
              {s: s for s in SPLITS} | {"loadings": "loadings.csv"})


def _featurize_one(scan_path, fn_path, label_path, shift, out):
    scan = fileio.read_matrix(scan_path)
    fn = fileio.read_matrix(fn_path)
    paradigm = check_labels(fileio.read_labels(label_path))
    if len(paradigm) != scan.shape[0]:
        raise ShapeError(f"{label_path}: {len(paradigm)} labels but the scan has "
                         f"{scan.shape[0]} time points")
    f = extract_features(scan, row_normalize(fn))
    os.makedirs(out, exist_ok=True)
    fileio.write_matrix(os.path.join(out, FEATURE_FILE), f, header=fileio.feature_header(f.shape[1]))
    fileio.write_labels(os.path.join(out, LABEL_FILE), shift_labels(paradigm, shift))


def cmd_featurize(args):
    values = _resolve(args, {"shift": str(DEFAULT_SHIFT)})
    shift = fileio.parse_value(values["shift"], int)
    inputs = {}
    if args.dataset:
        jobs = [(rel, os.path.dirname(path)) for rel, path in _find(args.dataset, SCAN_FILE)]
        if not jobs:
            raise FileNotFoundError(f"no {SCAN_FILE} found under {args.dataset}")
        for rel, d in jobs:
            _featurize_one(os.path.join(d, SCAN_FILE), os.path.join(d, FN_FILE),
                           os.path.join(d, LABEL_FILE), shift, _subdir(args.out, rel))
        inputs["dataset"] = args.dataset
    else:
        if not (args.scan and args.fn and args.labels):
            raise ConfigError("featurize needs --dataset or all of --scan, --fn, --labels")
        _featurize_one(args.scan, args.fn, args.labels, shift, args.out)
        inputs.update(scan=args.scan, fn=args.fn, labels=args.labels)
    _manifest(args.out, "featurize", values, inputs,
              {"features": FEATURE_FILE, "labels": LABEL_FILE})


def cmd_train(args):
    values = _resolve(args, _defaults(trainer.TrainConfig) | {"n_states": ""})
    n_states = values.pop("n_states")
    cfg, _ = fileio.config_from_kv(trainer.TrainConfig, values)
    train_set = _load_feature_set(args.train_dir)
    val_set = _load_feature_set(args.val_dir)
    n_states = fileio.parse_value(n_states, int) if n_states else None
    params, history = trainer.train([(f, y) for _, f, y in train_set],
                                    [(f, y) for _, f, y in val_set], cfg, n_states=n_states)
    os.makedirs(args.out, exist_ok=True)
    lstm.save_checkpoint(os.path.join(args.out, MODEL_FILE), params)
    with open(os.path.join(args.out, "train_log.csv"), "w") as fh:
        fh.write("step,lr,train_loss,val_metric\n")
        for e in history:
            fh.write(f"{e.step},{e.lr!r},{e.train_loss!r},{e.val_metric!r}\n")
    config = {k: fileio.format_value(v) for k, v in asdict(cfg).items()}
    config["n_states"] = str(params.n_states)
    _manifest(args.out, "train", config, {"train": args.train_dir, "val": args.val_dir},
              {"model": MODEL_FILE, "log": "train_log.csv"})


def cmd_predict(args):
    values = _resolve(args, {"seed": "0"})
    params = lstm.load_checkpoint(args.model)
    for rel, f, _ in _load_feature_set(args.features):
        fileio.write_labels(os.path.join(_subdir(args.out, rel), PRED_FILE),
                            lstm.predict(f, params))
    _manifest(args.out, "predict", values, {"model": args.model, "features": args.features},
              {"predictions": PRED_FILE})


def _paired(pred_root, truth):
    preds = _load_tracks(pred_root, PRED_FILE)
    missing = sorted(set(truth) - set(preds))
    if missing:
        raise ShapeError(f"no predictions for subject {missing[0]!r} under {pred_root}")
    return [preds[k] for k in truth]


def cmd_eval(args):
    values = _resolve(args, {"seed": "0", "n_states": ""})
    truth = _load_tracks(args.truth, LABEL_FILE)
    subjects = sorted(truth)
    truths = [truth[k] for k in subjects]
    models = [(args.name_a, _paired(args.pred, truth))]
    if args.pred_b:
        models.append((args.name_b, _paired(args.pred_b, truth)))
    if values["n_states"]:
        n_states = fileio.parse_value(values["n_states"], int)
    else:
        n_states = 1 + int(max(max(t.max() for t in truths),
                               max(p.max() for _, ps in models for p in ps)))
    values["n_states"] = str(n_states)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "states.txt"), "w") as fh:
        fh.write("".join(f"{s}\n" for s in range(n_states)))
    outputs = {"states": "states.txt", "accuracy": "accuracy.csv", "per_subject": "per_subject.csv"}
    summaries = []
    for name, preds in models:
        fileio.write_matrix(os.path.join(args.out, f"confusion_{name}.csv"),
                            evaluation.mean_confusion(preds, truths, n_states))
        counts = sum(evaluation.confusion(p, t, n_states).counts for p, t in zip(preds, truths))
        fileio.write_matrix(os.path.join(args.out, f"confusion_{name}_counts.csv"), counts)
        summaries.append((name, evaluation.overall_accuracy(preds, truths, n_states)))
        outputs[f"confusion_{name}"] = f"confusion_{name}.csv"
    with open(os.path.join(args.out, "accuracy.csv"), "w") as fh:
        fh.write("model,mean,std,subject_mean,subject_std,state_mean,state_std\n")
        for name, s in summaries:
            fh.write(",".join([name] + [repr(x) for x in (s.mean, s.std, s.subject_mean,
                                                           s.subject_std, s.state_mean,
                                                           s.state_std)]) + "\n")
    with open(os.path.join(args.out, "per_subject.csv"), "w") as fh:
        fh.write(",".join(["subject"] + [n for n, _ in summaries]) + "\n")
        for i, subj in enumerate(subjects):
            fh.write(",".join([subj] + [repr(float(s.subject_accuracies[i]))
                                        for _, s in summaries]) + "\n")
    if len(models) == 2:
        (na, sa), (nb, sb) = summaries
        r = evaluation.wilcoxon_signed_rank(sa.subject_accuracies, sb.subject_accuracies)
        with open(os.path.join(args.out, "stats.csv"), "w") as fh:
            fh.write("model_a,model_b,n,w,p_two_sided,degenerate\n")
            fh.write(f"{na},{nb},{len(subjects)},{r.w!r},{r.p!r},{str(r.degenerate).lower()}\n")
        with open(os.path.join(args.out, "stats_per_state.csv"), "w") as fh:
            fh.write("state,model_a,model_b,n,w,p_two_sided,degenerate\n")
            for state in range(n_states):
                ra, rb = [], []
                for pa, pb, t in zip(models[0][1], models[1][1], truths):
                    if np.any(t == state):
                        ra.append(np.mean(pa[t == state] == state))
                        rb.append(np.mean(pb[t == state] == state))
                if not ra:
                    continue
                r = evaluation.wilcoxon_signed_rank(ra, rb)
                fh.write(f"{state},{na},{nb},{len(ra)},{r.w!r},{r.p!r},"
                         f"{str(r.degenerate).lower()}\n")
        outputs.update(stats="stats.csv", stats_per_state="stats_per_state.csv")
    inputs = {"pred": args.pred, "truth": args.truth}
    if args.pred_b:
        inputs["pred_b"] = args.pred_b
    _manifest(args.out, "eval", values, inputs, outputs)


def cmd_baseline(args):
    values = _resolve(args, {"seed": "0",
                             "trees": fileio.format_value(forest.DEFAULT_TREES),
                             "min_leaf": fileio.format_value(forest.DEFAULT_MIN_LEAF)})
    trees = fileio.parse_value(values["trees"], tuple)
    min_leaf = fileio.parse_value(values["min_leaf"], tuple)
    seed = fileio.parse_value(values["seed"], int)
    train_set = _load_feature_set(args.train_dir)
    val_set = _load_feature_set(args.val_dir)
    best, model, scores = forest.grid_search([(f, y) for _, f, y in train_set],
                                             [(f, y) for _, f, y in val_set],
                                             trees, min_leaf, seed)
    os.makedirs(args.out, exist_ok=True)
    forest.save_forest(os.path.join(args.out, FOREST_FILE), model)
    with open(os.path.join(args.out, "grid.csv"), "w") as fh:
        fh.write("n_trees,min_leaf,val_accuracy,selected\n")
        for cfg, acc in scores:
            chosen = cfg.n_trees == best.n_trees and cfg.min_leaf == best.min_leaf
            fh.write(f"{cfg.n_trees},{cfg.min_leaf},{acc!r},{str(chosen).lower()}\n")
    outputs = {"forest": FOREST_FILE, "grid": "grid.csv"}
    inputs = {"train": args.train_dir, "val": args.val_dir}
    if args.test_dir:
        for rel, f, _ in _load_feature_set(args.test_dir):
            fileio.write_labels(os.path.join(_subdir(args.out, rel), PRED_FILE), model.predict(f))
        inputs["test"] = args.test_dir
        outputs["predictions"] = PRED_FILE
    values.update(selected_trees=str(best.n_trees), selected_min_leaf=str(best.min_leaf))
    _manifest(args.out, "baseline", values, inputs, outputs)


def cmd_sensitivity(args):
    values = _resolve(args, {"seed": "0", "top": "5"})
    top = fileio.parse_value(values["top"], int)
    params = lstm.load_checkpoint(args.model)
    subjects = _load_feature_set(args.features)
    changes = sensitivity.change_matrix(params, [(f, y) for _, f, y in subjects])
    result = sensitivity.pca(changes)
    ranking = sensitivity.top_fns(result, min(top, changes.shape[0]))
    os.makedirs(args.out, exist_ok=True)
    fileio.write_matrix(os.path.join(args.out, "change_matrix.csv"), changes,
                        header=[rel for rel, _, _ in subjects])
    k = changes.shape[0]
    fileio.write_matrix(os.path.join(args.out, "pca_loadings.csv"), result.components,
                        header=[f"pc_{j}" for j in range(k)])
    fileio.write_matrix(os.path.join(args.out, "pca_variances.csv"), result.variances[:, None],
                        header=["variance"])
    with open(os.path.join(args.out, "top_fns.csv"), "w") as fh:
        fh.write("rank,fn_index\n")
        for rank, idx in enumerate(ranking, start=1):
            fh.write(f"{rank},{idx}\n")
    _manifest(args.out, "sensitivity", values, {"model": args.model, "features": args.features},
              {"change_matrix": "change_matrix.csv", "loadings": "pca_loadings.csv",
               "variances": "pca_variances.csv", "top_fns": "top_fns.csv"})


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "sensitivity": cmd_sensitivity,
}


def _fail(kind, code, message):
    message = " ".join(str(message).split())
    sys.stderr.write(f"error={kind} code={code} message={message}\n")
    return code


def main(argv=None):
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except DecoderError as exc:
        return _fail(exc.kind, exc.exit_code, exc)
    except (FileNotFoundError, PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        return _fail("io", EXIT_IO, exc)
    except OSError as exc:
        return _fail("io", EXIT_IO, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
