"""
End-to-end command line pipeline
================================

Generates the synthetic ambiguity benchmark, extracts features, trains the
LSTM decoder and the random-forest baseline, compares them and runs the
ablation sensitivity analysis.  Every stage goes through the
``brain-decoder`` command line entry point and reads the previous stage's
files, so the run directory ends up holding the full artifact tree.

    python demos/pipeline.py [run_dir]

All paths handed to the tool are relative to ``run_dir``, which makes two
runs with the same seed byte-identical.
"""

import os
import shutil
import sys

from brain_decoder.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))
SEED = "7"


def stages():
    return [
        ["synth", "--config", "configs/synth.cfg", "--out", "data"],
        ["featurize", "--dataset", "data", "--out", "features"],
        ["train", "--train", "features/train", "--val", "features/val",
         "--config", "configs/train.cfg", "--out", "model"],
        ["predict", "--model", "model/model.lstm", "--features", "features/test",
         "--out", "pred_lstm"],
        # a trimmed grid; the default is the full 4 x 3 search
        ["baseline", "--train", "features/train", "--val", "features/val",
         "--test", "features/test", "--trees", "10,30", "--min-leaf", "3,10",
         "--out", "pred_forest"],
        ["eval", "--pred", "pred_lstm", "--pred-b", "pred_forest",
         "--truth", "features/test", "--name-a", "lstm", "--name-b", "forest",
         "--out", "eval"],
        ["sensitivity", "--model", "model/model.lstm", "--features", "features/test",
         "--out", "sensitivity"],
    ]


def run(run_dir):
    """Run every stage inside ``run_dir``; returns the list of exit codes."""
    os.makedirs(run_dir, exist_ok=True)
    shutil.copytree(os.path.join(HERE, "configs"), os.path.join(run_dir, "configs"),
                    dirs_exist_ok=True)
    cwd = os.getcwd()
    os.chdir(run_dir)
    codes = []
    try:
        for argv in stages():
            code = main(argv + ["--seed", SEED])
            codes.append(code)
            if code:
                break
    finally:
        os.chdir(cwd)
    return codes


if __name__ == "__main__":
    run_dir = sys.argv[1] if len(sys.argv) > 1 else "pipeline_run"
    codes = run(run_dir)
    if any(codes):
        sys.exit(codes[-1])
    with open(os.path.join(run_dir, "eval", "accuracy.csv")) as fh:
        print(fh.read())
    with open(os.path.join(run_dir, "eval", "stats.csv")) as fh:
        print(fh.read())
    with open(os.path.join(run_dir, "data", "manifest.txt")) as fh:
        bound = [l for l in fh if "bayes_bound" in l]
    print("".join(bound))
    with open(os.path.join(run_dir, "sensitivity", "top_fns.csv")) as fh:
        print(fh.read())
