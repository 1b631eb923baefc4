"""
Why memory helps: the temporal-ambiguity benchmark
==================================================

Two of the four synthetic states share an identical network loading pattern.
They can only be told apart by what came just before them, so any decoder
that looks at one time point at a time is capped by a Bayes bound.  The
random forest sits at that cap; the recurrent decoder reads the history and
clears it.
"""

import logging
import time

import numpy as np

from brain_decoder import evaluation, forest, synth, trainer
from brain_decoder import lstm

logging.basicConfig(level=logging.WARNING)

cfg = synth.SynthConfig()
subjects = [synth.featurize(s, cfg.hemodynamic_shift) for s in synth.generate(cfg)]
train, val, test = subjects[:20], subjects[20:25], subjects[25:]
bound = synth.ambiguity_bayes_bound(cfg)
print(f"ambiguous states {synth.ambiguous_states(cfg)}, Bayes bound {bound:.4f}")

t0 = time.time()
best, rf, scores = forest.grid_search(train, val, trees=(100,), min_leaf=(3, 5, 10))
rf_acc = np.array([forest.forest_accuracy(rf, [s]) for s in test])
print(f"forest {best}  test {rf_acc.mean():.4f}  ({time.time() - t0:.0f} s)")

t0 = time.time()
tc = trainer.TrainConfig(hidden_size=32, max_steps=6000, eval_every=250, patience=8)
params, history = trainer.train(train, val, tc, n_states=cfg.n_states)
lstm_acc = np.array([trainer.sequence_accuracy(params, [s]) for s in test])
print(f"lstm   {len(history)} evaluations  test {lstm_acc.mean():.4f}  "
      f"({time.time() - t0:.0f} s)")

res = evaluation.wilcoxon_signed_rank(lstm_acc, rf_acc)
print(f"Wilcoxon W={res.w} over {res.m} subjects, two-sided p={res.p:.5f}")

# where the forest goes wrong: the ambiguous pair
pred = [rf.predict(f) for f, _ in test]
cm = evaluation.mean_confusion(pred, [y for _, y in test], cfg.n_states)
print("forest confusion (rows true, columns predicted)\n", np.round(cm, 3))
pred = [lstm.predict(f, params) for f, _ in test]
cm = evaluation.mean_confusion(pred, [y for _, y in test], cfg.n_states)
print("lstm confusion\n", np.round(cm, 3))
