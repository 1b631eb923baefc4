"""
Which networks does the decoder use?
====================================

Only network 0 carries state information in this synthetic set; the others
are pure noise.  Zeroing one network at a time and recording the accuracy
lost on every held-out subject gives a (network, subject) change matrix.
Its first principal direction should load on network 0.
"""

import numpy as np

from brain_decoder import sensitivity, synth, trainer

cfg = synth.SynthConfig(n_subjects=8, t=120, k=5, s_vox=50, n_states=3,
                        hemodynamic_shift=0, temporal_ambiguity=False,
                        informative_fns=1, block_len_range=(5, 10), seed=4)
data = [synth.featurize(s, 0) for s in synth.generate(cfg)]
tc = trainer.TrainConfig(hidden_size=8, clip_len=20, overlap=10, base_lr=0.01,
                         batch_size=16, max_steps=800, eval_every=100, patience=4)
params, _ = trainer.train(data[:5], data[5:6], tc)

m = sensitivity.change_matrix(params, data[6:])
print("accuracy lost per network (rows) and subject (columns)\n", np.round(m, 3))
p = sensitivity.pca(m)
print("explained variance", np.round(p.variances, 5))
print("first component", np.round(p.components[:, 0], 3))
print("top networks", sensitivity.top_fns(p, 3))
