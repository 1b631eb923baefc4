"""
From voxels to functional signatures
====================================

A scan is a (time, voxel) matrix.  Each functional network is a nonnegative
map over the same voxels.  Normalizing every map to unit sum turns the
projection ``D @ V.T`` into a weighted mean of the voxel signals inside each
network, one value per network and time point.
"""

import numpy as np

from brain_decoder import extract_features, row_normalize, shift_labels

# two time points, three voxels, two networks
d = np.array([[1.0, 2.0, 3.0],
              [4.0, 5.0, 6.0]])
v = np.array([[1.0, 1.0, 0.0],
              [0.0, 0.0, 2.0]])
v_n = row_normalize(v)
print("normalized maps\n", v_n)
print("features\n", extract_features(d, v_n))

# normalizing twice changes nothing
print("idempotent:", np.allclose(row_normalize(v_n), v_n, rtol=0, atol=1e-12))

# the measured response trails the stimulus, so labels move later in time;
# the gap at the start repeats the first state
paradigm = np.array([0, 0, 1, 1, 1, 2, 2, 2, 2, 0, 0, 0])
print("paradigm ", paradigm)
print("shifted 3", shift_labels(paradigm, 3))
