"""Brain-state decoding from network signatures with a two-layer LSTM."""

__version__ = "0.1.0"

from .errors import (CheckpointError, ConfigError, DecoderError, NumericError,
                     ParseError, ShapeError)
from .features import extract_features, row_normalize, shift_labels
from .lstm import (DecoderParams, LayerParams, LstmState, backward, cell_step,
                   cross_entropy, forward, init_params, load_checkpoint,
                   predict, save_checkpoint)
from .trainer import TrainConfig, adam_step, lr_at, make_clips, train
from .forest import RfConfig, fit_forest, grid_search, predict_forest
from .evaluation import confusion, overall_accuracy, wilcoxon_signed_rank
from .sensitivity import ablate_fn, change_matrix, pca, top_fns
from .synth import SynthConfig, ambiguity_bayes_bound, generate
