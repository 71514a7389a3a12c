"""Prior-graph guided multi-label recognition with incomplete labels,
operating on precomputed feature vectors."""

from .data import Dataset, Sample, augment, mask_partial, mask_single_positive, synth_generate
from .evaluation import ScoreTable, average_precision, mean_ap, pseudo_precision
from .losses import LossWeights, ThresholdState, confident_set, total_loss
from .model import ModelParams, Prediction, gcn_forward, init_model, predict
from .prior import LabelEmbeddings, PriorGraph, build_prior, dynamic_graph, identity_graph
from .training import EpochRecord, TrainConfig, train

__version__ = "0.1.0"
