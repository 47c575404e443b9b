"""Joint learning of feature dependency graphs and graph-attention predictors."""

from .dataio import Dataset, FeatureSpec, load_csv, load_dataset, save_dataset, split_standardize
from .metrics import MetricReport, graph_auc, mean_graph_auc, rmse, roc_auc
from .simulator import PrecisionPair, SimConfig, make_dataset
from .structure import StructureLearner, edge_probabilities, undirected_scores
from .taskgat import GraphAttentionNet, TaskLearner
from .trainer import (HyperParams, JointModel, TrainState, load_checkpoint,
                      run_training, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FeatureSpec", "GraphAttentionNet", "HyperParams", "JointModel",
    "MetricReport", "PrecisionPair", "SimConfig", "StructureLearner", "TaskLearner",
    "TrainState", "edge_probabilities", "graph_auc", "load_checkpoint", "load_csv",
    "load_dataset", "make_dataset", "mean_graph_auc", "rmse", "roc_auc",
    "run_training", "save_checkpoint", "save_dataset", "split_standardize", "train",
    "undirected_scores",
]
