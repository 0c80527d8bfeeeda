"""Joint GNN training and adaptive graph coarsening via K-means on node embeddings."""

from .clustering import KMeansConfig, KMeansResult, kmeans_fit, kmeans_warm_start
from .coarsening import (
    CoarsenedGraph,
    Partition,
    coarsen_adjacency,
    coarsen_features,
    coarsen_graph,
    convmatch_cost,
    lift,
    lower_level_objective,
)
from .datasets import load_dataset, make_splits, save_dataset
from .gnn import GnnModel, embeddings, forward, init_model, load_model, loss_and_grad, save_model
from .graph import Graph, edge_homophily, generate_sbm, normalize_adjacency
from .trainer import TrainConfig, TrainReport, train_baseline_static, train_full, train_gk

__version__ = "0.1.0"
