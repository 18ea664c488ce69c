"""Node embeddings for clustering similar nodes of aggregated knowledge graphs.

Stages: N-Triples graph store, rule-based saturation into graph variants,
gold clusterings from alignment links, a relational GCN trained with the
Soft Nearest Neighbor loss, clustering of the embeddings and evaluation.
"""
from .alignment import AlignmentLink, AlignmentRelation, GoldClustering, compute_gold_clustering, split_folds
from .clustering import optics_cluster, single_cluster, ward_cluster
from .evaluation import accuracy, adjusted_rand_index, normalized_mutual_information
from .graph import KnowledgeGraph, parse_ntriples, serialize_ntriples
from .model import GcnConfig, forward, init_params
from .saturation import build_variant
from .training import TrainConfig, snn_loss, train

__version__ = "0.1.0"
