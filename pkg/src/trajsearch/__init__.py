"""Trajectory similarity search: distances, multi-scale graphs, attention-GNN
embeddings and top-K retrieval."""

__version__ = "0.1.0"

from .distance import (DistanceMatrix, RawDistanceMatrix, discrete_frechet,
                       hausdorff, normalize_distances, raw_distance_matrix,
                       symmetrized)
from .errors import InputError, NumericError
from .gnn import (EmbeddingState, GnnModel, TrainConfig, attention_normalize,
                  attention_scores, backward, cosine_loss, forward, init_model,
                  train)
from .graph import (CoverageReport, GraphLayer, MultiScaleGraph, Thresholds,
                    build_graph, choose_thresholds, coverage_check)
from .ingest import (GriddedTrajectory, GridSpec, Trajectory, filter_by_length,
                     grid_trajectories, parse_dataset, write_canonical_jsonl)
from .search_eval import (EmbeddingSet, ground_truth_topn, hit_ratio,
                          knn_search, recall_n_at_k, retrieval_topk)
