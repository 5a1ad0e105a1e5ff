"""Age-based gradient sparsification (rAge-k) and client clustering for federated learning."""

from .aging import age_update, assign_disjoint_requests, merge_age_vectors, record_request
from .clustering import ClusterState, dbscan, recluster, similarity, similarity_matrix, similarity_to_distance
from .config import ConfigError, RunConfig, packaged_config
from .data import ShardPlan, cifar_groups_plan, mnist_pairs_plan, read_idx, shard, synth_generate
from .learner import Adam, ModelSpec, SGD, evaluate, loss_and_gradient
from .orchestrator import CommLedger, RunReport, Simulation, run
from .sparsifiers import (
    RAgeK,
    RTopK,
    TopK,
    compression_stats,
    r_age_k_sparsify,
    r_top_k_sparsify,
    top_k_sparsify,
    top_r_indices,
)
from .vectors import SparseUpdate, aggregate, densify

__version__ = "0.1.0"
