"""Decentralized layer-wise training of structured random-feature networks
via consensus ADMM over synchronous gossip networks."""

from .data import LabeledDataset, load_csv, normalize_features, one_hot, save_csv, synthetic_blobs
from .model import (
    SsfnDims,
    SsfnNetwork,
    WeightMatrix,
    build_weight,
    forward_features,
    load_network,
    make_vq,
    predict,
    relu,
    sample_random_matrix,
    save_network,
)
from .network import (
    CommLedger,
    ExactConsensus,
    FixedRounds,
    GossipConsensus,
    MixingMatrix,
    Tolerance,
    Topology,
    circular_topology,
    comm_cost_admm,
    comm_cost_gradient,
    comm_ratio,
    consensus_average,
    d_max,
    mixing_matrix,
)
from .solver import (
    AdmmConfig,
    centralized_constrained_ls,
    dual_update,
    layer_objective,
    local_o_update,
    project_frobenius,
    solve_layer_admm,
    z_update,
)
from .trainer import (
    EvalReport,
    LayerReport,
    TrainConfig,
    evaluate,
    partition_dataset,
    train_centralized,
    train_decentralized,
)

__all__ = [name for name in dir() if not name.startswith("_")]
