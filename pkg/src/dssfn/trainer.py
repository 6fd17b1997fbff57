"""Progressive layer growth: per-layer constrained LS, decentralized via
consensus ADMM or centralized via the ridge-bisection oracle.

Layer 0 regresses the targets on the raw inputs and only exists to build the
first hidden weight; layers 1..L-1 grow hidden weights; the solve after layer
L fixes the network's output matrix. Traces therefore contain L+1 blocks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .model import (
    SsfnDims,
    SsfnNetwork,
    build_weight,
    forward_features,
    predict,
    relu,
    sample_random_matrix,
)
from .network import (
    CommLedger,
    ExactConsensus,
    FixedRounds,
    GossipConsensus,
    Tolerance,
    circular_topology,
    mixing_matrix,
)
from .solver import AdmmConfig, centralized_constrained_ls, layer_objective, solve_layer_admm


class TrainerError(ValueError):
    """Invalid training configuration or shard layout."""


@dataclass(frozen=True, eq=False)
class TrainConfig:
    dims: SsfnDims
    workers: int = 1
    admm_iterations: int = 100
    mu0: float = 1e-3
    mu_l: float = 10.0
    eps_bound: float | None = None  # defaults to 2q
    consensus: str = "exact"  # "exact" | "gossip"
    degree: int | None = None
    mixing: np.ndarray | None = None  # explicit H; overrides degree
    consensus_tolerance: float = 1e-8
    consensus_round_cap: int = 100_000
    fixed_rounds: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.workers < 1:
            raise TrainerError(f"workers must be >= 1, got {self.workers}")
        if self.admm_iterations < 1:
            raise TrainerError(f"admm_iterations must be >= 1, got {self.admm_iterations}")
        if not (self.mu0 > 0 and self.mu_l > 0):
            raise TrainerError(f"penalties must be positive, got mu0={self.mu0}, mu_l={self.mu_l}")
        if self.eps_bound is not None and not self.eps_bound > 0:
            raise TrainerError(f"eps_bound must be positive, got {self.eps_bound}")
        if self.consensus not in ("exact", "gossip"):
            raise TrainerError(f"consensus must be 'exact' or 'gossip', got {self.consensus!r}")
        if self.consensus == "gossip" and self.degree is None and self.mixing is None:
            raise TrainerError("gossip consensus needs a topology degree or an explicit mixing matrix")

    @property
    def effective_eps(self) -> float:
        return self.eps_bound if self.eps_bound is not None else 2.0 * self.dims.q


def build_consensus(cfg: TrainConfig, ledger: CommLedger | None = None):
    if cfg.consensus == "exact":
        return ExactConsensus()
    h = cfg.mixing if cfg.mixing is not None else mixing_matrix(
        circular_topology(cfg.workers, cfg.degree)
    )
    mode = (
        FixedRounds(cfg.fixed_rounds)
        if cfg.fixed_rounds is not None
        else Tolerance(tau=cfg.consensus_tolerance, round_cap=cfg.consensus_round_cap)
    )
    return GossipConsensus(h, mode=mode, ledger=ledger)


@dataclass
class LayerReport:
    layer_index: int
    objective_trace: list[float]
    primal_residual_trace: list[float]
    comm_rounds: int
    wall_time: float
    o_star: np.ndarray | None = None


@dataclass
class EvalReport:
    train_accuracy: float
    test_accuracy: float
    train_error_db: float
    train_confusion: np.ndarray
    test_confusion: np.ndarray | None = None


@dataclass
class DecentralizedResult:
    network: SsfnNetwork  # worker 0's copy
    reports: list[LayerReport]
    worker_networks: list[SsfnNetwork] = field(default_factory=list)


@dataclass
class CentralizedResult:
    network: SsfnNetwork
    reports: list[LayerReport]


def partition_dataset(dataset: LabeledDataset, m: int, seed: int) -> list[LabeledDataset]:
    """Seeded permutation then contiguous split; shard sizes differ by <= 1."""
    j = dataset.num_samples
    if j < m:
        raise TrainerError(f"cannot split {j} samples across {m} workers")
    perm = np.random.default_rng(seed).permutation(j)
    return [
        LabeledDataset(x=dataset.x[:, idx], t=dataset.t[:, idx], labels=dataset.labels[idx])
        for idx in np.array_split(perm, m)
    ]


def _check_shards(cfg: TrainConfig, shards) -> None:
    if len(shards) != cfg.workers:
        raise TrainerError(f"got {len(shards)} shards for {cfg.workers} workers")
    for m, sh in enumerate(shards):
        if sh.input_dim != cfg.dims.p or sh.num_classes != cfg.dims.q:
            raise TrainerError(
                f"shard {m} has p={sh.input_dim}, q={sh.num_classes}; "
                f"config expects p={cfg.dims.p}, q={cfg.dims.q}"
            )


def train_decentralized(
    cfg: TrainConfig, shards, consensus=None, ledger: CommLedger | None = None
) -> DecentralizedResult:
    """Grow L layers with per-layer consensus ADMM across cfg.workers shards.

    Every worker tracks its own weight stack built from its own Z estimate;
    with an exact backend these are identical copies.
    """
    _check_shards(cfg, shards)
    dims = cfg.dims
    backend = consensus if consensus is not None else build_consensus(cfg, ledger)
    eps = cfg.effective_eps
    nworkers = cfg.workers

    features = [sh.x for sh in shards]  # per-worker Y_{l,m}, updated incrementally
    worker_weights: list[list] = [[] for _ in range(nworkers)]
    outputs: list[np.ndarray] = []
    reports: list[LayerReport] = []

    for layer in range(dims.layers + 1):
        start = time.perf_counter()
        if hasattr(backend, "layer"):
            backend.layer = layer
        acfg = AdmmConfig(
            mu=cfg.mu0 if layer == 0 else cfg.mu_l,
            iterations=cfg.admm_iterations,
            eps_bound=eps,
        )
        result = solve_layer_admm(
            [(shards[m].t, features[m]) for m in range(nworkers)], acfg, backend
        )
        if layer < dims.layers:
            prev_width = dims.p if layer == 0 else dims.n
            r = sample_random_matrix(dims.random_rows, prev_width, cfg.seed, layer + 1)
            for m in range(nworkers):
                w = build_weight(result.per_worker[m], r)
                worker_weights[m].append(w)
                features[m] = relu(w.full @ features[m])
        else:
            outputs = result.per_worker
        reports.append(
            LayerReport(
                layer_index=layer,
                objective_trace=result.objective_trace,
                primal_residual_trace=result.residual_trace,
                comm_rounds=result.consensus_rounds,
                wall_time=time.perf_counter() - start,
                o_star=result.o_star,
            )
        )

    nets = [
        SsfnNetwork(dims=dims, weights=worker_weights[m], output=outputs[m])
        for m in range(nworkers)
    ]
    return DecentralizedResult(network=nets[0], reports=reports, worker_networks=nets)


def train_centralized(cfg: TrainConfig, dataset: LabeledDataset) -> CentralizedResult:
    """Same layer-growth loop with the exact ridge-bisection oracle per layer."""
    dims = cfg.dims
    if dataset.input_dim != dims.p or dataset.num_classes != dims.q:
        raise TrainerError(
            f"dataset has p={dataset.input_dim}, q={dataset.num_classes}; "
            f"config expects p={dims.p}, q={dims.q}"
        )
    eps = cfg.effective_eps
    y = dataset.x
    weights = []
    output = None
    reports: list[LayerReport] = []

    for layer in range(dims.layers + 1):
        start = time.perf_counter()
        o_star = centralized_constrained_ls(dataset.t, y, eps)
        obj = layer_objective([(dataset.t, y)], o_star)
        if layer < dims.layers:
            prev_width = dims.p if layer == 0 else dims.n
            r = sample_random_matrix(dims.random_rows, prev_width, cfg.seed, layer + 1)
            w = build_weight(o_star, r)
            weights.append(w)
            y = relu(w.full @ y)
        else:
            output = o_star
        reports.append(
            LayerReport(
                layer_index=layer,
                objective_trace=[obj],
                primal_residual_trace=[0.0],
                comm_rounds=0,
                wall_time=time.perf_counter() - start,
                o_star=o_star,
            )
        )

    return CentralizedResult(
        network=SsfnNetwork(dims=dims, weights=weights, output=output), reports=reports
    )


ERROR_DB_FLOOR = -100.0


def _accuracy_and_confusion(net: SsfnNetwork, dataset: LabeledDataset):
    _, predicted = predict(net, dataset.x)
    accuracy = 100.0 * float(np.mean(predicted == dataset.labels))
    q = dataset.num_classes
    confusion = np.zeros((q, q), dtype=int)
    np.add.at(confusion, (dataset.labels, predicted), 1)
    return accuracy, confusion


def evaluate(
    net: SsfnNetwork, train_set: LabeledDataset, test_set: LabeledDataset | None = None
) -> EvalReport:
    """Accuracy (%) plus dB-scale normalized training error.

    train_error_db = 10 log10(sum ||t - t_hat||^2 / sum ||t||^2), floored at
    -100 dB when the residual vanishes.
    """
    scores, _ = predict(net, train_set.x)
    residual = float(np.linalg.norm(train_set.t - scores) ** 2)
    energy = float(np.linalg.norm(train_set.t) ** 2)
    if residual == 0.0:
        error_db = ERROR_DB_FLOOR
    else:
        error_db = max(10.0 * np.log10(residual / energy), ERROR_DB_FLOOR)

    train_accuracy, train_confusion = _accuracy_and_confusion(net, train_set)
    if test_set is not None:
        test_accuracy, test_confusion = _accuracy_and_confusion(net, test_set)
    else:
        test_accuracy, test_confusion = float("nan"), None

    return EvalReport(
        train_accuracy=train_accuracy,
        test_accuracy=test_accuracy,
        train_error_db=float(error_db),
        train_confusion=train_confusion,
        test_confusion=test_confusion,
    )
