"""Synchronous communication layer: circular topologies, doubly-stochastic
mixing matrices, gossip consensus averaging, and communication-cost accounting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NetworkError(ValueError):
    """Invalid topology or mixing-matrix construction."""


class ConsensusError(RuntimeError):
    """Gossip averaging failed to converge within the round cap."""


def d_max(m: int) -> int:
    """Smallest degree at which the circular topology is complete."""
    return math.ceil((m - 1) / 2)


@dataclass(frozen=True)
class Topology:
    size: int
    degree: int
    neighbor_sets: tuple[frozenset, ...]


def circular_topology(m: int, d: int) -> Topology:
    """Ring of m nodes, each linked to its d nearest neighbors on each side.

    Every neighbor set includes the node itself; at d = d_max(m) the set
    saturates to all m nodes (complete graph).
    """
    if m < 2:
        raise NetworkError(f"need at least 2 nodes, got {m}")
    if not 1 <= d <= d_max(m):
        raise NetworkError(f"degree {d} out of range [1, {d_max(m)}] for {m} nodes")
    sets = []
    for i in range(m):
        members = {i}
        for k in range(1, d + 1):
            members.add((i + k) % m)
            members.add((i - k) % m)
        sets.append(frozenset(members))
    return Topology(size=m, degree=d, neighbor_sets=tuple(sets))


@dataclass(frozen=True)
class MixingMatrix:
    h: np.ndarray


def mixing_matrix(topology: Topology) -> MixingMatrix:
    """Equal-weight mixing: h_ij = 1/|N_i| for j in N_i, else 0.

    Equal weights are doubly stochastic only on regular graphs, so
    irregular topologies are rejected.
    """
    sizes = [len(s) for s in topology.neighbor_sets]
    if len(set(sizes)) != 1:
        offenders = sorted(
            i for i, s in enumerate(topology.neighbor_sets) if len(s) != sizes[0]
        )
        raise NetworkError(
            f"equal-weight mixing needs a regular graph; nodes {offenders} have "
            f"neighborhood sizes differing from node 0's {sizes[0]}"
        )
    m = topology.size
    w = 1.0 / sizes[0]
    h = np.zeros((m, m))
    for i, neigh in enumerate(topology.neighbor_sets):
        for j in neigh:
            h[i, j] = w
    _check_doubly_stochastic(h)
    return MixingMatrix(h=h)


def _check_doubly_stochastic(h: np.ndarray, tol: float = 1e-12) -> None:
    if not np.allclose(h, h.T, atol=tol):
        raise NetworkError("mixing matrix must be symmetric")
    if np.any(h < 0):
        raise NetworkError("mixing matrix must be nonnegative")
    if np.max(np.abs(h.sum(axis=0) - 1.0)) > tol or np.max(np.abs(h.sum(axis=1) - 1.0)) > tol:
        raise NetworkError("mixing matrix rows/columns must sum to 1")


def directed_edge_count(h: np.ndarray) -> int:
    """Number of directed links a gossip round transmits over (self-loops excluded)."""
    return int(np.count_nonzero(h)) - h.shape[0]


@dataclass(frozen=True)
class FixedRounds:
    rounds: int


@dataclass(frozen=True)
class Tolerance:
    tau: float = 1e-8
    round_cap: int = 100_000


@dataclass
class CommLedger:
    """Counts what a real network would transmit during consensus rounds.

    scalars_exchanged totals transmissions over every directed link; since
    each node sends its full matrix to each neighbor once per round,
    scalars_per_link (the traffic carried by any single directed link) is
    the matrix size times the number of rounds, matching the analytic
    per-layer cost Q * n_{l-1} * B * K.
    """

    scalars_exchanged: int = 0
    scalars_per_link: int = 0
    consensus_rounds: int = 0
    per_layer: dict = field(default_factory=dict)

    def record_round(self, layer, matrix_scalars: int, directed_edges: int) -> None:
        self.scalars_exchanged += matrix_scalars * directed_edges
        self.scalars_per_link += matrix_scalars
        self.consensus_rounds += 1
        entry = self.per_layer.setdefault(
            layer, {"rounds": 0, "scalars_exchanged": 0, "scalars_per_link": 0}
        )
        entry["rounds"] += 1
        entry["scalars_exchanged"] += matrix_scalars * directed_edges
        entry["scalars_per_link"] += matrix_scalars


def consensus_average(values, h, mode, ledger: CommLedger | None = None, layer=None):
    """Iterated mixing v <- H v until the stop rule; returns per-node estimates.

    FixedRounds runs exactly B rounds. Tolerance stops once every node is
    within tau (Frobenius) of the network average, which the doubly
    stochastic H preserves exactly at every round.
    """
    h = h.h if isinstance(h, MixingMatrix) else np.asarray(h, dtype=float)
    _check_doubly_stochastic(h)
    values = [np.asarray(v, dtype=float) for v in values]
    if len(values) != h.shape[0]:
        raise NetworkError(f"got {len(values)} values for a {h.shape[0]}-node mixing matrix")
    shape = values[0].shape
    if any(v.shape != shape for v in values):
        raise NetworkError("all per-node values must share a shape")
    edges = directed_edge_count(h)
    scalars = int(np.prod(shape)) if shape else 1

    v = np.stack([val.ravel() for val in values])

    def step():
        nonlocal v
        v = h @ v
        if ledger is not None:
            ledger.record_round(layer, scalars, edges)

    if isinstance(mode, FixedRounds):
        if mode.rounds < 0:
            raise NetworkError(f"round count must be >= 0, got {mode.rounds}")
        for _ in range(mode.rounds):
            step()
        rounds = mode.rounds
    elif isinstance(mode, Tolerance):
        target = v.mean(axis=0)
        rounds = 0
        while True:
            deviation = float(np.max(np.linalg.norm(v - target, axis=1)))
            if deviation <= mode.tau:
                break
            if rounds >= mode.round_cap:
                raise ConsensusError(
                    f"consensus not reached in {mode.round_cap} rounds; "
                    f"achieved deviation {deviation:.3e} > tau {mode.tau:.3e}"
                )
            step()
            rounds += 1
    else:
        raise TypeError(f"unknown consensus mode {mode!r}")

    return [v[i].reshape(shape).copy() for i in range(len(values))], rounds


class ExactConsensus:
    """Idealized backend: every node receives the exact mean instantly.

    The sum is accumulated in fixed node-index order so results do not
    depend on scheduling.
    """

    def average(self, values):
        values = [np.asarray(v, dtype=float) for v in values]
        acc = np.zeros_like(values[0])
        for v in values:
            acc = acc + v
        mean = acc / len(values)
        return [mean.copy() for _ in values], 0


class GossipConsensus:
    """Gossip backend over a doubly-stochastic mixing matrix."""

    def __init__(self, mixing, mode=None, ledger: CommLedger | None = None, layer=None):
        self.h = mixing.h if isinstance(mixing, MixingMatrix) else np.asarray(mixing, dtype=float)
        _check_doubly_stochastic(self.h)
        self.mode = mode if mode is not None else Tolerance()
        self.ledger = ledger
        self.layer = layer

    def average(self, values):
        return consensus_average(values, self.h, self.mode, ledger=self.ledger, layer=self.layer)


def comm_cost_gradient(n_l: int, n_lminus1: int, b: int, i: int) -> int:
    """Scalars exchanged by decentralized gradient descent for one weight matrix."""
    return n_l * n_lminus1 * b * i


def comm_cost_admm(q: int, n_lminus1: int, b: int, k: int) -> int:
    """Scalars exchanged by the layer-wise ADMM scheme for one weight matrix."""
    return q * n_lminus1 * b * k


def comm_ratio(n_l: int, i: int, q: int, k: int) -> float:
    """Gradient-descent-to-ADMM communication ratio n_l * I / (Q * K)."""
    return (n_l * i) / (q * k)


def topology_to_csv(topology: Topology, path) -> None:
    with open(path, "w") as fh:
        fh.write("node,neighbors\n")
        for i, neigh in enumerate(topology.neighbor_sets):
            fh.write(f"{i},{' '.join(str(j) for j in sorted(neigh))}\n")


def mixing_to_csv(mixing: MixingMatrix, path) -> None:
    np.savetxt(path, mixing.h, delimiter=",")
