"""Per-layer constrained least squares: centralized oracle and consensus ADMM.

The layer problem is  min_O sum_m ||T_m - O Y_m||_F^2  s.t. ||O||_F <= eps.
The decentralized route keeps one primal O_m and one scaled dual Lambda_m per
worker and a shared projected average Z; the consensus backend decides how
that average is computed (exact sum, or gossip rounds over a mixing matrix).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class SolverError(RuntimeError):
    """Numerical failure inside a layer solve."""


@dataclass(frozen=True)
class AdmmConfig:
    mu: float
    iterations: int
    eps_bound: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"penalty mu must be positive, got {self.mu}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.eps_bound > 0:
            raise ValueError(f"eps_bound must be positive, got {self.eps_bound}")


def project_frobenius(z: np.ndarray, eps_bound: float) -> np.ndarray:
    """Project onto the Frobenius-norm ball of radius eps_bound.

    Idempotent by construction: after the initial rescale the norm is forced
    below the bound (the loop runs at most once or twice, absorbing rounding),
    so a second call returns its input unchanged.
    """
    if not eps_bound > 0:
        raise ValueError(f"eps_bound must be positive, got {eps_bound}")
    z = np.asarray(z, dtype=float)
    nrm = np.linalg.norm(z)
    if nrm <= eps_bound:
        return z
    w = z * (eps_bound / nrm)
    while np.linalg.norm(w) > eps_bound:
        w = w * (eps_bound / np.linalg.norm(w))
    return w


def local_o_update(t, y, z, lam, mu: float) -> np.ndarray:
    """Closed-form primal update (T Y' + (1/mu)(Z - Lambda)) (Y Y' + (1/mu) I)^-1.

    Solved through a Cholesky factorization of the SPD system matrix, never
    an explicit inverse.
    """
    t, y, z, lam = (np.asarray(a, dtype=float) for a in (t, y, z, lam))
    for name, a in (("t", t), ("y", y), ("z", z), ("lam", lam)):
        if not np.all(np.isfinite(a)):
            raise SolverError(f"non-finite values in input '{name}'")
    if not mu > 0:
        raise ValueError(f"penalty mu must be positive, got {mu}")
    c = y.shape[0]
    gram = y @ y.T + (1.0 / mu) * np.eye(c)
    rhs = t @ y.T + (1.0 / mu) * (z - lam)
    factor = cho_factor(gram)
    return cho_solve(factor, rhs.T).T


def z_update(per_worker_sums, eps_bound: float, consensus):
    """Projected average of O_m + Lambda_m; one Z estimate per worker."""
    estimates, rounds = consensus.average(list(per_worker_sums))
    return [project_frobenius(e, eps_bound) for e in estimates], rounds


def dual_update(lam, o, z) -> np.ndarray:
    return np.asarray(lam) + np.asarray(o) - np.asarray(z)


def layer_objective(shards, o) -> float:
    """sum_m ||T_m - O Y_m||_F^2."""
    o = np.asarray(o, dtype=float)
    total = 0.0
    for t, y in shards:
        total += float(np.linalg.norm(np.asarray(t) - o @ np.asarray(y)) ** 2)
    return total


@dataclass
class AdmmResult:
    o_star: np.ndarray
    per_worker: list[np.ndarray]
    objective_trace: list[float]
    residual_trace: list[float]
    consensus_rounds: int


def solve_layer_admm(shards, cfg: AdmmConfig, consensus) -> AdmmResult:
    """Run K ADMM iterations from O = Lambda = Z = 0; returns final Z as O*.

    shards: list of (T_m, Y_m) with T_m of shape q x J_m and Y_m of shape
    c x J_m; all workers must share q and c. The residual trace records
    max_m ||O_m - Z_m||_F per iteration, the objective trace the layer cost
    evaluated at worker 0's Z.
    """
    shards = [(np.asarray(t, dtype=float), np.asarray(y, dtype=float)) for t, y in shards]
    if not shards:
        raise ValueError("need at least one shard")
    q = shards[0][0].shape[0]
    c = shards[0][1].shape[0]
    for m, (t, y) in enumerate(shards):
        if t.shape[0] != q or y.shape[0] != c or t.shape[1] != y.shape[1]:
            raise ValueError(
                f"shard {m}: T is {t.shape}, Y is {y.shape}; expected q={q}, c={c}, equal columns"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise SolverError(f"shard {m}: non-finite data")

    inv_mu = 1.0 / cfg.mu
    # Y and mu are constant through the layer: factor once per worker.
    factors = [cho_factor(y @ y.T + inv_mu * np.eye(c)) for _, y in shards]
    ty = [t @ y.T for t, y in shards]

    z = [np.zeros((q, c)) for _ in shards]
    lam = [np.zeros((q, c)) for _ in shards]
    objective_trace: list[float] = []
    residual_trace: list[float] = []
    rounds_total = 0

    for k in range(cfg.iterations):
        o = [
            cho_solve(factors[m], (ty[m] + inv_mu * (z[m] - lam[m])).T).T
            for m in range(len(shards))
        ]
        z, rounds = z_update([o[m] + lam[m] for m in range(len(shards))], cfg.eps_bound, consensus)
        rounds_total += rounds
        lam = [dual_update(lam[m], o[m], z[m]) for m in range(len(shards))]
        for m in range(len(shards)):
            if not (np.all(np.isfinite(o[m])) and np.all(np.isfinite(z[m]))):
                raise SolverError(f"non-finite iterate at ADMM iteration {k}, worker {m}")
        residual_trace.append(max(float(np.linalg.norm(o[m] - z[m])) for m in range(len(shards))))
        objective_trace.append(layer_objective(shards, z[0]))

    return AdmmResult(
        o_star=z[0],
        per_worker=z,
        objective_trace=objective_trace,
        residual_trace=residual_trace,
        consensus_rounds=rounds_total,
    )


def centralized_constrained_ls(t, y, eps_bound: float) -> np.ndarray:
    """Reference solver for min ||T - O Y||_F^2 s.t. ||O||_F <= eps_bound.

    Returns the (minimum-norm) unconstrained least-squares solution when it
    already satisfies the bound; otherwise bisects the ridge parameter lambda
    until ||T Y' (Y Y' + lambda I)^-1||_F hits the bound to 1e-10 relative.
    """
    if not eps_bound > 0:
        raise ValueError(f"eps_bound must be positive, got {eps_bound}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    gram = y @ y.T
    rhs = t @ y.T

    o_unc = np.linalg.lstsq(gram, rhs.T, rcond=None)[0].T
    if np.linalg.norm(o_unc) <= eps_bound:
        return o_unc

    # Work in the gram's eigenbasis: ||O(lambda)||_F is then a smooth strictly
    # decreasing function of lambda, so bisection cannot stall even when the
    # gram is numerically singular.
    w, v = np.linalg.eigh(gram)
    w = np.clip(w, 0.0, None)
    rhs_rot = rhs @ v

    def solution_at(lam_val: float) -> np.ndarray:
        return (rhs_rot / (w + lam_val)) @ v.T

    def norm_at(lam_val: float) -> float:
        return float(np.linalg.norm(rhs_rot / (w + lam_val)))

    hi = 1.0
    while norm_at(hi) > eps_bound:
        hi *= 2.0
        if hi > 1e30:
            raise SolverError("ridge bisection: no upper bracket below lambda=1e30")
    lo = 0.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        nrm = norm_at(mid)
        if abs(nrm - eps_bound) <= 1e-10 * eps_bound:
            return solution_at(mid)
        if nrm > eps_bound:
            lo = mid
        else:
            hi = mid
    raise SolverError("ridge bisection did not reach tolerance in 300 steps")
