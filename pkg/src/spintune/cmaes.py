"""Rank-based evolution strategy with covariance matrix adaptation.

The optimizer is a pure ask/tell pair. ``ask`` samples one generation of
candidates from the current search distribution, ``tell`` consumes the
evaluated candidates and returns the updated distribution. No cost values
enter the update directly, only the candidate ranking, so the strategy is
invariant under monotone transformations of the cost.

Sampling is counter-based: the normal draws for a generation are fully
determined by (seed, generation), so asking the same state twice returns
byte-identical candidates and an interrupted run can be resumed exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

# Relative eigenvalue floor used when repairing a numerically non-positive
# covariance matrix.
EIGENVALUE_FLOOR = 1e-14


@dataclass(frozen=True)
class StrategyParams:
    """Static strategy constants, all derived from (dimension, population)."""

    dimension: int
    population: int
    parents: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.population < 2:
            raise ValueError(f"population must be >= 2, got {self.population}")
        if not 1 <= self.parents <= self.population:
            raise ValueError("parents must lie in [1, population]")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.parents,):
            raise ValueError("weights must have one entry per parent")
        if np.any(np.diff(w) > 0) or np.any(w <= 0):
            raise ValueError("weights must be positive and non-increasing")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        for name in ("c_sigma", "c_c", "c_1"):
            rate = getattr(self, name)
            if not 0.0 < rate <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {rate}")
        # a single parent has no rank-mu update, so c_mu may be exactly 0
        if not 0.0 <= self.c_mu <= 1.0:
            raise ValueError(f"c_mu must lie in [0, 1], got {self.c_mu}")
        if self.c_1 + self.c_mu > 1.0 + 1e-12:
            raise ValueError("c_1 + c_mu must not exceed 1")
        if self.d_sigma < 1.0:
            raise ValueError(f"d_sigma must be >= 1, got {self.d_sigma}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @classmethod
    def defaults(cls, dimension: int, population: int | None = None, seed: int = 0) -> "StrategyParams":
        """Standard hyperparameters for a given dimension and population size."""
        n = int(dimension)
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        lam = int(population) if population is not None else 4 + int(3 * math.log(n))
        if lam < 2:
            raise ValueError(f"population must be >= 2, got {lam}")
        mu = max(1, lam // 2)
        raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mu_eff = 1.0 / float(np.sum(weights**2))

        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
        c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
        chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n**2))
        return cls(
            dimension=n,
            population=lam,
            parents=mu,
            weights=weights,
            mu_eff=mu_eff,
            c_sigma=c_sigma,
            d_sigma=d_sigma,
            c_c=c_c,
            c_1=c_1,
            c_mu=c_mu,
            chi_n=chi_n,
            seed=int(seed),
        )


@dataclass(frozen=True)
class DistributionState:
    """Search distribution N(mean, sigma^2 C) plus the two evolution paths.

    ``cov`` is the unscaled covariance shape matrix C (step size kept
    separate), which is what the post-hoc correlation analysis consumes.
    """

    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        n = mean.shape[0]
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match dimension {n}")
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValueError("covariance must be symmetric")
        if self.sigma <= 0.0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if self.generation < 0:
            raise ValueError("generation must be non-negative")

    @classmethod
    def initial(cls, mean: Sequence[float], sigma: float = 1.0) -> "DistributionState":
        mean = np.asarray(mean, dtype=float)
        n = mean.shape[0]
        return cls(
            mean=mean,
            sigma=float(sigma),
            cov=np.eye(n),
            p_sigma=np.zeros(n),
            p_c=np.zeros(n),
            generation=0,
        )


@dataclass(frozen=True)
class Candidate:
    """One sampled search point.

    ``x_raw = mean + sigma * y`` is the point as sampled; ``x`` is the same
    point clipped into the unit cube for evaluation. The distribution update
    uses ``y`` only, i.e. the unclipped displacement.
    """

    id: int
    z: np.ndarray
    y: np.ndarray
    x_raw: np.ndarray
    x: np.ndarray


def _repaired_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition with a relative floor on the eigenvalues."""
    vals, vecs = np.linalg.eigh(cov)
    top = vals[-1]
    if not np.isfinite(top) or top <= 0.0:
        raise ValueError("covariance has no positive eigenvalue; cannot repair")
    floor = EIGENVALUE_FLOOR * top
    if vals[0] < floor:
        warnings.warn(
            f"covariance eigenvalue {vals[0]:.3e} below floor {floor:.3e}; repairing",
            RuntimeWarning,
            stacklevel=3,
        )
        vals = np.maximum(vals, floor)
    return vals, vecs


def _sqrt_cov(cov: np.ndarray) -> np.ndarray:
    vals, vecs = _repaired_eigh(cov)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _inv_sqrt_cov(cov: np.ndarray) -> np.ndarray:
    vals, vecs = _repaired_eigh(cov)
    return (vecs / np.sqrt(vals)) @ vecs.T


def ask(state: DistributionState, params: StrategyParams) -> list[Candidate]:
    """Sample one generation of candidates from the current distribution.

    The draw is keyed by (params.seed, state.generation): asking the same
    state twice returns identical candidates.
    """
    n = params.dimension
    if state.mean.shape[0] != n:
        raise ValueError("state dimension does not match strategy dimension")
    sqrt_c = _sqrt_cov(state.cov)
    rng = np.random.default_rng((params.seed, state.generation))
    z = rng.standard_normal((params.population, n))
    y = z @ sqrt_c.T
    x_raw = state.mean + state.sigma * y
    x = np.clip(x_raw, 0.0, 1.0)
    return [
        Candidate(id=i, z=z[i], y=y[i], x_raw=x_raw[i], x=x[i])
        for i in range(params.population)
    ]


def _rank(evaluated: Sequence[tuple[Candidate, float]]) -> list[Candidate]:
    """Candidates sorted by cost; non-finite costs rank worst, ties break by id."""
    if not any(math.isfinite(cost) for _, cost in evaluated):
        raise ValueError("all candidate costs are non-finite")
    keyed = [
        (cost if math.isfinite(cost) else math.inf, cand.id, cand)
        for cand, cost in evaluated
    ]
    keyed.sort(key=lambda t: (t[0], t[1]))
    return [cand for _, _, cand in keyed]


def tell(
    state: DistributionState,
    params: StrategyParams,
    evaluated: Sequence[tuple[Candidate, float]],
) -> DistributionState:
    """Consume one evaluated generation and return the updated distribution."""
    n = params.dimension
    lam = params.population
    if len(evaluated) != lam:
        raise ValueError(f"expected {lam} evaluated candidates, got {len(evaluated)}")
    ids = sorted(cand.id for cand, _ in evaluated)
    if ids != list(range(lam)):
        raise ValueError("evaluated candidates must cover ids 0..population-1 exactly once")

    ranked = _rank(evaluated)
    selected = ranked[: params.parents]
    y_sel = np.stack([cand.y for cand in selected])
    y_w = params.weights @ y_sel

    mean = state.mean + state.sigma * y_w

    g_next = state.generation + 1
    c_s, d_s = params.c_sigma, params.d_sigma
    inv_sqrt_c = _inv_sqrt_cov(state.cov)
    p_sigma = (1.0 - c_s) * state.p_sigma + math.sqrt(
        c_s * (2.0 - c_s) * params.mu_eff
    ) * (inv_sqrt_c @ y_w)
    sigma = state.sigma * math.exp((c_s / d_s) * (np.linalg.norm(p_sigma) / params.chi_n - 1.0))

    norm_ratio = np.linalg.norm(p_sigma) / math.sqrt(1.0 - (1.0 - c_s) ** (2 * g_next))
    h_sig = 1.0 if norm_ratio < (1.4 + 2.0 / (n + 1.0)) * params.chi_n else 0.0
    c_c = params.c_c
    p_c = (1.0 - c_c) * state.p_c + h_sig * math.sqrt(c_c * (2.0 - c_c) * params.mu_eff) * y_w

    delta_h = (1.0 - h_sig) * c_c * (2.0 - c_c)
    rank_mu = np.einsum("k,ki,kj->ij", params.weights, y_sel, y_sel)
    cov = (
        (1.0 + params.c_1 * delta_h - params.c_1 - params.c_mu) * state.cov
        + params.c_1 * np.outer(p_c, p_c)
        + params.c_mu * rank_mu
    )
    cov = 0.5 * (cov + cov.T)

    return replace(
        state,
        mean=mean,
        sigma=sigma,
        cov=cov,
        p_sigma=p_sigma,
        p_c=p_c,
        generation=g_next,
    )


def covariance_snapshot(state: DistributionState) -> np.ndarray:
    """Copy of the unscaled covariance shape matrix at this generation."""
    return np.array(state.cov, dtype=float, copy=True)
