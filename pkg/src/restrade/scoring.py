"""Satisfaction scoring: task delay, energy, preference scores, aggregates.

A requester's satisfaction with a service (SPS) weighs delay, price, and
collaborator reputation; a collaborator's satisfaction with a requirement
(RPS) weighs energy, price, and requester reputation.  Averages over a match
matrix give ARS/ACS and the weighted market objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketInstance, PreferenceWeights, Requirement, ServiceOffer

# Entries at or below this magnitude count as "unmatched" when scoring a
# match matrix; solver output is approximate.
ZERO_TOL = 1e-9


@dataclass(frozen=True)
class MatchMatrix:
    """m x n proportions: row i gives how requirement i splits across services."""

    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.values, dtype=float)
        if x.ndim != 2:
            raise ValueError("match matrix must be 2-dimensional")
        if x.size and (x.min() < -ZERO_TOL or x.max() > 1.0 + ZERO_TOL):
            raise ValueError("match proportions must lie in [0, 1]")
        if x.size and x.sum(axis=1).max(initial=0.0) > 1.0 + ZERO_TOL:
            raise ValueError("row sums must not exceed 1")
        x.setflags(write=False)
        object.__setattr__(self, "values", x)

    @classmethod
    def zeros(cls, m: int, n: int) -> "MatchMatrix":
        return cls(np.zeros((m, n)))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PairEvaluation:
    """Everything derived for one (requirement, service) pair at proportion x."""

    delay: float
    energy: float
    sps_delay: float
    sps_price: float
    sps_reputation: float
    rps_energy: float
    rps_price: float
    rps_reputation: float
    sps: float
    rps: float


@dataclass(frozen=True)
class SatisfactionSummary:
    ars: float        # average requester satisfaction
    acs: float        # average collaborator satisfaction
    objective: float  # requester_weight * ars + collaborator_weight * acs


def task_delay(req: Requirement, svc: ServiceOffer, x: float) -> float:
    """Seconds to transfer and execute the assigned fraction of a requirement."""
    return x * req.task_size / svc.tx_rate + x * req.cpu_cycles / svc.cpu_freq


def energy(req: Requirement, svc: ServiceOffer, x: float) -> float:
    """Joules the collaborator spends receiving and executing the fraction."""
    return (svc.tx_energy_rate * x * req.task_size / svc.tx_rate
            + svc.exe_energy_rate * x * req.cpu_cycles / svc.cpu_freq)


def evaluate_pair(req: Requirement, svc: ServiceOffer, x: float,
                  weights: PreferenceWeights) -> PairEvaluation:
    """Score one pair at proportion ``x``.

    Delay and energy components fall linearly to 0 at the pair's tolerance
    and are 0 beyond it; price components decay exponentially with the price
    gap and are 0 unless offer <= bid (boundaries inclusive).  The aggregate
    scores are 0 whenever x is (numerically) zero.
    """
    t = task_delay(req, svc, x)
    e = energy(req, svc, x)

    sps_delay = (1.0 - t / req.max_delay) if t <= req.max_delay else 0.0
    sps_price = math.exp(svc.offer_price - req.bid_price) \
        if svc.offer_price <= req.bid_price else 0.0
    sps_reputation = svc.reputation

    rps_energy = (1.0 - e / svc.max_energy) if e <= svc.max_energy else 0.0
    rps_price = math.exp(-svc.offer_price / req.bid_price) \
        if req.bid_price >= svc.offer_price else 0.0
    rps_reputation = req.reputation

    active = abs(x) > ZERO_TOL
    phi = weights.service_pref
    psi = weights.requirement_pref
    sps = (phi[0] * sps_delay + phi[1] * sps_price + phi[2] * sps_reputation) if active else 0.0
    rps = (psi[0] * rps_energy + psi[1] * rps_price + psi[2] * rps_reputation) if active else 0.0

    return PairEvaluation(
        delay=t, energy=e,
        sps_delay=sps_delay, sps_price=sps_price, sps_reputation=sps_reputation,
        rps_energy=rps_energy, rps_price=rps_price, rps_reputation=rps_reputation,
        sps=sps, rps=rps,
    )


@dataclass(frozen=True)
class PairTables:
    """Vectorized per-pair quantities shared by scoring, matching, and metrics.

    ``unit_delay``/``unit_energy`` are the delay (s) and energy (J) incurred
    per unit of assigned proportion; the price/reputation score components do
    not depend on the proportion at all.
    """

    unit_delay: np.ndarray      # (m, n)
    unit_energy: np.ndarray     # (m, n)
    sps_price: np.ndarray       # (m, n)
    rps_price: np.ndarray       # (m, n)
    max_delay: np.ndarray       # (m,)
    max_energy: np.ndarray      # (n,)
    task_size: np.ndarray       # (m,)
    cpu_cycles: np.ndarray      # (m,)
    cache_size: np.ndarray      # (n,)
    requester_reputation: np.ndarray     # (m,)
    collaborator_reputation: np.ndarray  # (n,)


def pair_tables(instance: MarketInstance) -> PairTables:
    reqs, svcs = instance.requirements, instance.services
    s = np.array([r.task_size for r in reqs])
    q = np.array([r.cpu_cycles for r in reqs])
    tau = np.array([r.max_delay for r in reqs])
    bid = np.array([r.bid_price for r in reqs])
    rep_r = np.array([r.reputation for r in reqs])

    cache = np.array([c.cache_size for c in svcs])
    freq = np.array([c.cpu_freq for c in svcs])
    rate = np.array([c.tx_rate for c in svcs])
    eps = np.array([c.max_energy for c in svcs])
    e_tx = np.array([c.tx_energy_rate for c in svcs])
    e_exe = np.array([c.exe_energy_rate for c in svcs])
    offer = np.array([c.offer_price for c in svcs])
    rep_c = np.array([c.reputation for c in svcs])

    tx_time = s[:, None] / rate[None, :]
    exe_time = q[:, None] / freq[None, :]
    unit_delay = tx_time + exe_time
    unit_energy = e_tx[None, :] * tx_time + e_exe[None, :] * exe_time

    gap = offer[None, :] - bid[:, None]
    sps_price = np.where(gap <= 0, np.exp(np.minimum(gap, 0.0)), 0.0)
    ratio = np.divide(offer[None, :], bid[:, None])
    rps_price = np.where(gap <= 0, np.exp(-ratio), 0.0)

    return PairTables(
        unit_delay=unit_delay, unit_energy=unit_energy,
        sps_price=sps_price, rps_price=rps_price,
        max_delay=tau, max_energy=eps,
        task_size=s, cpu_cycles=q, cache_size=cache,
        requester_reputation=rep_r, collaborator_reputation=rep_c,
    )


def score_matrices(instance: MarketInstance, x: np.ndarray,
                   tables: PairTables | None = None) -> tuple[np.ndarray, np.ndarray]:
    """SPS and RPS for every pair at the proportions in ``x`` (m x n arrays)."""
    tb = tables if tables is not None else pair_tables(instance)
    phi = instance.config.weights.service_pref
    psi = instance.config.weights.requirement_pref

    t = x * tb.unit_delay
    e = x * tb.unit_energy
    sps_delay = np.where(t <= tb.max_delay[:, None], 1.0 - t / tb.max_delay[:, None], 0.0)
    rps_energy = np.where(e <= tb.max_energy[None, :], 1.0 - e / tb.max_energy[None, :], 0.0)

    active = np.abs(x) > ZERO_TOL
    sps = (phi[0] * sps_delay + phi[1] * tb.sps_price
           + phi[2] * tb.collaborator_reputation[None, :]) * active
    rps = (psi[0] * rps_energy + psi[1] * tb.rps_price
           + psi[2] * tb.requester_reputation[:, None]) * active
    return sps, rps


def satisfaction(instance: MarketInstance, match: MatchMatrix,
                 tables: PairTables | None = None) -> SatisfactionSummary:
    """ARS, ACS, and the weighted objective for a match matrix.

    An empty side contributes an average of 0 rather than dividing by zero.
    """
    x = match.values
    m, n = x.shape
    if (m, n) != (instance.m, instance.n):
        raise ValueError(f"match matrix is {m}x{n}, instance is {instance.m}x{instance.n}")
    w = instance.config.weights
    if m == 0 or n == 0:
        return SatisfactionSummary(0.0, 0.0, 0.0)

    sps, rps = score_matrices(instance, x, tables)
    ars = float((sps * x).sum() / m)
    acs = float((rps * x).sum() / n)
    return SatisfactionSummary(ars, acs, w.requester_weight * ars + w.collaborator_weight * acs)


def objective_batch(instance: MarketInstance, candidates: np.ndarray,
                    tables: PairTables | None = None) -> np.ndarray:
    """Objective value for a stack of candidate matrices, shape (k, m, n).

    Evaluates the indicator-bearing formulas directly (no quadratic
    expansion), so it can serve as an independent check of the optimizer.
    """
    tb = tables if tables is not None else pair_tables(instance)
    w = instance.config.weights
    phi, psi = w.service_pref, w.requirement_pref
    x = np.asarray(candidates, dtype=float)
    k, m, n = x.shape
    if m == 0 or n == 0:
        return np.zeros(k)

    t = x * tb.unit_delay[None, :, :]
    e = x * tb.unit_energy[None, :, :]
    sps_delay = np.where(t <= tb.max_delay[None, :, None], 1.0 - t / tb.max_delay[None, :, None], 0.0)
    rps_energy = np.where(e <= tb.max_energy[None, None, :], 1.0 - e / tb.max_energy[None, None, :], 0.0)
    active = np.abs(x) > ZERO_TOL
    sps = (phi[0] * sps_delay + phi[1] * tb.sps_price[None, :, :]
           + phi[2] * tb.collaborator_reputation[None, None, :]) * active
    rps = (psi[0] * rps_energy + psi[1] * tb.rps_price[None, :, :]
           + psi[2] * tb.requester_reputation[None, :, None]) * active

    ars = (sps * x).sum(axis=(1, 2)) / m
    acs = (rps * x).sum(axis=(1, 2)) / n
    return w.requester_weight * ars + w.collaborator_weight * acs
