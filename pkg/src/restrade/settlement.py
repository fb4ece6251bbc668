"""Post-matching pipeline: rejection, reputation-blended pricing, execution.

Matched pairs whose satisfaction scores fall below a participant's threshold
are voided.  Surviving pairs trade at a price blending bid and offer by
relative reputation, execute under a simple two-sided failure model, and
feed the reputation update rules.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .market import MarketInstance, Requirement, ServiceOffer, normalize_seed
from .scoring import MatchMatrix, ZERO_TOL, score_matrices

INITIAL_REPUTATION = 0.6
SUCCESS_REWARD = 0.01
FAILURE_PENALTY = 0.1


@dataclass(frozen=True)
class RejectionRule:
    """Lowest acceptable satisfaction scores; pairs strictly below are voided."""

    min_sps: float = 0.5
    min_rps: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.min_sps <= 1.0 and 0.0 <= self.min_rps <= 1.0):
            raise ValueError("rejection thresholds must lie in [0, 1]")


@dataclass(frozen=True)
class TradeQuote:
    """Reputation-weighted price for one pair.

    ``blend`` is the collaborator's reputation share; the price sits between
    offer and bid, closer to the lower-reputation party's submission.
    ``degenerate`` marks the symmetric fallback used when both reputations
    are zero.
    """

    blend: float
    price: float
    degenerate: bool = False


class Outcome(enum.Enum):
    SUCCESS = "success"
    REQUESTER_PAYMENT_FAILURE = "requester_payment_failure"
    COLLABORATOR_SERVICE_FAILURE = "collaborator_service_failure"


@dataclass(frozen=True)
class TransactionRecord:
    requirement_id: str
    service_id: str
    fraction: float
    price: float       # $/Gcycle
    cost: float        # $, price * fraction * cpu_cycles
    outcome: Outcome | None = None

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("cost must be >= 0")


@dataclass(frozen=True)
class FailureModel:
    p_requester_fail: float = 0.0
    p_collaborator_fail: float = 0.0

    def __post_init__(self):
        for p in (self.p_requester_fail, self.p_collaborator_fail):
            if not 0.0 <= p <= 1.0:
                raise ValueError("failure probabilities must lie in [0, 1]")


def apply_rejection(instance: MarketInstance, match: MatchMatrix,
                    rule: RejectionRule) -> MatchMatrix:
    """Zero out matched pairs whose SPS or RPS falls below the thresholds.

    Comparison is strict, so pairs sitting exactly at a threshold survive.
    Entries are only ever cleared, never increased.
    """
    x = match.values
    if x.size == 0:
        return match
    sps, rps = score_matrices(instance, x)
    active = np.abs(x) > ZERO_TOL
    rejected = active & ((sps < rule.min_sps) | (rps < rule.min_rps))
    if not rejected.any():
        return match
    return MatchMatrix(np.where(rejected, 0.0, x))


def trade_price(req: Requirement, svc: ServiceOffer) -> TradeQuote:
    """Blend bid and offer by relative reputation.

    The collaborator's reputation share weights the bid, so the price lands
    nearer the lower-reputation party's submission.  Both reputations zero
    is degenerate; the quote falls back to an even split and is flagged.
    """
    total = req.reputation + svc.reputation
    if total <= 0.0:
        return TradeQuote(blend=0.5, price=0.5 * (req.bid_price + svc.offer_price),
                          degenerate=True)
    blend = svc.reputation / total
    return TradeQuote(blend=blend, price=blend * req.bid_price + (1.0 - blend) * svc.offer_price)


def execute(records: list[TransactionRecord], model: FailureModel,
            seed) -> list[TransactionRecord]:
    """Draw an outcome for each pending transaction, deterministically per seed.

    The requester side fails first with its probability; otherwise the
    collaborator side fails with its probability; otherwise the transaction
    succeeds.
    """
    if isinstance(seed, int):
        seed = normalize_seed(seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.random((len(records), 2))
    executed = []
    for record, (u_req, u_col) in zip(records, draws):
        if u_req < model.p_requester_fail:
            outcome = Outcome.REQUESTER_PAYMENT_FAILURE
        elif u_col < model.p_collaborator_fail:
            outcome = Outcome.COLLABORATOR_SERVICE_FAILURE
        else:
            outcome = Outcome.SUCCESS
        executed.append(replace(record, outcome=outcome))
    return executed


def update_reputation(current: float, role: str, outcome: Outcome) -> float:
    """Apply one transaction outcome to one party's reputation score.

    Success rewards both parties; a failure penalizes only the failing
    party's side and leaves the counterparty untouched.  Results clamp to
    [0, 1]; new participants start at INITIAL_REPUTATION.
    """
    if role not in ("requester", "collaborator"):
        raise ValueError(f"unknown role {role!r}")
    if outcome is Outcome.SUCCESS:
        new = current + SUCCESS_REWARD
    elif outcome is Outcome.REQUESTER_PAYMENT_FAILURE:
        new = current - FAILURE_PENALTY if role == "requester" else current
    else:
        new = current - FAILURE_PENALTY if role == "collaborator" else current
    return min(1.0, max(0.0, new))
