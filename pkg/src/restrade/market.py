"""Market domain types, seeded instance generation, and price admission.

A trading round pairs *requesters* (who submit a :class:`Requirement`
describing tasks to offload) with *collaborators* (who submit a
:class:`ServiceOffer` describing spare capacity).  Instances are generated
uniformly at random inside per-kind parameter ranges and are plain,
JSON-serializable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

# Raw reputation scores are drawn on a 0-100 scale and normalized to [0, 1]
# so the settlement rules can operate on them directly.
REPUTATION_SCALE = 100.0


class ParticipantKind(str, Enum):
    EDGE = "edge"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class Requirement:
    """A requester's submission: tasks to offload plus a bid."""

    id: str
    kind: ParticipantKind
    task_size: float        # GB
    cpu_cycles: float       # Gcycle
    max_delay: float        # s, longest acceptable completion time
    bid_price: float        # $/Gcycle, highest acceptable price
    reputation: float       # dimensionless, in [0, 1]

    def __post_init__(self):
        if self.task_size <= 0:
            raise ValueError(f"{self.id}: task_size must be > 0")
        if self.cpu_cycles <= 0:
            raise ValueError(f"{self.id}: cpu_cycles must be > 0")
        if self.max_delay <= 0:
            raise ValueError(f"{self.id}: max_delay must be > 0")
        if self.bid_price <= 0:
            raise ValueError(f"{self.id}: bid_price must be > 0")
        if not 0.0 <= self.reputation <= 1.0:
            raise ValueError(f"{self.id}: reputation must be in [0, 1]")


@dataclass(frozen=True)
class ServiceOffer:
    """A collaborator's submission: spare capacity plus an asking price."""

    id: str
    kind: ParticipantKind
    cache_size: float       # GB
    cpu_freq: float         # GHz
    tx_rate: float          # Gbps
    max_energy: float       # J, most the collaborator will spend per match
    tx_energy_rate: float   # J/s while receiving task data
    exe_energy_rate: float  # J/s while executing
    offer_price: float      # $/Gcycle, lowest acceptable price
    reputation: float       # dimensionless, in [0, 1]

    def __post_init__(self):
        if self.cache_size < 0:
            raise ValueError(f"{self.id}: cache_size must be >= 0")
        if self.cpu_freq <= 0:
            raise ValueError(f"{self.id}: cpu_freq must be > 0")
        if self.tx_rate <= 0:
            raise ValueError(f"{self.id}: tx_rate must be > 0")
        if self.max_energy <= 0:
            raise ValueError(f"{self.id}: max_energy must be > 0")
        if self.tx_energy_rate < 0 or self.exe_energy_rate < 0:
            raise ValueError(f"{self.id}: energy rates must be >= 0")
        if self.offer_price <= 0:
            raise ValueError(f"{self.id}: offer_price must be > 0")
        if not 0.0 <= self.reputation <= 1.0:
            raise ValueError(f"{self.id}: reputation must be in [0, 1]")


@dataclass(frozen=True)
class PreferenceWeights:
    """Significance factors for the satisfaction scores.

    ``service_pref`` weights a requester's view of a service as
    (delay, price, reputation); ``requirement_pref`` weights a
    collaborator's view of a requirement as (energy, price, reputation).
    Each triple must sum to 1, as must the two side weights.
    """

    service_pref: tuple[float, float, float] = (0.36, 0.28, 0.36)
    requirement_pref: tuple[float, float, float] = (0.36, 0.28, 0.36)
    requester_weight: float = 0.5
    collaborator_weight: float = 0.5

    def __post_init__(self):
        for name, triple in (("service_pref", self.service_pref),
                             ("requirement_pref", self.requirement_pref)):
            if len(triple) != 3 or any(w < 0 for w in triple):
                raise ValueError(f"{name} must be 3 nonnegative weights")
            if abs(sum(triple) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")
        if self.requester_weight < 0 or self.collaborator_weight < 0:
            raise ValueError("side weights must be nonnegative")
        if abs(self.requester_weight + self.collaborator_weight - 1.0) > 1e-9:
            raise ValueError("requester_weight + collaborator_weight must equal 1")


Range = tuple[float, float]

# (field, applies-to) rows of the sampling table; requirement and service
# parameters are drawn in this order, one participant at a time.
_REQUIREMENT_FIELDS = ("task_size", "cpu_cycles", "max_delay", "bid_price", "reputation")
_SERVICE_FIELDS = ("cache_size", "cpu_freq", "tx_rate", "max_energy",
                   "tx_energy_rate", "exe_energy_rate", "offer_price", "reputation")


@dataclass(frozen=True)
class KindRanges:
    """Sampling intervals for one participant kind."""

    task_size: Range = (0.06, 10.0)
    cpu_cycles: Range = (0.6, 90.0)
    max_delay: Range = (5.0, 15.0)
    bid_price: Range = (0.1, 10.0)
    cache_size: Range = (1.0, 5.0)
    cpu_freq: Range = (1.0, 5.0)
    tx_rate: Range = (0.1, 0.9)
    max_energy: Range = (5.0, 15.0)
    tx_energy_rate: Range = (0.1, 0.3)
    exe_energy_rate: Range = (0.3, 0.6)
    offer_price: Range = (0.1, 10.0)
    reputation: Range = (40.0, 100.0)

    def __post_init__(self):
        for name in (*_REQUIREMENT_FIELDS, *_SERVICE_FIELDS):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"range for {name} has lo > hi")


EDGE_RANGES = KindRanges(
    max_delay=(10.0, 30.0),
    cache_size=(5.0, 10.0),
    cpu_freq=(3.0, 15.0),
    tx_rate=(0.5, 2.5),
    max_energy=(150.0, 250.0),
    tx_energy_rate=(0.2, 0.5),
    exe_energy_rate=(0.75, 1.25),
)
TERMINAL_RANGES = KindRanges()


@dataclass(frozen=True)
class MarketConfig:
    """Market rules plus the sampling ranges used by :func:`generate_instance`.

    ``edge_ratio`` is the target number of edge servers per terminal device;
    ``rng`` names the PRNG algorithm so generated instances stay reproducible
    across builds.
    """

    price_min: float = 0.1
    price_max: float = 10.0
    weights: PreferenceWeights = field(default_factory=PreferenceWeights)
    edge_ranges: KindRanges = field(default_factory=lambda: EDGE_RANGES)
    terminal_ranges: KindRanges = field(default_factory=lambda: TERMINAL_RANGES)
    edge_ratio: float = 1.0 / 30.0
    rng: str = "pcg64"

    def __post_init__(self):
        if not 0 < self.price_min <= self.price_max:
            raise ValueError("require 0 < price_min <= price_max")
        if self.edge_ratio < 0:
            raise ValueError("edge_ratio must be >= 0")
        if self.rng != "pcg64":
            raise ValueError(f"unknown rng algorithm {self.rng!r}")

    def ranges_for(self, kind: ParticipantKind) -> KindRanges:
        return self.edge_ranges if kind is ParticipantKind.EDGE else self.terminal_ranges


@dataclass(frozen=True)
class MarketInstance:
    """One round's submissions: ``m`` requirements and ``n`` services."""

    requirements: tuple[Requirement, ...]
    services: tuple[ServiceOffer, ...]
    config: MarketConfig

    def __post_init__(self):
        req_ids = [r.id for r in self.requirements]
        svc_ids = [s.id for s in self.services]
        if len(set(req_ids)) != len(req_ids):
            raise ValueError("duplicate requirement ids")
        if len(set(svc_ids)) != len(svc_ids):
            raise ValueError("duplicate service ids")

    @property
    def m(self) -> int:
        return len(self.requirements)

    @property
    def n(self) -> int:
        return len(self.services)


def edge_count(count: int, edge_ratio: float) -> int:
    """Number of edge participants among ``count``, per the configured ratio.

    Uses round(count * fraction) where fraction = ratio / (1 + ratio), with a
    floor of one edge once the fraction of the population reaches a whole
    edge.  Assignment is deterministic: the first ``edge_count`` participants
    on each side are edges.
    """
    if count <= 0 or edge_ratio == 0:
        return 0
    fraction = edge_ratio / (1.0 + edge_ratio)
    k = round(count * fraction)
    if k == 0 and count * fraction >= 1.0:
        k = 1
    return min(count, k)


def _draw(rng: np.random.Generator, interval: Range) -> float:
    lo, hi = interval
    return float(rng.uniform(lo, hi))


def normalize_seed(seed: int) -> int:
    """Map any integer seed onto the PRNG's nonnegative domain, injectively
    for all practical magnitudes."""
    return seed % (1 << 128)


def generate_instance(config: MarketConfig, m: int, n: int, seed: int) -> MarketInstance:
    """Draw a market instance uniformly at random inside the configured ranges.

    Pure function of (config, m, n, seed): repeated calls are bit-identical.
    Raw reputation draws are divided by 100 so scores land in [0.4, 1.0].
    """
    if m < 0 or n < 0:
        raise ValueError("participant counts must be >= 0")
    rng = np.random.Generator(np.random.PCG64(normalize_seed(seed)))

    def kind_of(index: int, count: int) -> ParticipantKind:
        return ParticipantKind.EDGE if index < edge_count(count, config.edge_ratio) \
            else ParticipantKind.TERMINAL

    requirements = []
    for i in range(m):
        kind = kind_of(i, m)
        ranges = config.ranges_for(kind)
        values = {name: _draw(rng, getattr(ranges, name)) for name in _REQUIREMENT_FIELDS}
        values["reputation"] /= REPUTATION_SCALE
        requirements.append(Requirement(id=f"r{i}", kind=kind, **values))

    services = []
    for j in range(n):
        kind = kind_of(j, n)
        ranges = config.ranges_for(kind)
        values = {name: _draw(rng, getattr(ranges, name)) for name in _SERVICE_FIELDS}
        values["reputation"] /= REPUTATION_SCALE
        services.append(ServiceOffer(id=f"c{j}", kind=kind, **values))

    return MarketInstance(tuple(requirements), tuple(services), config)


def filter_prices(instance: MarketInstance) -> MarketInstance:
    """Drop submissions whose price falls outside the allowed band.

    Keeps requirements with price_min <= bid <= price_max and services with
    price_min <= offer <= price_max, preserving submission order.  Idempotent.
    """
    lo, hi = instance.config.price_min, instance.config.price_max
    return replace(
        instance,
        requirements=tuple(r for r in instance.requirements if lo <= r.bid_price <= hi),
        services=tuple(s for s in instance.services if lo <= s.offer_price <= hi),
    )


# --- JSON wire format -------------------------------------------------------
#
# Stable field names, arrays in submission order.  This is the on-disk
# instance format consumed by the CLI.

def weights_to_dict(w: PreferenceWeights) -> dict:
    return {
        "service_pref": list(w.service_pref),
        "requirement_pref": list(w.requirement_pref),
        "requester_weight": w.requester_weight,
        "collaborator_weight": w.collaborator_weight,
    }


def weights_from_dict(d: dict) -> PreferenceWeights:
    return PreferenceWeights(
        service_pref=tuple(d["service_pref"]),
        requirement_pref=tuple(d["requirement_pref"]),
        requester_weight=d["requester_weight"],
        collaborator_weight=d["collaborator_weight"],
    )


def _ranges_to_dict(r: KindRanges) -> dict:
    return {name: list(getattr(r, name)) for name in sorted({*_REQUIREMENT_FIELDS, *_SERVICE_FIELDS})}


def _ranges_from_dict(d: dict) -> KindRanges:
    return KindRanges(**{name: tuple(v) for name, v in d.items()})


def config_to_dict(config: MarketConfig) -> dict:
    return {
        "price_min": config.price_min,
        "price_max": config.price_max,
        "weights": weights_to_dict(config.weights),
        "edge_ranges": _ranges_to_dict(config.edge_ranges),
        "terminal_ranges": _ranges_to_dict(config.terminal_ranges),
        "edge_ratio": config.edge_ratio,
        "rng": config.rng,
    }


def config_from_dict(d: dict) -> MarketConfig:
    return MarketConfig(
        price_min=d["price_min"],
        price_max=d["price_max"],
        weights=weights_from_dict(d["weights"]),
        edge_ranges=_ranges_from_dict(d["edge_ranges"]),
        terminal_ranges=_ranges_from_dict(d["terminal_ranges"]),
        edge_ratio=d["edge_ratio"],
        rng=d["rng"],
    )


def _requirement_to_dict(r: Requirement) -> dict:
    return {
        "id": r.id, "kind": r.kind.value, "task_size": r.task_size,
        "cpu_cycles": r.cpu_cycles, "max_delay": r.max_delay,
        "bid_price": r.bid_price, "reputation": r.reputation,
    }


def _service_to_dict(s: ServiceOffer) -> dict:
    return {
        "id": s.id, "kind": s.kind.value, "cache_size": s.cache_size,
        "cpu_freq": s.cpu_freq, "tx_rate": s.tx_rate, "max_energy": s.max_energy,
        "tx_energy_rate": s.tx_energy_rate, "exe_energy_rate": s.exe_energy_rate,
        "offer_price": s.offer_price, "reputation": s.reputation,
    }


def instance_to_dict(instance: MarketInstance) -> dict:
    return {
        "config": config_to_dict(instance.config),
        "requirements": [_requirement_to_dict(r) for r in instance.requirements],
        "services": [_service_to_dict(s) for s in instance.services],
    }


def instance_from_dict(d: dict) -> MarketInstance:
    return MarketInstance(
        requirements=tuple(
            Requirement(kind=ParticipantKind(r.pop("kind")), **r)
            for r in (dict(r) for r in d["requirements"])
        ),
        services=tuple(
            ServiceOffer(kind=ParticipantKind(s.pop("kind")), **s)
            for s in (dict(s) for s in d["services"])
        ),
        config=config_from_dict(d["config"]),
    )
