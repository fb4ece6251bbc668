import pytest

from restrade.market import (MarketConfig, MarketInstance, ParticipantKind,
                             Requirement, ServiceOffer)


def make_requirement(rid="r0", **overrides):
    fields = dict(kind=ParticipantKind.TERMINAL, task_size=1.0, cpu_cycles=10.0,
                  max_delay=8.0, bid_price=5.0, reputation=0.8)
    fields.update(overrides)
    return Requirement(id=rid, **fields)


def make_service(sid="c0", **overrides):
    fields = dict(kind=ParticipantKind.TERMINAL, cache_size=3.0, cpu_freq=5.0,
                  tx_rate=0.5, max_energy=10.0, tx_energy_rate=0.2,
                  exe_energy_rate=1.0, offer_price=3.0, reputation=0.9)
    fields.update(overrides)
    return ServiceOffer(id=sid, **fields)


def make_instance(requirements, services, config=None):
    return MarketInstance(tuple(requirements), tuple(services),
                          config or MarketConfig())


@pytest.fixture
def single_pair():
    return make_instance([make_requirement()], [make_service()])
