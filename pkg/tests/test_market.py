import dataclasses

import pytest

from restrade.market import (EDGE_RANGES, TERMINAL_RANGES, MarketConfig,
                             ParticipantKind, _REQUIREMENT_FIELDS, _SERVICE_FIELDS,
                             config_from_dict, config_to_dict, edge_count,
                             filter_prices, generate_instance, instance_from_dict,
                             instance_to_dict)

from conftest import make_instance, make_requirement, make_service

DEFAULTS = MarketConfig()


def in_range(value, interval):
    lo, hi = interval
    return lo <= value <= hi


def test_generate_single_pair_fields_inside_table_ranges():
    inst = generate_instance(DEFAULTS, 1, 1, seed=42)
    req, svc = inst.requirements[0], inst.services[0]
    ranges = DEFAULTS.ranges_for(req.kind)
    assert in_range(req.bid_price, ranges.bid_price)
    for name in _REQUIREMENT_FIELDS:
        if name == "reputation":
            continue
        assert in_range(getattr(req, name), getattr(ranges, name)), name
    ranges = DEFAULTS.ranges_for(svc.kind)
    for name in _SERVICE_FIELDS:
        if name == "reputation":
            continue
        assert in_range(getattr(svc, name), getattr(ranges, name)), name


def test_generate_empty_instance():
    for seed in (0, 7, -3):
        inst = generate_instance(DEFAULTS, 0, 0, seed)
        assert inst.m == 0 and inst.n == 0


def test_generate_31_participants_has_one_edge_per_side():
    inst = generate_instance(DEFAULTS, 31, 31, seed=7)
    for side in (inst.requirements, inst.services):
        kinds = [p.kind for p in side]
        assert kinds.count(ParticipantKind.EDGE) == 1
        assert kinds.count(ParticipantKind.TERMINAL) == 30
        assert kinds[0] is ParticipantKind.EDGE  # deterministic assignment


@pytest.mark.parametrize("count,expected", [(0, 0), (1, 0), (15, 0), (16, 1),
                                            (30, 1), (31, 1), (62, 2), (93, 3)])
def test_edge_count_rounding(count, expected):
    assert edge_count(count, DEFAULTS.edge_ratio) == expected


def test_generate_is_deterministic():
    a = generate_instance(DEFAULTS, 12, 9, seed=123)
    b = generate_instance(DEFAULTS, 12, 9, seed=123)
    assert a == b
    c = generate_instance(DEFAULTS, 12, 9, seed=124)
    assert a != c


def test_generated_parameters_respect_ranges_across_seeds():
    for seed in range(5):
        inst = generate_instance(DEFAULTS, 40, 40, seed)
        for req in inst.requirements:
            ranges = DEFAULTS.ranges_for(req.kind)
            for name in _REQUIREMENT_FIELDS:
                if name == "reputation":
                    assert 0.4 <= req.reputation <= 1.0
                else:
                    assert in_range(getattr(req, name), getattr(ranges, name))
        for svc in inst.services:
            ranges = DEFAULTS.ranges_for(svc.kind)
            for name in _SERVICE_FIELDS:
                if name == "reputation":
                    assert 0.4 <= svc.reputation <= 1.0
                else:
                    assert in_range(getattr(svc, name), getattr(ranges, name))


def test_filter_prices_identity_when_inside_bounds():
    inst = make_instance([make_requirement()], [make_service()])
    assert filter_prices(inst) == inst


def test_filter_prices_removes_out_of_band_service():
    over = make_service(sid="c1", offer_price=DEFAULTS.price_max + 1)
    inst = make_instance([make_requirement()], [make_service(), over])
    filtered = filter_prices(inst)
    assert [s.id for s in filtered.services] == ["c0"]
    assert filtered.requirements == inst.requirements


def test_filter_prices_no_removals_on_generated_instance():
    inst = generate_instance(DEFAULTS, 25, 25, seed=3)
    assert filter_prices(inst) == inst


def test_filter_prices_is_idempotent():
    cheap = make_requirement(rid="r1", bid_price=0.05)
    inst = make_instance([make_requirement(), cheap], [make_service()])
    once = filter_prices(inst)
    assert filter_prices(once) == once
    assert [r.id for r in once.requirements] == ["r0"]


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        MarketConfig(price_min=0.0)
    with pytest.raises(ValueError):
        MarketConfig(price_min=5.0, price_max=1.0)
    with pytest.raises(ValueError):
        dataclasses.replace(DEFAULTS, rng="mt19937")


def test_invalid_submissions_rejected():
    with pytest.raises(ValueError):
        make_requirement(task_size=0.0)
    with pytest.raises(ValueError):
        make_service(reputation=1.5)
    with pytest.raises(ValueError):
        make_instance([make_requirement(), make_requirement()], [])


def test_kind_specific_ranges_differ():
    assert EDGE_RANGES.cache_size == (5.0, 10.0)
    assert TERMINAL_RANGES.cache_size == (1.0, 5.0)
    assert EDGE_RANGES.task_size == TERMINAL_RANGES.task_size


def test_config_json_round_trip():
    d = config_to_dict(DEFAULTS)
    assert config_from_dict(d) == DEFAULTS


def test_instance_json_round_trip():
    inst = generate_instance(DEFAULTS, 8, 5, seed=11)
    assert instance_from_dict(instance_to_dict(inst)) == inst
