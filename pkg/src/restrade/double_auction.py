"""Classical double-auction baseline: match by crossing prices only.

Requirements are sorted by ascending bid, services by descending offer; two
cursors walk the lists from the front.  While the current offer is at or
above the current bid the service cursor advances; once an offer drops
strictly below the bid the pair trades at the bid price and both cursors
advance.  Delay, energy, and reputation are never consulted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import MarketInstance
from .scoring import MatchMatrix


@dataclass(frozen=True)
class DaMatch:
    requirement_id: str
    service_id: str
    fraction: float  # proportion of the requirement's tasks assigned
    price: float     # $/Gcycle, always the requester's bid


def run_da(instance: MarketInstance) -> tuple[MatchMatrix, list[DaMatch]]:
    """Run the double auction and return the match matrix plus the trade list.

    Each side is matched at most once; the matched proportion is the largest
    the service's cache can hold, min(1, cache/task_size).  Ties in price
    keep submission order, so the result is deterministic per instance.
    """
    m, n = instance.m, instance.n
    x = np.zeros((m, n))
    matches: list[DaMatch] = []

    req_order = sorted(range(m), key=lambda i: instance.requirements[i].bid_price)
    svc_order = sorted(range(n), key=lambda j: -instance.services[j].offer_price)

    ri = si = 0
    while ri < len(req_order) and si < len(svc_order):
        req = instance.requirements[req_order[ri]]
        svc = instance.services[svc_order[si]]
        if svc.offer_price >= req.bid_price:
            si += 1
            continue
        fraction = min(1.0, svc.cache_size / req.task_size)
        if fraction > 0:
            x[req_order[ri], svc_order[si]] = fraction
            matches.append(DaMatch(req.id, svc.id, fraction, req.bid_price))
        ri += 1
        si += 1

    return MatchMatrix(x), matches
