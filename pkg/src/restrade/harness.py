"""Seeded end-to-end rounds and experiments comparing the two mechanisms.

One round runs the full pipeline: price admission, matching, rejection,
reputation-blended pricing, execution, and ledger updates.  An experiment
sweeps market sizes and seeds, feeding byte-identical instances to every
mechanism, and aggregates per-round metrics into a report.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ledger
from .double_auction import run_da
from .market import (MarketConfig, MarketInstance, config_from_dict, config_to_dict,
                     filter_prices, generate_instance, normalize_seed)
from .mpm import SolverConfig, solve
from .scoring import MatchMatrix, ZERO_TOL, pair_tables, satisfaction
from .settlement import (FailureModel, Outcome, RejectionRule, TransactionRecord,
                         apply_rejection, execute, trade_price, update_reputation)

MECHANISMS = ("mpm", "da")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a round needs besides the instance itself."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    rejection: RejectionRule = field(default_factory=RejectionRule)
    failure: FailureModel = field(default_factory=lambda: FailureModel(0.05, 0.05))
    apply_rejection_to_da: bool = False


@dataclass
class ChainSet:
    """The three ledgers a trading system maintains, plus a score cache.

    The cache mirrors what replaying each participant's updates would yield;
    chains stay the source of truth and are what tests verify against.
    """

    transactions: ledger.Chain
    requester_reputation: ledger.Chain
    collaborator_reputation: ledger.Chain
    _scores: dict[tuple[str, str], float] = field(default_factory=dict)

    @classmethod
    def fresh(cls, clock=None) -> "ChainSet":
        if clock is None:
            clock = _counter_clock()
        return cls(ledger.Chain(clock), ledger.Chain(clock), ledger.Chain(clock))

    def score(self, role: str, participant_id: str) -> float:
        return self._scores.get((role, participant_id), ledger.INITIAL_REPUTATION)

    def record_update(self, role: str, participant_id: str, new_score: float) -> None:
        self._scores[(role, participant_id)] = new_score


def _counter_clock():
    """Deterministic millisecond clock: 1, 2, 3, ... per append."""
    counter = iter(range(1, 2**62))
    return lambda: next(counter)


@dataclass(frozen=True)
class QuotedPair:
    row: int
    col: int
    requirement_id: str
    service_id: str
    price: float


@dataclass(frozen=True)
class RoundMetrics:
    mechanism: str
    m: int
    n: int
    ars: float
    acs: float
    objective: float
    rejection_rate: float      # rejected matched pairs / matched pairs
    total_task_size: float     # GB actually assigned
    max_delay: float           # s, worst delay among matched pairs
    cpu_cycles: float          # Gcycle consumed by collaborators
    cache_used: float          # GB of collaborator cache occupied
    energy: float              # J spent by collaborators
    avg_trade_price: float     # $/Gcycle, unweighted over matched pairs
    cost_slope: float | None   # OLS slope of per-requester avg cost vs reputation
    income_slope: float | None # OLS slope of per-collaborator avg income vs reputation
    wall_time: float           # s spent in the match step only
    converged: bool


@dataclass(frozen=True)
class RoundResult:
    metrics: RoundMetrics
    match: MatchMatrix
    quotes: tuple[QuotedPair, ...]
    records: tuple[TransactionRecord, ...]
    converged: bool


def ols_slope(xs, ys) -> float | None:
    """Least-squares slope, or None with fewer than two usable points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        return None
    dx = xs - xs.mean()
    denom = (dx * dx).sum()
    if denom == 0.0:
        return None
    return float((dx * (ys - ys.mean())).sum() / denom)


def compute_metrics(instance: MarketInstance, match: MatchMatrix,
                    quotes: tuple[QuotedPair, ...], *, mechanism: str,
                    matched_pairs: int, rejected_pairs: int = 0,
                    wall_time: float = 0.0, converged: bool = True) -> RoundMetrics:
    """Roll one round's outputs into the reported quantities.

    Each pair costs the requester price * fraction * cpu_cycles, earned by
    the collaborator; the slopes regress each active participant's round
    total on their reputation.
    """
    x = match.values
    tb = pair_tables(instance)
    summary = satisfaction(instance, match, tb)
    active = x > ZERO_TOL

    delays = x * tb.unit_delay
    max_delay = float(delays[active].max()) if active.any() else 0.0
    total_task = float((x * tb.task_size[:, None]).sum())

    prices = [q.price for q in quotes]
    avg_price = float(np.mean(prices)) if prices else 0.0

    req_costs: dict[int, float] = {}
    svc_incomes: dict[int, float] = {}
    for q in quotes:
        amount = q.price * x[q.row, q.col] * tb.cpu_cycles[q.row]
        req_costs[q.row] = req_costs.get(q.row, 0.0) + amount
        svc_incomes[q.col] = svc_incomes.get(q.col, 0.0) + amount
    cost_slope = ols_slope(
        [tb.requester_reputation[i] for i in req_costs],
        list(req_costs.values()),
    )
    income_slope = ols_slope(
        [tb.collaborator_reputation[j] for j in svc_incomes],
        list(svc_incomes.values()),
    )

    return RoundMetrics(
        mechanism=mechanism, m=instance.m, n=instance.n,
        ars=summary.ars, acs=summary.acs, objective=summary.objective,
        rejection_rate=(rejected_pairs / matched_pairs) if matched_pairs else 0.0,
        total_task_size=total_task,
        max_delay=max_delay,
        cpu_cycles=float((x * tb.cpu_cycles[:, None]).sum()),
        cache_used=total_task,
        energy=float((x * tb.unit_energy).sum()),
        avg_trade_price=avg_price,
        cost_slope=cost_slope, income_slope=income_slope,
        wall_time=wall_time, converged=converged,
    )


def run_round(instance: MarketInstance, mechanism: str, pipeline: PipelineConfig,
              seed: int, chains: ChainSet | None = None,
              scope: str = "") -> RoundResult:
    """Run one full trading round deterministically for the given seed.

    Pipeline: price filter, match, rejection (multi-preference matching only,
    unless enabled for the auction), reputation-blended pricing (auction
    trades stay at the bid), execution, ledger updates.  ``scope`` prefixes
    participant ids on the chains so rounds stay distinguishable.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    filtered = filter_prices(instance)

    start = time.perf_counter()
    if mechanism == "mpm":
        result = solve(filtered, pipeline.solver)
        raw, converged = result.match, result.converged
    else:
        raw, _ = run_da(filtered)
        converged = True
    wall_time = time.perf_counter() - start

    matched_pairs = int((raw.values > ZERO_TOL).sum())
    if mechanism == "mpm" or pipeline.apply_rejection_to_da:
        final = apply_rejection(filtered, raw, pipeline.rejection)
        rejected = matched_pairs - int((final.values > ZERO_TOL).sum())
    else:
        final, rejected = raw, 0

    quotes = []
    records = []
    for i, j in zip(*np.nonzero(final.values > ZERO_TOL)):
        req = filtered.requirements[i]
        svc = filtered.services[j]
        price = trade_price(req, svc).price if mechanism == "mpm" else req.bid_price
        fraction = float(final.values[i, j])
        quotes.append(QuotedPair(int(i), int(j), req.id, svc.id, price))
        records.append(TransactionRecord(
            requirement_id=req.id, service_id=svc.id, fraction=fraction,
            price=price, cost=price * fraction * req.cpu_cycles,
        ))
    records = execute(records, pipeline.failure,
                      np.random.SeedSequence((normalize_seed(seed), 1)))

    if chains is not None:
        _append_round(chains, records, mechanism, instance, seed, scope)

    metrics = compute_metrics(
        filtered, final, tuple(quotes), mechanism=mechanism,
        matched_pairs=matched_pairs, rejected_pairs=rejected,
        wall_time=wall_time, converged=converged,
    )
    return RoundResult(metrics, final, tuple(quotes), tuple(records), converged)


def _record_to_dict(record: TransactionRecord) -> dict:
    return {
        "requirement": record.requirement_id,
        "service": record.service_id,
        "fraction": record.fraction,
        "price": record.price,
        "cost": record.cost,
        "outcome": record.outcome.value if record.outcome else None,
    }


def _append_round(chains: ChainSet, records: list[TransactionRecord],
                  mechanism: str, instance: MarketInstance, seed: int,
                  scope: str) -> None:
    chains.transactions.append({
        "kind": "transaction_batch",
        "mechanism": mechanism,
        "m": instance.m, "n": instance.n, "seed": seed,
        "transactions": [_record_to_dict(r) for r in records],
    })
    for k, record in enumerate(records):
        transaction_id = f"{scope}{mechanism}/t{k}"
        for role, chain, participant in (
            ("requester", chains.requester_reputation, scope + record.requirement_id),
            ("collaborator", chains.collaborator_reputation, scope + record.service_id),
        ):
            old = chains.score(role, participant)
            new = update_reputation(old, role, record.outcome)
            chain.append(ledger.reputation_update_payload(
                participant, role, old, new, transaction_id, record.outcome.value))
            chains.record_update(role, participant, new)


@dataclass(frozen=True)
class ExperimentConfig:
    sizes: tuple[tuple[int, int], ...] = ((30, 30), (60, 60), (90, 90))
    seeds: tuple[int, ...] = tuple(range(1, 11))
    market: MarketConfig = field(default_factory=MarketConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    mechanisms: tuple[str, ...] = MECHANISMS

    def __post_init__(self):
        if not self.sizes or not self.seeds:
            raise ValueError("sizes and seeds must be nonempty")
        for mech in self.mechanisms:
            if mech not in MECHANISMS:
                raise ValueError(f"unknown mechanism {mech!r}")


@dataclass(frozen=True)
class RoundRow:
    seed: int
    metrics: RoundMetrics


@dataclass(frozen=True)
class MeanRow:
    """Cross-seed means for one (size, mechanism) cell.

    Slope means cover only rounds where the slope existed; ``converged`` is
    the fraction of converged rounds.
    """

    mechanism: str
    m: int
    n: int
    seeds: int
    ars: float
    acs: float
    objective: float
    rejection_rate: float
    total_task_size: float
    max_delay: float
    cpu_cycles: float
    cache_used: float
    energy: float
    avg_trade_price: float
    cost_slope: float | None
    income_slope: float | None
    wall_time: float
    converged: float


@dataclass(frozen=True)
class Report:
    rows: tuple[RoundRow, ...]
    means: tuple[MeanRow, ...]


def run_experiment(cfg: ExperimentConfig, chains: ChainSet | None = None) -> Report:
    """Sweep sizes, seeds, and mechanisms; mechanisms see identical instances.

    Fully determined by the config and seeds (wall times aside).
    """
    if chains is None:
        chains = ChainSet.fresh()
    rows: list[RoundRow] = []
    for m, n in cfg.sizes:
        for seed in cfg.seeds:
            instance = generate_instance(cfg.market, m, n, seed)
            for mechanism in cfg.mechanisms:
                scope = f"{m}x{n}/s{seed}/"
                result = run_round(instance, mechanism, cfg.pipeline, seed, chains, scope)
                rows.append(RoundRow(seed, result.metrics))
    return Report(tuple(rows), tuple(_means(cfg, rows)))


def _mean_or_none(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _means(cfg: ExperimentConfig, rows: list[RoundRow]) -> list[MeanRow]:
    means = []
    for m, n in cfg.sizes:
        for mechanism in cfg.mechanisms:
            cell = [r.metrics for r in rows
                    if r.metrics.mechanism == mechanism and (r.metrics.m, r.metrics.n) == (m, n)]
            if not cell:
                continue
            mean = lambda name: float(np.mean([getattr(x, name) for x in cell]))
            means.append(MeanRow(
                mechanism=mechanism, m=m, n=n, seeds=len(cell),
                ars=mean("ars"), acs=mean("acs"), objective=mean("objective"),
                rejection_rate=mean("rejection_rate"),
                total_task_size=mean("total_task_size"), max_delay=mean("max_delay"),
                cpu_cycles=mean("cpu_cycles"), cache_used=mean("cache_used"),
                energy=mean("energy"), avg_trade_price=mean("avg_trade_price"),
                cost_slope=_mean_or_none([x.cost_slope for x in cell]),
                income_slope=_mean_or_none([x.income_slope for x in cell]),
                wall_time=mean("wall_time"),
                converged=float(np.mean([1.0 if x.converged else 0.0 for x in cell])),
            ))
    return means


# --- report emission ---------------------------------------------------------

ROUND_COLUMNS = (
    "mechanism", "m", "n", "seed", "ars", "acs", "objective", "rejection_rate",
    "total_task_size", "max_delay", "cpu_cycles", "cache_used", "energy",
    "avg_trade_price", "cost_slope", "income_slope", "wall_time", "converged",
)
MEAN_COLUMNS = (
    "mechanism", "m", "n", "seeds", "ars", "acs", "objective", "rejection_rate",
    "total_task_size", "max_delay", "cpu_cycles", "cache_used", "energy",
    "avg_trade_price", "cost_slope", "income_slope", "wall_time", "converged",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _round_row_values(row: RoundRow) -> list:
    metrics = row.metrics
    values = []
    for column in ROUND_COLUMNS:
        values.append(row.seed if column == "seed" else getattr(metrics, column))
    return values


def rounds_csv(report: Report) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ROUND_COLUMNS)
    for row in report.rows:
        writer.writerow([_cell(v) for v in _round_row_values(row)])
    return out.getvalue()


def means_csv(report: Report) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MEAN_COLUMNS)
    for mean in report.means:
        writer.writerow([_cell(getattr(mean, column)) for column in MEAN_COLUMNS])
    return out.getvalue()


def report_to_dict(report: Report) -> dict:
    return {
        "rows": [dict(zip(ROUND_COLUMNS, _round_row_values(r))) for r in report.rows],
        "means": [{c: getattr(m, c) for c in MEAN_COLUMNS} for m in report.means],
    }


def report_from_dict(d: dict) -> Report:
    rows = []
    for row in d["rows"]:
        seed = row["seed"]
        metrics = {k: v for k, v in row.items() if k != "seed"}
        rows.append(RoundRow(seed, RoundMetrics(**metrics)))
    means = tuple(MeanRow(**m) for m in d["means"])
    return Report(tuple(rows), means)


def parse_rounds_csv(text: str) -> Report:
    """Re-parse a rounds CSV into a report (means absent)."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for record in reader:
        kwargs = {}
        for column in ROUND_COLUMNS:
            raw = record[column]
            if column == "mechanism":
                kwargs[column] = raw
            elif column in ("m", "n", "seed"):
                kwargs[column] = int(raw)
            elif column == "converged":
                kwargs[column] = raw == "true"
            elif column in ("cost_slope", "income_slope"):
                kwargs[column] = float(raw) if raw else None
            else:
                kwargs[column] = float(raw)
        seed = kwargs.pop("seed")
        rows.append(RoundRow(seed, RoundMetrics(**kwargs)))
    return Report(tuple(rows), ())


def emit_report(report: Report, path, fmt: str = "csv") -> None:
    """Write the per-round report; CSV is the contract, JSON mirrors it."""
    if fmt == "csv":
        payload = rounds_csv(report)
    elif fmt == "json":
        payload = json.dumps(report_to_dict(report), indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def emit_means(report: Report, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(means_csv(report))


# --- experiment config wire format -------------------------------------------

def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "sizes": [list(size) for size in cfg.sizes],
        "seeds": list(cfg.seeds),
        "market": config_to_dict(cfg.market),
        "solver": {
            "max_iterations": cfg.pipeline.solver.max_iterations,
            "tolerance": cfg.pipeline.solver.tolerance,
            "oracle_grid_steps": cfg.pipeline.solver.oracle_grid_steps,
        },
        "rejection": {
            "min_sps": cfg.pipeline.rejection.min_sps,
            "min_rps": cfg.pipeline.rejection.min_rps,
        },
        "failure": {
            "p_requester_fail": cfg.pipeline.failure.p_requester_fail,
            "p_collaborator_fail": cfg.pipeline.failure.p_collaborator_fail,
        },
        "mechanisms": list(cfg.mechanisms),
        "apply_rejection_to_da": cfg.pipeline.apply_rejection_to_da,
    }


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    defaults = ExperimentConfig()
    pipeline = PipelineConfig(
        solver=SolverConfig(**d["solver"]) if "solver" in d else SolverConfig(),
        rejection=RejectionRule(**d["rejection"]) if "rejection" in d else RejectionRule(),
        failure=FailureModel(**d["failure"]) if "failure" in d else PipelineConfig().failure,
        apply_rejection_to_da=d.get("apply_rejection_to_da", False),
    )
    return ExperimentConfig(
        sizes=tuple(tuple(size) for size in d.get("sizes", defaults.sizes)),
        seeds=tuple(d.get("seeds", defaults.seeds)),
        market=config_from_dict(d["market"]) if "market" in d else MarketConfig(),
        pipeline=pipeline,
        mechanisms=tuple(d.get("mechanisms", defaults.mechanisms)),
    )
