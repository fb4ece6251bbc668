"""Computational-resource trading simulator.

Matches task requesters with compute collaborators either by maximizing a
multi-preference satisfaction objective or by a classical double auction,
settles trades with reputation-blended pricing, and records everything on
append-only hash-chained ledgers.
"""

from .double_auction import DaMatch, run_da
from .harness import (ExperimentConfig, PipelineConfig, Report, RoundMetrics,
                      compute_metrics, run_experiment, run_round)
from .ledger import Chain, IntegrityError, latest_reputation, reputation_history, verify_chain
from .market import (MarketConfig, MarketInstance, ParticipantKind, PreferenceWeights,
                     Requirement, ServiceOffer, filter_prices, generate_instance)
from .mpm import QpProblem, SolverConfig, build_qp, oracle_solve, pair_upper_bound, solve
from .scoring import (MatchMatrix, PairEvaluation, SatisfactionSummary, energy,
                      evaluate_pair, satisfaction, task_delay)
from .settlement import (FailureModel, Outcome, RejectionRule, TradeQuote,
                         TransactionRecord, apply_rejection, execute, trade_price,
                         update_reputation)

__version__ = "0.1.0"
