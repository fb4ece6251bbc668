"""Command-line front end: generate instances, run rounds and experiments,
verify chain files, and re-emit reports.

Exit codes: 0 success, 1 validation error, 2 ledger integrity failure,
3 solver non-convergence when --strict is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, ledger
from .market import (MarketConfig, config_from_dict, generate_instance,
                     instance_from_dict, instance_to_dict)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INTEGRITY = 2
EXIT_NO_CONVERGENCE = 3


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_generate(args) -> int:
    config = MarketConfig() if args.config is None \
        else config_from_dict(_load_json(args.config))
    instance = generate_instance(config, args.m, args.n, args.seed)
    doc = json.dumps(instance_to_dict(instance), indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(doc)
    else:
        Path(args.out).write_text(doc, encoding="utf-8")
    return EXIT_OK


def _cmd_match(args) -> int:
    instance = instance_from_dict(_load_json(args.instance))
    pipeline = harness.PipelineConfig()
    result = harness.run_round(instance, args.mechanism, pipeline, args.seed)
    if args.strict and not result.converged:
        print("solver did not converge", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    doc = {
        "mechanism": args.mechanism,
        "seed": args.seed,
        "match": [[float(v) for v in row] for row in result.match.values],
        "transactions": [harness._record_to_dict(r) for r in result.records],
        "metrics": {c: getattr(result.metrics, c) for c in harness.ROUND_COLUMNS
                    if c != "seed"},
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = harness.ExperimentConfig() if args.config is None \
        else harness.experiment_config_from_dict(_load_json(args.config))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    chains = harness.ChainSet.fresh()
    report = harness.run_experiment(cfg, chains)

    harness.emit_report(report, out_dir / "rounds.csv", "csv")
    harness.emit_means(report, out_dir / "means.csv")
    harness.emit_report(report, out_dir / "report.json", "json")
    ledger.save_chain(chains.transactions, out_dir / "transactions.chain")
    ledger.save_chain(chains.requester_reputation, out_dir / "requester_reputation.chain")
    ledger.save_chain(chains.collaborator_reputation, out_dir / "collaborator_reputation.chain")

    if args.strict and any(not row.metrics.converged for row in report.rows):
        print("at least one solver round did not converge", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"wrote {len(report.rows)} rounds to {out_dir}")
    return EXIT_OK


def _cmd_verify_chain(args) -> int:
    chain = ledger.load_chain(args.file)
    result = ledger.verify_chain(chain)
    if result.ok:
        print(f"{args.file}: ok ({len(chain)} blocks)")
        return EXIT_OK
    print(f"{args.file}: integrity failure at block {result.bad_index}")
    return EXIT_INTEGRITY


def _cmd_report(args) -> int:
    report = harness.report_from_dict(_load_json(args.input))
    harness.emit_report(report, args.out, args.format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restrade",
        description="Computational-resource trading simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a market instance JSON")
    p.add_argument("--m", type=int, required=True, help="number of requirements")
    p.add_argument("--n", type=int, required=True, help="number of services")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="market config JSON (defaults used if omitted)")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("match", help="run one trading round on an instance")
    p.add_argument("--instance", required=True, help="instance JSON path")
    p.add_argument("--mechanism", choices=harness.MECHANISMS, required=True)
    p.add_argument("--seed", type=int, default=0, help="execution seed")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 if the solver does not converge")
    p.set_defaults(fn=_cmd_match)

    p = sub.add_parser("experiment", help="run a seeded experiment sweep")
    p.add_argument("--config", help="experiment config JSON (defaults if omitted)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--strict", action="store_true",
                   help="exit 3 if any solver round does not converge")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("verify-chain", help="verify a chain file")
    p.add_argument("--file", required=True)
    p.set_defaults(fn=_cmd_verify_chain)

    p = sub.add_parser("report", help="re-emit a saved report")
    p.add_argument("--input", required=True, help="report JSON path")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ledger.IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
