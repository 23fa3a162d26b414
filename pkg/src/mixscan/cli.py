"""
mixscan command line.

    mixscan simulate --out blocks.jsonl --truth truth.json [--config scenario.conf] [--seed N]
    mixscan scan --ledger blocks.jsonl --report report.json [--params params.conf] [--strict]
    mixscan evaluate --report report.json --truth truth.json [--out metrics.json]
    mixscan explain --ledger blocks.jsonl --tx TXID [--params params.conf]

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .chain import build_chain, chain_time_median
from .cluster import build_clusters, propagate_labels
from .detector import accept_chain, run_detection
from .errors import IngestError, MalformedRecord, MixscanError, ParamsError, ScenarioInfeasible, UnresolvableInput
from .evaluate import evaluate
from .ledger import LedgerBuilder, Ledger, read_block_file
from .mixsim import generate, scenario_from_dict
from .params import load_params, parse_kv
from .patterns import Condition, classify_candidate

log = logging.getLogger("mixscan")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
PARAMS_ENV = "MIXSCAN_PARAMS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _params_path(args):
    return args.params or os.environ.get(PARAMS_ENV) or None


def _load_ledger(path, strict: bool) -> Ledger:
    builder = LedgerBuilder()
    lineno = 0
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, block in read_block_file(fh, strict=strict):
                builder.add_block(block)
    except IngestError as e:
        raise IngestError(f"line {lineno}: {e}", e.txid) from None
    return builder.build()


def cmd_simulate(args) -> int:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values = parse_kv(fh, args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        scenario = scenario_from_dict(values)
    except ValueError as e:
        raise ScenarioInfeasible(str(e)) from None
    result = generate(scenario)
    result.write(args.out, args.truth)
    truth = result.truth
    print(f"blocks: {len(result.blocks)}")
    print(f"transactions: {result.tx_count}")
    print(f"mixer chains: {len(truth.mixer_chains)}")
    print(f"exchange chains: {len(truth.exchange_chains)}")
    print(f"wallet chains: {len(truth.wallet_chains)}")
    print(f"mixer/dirty/clean addresses: {len(truth.mixer_addresses)}/"
          f"{len(truth.dirty_addresses)}/{len(truth.clean_addresses)}")
    return EXIT_OK


def cmd_scan(args) -> int:
    chain_params, pattern_params = load_params(_params_path(args))
    ledger = _load_ledger(args.ledger, args.strict)
    report = run_detection(ledger, chain_params, pattern_params)
    clusters = build_clusters(ledger)
    report = propagate_labels(clusters, report)
    with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.dumps())
    if args.clusters:
        with open(args.clusters, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(clusters.dumps())
    print(f"transactions: {len(ledger)}  chains: {len(report.chains)}  labels: {len(report.labels)}"
          f"  conflicts: {len(report.conflicts)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            report = json.load(fh)
        with open(args.truth, encoding="utf-8") as fh:
            truth = json.load(fh)
        metrics = evaluate(report, truth)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise MalformedRecord(f"cannot parse report/truth: {e}") from None
    text = json.dumps(metrics.to_json(), indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_explain(args) -> int:
    chain_params, pattern_params = load_params(_params_path(args))
    ledger = _load_ledger(args.ledger, strict=True)
    tx = ledger.transactions.get(args.tx)
    if tx is None:
        raise UsageError(f"unknown txid {args.tx}")
    print(f"tx {tx.txid}  height {tx.block_height}  inputs {len(tx.inputs)}  outputs {len(tx.outputs)}")
    try:
        verdict = classify_candidate(ledger, tx, pattern_params)
    except UnresolvableInput as e:
        print(f"UnresolvableInput: {e}")
        return EXIT_OK
    shape_failed = {Condition.INPUT_COUNT, Condition.OUTPUT_COUNT} & set(verdict.failed_conditions)
    for cond in Condition:
        if cond in verdict.failed_conditions:
            status = "FAIL"
        elif shape_failed and cond not in (Condition.INPUT_COUNT, Condition.OUTPUT_COUNT):
            status = "not evaluated"
        else:
            status = "pass"
        print(f"  {cond.value:<13} {status}")
    if not verdict.is_candidate:
        print("not a candidate")
        return EXIT_OK
    chain = build_chain(ledger, tx.txid, chain_params, pattern_params)
    ok, reason = accept_chain(chain, chain_params)
    print(f"chain: {len(chain.txids)} txs  sweeper root: {chain.sweeper_root}  "
          f"anomalies: {chain.anomaly_count}  aborted: {chain.aborted}")
    if len(chain.txids) >= 2:
        print(f"  time median: {float(chain_time_median(chain)):.2f} min")
    for txid in chain.txids:
        print(f"  {txid}")
    print("chain accepted" if ok else f"chain rejected: {reason.value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixscan", description="Detect mixing-service chains in a block file.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write a synthetic block file and its ground truth")
    s.add_argument("--config", help="key = value scenario file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="block file to write")
    s.add_argument("--truth", required=True, help="ground-truth JSON to write")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scan", help="detect mixing chains and label addresses")
    s.add_argument("--ledger", required=True)
    s.add_argument("--params", help=f"key = value params file (default: ${PARAMS_ENV})")
    s.add_argument("--report", required=True)
    s.add_argument("--clusters", help="optional clusters JSON export")
    s.add_argument("--strict", action="store_true", help="abort on the first malformed record")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("evaluate", help="score a report against ground truth")
    s.add_argument("--report", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--out", help="also write the metrics JSON here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("explain", help="show why one transaction is or is not flagged")
    s.add_argument("--ledger", required=True)
    s.add_argument("--tx", required=True)
    s.add_argument("--params")
    s.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParamsError) as e:
        print(f"mixscan: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except IngestError as e:
        print(f"mixscan: error: {e} (txid {e.txid})", file=sys.stderr)
        return EXIT_DATA
    except (MixscanError, OSError) as e:
        print(f"mixscan: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
