"""Transaction-level predicates: the 1:2 candidate filter and sweeper detection."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import UnresolvableInput
from .ledger import AddrType, Block, Ledger, Transaction, TxOutput


@dataclass(frozen=True)
class PatternParams:
    input_value_threshold_sat: int = 100_000_000
    ratio_threshold: Fraction = Fraction(5)
    sweeper_min_inputs: int = 10
    sweeper_max_outputs: int = 2

    def __post_init__(self):
        object.__setattr__(self, "ratio_threshold", Fraction(self.ratio_threshold))
        if self.input_value_threshold_sat <= 0:
            raise ValueError("input_value_threshold_sat must be > 0")
        if self.ratio_threshold <= 1:
            raise ValueError("ratio_threshold must be > 1")
        if self.sweeper_min_inputs < 3:
            raise ValueError("sweeper_min_inputs must be >= 3")
        if self.sweeper_max_outputs not in (1, 2):
            raise ValueError("sweeper_max_outputs must be 1 or 2")


class Condition(enum.Enum):
    INPUT_COUNT = "InputCount"
    OUTPUT_COUNT = "OutputCount"
    ADDRESS_TYPES = "AddressTypes"
    AMOUNT_RATIO = "AmountRatio"
    INPUT_VALUE = "InputValue"


@dataclass(frozen=True)
class CandidateVerdict:
    failed_conditions: tuple[Condition, ...] = field(default=())

    @property
    def is_candidate(self) -> bool:
        return not self.failed_conditions


def service_output_index(outputs: tuple[TxOutput, ...]) -> int:
    """Index of the service-side output of a two-output transaction.

    That is the P2SH output; when both or neither are P2SH, the larger one
    (lower index on an exact tie).
    """
    a, b = outputs
    a_sh = a.addr_type is AddrType.P2SH
    b_sh = b.addr_type is AddrType.P2SH
    if a_sh != b_sh:
        return 0 if a_sh else 1
    return 1 if b.value_sat > a.value_sat else 0


def check_outputs(funding: TxOutput, outputs: tuple[TxOutput, ...],
                  params: PatternParams) -> list[Condition]:
    """Type, ratio and value tests for a 1:2 transaction whose input spends ``funding``."""
    failed = []
    if funding.addr_type is not AddrType.P2SH or all(o.addr_type is not AddrType.P2SH for o in outputs):
        failed.append(Condition.ADDRESS_TYPES)
    svc = service_output_index(outputs)
    big, small = outputs[svc].value_sat, outputs[1 - svc].value_sat
    ratio = params.ratio_threshold
    # exact rational comparison: big / small >= num / den
    if big * ratio.denominator < ratio.numerator * small:
        failed.append(Condition.AMOUNT_RATIO)
    if funding.value_sat <= params.input_value_threshold_sat:
        failed.append(Condition.INPUT_VALUE)
    return failed


def classify_candidate(ledger: Ledger, tx: Transaction,
                       params: PatternParams = PatternParams()) -> CandidateVerdict:
    """Apply the five candidate-withdrawal conditions to ``tx``.

    The shape conditions are checked first; when the transaction is not 1:2
    the value and type conditions are undefined and only the shape failures
    are reported.  Raises UnresolvableInput for coinbase transactions and for
    inputs whose funding transaction is missing from the ledger.
    """
    if tx.is_coinbase:
        raise UnresolvableInput(f"{tx.txid} is a coinbase transaction")
    failed = []
    if len(tx.inputs) != 1:
        failed.append(Condition.INPUT_COUNT)
    if len(tx.outputs) != 2:
        failed.append(Condition.OUTPUT_COUNT)
    if failed:
        return CandidateVerdict(tuple(failed))
    op = tx.inputs[0]
    prev = ledger.transactions.get(op.txid)
    if prev is None or op.vout >= len(prev.outputs):
        raise UnresolvableInput(f"{tx.txid}: funding output {op.txid}:{op.vout} not in ledger")
    return CandidateVerdict(tuple(check_outputs(prev.outputs[op.vout], tx.outputs, params)))


def is_candidate(ledger: Ledger, tx: Transaction, params: PatternParams = PatternParams()) -> bool:
    """Like classify_candidate, but unclassifiable transactions count as non-candidates."""
    try:
        return classify_candidate(ledger, tx, params).is_candidate
    except UnresolvableInput:
        return False


def is_sweeper(tx: Transaction, params: PatternParams = PatternParams()) -> bool:
    return len(tx.inputs) >= params.sweeper_min_inputs and len(tx.outputs) <= params.sweeper_max_outputs


def scan_block(ledger: Ledger, block: Block, params: PatternParams = PatternParams(),
               diagnostics: Counter | None = None) -> list[str]:
    """Txids of the candidate transactions in ``block``, in block order.

    Coinbase and unresolvable transactions are skipped and tallied in
    ``diagnostics`` when given.
    """
    found = []
    for tx in block.txs:
        if tx.is_coinbase:
            if diagnostics is not None:
                diagnostics["coinbase_skipped"] += 1
            continue
        try:
            verdict = classify_candidate(ledger, tx, params)
        except UnresolvableInput:
            if diagnostics is not None:
                diagnostics["unresolvable_skipped"] += 1
            continue
        if diagnostics is not None:
            diagnostics["txs_classified"] += 1
        if verdict.is_candidate:
            found.append(tx.txid)
    return found
