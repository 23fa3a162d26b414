"""
Transaction chains: grow a candidate backward to its sweeper root and forward
along the greater output until the money stops moving.

A chain t_1..t_n is valid when some output of every t_i is spent by t_{i+1}.
Members failing the candidate filter are anomalies; once the anomaly count
reaches ``ChainParams.anomaly_threshold`` the walk stops and the chain is
marked aborted.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from fractions import Fraction

from .errors import ChainTooShort, CycleDetected, SeedNotFound
from .ledger import AddrType, Ledger, Outpoint, Transaction
from .patterns import PatternParams, is_candidate, is_sweeper


@dataclass(frozen=True)
class ChainParams:
    anomaly_threshold: int = 4
    min_chain_len: int = 53
    time_median_min_minutes: Fraction = Fraction(20)
    time_median_max_minutes: Fraction = Fraction(80)
    max_backward_steps: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "time_median_min_minutes", Fraction(self.time_median_min_minutes))
        object.__setattr__(self, "time_median_max_minutes", Fraction(self.time_median_max_minutes))
        if not 0 < self.time_median_min_minutes < self.time_median_max_minutes:
            raise ValueError("need 0 < time_median_min_minutes < time_median_max_minutes")
        if self.min_chain_len < 2:
            raise ValueError("min_chain_len must be >= 2")
        if self.anomaly_threshold < 0:
            raise ValueError("anomaly_threshold must be >= 0")
        if self.max_backward_steps < 1:
            raise ValueError("max_backward_steps must be >= 1")


@dataclass(frozen=True)
class ChainRecord:
    txids: tuple[str, ...]
    sweeper_root: str | None
    anomaly_count: int
    inter_tx_minutes: tuple[Fraction, ...]
    aborted: bool

    def __len__(self):
        return len(self.txids)

    @property
    def chain_id(self) -> str:
        return self.sweeper_root if self.sweeper_root is not None else self.txids[0]


def _minutes_between(txs: list[Transaction]) -> tuple[Fraction, ...]:
    return tuple(Fraction(b.time_unix - a.time_unix, 60) for a, b in zip(txs, txs[1:]))


def _record(ledger: Ledger, txids: list[str], root, anomalies, aborted) -> ChainRecord:
    txs = [ledger.transactions[t] for t in txids]
    return ChainRecord(tuple(txids), root, anomalies, _minutes_between(txs), aborted)


def greater_output_index(tx: Transaction) -> int:
    """Output the forward walk follows: highest value, then P2SH, then lowest index."""
    return min(range(len(tx.outputs)),
               key=lambda i: (-tx.outputs[i].value_sat, tx.outputs[i].addr_type is not AddrType.P2SH, i))


def extend_backward(ledger: Ledger, seed: str, params: ChainParams = ChainParams(),
                    pparams: PatternParams = PatternParams(),
                    anomalies: int = 0) -> tuple[ChainRecord, str | None]:
    """Walk from ``seed`` toward its funding sweeper.

    Returns the chain (chronological, ending with ``seed``) and the sweeper
    txid, which is also the chain's first element when found.  The walk only
    steps through single-input transactions; anything else ends it without a
    root.
    """
    if seed not in ledger.transactions:
        raise SeedNotFound(seed)
    rev = [seed]
    visited = {seed}
    current = ledger.transactions[seed]
    root = None
    aborted = anomalies >= params.anomaly_threshold
    steps = 0
    while not aborted and len(current.inputs) == 1 and steps < params.max_backward_steps:
        parent_id = current.inputs[0].txid
        if parent_id in visited:
            raise CycleDetected(f"{parent_id} revisited walking back from {seed}")
        parent = ledger.transactions[parent_id]
        visited.add(parent_id)
        rev.append(parent_id)
        if is_sweeper(parent, pparams):
            root = parent_id
            break
        if not is_candidate(ledger, parent, pparams):
            anomalies += 1
            aborted = anomalies >= params.anomaly_threshold
        current = parent
        steps += 1
    rev.reverse()
    return _record(ledger, rev, root, anomalies, aborted), root


def extend_forward(ledger: Ledger, start: str, params: ChainParams = ChainParams(),
                   pparams: PatternParams = PatternParams(),
                   anomalies: int = 0) -> ChainRecord:
    """Follow the greater output of ``start`` through its spenders.

    The result excludes ``start`` itself, so its ``inter_tx_minutes`` covers
    only the gaps between the returned transactions.
    """
    if start not in ledger.transactions:
        raise SeedNotFound(start)
    out: list[str] = []
    visited = {start}
    current = ledger.transactions[start]
    aborted = anomalies >= params.anomaly_threshold
    while not aborted:
        nxt_id = ledger.spender_index.get(Outpoint(current.txid, greater_output_index(current)))
        if nxt_id is None:
            break
        if nxt_id in visited:
            raise CycleDetected(f"{nxt_id} revisited walking forward from {start}")
        visited.add(nxt_id)
        out.append(nxt_id)
        current = ledger.transactions[nxt_id]
        if not is_candidate(ledger, current, pparams):
            anomalies += 1
            aborted = anomalies >= params.anomaly_threshold
    return _record(ledger, out, None, anomalies, aborted)


def build_chain(ledger: Ledger, seed: str, params: ChainParams = ChainParams(),
                pparams: PatternParams = PatternParams()) -> ChainRecord:
    back, root = extend_backward(ledger, seed, params, pparams)
    fwd = extend_forward(ledger, seed, params, pparams, anomalies=back.anomaly_count)
    txids = back.txids + fwd.txids
    if len(set(txids)) != len(txids):
        raise CycleDetected(f"chain from {seed} repeats a transaction")
    return _record(ledger, list(txids), root, fwd.anomaly_count, back.aborted or fwd.aborted)


def chain_time_median(chain: ChainRecord) -> Fraction:
    """Median gap between consecutive chain members, in minutes."""
    if len(chain.txids) < 2:
        raise ChainTooShort(f"chain of {len(chain.txids)} tx has no time gaps")
    return Fraction(statistics.median(chain.inter_tx_minutes))


def check_adjacency(ledger: Ledger, txids) -> list[str]:
    """Problems with the spend linkage and height order of ``txids``; [] if sound."""
    problems = []
    for a, b in zip(txids, txids[1:]):
        ta, tb = ledger.transactions.get(a), ledger.transactions.get(b)
        if ta is None or tb is None:
            problems.append(f"{a}->{b}: unknown transaction")
            continue
        if not any(op.txid == a for op in tb.inputs):
            problems.append(f"{a}->{b}: no output of {a} spent by {b}")
        if tb.block_height < ta.block_height:
            problems.append(f"{a}->{b}: height decreases")
    return problems
