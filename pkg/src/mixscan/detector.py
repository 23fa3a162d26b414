"""
Two-phase mixing detection: candidate seeds, chain building, chain acceptance,
address labeling and dirty-sender tracing, aggregated into a DetectionReport.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .chain import ChainParams, ChainRecord, build_chain, chain_time_median
from .errors import MixscanError, NotASweeper, SweeperNotFound
from .ledger import AddrType, Ledger
from .patterns import PatternParams, is_candidate, is_sweeper, scan_block, service_output_index


class Label(enum.Enum):
    MIXING_SERVICE = "mixing_service"
    DIRTY_SENDER = "dirty_sender"
    CLEAN_RECIPIENT = "clean_recipient"


class Source(enum.Enum):
    INTERMEDIATE_INPUT = "intermediate_input"
    INTERMEDIATE_P2SH_OUTPUT = "intermediate_p2sh_output"
    SWEEPER_MEMBER = "sweeper_member"
    CLEAN_SIDE_OUTPUT = "clean_side_output"
    DIRTY_TRACE = "dirty_trace"
    CLUSTER_PROPAGATION = "cluster_propagation"


_ALLOWED = {
    Source.INTERMEDIATE_INPUT: {Label.MIXING_SERVICE},
    Source.INTERMEDIATE_P2SH_OUTPUT: {Label.MIXING_SERVICE},
    Source.SWEEPER_MEMBER: {Label.MIXING_SERVICE},
    Source.CLEAN_SIDE_OUTPUT: {Label.CLEAN_RECIPIENT},
    Source.DIRTY_TRACE: {Label.DIRTY_SENDER},
    Source.CLUSTER_PROPAGATION: set(Label),
}


@dataclass(frozen=True)
class AddressLabel:
    address: str
    label: Label
    source: Source
    chain_id: str

    def __post_init__(self):
        if self.label not in _ALLOWED[self.source]:
            raise ValueError(f"source {self.source.value} cannot yield {self.label.value}")

    def sort_key(self):
        return (self.address, self.label.value, self.source.value, self.chain_id)

    def to_json(self) -> dict:
        return {"address": self.address, "label": self.label.value,
                "source": self.source.value, "chain_id": self.chain_id}

    @classmethod
    def from_json(cls, d: dict) -> "AddressLabel":
        return cls(d["address"], Label(d["label"]), Source(d["source"]), d["chain_id"])


class RejectReason(enum.Enum):
    ANOMALY_CAP = "anomaly_cap"
    MIN_LENGTH = "min_length"
    TIME_MEDIAN = "time_median"
    NO_SWEEPER = "no_sweeper"


@dataclass
class DetectionReport:
    chains: list[ChainRecord] = field(default_factory=list)
    labels: list[AddressLabel] = field(default_factory=list)
    conflicts: list[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def label_map(self) -> dict[str, set[Label]]:
        out: dict[str, set[Label]] = {}
        for lab in self.labels:
            out.setdefault(lab.address, set()).add(lab.label)
        return out

    def addresses_with(self, label: Label) -> set[str]:
        return {lab.address for lab in self.labels if lab.label is label}

    def to_json(self) -> dict:
        chains = []
        for c in sorted(self.chains, key=lambda c: c.chain_id):
            chains.append({
                "id": c.chain_id,
                "txids": list(c.txids),
                "anomalies": c.anomaly_count,
                "time_median_min": float(chain_time_median(c)),
            })
        return {
            "chains": chains,
            "labels": [lab.to_json() for lab in sorted(self.labels, key=AddressLabel.sort_key)],
            "conflicts": sorted(self.conflicts, key=lambda c: json.dumps(c, sort_keys=True)),
            "diagnostics": self.diagnostics,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"


def accept_chain(chain: ChainRecord, params: ChainParams = ChainParams()) -> tuple[bool, RejectReason | None]:
    """Chain-level filter.  Bounds are inclusive: length 53 and medians of exactly 20 or 80 pass."""
    if chain.aborted:
        return False, RejectReason.ANOMALY_CAP
    if len(chain.txids) < params.min_chain_len:
        return False, RejectReason.MIN_LENGTH
    median = chain_time_median(chain)
    if not params.time_median_min_minutes <= median <= params.time_median_max_minutes:
        return False, RejectReason.TIME_MEDIAN
    if chain.sweeper_root is None:
        return False, RejectReason.NO_SWEEPER
    return True, None


def label_chain(ledger: Ledger, chain: ChainRecord,
                pparams: PatternParams = PatternParams()) -> list[AddressLabel]:
    """Service and clean-recipient labels for an accepted chain.

    The sweeper root contributes all of its input and output addresses as
    service addresses.  Every later member contributes its input address;
    members matching the 1:2 pattern also contribute their service-side output
    (service) and the other output (clean recipient).
    """
    cid = chain.chain_id
    labels = []
    for pos, txid in enumerate(chain.txids):
        tx = ledger.transactions[txid]
        if pos == 0 and txid == chain.sweeper_root:
            for op in tx.inputs:
                labels.append(AddressLabel(ledger.output(op).address, Label.MIXING_SERVICE,
                                           Source.SWEEPER_MEMBER, cid))
            for out in tx.outputs:
                labels.append(AddressLabel(out.address, Label.MIXING_SERVICE, Source.SWEEPER_MEMBER, cid))
            continue
        for op in tx.inputs:
            labels.append(AddressLabel(ledger.output(op).address, Label.MIXING_SERVICE,
                                       Source.INTERMEDIATE_INPUT, cid))
        if not is_candidate(ledger, tx, pparams):
            continue
        svc = service_output_index(tx.outputs)
        other = tx.outputs[1 - svc]
        assert tx.outputs[svc].addr_type is AddrType.P2SH, "candidate without a P2SH output"
        labels.append(AddressLabel(tx.outputs[svc].address, Label.MIXING_SERVICE,
                                   Source.INTERMEDIATE_P2SH_OUTPUT, cid))
        labels.append(AddressLabel(other.address, Label.CLEAN_RECIPIENT, Source.CLEAN_SIDE_OUTPUT, cid))
    return labels


def trace_dirty(ledger: Ledger, sweeper: str, pparams: PatternParams = PatternParams()) -> list[AddressLabel]:
    """Label the senders behind each deposit swept by ``sweeper``.

    Each sweeper input is resolved to the exact transaction that created the
    spent output; that deposit transaction's input addresses are dirty.
    """
    tx = ledger.transactions.get(sweeper)
    if tx is None:
        raise SweeperNotFound(sweeper)
    if not is_sweeper(tx, pparams):
        raise NotASweeper(sweeper)
    labels = []
    for op in tx.inputs:
        deposit = ledger.transactions[op.txid]
        for dop in deposit.inputs:
            labels.append(AddressLabel(ledger.output(dop).address, Label.DIRTY_SENDER,
                                       Source.DIRTY_TRACE, sweeper))
    return labels


def dedupe_labels(labels: Iterable[AddressLabel]) -> list[AddressLabel]:
    """One entry per (address, label); the first occurrence wins."""
    seen = set()
    out = []
    for lab in labels:
        key = (lab.address, lab.label)
        if key not in seen:
            seen.add(key)
            out.append(lab)
    return out


def address_conflicts(labels: Iterable[AddressLabel]) -> list[dict]:
    by_addr: dict[str, set[str]] = {}
    for lab in labels:
        by_addr.setdefault(lab.address, set()).add(lab.label.value)
    return [{"address": a, "labels": sorted(ls), "scope": "address"}
            for a, ls in sorted(by_addr.items()) if len(ls) > 1]


_COUNTERS = ("blocks_scanned", "txs_classified", "coinbase_skipped", "unresolvable_skipped", "seeds",
             "seeds_covered", "seed_errors", "chains_built", "duplicate_chains",
             *(f"rejected_{r.value}" for r in RejectReason))


def run_detection(ledger: Ledger, params: ChainParams = ChainParams(),
                  pparams: PatternParams = PatternParams(),
                  heights: range | None = None) -> DetectionReport:
    """Scan blocks (all, or those whose height is in ``heights``) and build the report.

    Seeds inside a chain already built without aborting are skipped: walking
    from them would yield the same chain.  Accepted chains are deduplicated by
    sweeper root, first seen in block order.
    """
    diag: Counter = Counter(dict.fromkeys(_COUNTERS, 0))
    rejected = []
    covered: set[str] = set()
    accepted: dict[str, ChainRecord] = {}
    for block in ledger.blocks:
        if heights is not None and block.height not in heights:
            continue
        diag["blocks_scanned"] += 1
        for seed in scan_block(ledger, block, pparams, diag):
            diag["seeds"] += 1
            if seed in covered:
                diag["seeds_covered"] += 1
                continue
            try:
                chain = build_chain(ledger, seed, params, pparams)
            except MixscanError as e:
                diag["seed_errors"] += 1
                rejected.append({"seed": seed, "reason": type(e).__name__})
                continue
            diag["chains_built"] += 1
            if not chain.aborted:
                covered.update(chain.txids)
            ok, reason = accept_chain(chain, params)
            if not ok:
                diag[f"rejected_{reason.value}"] += 1
                rejected.append({"seed": seed, "root": chain.sweeper_root,
                                 "length": len(chain.txids), "reason": reason.value})
                continue
            if chain.sweeper_root in accepted:
                diag["duplicate_chains"] += 1
                continue
            accepted[chain.sweeper_root] = chain

    labels = []
    for root, chain in accepted.items():
        labels.extend(label_chain(ledger, chain, pparams))
        labels.extend(trace_dirty(ledger, root, pparams))
    labels = dedupe_labels(labels)
    diag["chains_accepted"] = len(accepted)
    diagnostics = dict(sorted((k, v) for k, v in diag.items()))
    diagnostics["rejected_chains"] = rejected
    return DetectionReport(
        chains=sorted(accepted.values(), key=lambda c: c.chain_id),
        labels=sorted(labels, key=AddressLabel.sort_key),
        conflicts=address_conflicts(labels),
        diagnostics=diagnostics,
    )


def load_report(path) -> dict:
    """Raw report JSON; evaluation only needs chain txids and label pairs."""
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

