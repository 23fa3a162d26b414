"""Common-input-ownership clustering and label propagation across clusters."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .detector import AddressLabel, DetectionReport, Source
from .ledger import Ledger


class UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def add(self, x: str) -> None:
        self.parent.setdefault(x, x)

    def find(self, x: str) -> str:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller string becomes the root, so roots are canonical ids
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass(frozen=True)
class ClusterSet:
    cluster_of: dict[str, str]
    members: dict[str, tuple[str, ...]]

    def __len__(self):
        return len(self.members)

    def to_json(self) -> dict:
        return {"clusters": [{"id": cid, "addresses": list(addrs)}
                             for cid, addrs in sorted(self.members.items())]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":")) + "\n"


def build_clusters(ledger: Ledger) -> ClusterSet:
    """Union every pair of addresses that appear together among one transaction's inputs.

    Cluster ids are the lexicographically smallest member, so the result does
    not depend on the order transactions are processed in.
    """
    uf = UnionFind()
    for address in ledger.funding_index:
        uf.add(address)
    for tx in ledger.transactions.values():
        if len(tx.inputs) < 2:
            continue
        addrs = {ledger.output(op).address for op in tx.inputs}
        first = min(addrs)
        for a in addrs:
            uf.union(first, a)
    cluster_of = {a: uf.find(a) for a in uf.parent}
    groups: dict[str, list[str]] = {}
    for a, cid in cluster_of.items():
        groups.setdefault(cid, []).append(a)
    return ClusterSet(cluster_of, {cid: tuple(sorted(v)) for cid, v in groups.items()})


def propagate_labels(clusters: ClusterSet, report: DetectionReport) -> DetectionReport:
    """Spread each cluster's label to its unlabeled members.

    A cluster whose members carry more than one distinct label is left alone
    and recorded in ``conflicts``.  Existing labels are never changed.
    """
    by_cluster: dict[str, list[AddressLabel]] = {}
    for lab in report.labels:
        cid = clusters.cluster_of.get(lab.address, lab.address)
        by_cluster.setdefault(cid, []).append(lab)

    labeled = {lab.address for lab in report.labels}
    new_labels = list(report.labels)
    conflicts = list(report.conflicts)
    for cid in sorted(by_cluster):
        labs = by_cluster[cid]
        kinds = {lab.label for lab in labs}
        if len(kinds) > 1:
            entry = {"address": cid, "labels": sorted(k.value for k in kinds), "scope": "cluster"}
            if entry not in conflicts:
                conflicts.append(entry)
            continue
        (kind,) = kinds
        evidence = min(labs, key=AddressLabel.sort_key)
        for a in clusters.members.get(cid, ()):
            if a not in labeled:
                new_labels.append(AddressLabel(a, kind, Source.CLUSTER_PROPAGATION, evidence.chain_id))
    diagnostics = dict(report.diagnostics)
    diagnostics["labels_propagated"] = diagnostics.get("labels_propagated", 0) + len(new_labels) - len(report.labels)
    return replace(report, labels=sorted(new_labels, key=AddressLabel.sort_key),
                   conflicts=conflicts, diagnostics=diagnostics)

