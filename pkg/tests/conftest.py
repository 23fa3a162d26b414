import hashlib

import pytest

from mixscan.chain import ChainParams
from mixscan.cluster import build_clusters, propagate_labels
from mixscan.detector import run_detection
from mixscan.ledger import AddrType, Block, Ledger, Outpoint, Transaction, TxOutput, ingest
from mixscan.mixsim import SimScenario, generate
from mixscan.patterns import PatternParams

BTC = 100_000_000
SH, PKH, WPKH = AddrType.P2SH, AddrType.P2PKH, AddrType.P2WPKH


class Kit:
    """Builds small ledgers by hand: one transaction per block, ten minutes apart by default."""

    def __init__(self, start_time=1_600_000_000):
        self.txs = []
        self.time = start_time
        self._n = 0

    def _txid(self):
        self._n += 1
        return hashlib.sha256(f"kit:{self._n}".encode()).hexdigest()

    def tx(self, inputs, outputs, gap_minutes=10, gap_seconds=None):
        """``inputs``: [(txid, vout)]; ``outputs``: [(address, AddrType, value)]."""
        self.time += gap_minutes * 60 if gap_seconds is None else gap_seconds
        txid = self._txid()
        self.txs.append(Transaction(
            txid,
            tuple(Outpoint(t, v) for t, v in inputs),
            tuple(TxOutput(a, k, v) for a, k, v in outputs),
            self.time,
            len(self.txs),
        ))
        return txid

    def coinbase(self, *outputs, gap_minutes=10):
        return self.tx([], outputs, gap_minutes)

    def blocks(self):
        return [Block(t.block_height, t.time_unix, (t,)) for t in self.txs]

    def ledger(self) -> Ledger:
        return ingest(self.blocks())


@pytest.fixture
def kit():
    return Kit()


def make_mixer_chain(kit, n_hops, n_deposits=12, start_value=400 * BTC, gap_minutes=30,
                     depositors=None):
    """Sweeper over ``n_deposits`` deposits followed by ``n_hops`` candidate hops.

    Returns (chain txids, deposit txids, depositor source addresses).
    """
    deposit_ids, sources = [], []
    per = (start_value + 10_000) // n_deposits
    for i in range(n_deposits):
        src = (depositors[i] if depositors else f"user{i}")
        cb = kit.coinbase((src, PKH, per + 1000))
        sources.append(src)
        deposit_ids.append(kit.tx([(cb, 0)], [(f"dep{i}", SH, per)], gap_minutes=1))
    total = per * n_deposits - 1000
    sweeper = kit.tx([(d, 0) for d in deposit_ids], [("mixroot", SH, total)], gap_minutes=gap_minutes)
    chain = [sweeper]
    value, prev = total, sweeper
    for k in range(n_hops):
        pay = value // 50
        keep = value - pay - 1000
        prev = kit.tx([(prev, 0)], [(f"mix{k}", SH, keep), (f"pay{k}", PKH, pay)], gap_minutes=gap_minutes)
        chain.append(prev)
        value = keep
    return chain, deposit_ids, sources


@pytest.fixture(scope="session")
def default_sim():
    return generate(SimScenario())


@pytest.fixture(scope="session")
def default_ledger(default_sim):
    return ingest(default_sim.blocks)


@pytest.fixture(scope="session")
def default_report(default_ledger):
    return run_detection(default_ledger, ChainParams(), PatternParams())


@pytest.fixture(scope="session")
def default_clusters(default_ledger):
    return build_clusters(default_ledger)


@pytest.fixture(scope="session")
def default_propagated(default_clusters, default_report):
    return propagate_labels(default_clusters, default_report)
