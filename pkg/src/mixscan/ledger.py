"""
Ledger data model, block-file parsing and the immutable spend/funding indexes.

Block file format: UTF-8, one JSON object per line::

    {"height": 0, "time": 1600000000,
     "txs": [{"txid": "<hex64>", "time": 1600000030,
              "inputs": [{"txid": "<hex64>", "vout": 0}],
              "outputs": [{"address": "3abc", "type": "p2sh", "value_sat": 150000000}]}]}

The per-tx ``time`` key is optional and defaults to the block time.  Unknown
keys are ignored.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, TextIO

from .errors import (
    DanglingInput,
    DoubleSpend,
    DuplicateTxid,
    MalformedRecord,
    NegativeFee,
    OutOfOrder,
    UnknownOutpoint,
    UnknownTransaction,
)

log = logging.getLogger(__name__)

SAT_PER_BTC = 100_000_000

_HEX64 = re.compile(r"[0-9a-f]{64}\Z")


class AddrType(enum.Enum):
    P2PKH = "p2pkh"
    P2SH = "p2sh"
    P2WPKH = "p2wpkh"
    P2WSH = "p2wsh"
    OTHER = "other"


@dataclass(frozen=True, slots=True)
class Outpoint:
    txid: str
    vout: int

    def __post_init__(self):
        if not isinstance(self.txid, str) or not _HEX64.match(self.txid):
            raise ValueError(f"bad txid {self.txid!r}")
        if self.vout < 0:
            raise ValueError(f"negative vout {self.vout}")


@dataclass(frozen=True, slots=True)
class TxOutput:
    address: str
    addr_type: AddrType
    value_sat: int

    def __post_init__(self):
        if not self.address:
            raise ValueError("empty address")
        if self.value_sat < 0:
            raise ValueError(f"negative value {self.value_sat}")


@dataclass(frozen=True, slots=True)
class Transaction:
    txid: str
    inputs: tuple[Outpoint, ...]
    outputs: tuple[TxOutput, ...]
    time_unix: int
    block_height: int

    def __post_init__(self):
        if not _HEX64.match(self.txid):
            raise ValueError(f"bad txid {self.txid!r}")
        if not self.outputs:
            raise ValueError(f"tx {self.txid} has no outputs")

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    time_unix: int
    txs: tuple[Transaction, ...]

    def __post_init__(self):
        for tx in self.txs:
            if tx.block_height != self.height:
                raise ValueError(f"tx {tx.txid} height {tx.block_height} != block {self.height}")


# ---------------------------------------------------------------------------
# parsing / serialization
# ---------------------------------------------------------------------------

def _req(obj: Mapping, key: str, kind: type, where: str):
    if key not in obj:
        raise MalformedRecord(f"{where}: missing field {key!r}")
    val = obj[key]
    # bool is an int subclass; never a legal count or value here
    if isinstance(val, bool) or not isinstance(val, kind):
        raise MalformedRecord(f"{where}: field {key!r} must be {kind.__name__}")
    return val


def _nonneg(obj: Mapping, key: str, where: str) -> int:
    val = _req(obj, key, int, where)
    if val < 0:
        raise MalformedRecord(f"{where}: field {key!r} is negative ({val})")
    return val


def _hex64(obj: Mapping, key: str, where: str) -> str:
    val = _req(obj, key, str, where)
    if not _HEX64.match(val):
        raise MalformedRecord(f"{where}: {key!r} is not 64 lowercase hex chars")
    return val


def _parse_tx(raw, height: int, block_time: int, idx: int) -> Transaction:
    where = f"block {height} tx #{idx}"
    if not isinstance(raw, dict):
        raise MalformedRecord(f"{where}: not an object")
    txid = _hex64(raw, "txid", where)
    where = f"tx {txid}"
    time_unix = _req(raw, "time", int, where) if "time" in raw else block_time
    inputs = []
    for i, rin in enumerate(_req(raw, "inputs", list, where)):
        if not isinstance(rin, dict):
            raise MalformedRecord(f"{where}: input {i} not an object")
        inputs.append(Outpoint(_hex64(rin, "txid", f"{where} input {i}"),
                               _nonneg(rin, "vout", f"{where} input {i}")))
    outputs = []
    for i, rout in enumerate(_req(raw, "outputs", list, where)):
        w = f"{where} output {i}"
        if not isinstance(rout, dict):
            raise MalformedRecord(f"{w}: not an object")
        address = _req(rout, "address", str, w)
        if not address:
            raise MalformedRecord(f"{w}: empty address")
        try:
            addr_type = AddrType(_req(rout, "type", str, w))
        except ValueError:
            raise MalformedRecord(f"{w}: unknown address type {rout['type']!r}") from None
        outputs.append(TxOutput(address, addr_type, _nonneg(rout, "value_sat", w)))
    if not outputs:
        raise MalformedRecord(f"{where}: no outputs")
    return Transaction(txid, tuple(inputs), tuple(outputs), time_unix, height)


def parse_block_line(line: str) -> Block:
    """Parse one block-file record.  Raises MalformedRecord on any defect."""
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"invalid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise MalformedRecord("record is not a JSON object")
    height = _nonneg(raw, "height", "block")
    time_unix = _req(raw, "time", int, f"block {height}")
    txs = tuple(_parse_tx(t, height, time_unix, i)
                for i, t in enumerate(_req(raw, "txs", list, f"block {height}")))
    return Block(height, time_unix, txs)


def serialize_block(block: Block) -> str:
    """Canonical single-line JSON for a block (inverse of parse_block_line)."""
    txs = []
    for tx in block.txs:
        rec = {"txid": tx.txid}
        if tx.time_unix != block.time_unix:
            rec["time"] = tx.time_unix
        rec["inputs"] = [{"txid": op.txid, "vout": op.vout} for op in tx.inputs]
        rec["outputs"] = [{"address": o.address, "type": o.addr_type.value, "value_sat": o.value_sat}
                          for o in tx.outputs]
        txs.append(rec)
    return json.dumps({"height": block.height, "time": block.time_unix, "txs": txs},
                      separators=(",", ":"))


def read_block_file(fh: TextIO, strict: bool = True) -> Iterator[tuple[int, Block]]:
    """Yield ``(line_number, block)`` pairs; blank lines are skipped.

    With ``strict=False`` a malformed record is logged and skipped instead of
    raising.
    """
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            yield lineno, parse_block_line(line)
        except MalformedRecord as e:
            if strict:
                raise MalformedRecord(f"line {lineno}: {e}") from None
            log.warning("skipping malformed record at line %d: %s", lineno, e)


def write_block_file(blocks: Iterable[Block], fh: TextIO) -> None:
    for block in blocks:
        fh.write(serialize_block(block))
        fh.write("\n")


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------

class Ledger:
    """Indexed, read-only transaction graph.

    Build one with :func:`ingest` or :class:`LedgerBuilder`; the three index
    attributes must not be mutated afterwards.
    """

    def __init__(self, blocks, transactions, spender_index, funding_index):
        self.blocks: tuple[Block, ...] = tuple(blocks)
        self.transactions: dict[str, Transaction] = transactions
        self.spender_index: dict[Outpoint, str] = spender_index
        self.funding_index: dict[str, list[str]] = funding_index

    def __len__(self):
        return len(self.transactions)

    def __contains__(self, txid):
        return txid in self.transactions

    def __eq__(self, other):
        if not isinstance(other, Ledger):
            return NotImplemented
        return (self.blocks == other.blocks
                and self.spender_index == other.spender_index
                and self.funding_index == other.funding_index)

    def tx(self, txid: str) -> Transaction:
        try:
            return self.transactions[txid]
        except KeyError:
            raise UnknownTransaction(txid) from None

    def output(self, op: Outpoint) -> TxOutput:
        tx = self.transactions.get(op.txid)
        if tx is None or op.vout >= len(tx.outputs):
            raise UnknownOutpoint(f"{op.txid}:{op.vout}")
        return tx.outputs[op.vout]

    def spender_of(self, op: Outpoint) -> str | None:
        """Txid spending ``op``, or None while it is unspent."""
        self.output(op)
        return self.spender_index.get(op)

    def funding_txs(self, address: str) -> list[str]:
        """Txids paying ``address``, in block order; [] when never seen."""
        return list(self.funding_index.get(address, ()))

    def input_value(self, tx: Transaction) -> int:
        return sum(self.output(op).value_sat for op in tx.inputs)

    def addresses(self) -> set[str]:
        return set(self.funding_index)


class LedgerBuilder:
    """Single-writer incremental ingestion; call :meth:`build` once at the end."""

    def __init__(self):
        self._blocks: list[Block] = []
        self._txs: dict[str, Transaction] = {}
        self._spender: dict[Outpoint, str] = {}
        self._funding: dict[str, list[str]] = {}
        self._last_height: int | None = None
        self._last_time: int | None = None

    def add_block(self, block: Block) -> None:
        if self._last_height is not None:
            if block.height <= self._last_height:
                raise OutOfOrder(f"block height {block.height} after {self._last_height}",
                                 block.txs[0].txid if block.txs else None)
            if block.time_unix < self._last_time:
                raise OutOfOrder(f"block {block.height} time goes backwards",
                                 block.txs[0].txid if block.txs else None)
        for tx in block.txs:
            self._add_tx(tx)
        self._blocks.append(block)
        self._last_height = block.height
        self._last_time = block.time_unix

    def _add_tx(self, tx: Transaction) -> None:
        if tx.txid in self._txs:
            raise DuplicateTxid(f"duplicate txid {tx.txid}", tx.txid)
        total_in = 0
        seen: set[Outpoint] = set()
        for op in tx.inputs:
            prev = self._txs.get(op.txid)
            if prev is None or op.vout >= len(prev.outputs):
                raise DanglingInput(f"tx {tx.txid} spends unknown outpoint {op.txid}:{op.vout}", tx.txid)
            if op in self._spender or op in seen:
                raise DoubleSpend(f"tx {tx.txid} double-spends {op.txid}:{op.vout}", tx.txid)
            seen.add(op)
            total_in += prev.outputs[op.vout].value_sat
        if tx.inputs:
            total_out = sum(o.value_sat for o in tx.outputs)
            if total_out > total_in:
                raise NegativeFee(f"tx {tx.txid} outputs {total_out} exceed inputs {total_in}", tx.txid)
        # all checks passed: commit
        for op in tx.inputs:
            self._spender[op] = tx.txid
        self._txs[tx.txid] = tx
        for out in tx.outputs:
            lst = self._funding.setdefault(out.address, [])
            if not lst or lst[-1] != tx.txid:
                lst.append(tx.txid)

    def build(self) -> Ledger:
        return Ledger(self._blocks, self._txs, self._spender, self._funding)


def ingest(blocks: Iterable[Block]) -> Ledger:
    builder = LedgerBuilder()
    for block in blocks:
        builder.add_block(block)
    return builder.build()


def load_ledger(path, strict: bool = True) -> Ledger:
    with open(path, encoding="utf-8") as fh:
        return ingest(b for _, b in read_block_file(fh, strict=strict))
