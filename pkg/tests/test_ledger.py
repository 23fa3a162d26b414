import io
import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mixscan.errors import DanglingInput, DoubleSpend, MalformedRecord, NegativeFee, OutOfOrder, UnknownOutpoint
from mixscan.ledger import (AddrType, Block, Outpoint, Transaction, TxOutput, ingest, parse_block_line,
                            read_block_file, serialize_block, write_block_file)
from mixscan.mixsim import SimScenario, generate

from conftest import BTC, PKH, SH

A = "a" * 64
B = "b" * 64
C = "c" * 64


def _line(height, txs, time=1_600_000_000):
    return json.dumps({"height": height, "time": time, "txs": txs})


def _tx(txid, inputs, outputs, **extra):
    return {"txid": txid, "inputs": [{"txid": t, "vout": v} for t, v in inputs],
            "outputs": [{"address": a, "type": k, "value_sat": v} for a, k, v in outputs], **extra}


class TestParse:
    def test_minimal_record(self):
        block = parse_block_line('{"height":0,"time":1600000000,"txs":[]}')
        assert block.height == 0
        assert block.txs == ()

    def test_coinbase(self):
        block = parse_block_line(_line(0, [_tx(A, [], [("1miner", "p2pkh", 50 * BTC)])]))
        (tx,) = block.txs
        assert tx.inputs == ()
        assert tx.is_coinbase
        assert tx.outputs[0].value_sat == 5_000_000_000
        assert tx.time_unix == 1_600_000_000

    def test_tx_time_override(self):
        block = parse_block_line(_line(3, [_tx(A, [], [("x", "p2sh", 1)], time=1_600_000_099)]))
        assert block.txs[0].time_unix == 1_600_000_099
        assert block.txs[0].block_height == 3

    def test_unknown_keys_ignored(self):
        raw = json.loads(_line(0, [_tx(A, [], [("x", "p2sh", 1)], size=250)]))
        raw["hash"] = "whatever"
        assert len(parse_block_line(json.dumps(raw)).txs) == 1

    @pytest.mark.parametrize("line", [
        _line(0, [_tx(A, [], [("x", "p2pkh", -5)])]),
        "{not json",
        "[1, 2]",
        '{"height":0,"txs":[]}',
        '{"height":-1,"time":0,"txs":[]}',
        '{"height":true,"time":0,"txs":[]}',
        _line(0, [_tx("A" * 64, [], [("x", "p2pkh", 5)])]),
        _line(0, [_tx("abc", [], [("x", "p2pkh", 5)])]),
        _line(0, [_tx(A, [], [])]),
        _line(0, [_tx(A, [], [("x", "p2tr", 5)])]),
        _line(0, [_tx(A, [], [("", "p2pkh", 5)])]),
        _line(0, [_tx(A, [(B, -1)], [("x", "p2pkh", 5)])]),
    ])
    def test_malformed(self, line):
        with pytest.raises(MalformedRecord):
            parse_block_line(line)

    def test_read_block_file_lenient_skips(self):
        text = "\n".join([_line(0, []), "garbage", "", _line(1, [])]) + "\n"
        got = list(read_block_file(io.StringIO(text), strict=False))
        assert [n for n, _ in got] == [1, 4]
        with pytest.raises(MalformedRecord, match="line 2"):
            list(read_block_file(io.StringIO(text), strict=True))


hex64 = st.text("0123456789abcdef", min_size=64, max_size=64)
outputs = st.builds(TxOutput, st.text(min_size=1, max_size=12), st.sampled_from(AddrType),
                    st.integers(0, 21_000_000 * BTC))


@st.composite
def blocks(draw):
    height = draw(st.integers(0, 10 ** 7))
    time = draw(st.integers(0, 2 ** 40))
    txs = []
    for txid in draw(st.lists(hex64, max_size=4, unique=True)):
        ins = draw(st.lists(st.builds(Outpoint, hex64, st.integers(0, 50)), max_size=3))
        outs = draw(st.lists(outputs, min_size=1, max_size=3))
        t = draw(st.one_of(st.just(time), st.integers(0, 2 ** 40)))
        txs.append(Transaction(txid, tuple(ins), tuple(outs), t, height))
    return Block(height, time, tuple(txs))


@given(blocks())
@settings(max_examples=200, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
def test_round_trip(block):
    assert parse_block_line(serialize_block(block)) == block


def _two_block_kit(kit):
    a = kit.coinbase(("addrA", SH, 50 * BTC))
    b = kit.tx([(a, 0)], [("addrB", PKH, 49 * BTC)])
    return a, b


class TestIngest:
    def test_spender_index(self, kit):
        a, b = _two_block_kit(kit)
        ledger = kit.ledger()
        assert ledger.spender_index[Outpoint(a, 0)] == b
        assert ledger.spender_of(Outpoint(a, 0)) == b
        assert ledger.spender_of(Outpoint(b, 0)) is None
        assert len(ledger) == 2

    def test_unknown_outpoint(self, kit):
        _two_block_kit(kit)
        ledger = kit.ledger()
        with pytest.raises(UnknownOutpoint):
            ledger.spender_of(Outpoint("f" * 64, 0))
        with pytest.raises(UnknownOutpoint):
            ledger.spender_of(Outpoint(ledger.blocks[0].txs[0].txid, 1))

    def test_double_spend(self, kit):
        a, _ = _two_block_kit(kit)
        c = kit.tx([(a, 0)], [("addrC", PKH, 1)])
        with pytest.raises(DoubleSpend) as exc:
            kit.ledger()
        assert exc.value.txid == c

    def test_dangling(self, kit):
        c = kit.tx([("e" * 64, 0)], [("addrC", PKH, 1)])
        with pytest.raises(DanglingInput) as exc:
            kit.ledger()
        assert exc.value.txid == c

    def test_bad_vout_is_dangling(self, kit):
        a = kit.coinbase(("x", SH, 5))
        kit.tx([(a, 1)], [("y", SH, 1)])
        with pytest.raises(DanglingInput):
            kit.ledger()

    def test_out_of_order(self, kit):
        kit.coinbase(("x", SH, 1))
        kit.coinbase(("y", SH, 1))
        blocks_ = kit.blocks()
        with pytest.raises(OutOfOrder):
            ingest(list(reversed(blocks_)))
        with pytest.raises(OutOfOrder):
            ingest([blocks_[0], blocks_[0]])

    def test_negative_fee(self, kit):
        a = kit.coinbase(("x", SH, 5))
        kit.tx([(a, 0)], [("y", SH, 6)])
        with pytest.raises(NegativeFee):
            kit.ledger()

    def test_same_block_spend(self):
        cb = Transaction(A, (), (TxOutput("x", SH, 10),), 0, 0)
        spend = Transaction(B, (Outpoint(A, 0),), (TxOutput("y", SH, 9),), 0, 0)
        ledger = ingest([Block(0, 0, (cb, spend))])
        assert ledger.spender_of(Outpoint(A, 0)) == B

    def test_funding_txs(self, kit):
        a = kit.coinbase(("payee", SH, 10), ("payee", SH, 5))
        kit.coinbase(("other", SH, 10))
        d = kit.coinbase(("payee", PKH, 3))
        ledger = kit.ledger()
        assert ledger.funding_txs("payee") == [a, d]
        assert ledger.funding_txs("other") != []
        assert ledger.funding_txs("never-seen") == []

    def test_ingest_is_pure(self, kit):
        _two_block_kit(kit)
        assert kit.ledger() == kit.ledger()


def test_simulator_file_ingests(tmp_path):
    result = generate(SimScenario(seed=42, n_mixers=1, n_exchange_chains=1, n_wallet_chains=0,
                                  n_noise_txs=2000, min_blocks=1000))
    path = tmp_path / "blocks.jsonl"
    result.write(path, tmp_path / "truth.json")
    with open(path) as fh:
        ledger = ingest(b for _, b in read_block_file(fh))
    assert len(ledger.blocks) >= 1000
    assert len(ledger) == result.tx_count
    # index completeness
    for tx in ledger.transactions.values():
        for op in tx.inputs:
            assert ledger.spender_of(op) == tx.txid
        for out in tx.outputs:
            assert tx.txid in ledger.funding_index[out.address]
    # conservation
    for tx in ledger.transactions.values():
        if tx.inputs:
            assert ledger.input_value(tx) >= sum(o.value_sat for o in tx.outputs)


def test_write_read_round_trip(kit):
    _two_block_kit(kit)
    buf = io.StringIO()
    write_block_file(kit.blocks(), buf)
    buf.seek(0)
    assert [b for _, b in read_block_file(buf)] == kit.blocks()
