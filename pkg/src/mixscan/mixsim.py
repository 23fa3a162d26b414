"""
Deterministic synthetic ledger with planted mixer, exchange and wallet chains.

Every population shares the sweeper -> 1:2 chain shape; they differ only in
chain length and spacing, so each non-mixer population is excluded by exactly
one chain-level filter:

* mixers: 53..120 transactions, 20..40 minutes between hops
* exchanges: just as long, but one block (10 minutes) between hops
* wallets: fewer than 10 transactions, more than 100 hours between hops

Background noise is ordinary 1..3 input payments between random wallets.  All
randomness comes from ``random.Random(scenario.seed)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import asdict, dataclass, field, fields

from .errors import ScenarioInfeasible
from .ledger import SAT_PER_BTC, AddrType, Block, Outpoint, Transaction, TxOutput, write_block_file

log = logging.getLogger(__name__)

_PREFIX = {
    AddrType.P2PKH: ("1", 33),
    AddrType.P2SH: ("3", 33),
    AddrType.P2WPKH: ("bc1q", 38),
    AddrType.P2WSH: ("bc1q", 58),
    AddrType.OTHER: ("x", 20),
}
_PAYOUT_TYPES = (AddrType.P2PKH, AddrType.P2WPKH, AddrType.P2WSH)
_USER_TYPES = (AddrType.P2PKH, AddrType.P2WPKH)
_NOISE_TYPES = (AddrType.P2SH, AddrType.P2PKH, AddrType.P2WPKH, AddrType.P2WSH, AddrType.OTHER)
_NOISE_WEIGHTS = (30, 30, 30, 8, 2)

COINBASE_REWARD_SAT = 50 * SAT_PER_BTC
_MIN_PAYOUT_SAT = 10_000
_CHAIN_END_TARGET_SAT = 2 * SAT_PER_BTC


@dataclass(frozen=True)
class SimScenario:
    seed: int = 42
    n_mixers: int = 3
    deposits_per_mixer: int = 6
    deposits_per_user: int = 2
    chain_len_min: int = 53
    chain_len_max: int = 120
    mixer_delay_median_minutes: int = 30
    mixer_delay_jitter_minutes: int = 10
    n_exchange_chains: int = 20
    exchange_chain_len_min: int = 53
    exchange_chain_len_max: int = 120
    exchange_delay_minutes: int = 10
    exchange_deposits: int = 12
    n_wallet_chains: int = 20
    wallet_chain_len_min: int = 2
    wallet_chain_len_max: int = 9
    wallet_delay_hours_min: int = 101
    wallet_delay_hours_max: int = 150
    wallet_sweep_inputs: int = 10
    n_noise_txs: int = 50_000
    block_interval_minutes: int = 10
    min_blocks: int = 1000
    sweeper_min_inputs: int = 10
    fee_sat: int = 10_000
    genesis_time: int = 1_600_000_000

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ScenarioInfeasible("seed must be a 64-bit unsigned integer")
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ScenarioInfeasible(f"{f.name} must be >= 0")
        for lo, hi in (("chain_len_min", "chain_len_max"),
                       ("exchange_chain_len_min", "exchange_chain_len_max"),
                       ("wallet_chain_len_min", "wallet_chain_len_max"),
                       ("wallet_delay_hours_min", "wallet_delay_hours_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ScenarioInfeasible(f"{lo} > {hi}")
        if min(self.chain_len_min, self.exchange_chain_len_min, self.wallet_chain_len_min) < 2:
            raise ScenarioInfeasible("chains need a sweeper and at least one hop")
        if self.block_interval_minutes < 1:
            raise ScenarioInfeasible("block_interval_minutes must be >= 1")
        if self.mixer_delay_jitter_minutes > self.mixer_delay_median_minutes:
            raise ScenarioInfeasible("mixer delay jitter exceeds its median")
        if self.n_mixers and self.deposits_per_mixer * self.deposits_per_user < self.sweeper_min_inputs:
            raise ScenarioInfeasible("mixer sweeper would have fewer than sweeper_min_inputs inputs")
        if self.n_exchange_chains and self.exchange_deposits < self.sweeper_min_inputs:
            raise ScenarioInfeasible("exchange sweeper would have fewer than sweeper_min_inputs inputs")
        if self.n_wallet_chains and self.wallet_sweep_inputs < self.sweeper_min_inputs:
            raise ScenarioInfeasible("wallet sweeper would have fewer than sweeper_min_inputs inputs")

    def blocks_for(self, minutes: int) -> int:
        return round(minutes / self.block_interval_minutes)


@dataclass
class GroundTruth:
    mixer_chains: list[list[str]] = field(default_factory=list)
    mixer_addresses: set[str] = field(default_factory=set)
    dirty_addresses: set[str] = field(default_factory=set)
    clean_addresses: set[str] = field(default_factory=set)
    entity_of_address: dict[str, str] = field(default_factory=dict)
    # not used by evaluation; lets tests address the negative populations
    exchange_chains: list[list[str]] = field(default_factory=list)
    wallet_chains: list[list[str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "mixer_chains": self.mixer_chains,
            "mixer_addresses": sorted(self.mixer_addresses),
            "dirty_addresses": sorted(self.dirty_addresses),
            "clean_addresses": sorted(self.clean_addresses),
            "entity_of_address": dict(sorted(self.entity_of_address.items())),
            "exchange_chains": self.exchange_chains,
            "wallet_chains": self.wallet_chains,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "GroundTruth":
        return cls(
            mixer_chains=[list(c) for c in d.get("mixer_chains", [])],
            mixer_addresses=set(d.get("mixer_addresses", [])),
            dirty_addresses=set(d.get("dirty_addresses", [])),
            clean_addresses=set(d.get("clean_addresses", [])),
            entity_of_address=dict(d.get("entity_of_address", {})),
            exchange_chains=[list(c) for c in d.get("exchange_chains", [])],
            wallet_chains=[list(c) for c in d.get("wallet_chains", [])],
        )


@dataclass
class SimResult:
    blocks: list[Block]
    truth: GroundTruth

    @property
    def tx_count(self) -> int:
        return sum(len(b.txs) for b in self.blocks)

    def write(self, blocks_path, truth_path) -> None:
        with open(blocks_path, "w", encoding="utf-8", newline="\n") as fh:
            write_block_file(self.blocks, fh)
        with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.truth.dumps())


@dataclass
class _Utxo:
    op: Outpoint
    out: TxOutput
    height: int


class _Sim:
    def __init__(self, sc: SimScenario):
        self.sc = sc
        self.rng = random.Random(sc.seed)
        self.truth = GroundTruth()
        self._n_tx = 0
        self._n_addr = 0
        self.txs: dict[int, list[Transaction]] = {}
        self.faucet: dict[int, list[TxOutput]] = {}
        self.miner = self.address(AddrType.P2PKH, "miner")

    # -- primitives ---------------------------------------------------------

    def _digest(self, kind: str, n) -> str:
        return hashlib.sha256(f"mixsim:{self.sc.seed}:{kind}:{n}".encode()).hexdigest()

    def address(self, addr_type: AddrType, entity: str) -> str:
        self._n_addr += 1
        prefix, length = _PREFIX[addr_type]
        addr = (prefix + self._digest("addr", self._n_addr))[:length]
        self.truth.entity_of_address[addr] = entity
        return addr

    def time_of(self, height: int) -> int:
        return self.sc.genesis_time + height * self.sc.block_interval_minutes * 60

    def coinbase_txid(self, height: int) -> str:
        return self._digest("coinbase", height)

    def fund(self, height: int, addr_type: AddrType, value: int, entity: str) -> _Utxo:
        """New output of the coinbase at ``height``."""
        out = TxOutput(self.address(addr_type, entity), addr_type, value)
        lst = self.faucet.setdefault(height, [])
        lst.append(out)
        # output 0 of every coinbase is the miner reward
        return _Utxo(Outpoint(self.coinbase_txid(height), len(lst)), out, height)

    def emit(self, height: int, inputs: list[_Utxo], outputs: list[TxOutput]) -> tuple[str, list[_Utxo]]:
        for u in inputs:
            assert u.height <= height, "spend precedes funding"
        assert sum(u.out.value_sat for u in inputs) >= sum(o.value_sat for o in outputs)
        self._n_tx += 1
        txid = self._digest("tx", self._n_tx)
        tx = Transaction(txid, tuple(u.op for u in inputs), tuple(outputs), self.time_of(height), height)
        self.txs.setdefault(height, []).append(tx)
        return txid, [_Utxo(Outpoint(txid, i), o, height) for i, o in enumerate(outputs)]

    def split(self, total: int, parts: int) -> list[int]:
        """Random composition of ``total`` into ``parts`` positive integers."""
        if parts == 1:
            return [total]
        cuts = sorted(self.rng.sample(range(1, total), parts - 1))
        return [b - a for a, b in zip([0] + cuts, cuts + [total])]

    # -- planted structures -------------------------------------------------

    def deposits(self, owner: str, sender_prefix: str, amounts: list[int], h0: int,
                 senders_per_deposit: int | None = None) -> tuple[list[_Utxo], set[str]]:
        """User payments into fresh P2SH addresses of ``owner``.

        ``amounts`` holds one entry per deposit; with ``senders_per_deposit``
        the deposits are grouped by user.  Returns the deposit outputs and the
        users' source addresses.
        """
        fee = self.sc.fee_sat
        utxos, sources = [], set()
        per_user = senders_per_deposit or 1
        for i, amount in enumerate(amounts):
            user = f"{sender_prefix}:{i // per_user}"
            h = h0 + self.rng.randint(0, 12)
            change = self.rng.randint(0, amount) if self.rng.random() < 0.7 else 0
            need = amount + fee + change
            n_src = self.rng.randint(1, 3)
            srcs = [self.fund(h - 1, self.rng.choice(_USER_TYPES), v, user)
                    for v in self.split(need, n_src)]
            sources.update(u.out.address for u in srcs)
            outs = [TxOutput(self.address(AddrType.P2SH, owner), AddrType.P2SH, amount)]
            if change:
                ctype = self.rng.choice(_USER_TYPES)
                outs.append(TxOutput(self.address(ctype, user), ctype, change))
            _, created = self.emit(h, srcs, outs)
            utxos.append(created[0])
        return utxos, sources

    def sweep_chain(self, owner: str, payee_prefix: str, inputs: list[_Utxo], height: int,
                    length: int, delays: list[int]) -> tuple[list[str], set[str], set[str]]:
        """Sweeper plus ``length - 1`` 1:2 hops spending the previous change.

        Returns (txids, owner addresses, payout addresses).
        """
        fee = self.sc.fee_sat
        total = sum(u.out.value_sat for u in inputs) - fee
        self.rng.shuffle(inputs)
        sweep_out = TxOutput(self.address(AddrType.P2SH, owner), AddrType.P2SH, total)
        txid, (current,) = self.emit(height, inputs, [sweep_out])
        txids = [txid]
        owned = {u.out.address for u in inputs} | {sweep_out.address}
        payees = set()
        hops = length - 1
        for k, delay in zip(range(hops, 0, -1), delays):
            height += delay
            value = current.out.value_sat
            if value <= SAT_PER_BTC:
                raise ScenarioInfeasible(f"{owner}: chain value fell to {value} sat with {k} hops left")
            payout = self._payout(value, k)
            ptype = self.rng.choice(_PAYOUT_TYPES)
            pay = TxOutput(self.address(ptype, f"{payee_prefix}:{len(txids)}"), ptype, payout)
            keep = TxOutput(self.address(AddrType.P2SH, owner), AddrType.P2SH, value - fee - payout)
            swap = self.rng.random() < 0.5
            txid, created = self.emit(height, [current], [pay, keep] if swap else [keep, pay])
            current = created[1] if swap else created[0]
            txids.append(txid)
            owned.add(keep.address)
            payees.add(pay.address)
        return txids, owned, payees

    def _payout(self, value: int, hops_left: int) -> int:
        """Payout for one hop, paced so the change stays near 2 BTC at the end.

        Capped at a sixth of the spendable amount, which keeps the change at
        least five times the payout.
        """
        spendable = value - self.sc.fee_sat
        cap = spendable // 6
        if cap < _MIN_PAYOUT_SAT:
            raise ScenarioInfeasible(f"hop value {value} sat too small for a payout")
        base = 1 - (_CHAIN_END_TARGET_SAT / value) ** (1 / hops_left) if value > _CHAIN_END_TARGET_SAT else 0.0
        frac = base * self.rng.uniform(0.5, 1.5)
        return min(cap, max(_MIN_PAYOUT_SAT, int(spendable * frac)))

    def mixer(self, m: int) -> None:
        sc, rng = self.sc, self.rng
        owner = f"mixer:{m}"
        h0 = rng.randint(2, 100)
        n_dep = sc.deposits_per_mixer * sc.deposits_per_user
        start = rng.randint(50 * SAT_PER_BTC, 500 * SAT_PER_BTC)
        amounts = self.split(start + sc.fee_sat, n_dep)
        utxos, sources = self.deposits(owner, f"depositor:{m}", amounts, h0, sc.deposits_per_user)
        height = max(u.height for u in utxos) + rng.randint(6, 36)
        length = rng.randint(sc.chain_len_min, sc.chain_len_max)
        med = sc.blocks_for(sc.mixer_delay_median_minutes)
        jit = sc.blocks_for(sc.mixer_delay_jitter_minutes)
        delays = [rng.randint(med - jit, med + jit) for _ in range(length - 1)]
        txids, owned, payees = self.sweep_chain(owner, f"recipient:{m}", utxos, height, length, delays)
        self.truth.mixer_chains.append(txids)
        self.truth.mixer_addresses |= owned
        self.truth.clean_addresses |= payees
        self.truth.dirty_addresses |= sources

    def exchange(self, e: int) -> None:
        sc, rng = self.sc, self.rng
        owner = f"exchange:{e}"
        h0 = rng.randint(2, 200)
        start = rng.randint(50 * SAT_PER_BTC, 500 * SAT_PER_BTC)
        utxos, _ = self.deposits(owner, f"customer:{e}", self.split(start + sc.fee_sat, sc.exchange_deposits), h0)
        height = max(u.height for u in utxos) + rng.randint(1, 6)
        length = rng.randint(sc.exchange_chain_len_min, sc.exchange_chain_len_max)
        delays = [sc.blocks_for(sc.exchange_delay_minutes)] * (length - 1)
        txids, _, _ = self.sweep_chain(owner, f"withdrawal:{e}", utxos, height, length, delays)
        self.truth.exchange_chains.append(txids)

    def wallet(self, w: int) -> None:
        sc, rng = self.sc, self.rng
        owner = f"wallet:{w}"
        h0 = rng.randint(2, 200)
        start = rng.randint(5 * SAT_PER_BTC, 50 * SAT_PER_BTC)
        utxos = [self.fund(h0 - 1, AddrType.P2SH, v, owner)
                 for v in self.split(start + sc.fee_sat, sc.wallet_sweep_inputs)]
        length = rng.randint(sc.wallet_chain_len_min, sc.wallet_chain_len_max)
        delays = [sc.blocks_for(60 * rng.randint(sc.wallet_delay_hours_min, sc.wallet_delay_hours_max))
                  for _ in range(length - 1)]
        txids, _, _ = self.sweep_chain(owner, f"payee:{w}", utxos, h0, length, delays)
        self.truth.wallet_chains.append(txids)

    def noise(self, top: int) -> None:
        sc, rng = self.sc, self.rng
        n_wallets = max(20, sc.n_noise_txs // 25)
        pools: list[list[_Utxo]] = [[] for _ in range(n_wallets)]
        heights = sorted(rng.randint(1, top) for _ in range(sc.n_noise_txs))
        for h in heights:
            w = rng.randrange(n_wallets)
            pool = pools[w]
            ins = []
            for _ in range(rng.choice((1, 1, 1, 2, 2, 3))):
                if not pool:
                    break
                i = rng.randrange(len(pool))
                pool[i], pool[-1] = pool[-1], pool[i]
                ins.append(pool.pop())
            if not ins:
                value = int(10 ** rng.uniform(5, 9.7))
                ins.append(self.fund(h, rng.choices(_NOISE_TYPES, _NOISE_WEIGHTS)[0], value, f"noise:{w}"))
            avail = sum(u.out.value_sat for u in ins) - sc.fee_sat
            if avail < 2 * _MIN_PAYOUT_SAT:
                # dust: burn the whole input as fee to an unspendable-by-convention output
                outs = [TxOutput(self.address(AddrType.OTHER, f"noise:{w}"), AddrType.OTHER, 0)]
                self.emit(h, ins, outs)
                continue
            other = rng.randrange(n_wallets)
            pay = rng.randint(_MIN_PAYOUT_SAT, avail - _MIN_PAYOUT_SAT)
            t1, t2 = rng.choices(_NOISE_TYPES, _NOISE_WEIGHTS, k=2)
            outs = [TxOutput(self.address(t1, f"noise:{other}"), t1, pay)]
            owners = [other]
            if rng.random() < 0.85:
                outs.append(TxOutput(self.address(t2, f"noise:{w}"), t2, avail - pay))
                owners.append(w)
            if rng.random() < 0.5:
                outs.reverse()
                owners.reverse()
            _, created = self.emit(h, ins, outs)
            for u, owner in zip(created, owners):
                pools[owner].append(u)

    # -- assembly -----------------------------------------------------------

    def run(self) -> SimResult:
        sc = self.sc
        for m in range(sc.n_mixers):
            self.mixer(m)
        for e in range(sc.n_exchange_chains):
            self.exchange(e)
        for w in range(sc.n_wallet_chains):
            self.wallet(w)
        top = max([sc.min_blocks - 1, *self.txs.keys(), *self.faucet.keys()])
        self.noise(top)
        blocks = []
        for h in range(top + 1):
            t = self.time_of(h)
            cb_outs = (TxOutput(self.miner, AddrType.P2PKH, COINBASE_REWARD_SAT), *self.faucet.get(h, ()))
            coinbase = Transaction(self.coinbase_txid(h), (), cb_outs, t, h)
            blocks.append(Block(h, t, (coinbase, *self.txs.get(h, ()))))
        log.info("simulated %d blocks, %d transactions", len(blocks), sum(len(b.txs) for b in blocks))
        return SimResult(blocks, self.truth)


def generate(scenario: SimScenario = SimScenario()) -> SimResult:
    """Block stream and ground truth for ``scenario``; identical for identical scenarios."""
    return _Sim(scenario).run()


def scenario_from_dict(values: dict) -> SimScenario:
    names = {f.name for f in fields(SimScenario)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ScenarioInfeasible(f"unknown scenario key(s): {', '.join(unknown)}")
    return SimScenario(**{k: int(v) for k, v in values.items()})


def scenario_to_dict(scenario: SimScenario) -> dict:
    return asdict(scenario)
