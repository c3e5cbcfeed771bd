"""Hash chain integrity, world state, replay, and the ledger file format."""

import dataclasses
from random import Random

import pytest

from bbtm.ledger import (
    BadCreatorSignature,
    Block,
    BrokenLinkage,
    Channel,
    Ledger,
    LedgerError,
    NonMonotoneNumber,
    Transaction,
    TxFunction,
    WrongChannel,
    ZERO_HASH,
    decode_chain,
    encode_chain,
    make_block,
    make_transaction,
    replay_from_genesis,
    verify_chain,
)

from helpers import make_identity


@pytest.fixture(scope="module")
def osp():
    return make_identity("OSP-1")


@pytest.fixture(scope="module")
def submitter():
    return make_identity("RA-1")


def _tx(submitter, key: str, payload: bytes, t: int = 0, channel=Channel.GCCF) -> Transaction:
    return make_transaction(
        channel=channel,
        function=TxFunction.VALIDATE_CERT,
        key=key,
        payload=payload,
        submitter_cert=submitter.cert,
        submitter_key=submitter.key,
        submit_time_ms=t,
    )


def _chain(osp, submitter, writes, txs_per_block=2):
    """Build a valid chain from (key, payload) writes; returns the blocks."""
    blocks = []
    prev = ZERO_HASH
    txs = [_tx(submitter, key, payload, t) for t, (key, payload) in enumerate(writes)]
    genesis = make_block(0, prev, [], osp.cert, osp.key)
    blocks.append(genesis)
    prev = genesis.header.hash()
    for i in range(0, len(txs), txs_per_block):
        chunk = txs[i:i + txs_per_block]
        block = make_block(len(blocks), prev, chunk, osp.cert, osp.key)
        blocks.append(block)
        prev = block.header.hash()
    return blocks


class TestAppendBlock:
    def test_genesis_onto_empty_ledger(self, osp):
        ledger = Ledger(Channel.GCCF)
        ledger.append_block(make_block(0, ZERO_HASH, [], osp.cert, osp.key))
        assert ledger.height == 1
        assert ledger.tip_number == 0

    def test_random_prev_hash_is_broken_linkage(self, osp, submitter):
        ledger = Ledger(Channel.GCCF)
        ledger.append_block(make_block(0, ZERO_HASH, [], osp.cert, osp.key))
        bad = make_block(1, bytes(Random(1).randbytes(32)), [_tx(submitter, "k", b"v")], osp.cert, osp.key)
        with pytest.raises(BrokenLinkage):
            ledger.append_block(bad)

    def test_non_monotone_number(self, osp):
        ledger = Ledger(Channel.GCCF)
        with pytest.raises(NonMonotoneNumber):
            ledger.append_block(make_block(3, ZERO_HASH, [], osp.cert, osp.key))

    def test_wrong_channel(self, osp, submitter):
        ledger = Ledger(Channel.GPF)
        with pytest.raises(WrongChannel):
            ledger.append_block(make_block(0, ZERO_HASH, [_tx(submitter, "k", b"v")], osp.cert, osp.key))

    def test_non_osp_genesis_creator_rejected(self, submitter):
        ledger = Ledger(Channel.GCCF)
        with pytest.raises(BadCreatorSignature):
            ledger.append_block(make_block(0, ZERO_HASH, [], submitter.cert, submitter.key))

    def test_creator_switch_after_genesis_rejected(self, osp, submitter):
        other_osp = make_identity("OSP-2")
        ledger = Ledger(Channel.GCCF)
        ledger.append_block(make_block(0, ZERO_HASH, [], osp.cert, osp.key))
        bad = make_block(1, ledger.head_hash(), [_tx(submitter, "k", b"v")], other_osp.cert, other_osp.key)
        with pytest.raises(BadCreatorSignature):
            ledger.append_block(bad)

    def test_empty_non_genesis_rejected(self, osp):
        ledger = Ledger(Channel.GCCF)
        ledger.append_block(make_block(0, ZERO_HASH, [], osp.cert, osp.key))
        with pytest.raises(LedgerError):
            ledger.append_block(make_block(1, ledger.head_hash(), [], osp.cert, osp.key))

    def test_same_key_twice_in_one_block_keeps_second(self, osp, submitter):
        # Oracle: replay the block list by linear scan, last write wins.
        ledger = Ledger(Channel.GCCF)
        ledger.append_block(make_block(0, ZERO_HASH, [], osp.cert, osp.key))
        txs = [_tx(submitter, "k", b"first"), _tx(submitter, "k", b"second", t=1)]
        ledger.append_block(make_block(1, ledger.head_hash(), txs, osp.cert, osp.key))
        expected = {}
        for block in ledger.blocks:
            for tx in block.transactions:
                expected[tx.key] = tx.payload
        assert ledger.world_state_get("k").payload == b"second"
        assert ledger.world_state_get("k").payload == expected["k"]


class TestWorldState:
    def test_absent_key(self, osp):
        ledger = Ledger(Channel.GCCF)
        assert ledger.world_state_get("nope") is None

    def test_add_then_revoke_latest_function_wins(self, osp, submitter):
        ledger = Ledger(Channel.GCCF)
        ledger.append_block(make_block(0, ZERO_HASH, [], osp.cert, osp.key))
        add = make_transaction(Channel.GCCF, TxFunction.ADD_CERT, "cert/aa", b"record",
                               submitter.cert, submitter.key, 0)
        revoke = make_transaction(Channel.GCCF, TxFunction.REVOKE_CERT, "cert/aa", b"record2",
                                  submitter.cert, submitter.key, 1)
        ledger.append_block(make_block(1, ledger.head_hash(), [add], osp.cert, osp.key))
        ledger.append_block(make_block(2, ledger.head_hash(), [revoke], osp.cert, osp.key))
        assert ledger.world_state_get("cert/aa").function == TxFunction.REVOKE_CERT

    def test_equals_linear_scan_oracle(self, osp, submitter):
        rng = Random(42)
        writes = [(f"key/{rng.randrange(20)}", rng.randbytes(8)) for _ in range(200)]
        blocks = _chain(osp, submitter, writes, txs_per_block=7)
        ledger = replay_from_genesis(Channel.GCCF, blocks)
        # Brute-force scan over all blocks taking the last match per key.
        scan = {}
        for block in blocks:
            for tx in block.transactions:
                scan[tx.key] = (tx.payload, tx.function, block.header.number)
        assert set(scan) == set(ledger.world_state)
        for key, (payload, function, number) in scan.items():
            entry = ledger.world_state_get(key)
            assert (entry.payload, entry.function, entry.block_number) == (payload, function, number)


class TestReplay:
    def test_replay_equals_incremental(self, osp, submitter):
        rng = Random(77)
        writes = [(f"key/{rng.randrange(50)}", rng.randbytes(16)) for _ in range(1000)]
        blocks = _chain(osp, submitter, writes, txs_per_block=13)
        incremental = Ledger(Channel.GCCF)
        for block in blocks:
            incremental.append_block(block)
        replayed = replay_from_genesis(Channel.GCCF, blocks)
        assert replayed.head_hash() == incremental.head_hash()
        assert replayed.world_state == incremental.world_state
        assert replayed.world_state_digest() == incremental.world_state_digest()

    def test_replay_own_export_is_identical(self, osp, submitter):
        blocks = _chain(osp, submitter, [("a", b"1"), ("b", b"2")])
        ledger = replay_from_genesis(Channel.GCCF, blocks)
        again = replay_from_genesis(Channel.GCCF, decode_chain(encode_chain(ledger.blocks)))
        assert again.head_hash() == ledger.head_hash()
        assert again.world_state == ledger.world_state

    def test_replay_halts_at_first_invalid_block(self, osp, submitter):
        blocks = _chain(osp, submitter, [("a", b"1"), ("b", b"2"), ("c", b"3")], txs_per_block=1)
        bad = dataclasses.replace(blocks[2], header=dataclasses.replace(blocks[2].header, prev_header_hash=bytes(32)))
        with pytest.raises(BrokenLinkage):
            replay_from_genesis(Channel.GCCF, [blocks[0], blocks[1], bad])


class TestVerifyChain:
    def test_honest_100_block_chain(self, osp, submitter):
        writes = [(f"k{i}", bytes([i % 256])) for i in range(99)]
        blocks = _chain(osp, submitter, writes, txs_per_block=1)
        assert len(blocks) == 100
        ledger = replay_from_genesis(Channel.GCCF, blocks)
        assert verify_chain(ledger) is None

    def test_payload_flip_detected_at_block(self, osp, submitter):
        writes = [(f"k{i}", bytes([i])) for i in range(60)]
        blocks = _chain(osp, submitter, writes, txs_per_block=1)
        ledger = replay_from_genesis(Channel.GCCF, blocks)
        target = ledger.blocks[42]
        tx = target.transactions[0]
        tampered_tx = make_transaction(tx.channel, tx.function, tx.key, b"TAMPERED",
                                       tx.submitter_cert, submitter.key, tx.submit_time_ms)
        # Keep the original header: the data hash no longer matches.
        ledger.blocks[42] = Block(
            header=target.header,
            transactions=(tampered_tx,),
            creator_cert=target.creator_cert,
            creator_signature=target.creator_signature,
        )
        assert verify_chain(ledger) == 42

    def test_resigned_by_non_osp_detected(self, osp, submitter):
        rogue = make_identity("OSP-9")
        writes = [(f"k{i}", bytes([i])) for i in range(60)]
        blocks = _chain(osp, submitter, writes, txs_per_block=1)
        ledger = replay_from_genesis(Channel.GCCF, blocks)
        target = ledger.blocks[42]
        ledger.blocks[42] = Block(
            header=target.header,
            transactions=target.transactions,
            creator_cert=rogue.cert,
            creator_signature=rogue.key.sign(target.header.encode()),
        )
        assert verify_chain(ledger) == 42

    def test_bad_tx_signature_detected(self, osp, submitter):
        blocks = _chain(osp, submitter, [("a", b"1")])
        tx = blocks[1].transactions[0]
        forged = Transaction(
            channel=tx.channel, function=tx.function, key=tx.key, payload=tx.payload,
            submitter_cert=tx.submitter_cert, submitter_signature=bytes(64),
            submit_time_ms=tx.submit_time_ms,
        )
        forged_block = make_block(1, blocks[0].header.hash(), [forged], osp.cert, osp.key)
        ledger = replay_from_genesis(Channel.GCCF, [blocks[0], forged_block])
        assert verify_chain(ledger) == 1


class TestChainFile:
    def test_roundtrip(self, osp, submitter):
        blocks = _chain(osp, submitter, [("a", b"1"), ("b", b"2"), ("c", b"3")])
        data = encode_chain(blocks)
        assert data[:4] == b"BBTM"
        decoded = decode_chain(data)
        assert [b.encode() for b in decoded] == [b.encode() for b in blocks]

    def test_bad_magic(self):
        with pytest.raises(LedgerError):
            decode_chain(b"NOPE\x01")

    def test_truncated_file(self, osp, submitter):
        data = encode_chain(_chain(osp, submitter, [("a", b"1")]))
        with pytest.raises(LedgerError):
            decode_chain(data[:-3])


class TestImmutability:
    def test_committed_structures_are_frozen(self, osp, submitter):
        blocks = _chain(osp, submitter, [("a", b"1")])
        block = blocks[1]
        with pytest.raises(dataclasses.FrozenInstanceError):
            block.creator_signature = b"x"
        with pytest.raises(dataclasses.FrozenInstanceError):
            block.header.number = 9
        with pytest.raises(dataclasses.FrozenInstanceError):
            block.transactions[0].payload = b"y"
