"""The single ordering service: genesis, admission, block cutting.

One sequencer per deployment admits transactions, assigns them gapless
per-channel sequence numbers, and cuts signed blocks in admission order, so
no two honest nodes can ever be handed conflicting chains.  Admission runs
the full contract checks against a speculative state (committed state plus
the pending queue), so a block cut from admitted transactions always passes
every peer's local re-verification.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field as dc_field
from typing import Deque, Dict, List, Optional, Tuple

from . import gccf, gpf
from .gccf import ContractRejection, GccfView
from .gpf import GpfView
from .identity import (
    AuthorityRole,
    CertificateRecord,
    Identity,
    cert_from_json,
    cert_to_json,
    role_of_name,
    sha256,
    verify_certificate_signature,
)
from .ledger import (
    Block,
    BlockHeader,
    Channel,
    Transaction,
    ZERO_HASH,
    make_block,
)
from .node import Node

ALL_ROLES = frozenset(AuthorityRole)
GCCF_WRITERS = frozenset(
    {AuthorityRole.ELECTOR, AuthorityRole.RCA, AuthorityRole.ICA, AuthorityRole.PG, AuthorityRole.RA}
)
GPF_WRITERS = frozenset({AuthorityRole.PG})


class ConfigError(ValueError):
    pass


class Rejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class ChannelPolicy:
    readers: frozenset
    writers: frozenset

    def to_json(self) -> dict:
        return {
            "readers": sorted(r.value for r in self.readers),
            "writers": sorted(w.value for w in self.writers),
        }


def default_channel_policies() -> Dict[Channel, ChannelPolicy]:
    # Writers on the certificate channel are the issuing authorities from the
    # permission matrix plus the PG (revocations) and the RA (validation
    # transactions).  Policy writes are PG-only; end entities only read.
    return {
        Channel.GCCF: ChannelPolicy(readers=ALL_ROLES, writers=GCCF_WRITERS),
        Channel.GPF: ChannelPolicy(readers=ALL_ROLES, writers=GPF_WRITERS),
    }


@dataclass(frozen=True)
class Member:
    name: str
    role: AuthorityRole
    cert: CertificateRecord


@dataclass
class ConsortiumConfig:
    osp_cert: CertificateRecord
    members: Tuple[Member, ...]
    consensus_id: str = "single-sequencer"
    channel_policies: Dict[Channel, ChannelPolicy] = dc_field(default_factory=default_channel_policies)

    def validate(self) -> None:
        if role_of_name(self.osp_cert.subject_name) != AuthorityRole.OSP:
            raise ConfigError("missing OSP certificate")
        if not self.osp_cert.is_self_signed or not verify_certificate_signature(
            self.osp_cert, self.osp_cert.subject_public_key
        ):
            raise ConfigError("OSP certificate does not self-verify")
        seen_uids = {self.osp_cert.subject_unique_id}
        for member in self.members:
            if member.role == AuthorityRole.OSP:
                raise ConfigError("more than one OSP certificate")
            if member.cert.subject_unique_id in seen_uids:
                raise ConfigError("duplicate member certificates")
            seen_uids.add(member.cert.subject_unique_id)
        for channel, policy in self.channel_policies.items():
            if AuthorityRole.EE in policy.writers:
                raise ConfigError("end entities are read-only")

    def member_by_uid(self, uid: bytes) -> Optional[Member]:
        for member in self.members:
            if member.cert.subject_unique_id == uid:
                return member
        return None

    def to_json(self) -> dict:
        return {
            "consensus_id": self.consensus_id,
            "osp_cert": cert_to_json(self.osp_cert),
            "members": [
                {"name": m.name, "role": m.role.value, "cert": cert_to_json(m.cert)}
                for m in self.members
            ],
            "channel_policies": {ch.value: p.to_json() for ch, p in sorted(self.channel_policies.items())},
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_json(cls, obj: dict) -> "ConsortiumConfig":
        policies = {
            Channel(ch): ChannelPolicy(
                readers=frozenset(AuthorityRole(r) for r in p["readers"]),
                writers=frozenset(AuthorityRole(w) for w in p["writers"]),
            )
            for ch, p in obj["channel_policies"].items()
        }
        return cls(
            osp_cert=cert_from_json(obj["osp_cert"]),
            members=tuple(
                Member(name=m["name"], role=AuthorityRole(m["role"]), cert=cert_from_json(m["cert"]))
                for m in obj["members"]
            ),
            consensus_id=obj["consensus_id"],
            channel_policies=policies,
        )


@dataclass(frozen=True)
class GenesisBundle:
    system_block: Block
    gccf_genesis: Block
    gpf_genesis: Block


def create_genesis(
    config: ConsortiumConfig,
    gccf_bootstrap: List[Transaction],
    gpf_bootstrap: List[Transaction],
    osp_key,
) -> GenesisBundle:
    """Cut the three number-0 blocks of a deployment.

    The system block binds the consortium configuration (its data hash is
    the digest of the canonical config bytes); the two application genesis
    blocks carry the pre-approved bootstrap transactions: the initial
    elector set and root as self-signed records plus the PG's record, and
    the initial policy rules.
    """
    config.validate()
    system_header = BlockHeader(
        number=0, prev_header_hash=ZERO_HASH, data_hash=sha256(config.canonical_bytes())
    )
    system_block = Block(
        header=system_header,
        transactions=(),
        creator_cert=config.osp_cert,
        creator_signature=osp_key.sign(system_header.encode()),
    )
    gccf_genesis = make_block(0, ZERO_HASH, gccf_bootstrap, config.osp_cert, osp_key)
    gpf_genesis = make_block(0, ZERO_HASH, gpf_bootstrap, config.osp_cert, osp_key)
    return GenesisBundle(system_block=system_block, gccf_genesis=gccf_genesis, gpf_genesis=gpf_genesis)


@dataclass
class _Pending:
    seq: int
    arrival_ms: int
    tx: Transaction


class OrderingService:
    """Admission, per-channel FIFO queues, and deterministic block cutting."""

    def __init__(self, config: ConsortiumConfig, osp: Identity, node: Node):
        config.validate()
        self.config = config
        self.osp = osp
        self.node = node
        self._members = {m.cert.subject_unique_id: m for m in config.members}
        self._pending: Dict[Channel, Deque[_Pending]] = {
            Channel.GCCF: deque(),
            Channel.GPF: deque(),
        }
        self._next_seq: Dict[Channel, int] = {Channel.GCCF: 0, Channel.GPF: 0}
        # Speculative state = committed state plus the pending queues applied
        # in admission order; kept in lockstep so admission checks see what
        # commit will see.
        self._spec_gccf: GccfView = node.gccf_view.copy()
        self._spec_gpf: GpfView = node.gpf_view.copy()

    def pending_count(self, channel: Channel) -> int:
        return len(self._pending[channel])

    def oldest_pending_ms(self, channel: Channel) -> Optional[int]:
        q = self._pending[channel]
        return q[0].arrival_ms if q else None

    def submit_tx(self, tx: Transaction, *, now_ms: int) -> int:
        """Admit and return the sequence number, or raise Rejected."""
        if not tx.verify_submitter_signature():
            raise Rejected("bad-signature")
        member = self._members.get(tx.submitter_cert.subject_unique_id)
        if member is None or member.cert.subject_public_key != tx.submitter_cert.subject_public_key:
            raise Rejected("unknown-member")
        policy = self.config.channel_policies[tx.channel]
        if member.role not in policy.writers:
            raise Rejected("policy-denied")
        next_number = self.node.ledger(tx.channel).height
        try:
            if tx.channel == Channel.GCCF:
                gccf.apply_tx(
                    self._spec_gccf,
                    tx,
                    block_number=next_number,
                    quorum=gpf.ballot_quorum(self._spec_gpf),
                )
            else:
                gpf.apply_tx(self._spec_gpf, self._spec_gccf, tx, block_number=next_number)
        except ContractRejection as exc:
            raise Rejected(exc.reason) from exc
        seq = self._next_seq[tx.channel]
        self._next_seq[tx.channel] = seq + 1
        self._pending[tx.channel].append(_Pending(seq=seq, arrival_ms=now_ms, tx=tx))
        return seq

    def cut_block(self, channel: Channel, *, now_ms: int, force: bool = False) -> Optional[Block]:
        """Emit the next block when the size or age threshold is reached.

        Transactions keep admission order; never emits an empty block.
        """
        q = self._pending[channel]
        if not q:
            return None
        max_txs = gpf.block_max_txs(self.node.gpf_view)
        timeout = gpf.block_timeout_ms(self.node.gpf_view)
        if not (force or len(q) >= max_txs or now_ms - q[0].arrival_ms >= timeout):
            return None
        batch = [q.popleft() for _ in range(min(max_txs, len(q)))]
        ledger = self.node.ledger(channel)
        return make_block(
            number=ledger.height,
            prev_header_hash=ledger.head_hash(),
            transactions=[p.tx for p in batch],
            creator_cert=self.osp.cert,
            creator_key=self.osp.key,
        )

    def commit_own(self, channel: Channel, block: Block) -> None:
        """The sequencer commits its own cut; speculative state stays valid."""
        self.node.commit_block(channel, block)
