"""Deterministic consortium construction.

From a seed and a member list this derives every key, unique id, serial,
and certificate, builds the consortium configuration and the three genesis
blocks, and hands back the full credential set.  Identical inputs always
produce byte-identical genesis material, which is what makes simulation
runs and golden-digest tests exact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from random import Random
from typing import Dict, List, Optional, Sequence, Tuple

from . import gpf
from .gccf import make_add_cert_tx
from .gpf import PolicyRecord, PolicyStatus, make_policy_tx
from .identity import (
    AuthorityRole,
    Identity,
    Subject,
    UID_LEN,
    generate_keypair,
    issue_certificate,
)
from .ledger import Transaction
from .ordering import ConsortiumConfig, GenesisBundle, Member, create_genesis

DEFAULT_NOT_BEFORE = 0
DEFAULT_NOT_AFTER = 10_000_000_000  # far beyond any simulated horizon

# Rules understood in the short-form "policies" config section.
KNOWN_RULES = {
    "ballot_quorum": (gpf.RULE_BALLOT_QUORUM, "min_endorsements"),
    "block_max_txs": (gpf.RULE_BLOCK_MAX_TXS, "value"),
    "block_timeout_ms": (gpf.RULE_BLOCK_TIMEOUT_MS, "value"),
}

# Issuer role for each member role when the deployment pre-builds the full
# credential hierarchy.  Electors, the root, and the ordering service are
# self-signed; end entities and configuration managers stay off-chain.
ISSUED_BY = {
    AuthorityRole.ICA: AuthorityRole.RCA,
    AuthorityRole.MA: AuthorityRole.RCA,
    AuthorityRole.PG: AuthorityRole.RCA,
    AuthorityRole.PCA: AuthorityRole.ICA,
    AuthorityRole.RA: AuthorityRole.ICA,
    AuthorityRole.ECA: AuthorityRole.ICA,
    AuthorityRole.LA: AuthorityRole.ICA,
}
SELF_SIGNED_ROLES = frozenset(
    {AuthorityRole.ELECTOR, AuthorityRole.RCA, AuthorityRole.OSP, AuthorityRole.EE, AuthorityRole.DCM}
)


def derive_bytes(seed: int, label: str, n: int) -> bytes:
    out = b""
    counter = 0
    while len(out) < n:
        out += hashlib.sha256(f"{seed}:{label}:{counter}".encode("utf-8")).digest()
        counter += 1
    return out[:n]


def derive_rng(seed: int, label: str) -> Random:
    return Random(int.from_bytes(derive_bytes(seed, label, 8), "big"))


@dataclass
class Deployment:
    seed: int
    consortium: ConsortiumConfig
    identities: Dict[str, Identity]
    osp: Identity
    genesis: GenesisBundle
    gccf_bootstrap_names: Tuple[str, ...]
    validity: Tuple[int, int]
    deferred: frozenset = frozenset()

    def identity(self, name: str) -> Identity:
        return self.identities[name]

    def members_missing_from_genesis(self) -> List[Identity]:
        """Members whose records must still be committed through the chain.

        Deferred members are excluded: their records only enter via ballots.
        """
        out = []
        for name, ident in self.identities.items():
            if ident.role == AuthorityRole.OSP:
                continue
            if name in self.gccf_bootstrap_names or name in self.deferred:
                continue
            if ident.role in (AuthorityRole.EE, AuthorityRole.DCM):
                continue
            if ident.role in (AuthorityRole.ELECTOR, AuthorityRole.RCA):
                continue
            out.append(ident)
        return out


def expand_node_counts(node_counts: Sequence[Tuple[str, int]]) -> List[Tuple[AuthorityRole, str]]:
    """Turn [(role, count), ...] into named members Role-1..Role-n."""
    members = []
    for role_name, count in node_counts:
        role = AuthorityRole(role_name)
        for i in range(1, count + 1):
            members.append((role, f"{role.value}-{i}"))
    return members


def build_deployment(
    seed: int,
    members: Sequence[Tuple[AuthorityRole, str]],
    policies: Optional[Dict[str, int]] = None,
    *,
    validity: Tuple[int, int] = (DEFAULT_NOT_BEFORE, DEFAULT_NOT_AFTER),
    defer_bootstrap: frozenset = frozenset(),
) -> Deployment:
    """Derive the whole consortium from the seed and the member list.

    The certificate-channel genesis commits the elector set, the root, and
    the PG; the policy-channel genesis commits the configured rules.  Every
    other member's record is pre-built here (signed by its proper issuer)
    but committed later through ordinary transactions.
    """
    member_list = list(members)
    names = [name for _role, name in member_list]
    if len(set(names)) != len(names):
        raise ValueError("duplicate member names")
    not_before, not_after = validity
    serial_rng = derive_rng(seed, "serials")

    def make_identity(role: AuthorityRole, name: str, issuer: Optional[Identity]) -> Identity:
        key = generate_keypair(derive_bytes(seed, f"key:{name}", 32))
        subject = Subject(
            name=name,
            public_key=key.public_key,
            unique_id=derive_bytes(seed, f"uid:{name}", UID_LEN),
            not_before=not_before,
            not_after=not_after,
        )
        cert = issue_certificate(
            issuer.key if issuer else key,
            issuer.cert if issuer else None,
            subject,
            now_s=not_before,
            serial=serial_rng.randbytes(16),
        )
        return Identity(name=name, role=role, key=key, cert=cert)

    identities: Dict[str, Identity] = {}
    osp_name = next((n for r, n in member_list if r == AuthorityRole.OSP), "OSP-1")
    osp = make_identity(AuthorityRole.OSP, osp_name, None)

    by_role: Dict[AuthorityRole, List[Identity]] = {}
    # Two passes: self-signed and root-issued first, then the ICA-issued
    # leaf authorities, so every issuer exists before its subjects.
    deferred = []
    for role, name in member_list:
        if role == AuthorityRole.OSP:
            identities[name] = osp
            continue
        if role in SELF_SIGNED_ROLES:
            ident = make_identity(role, name, None)
        elif ISSUED_BY.get(role) == AuthorityRole.RCA:
            rca = by_role.get(AuthorityRole.RCA)
            if not rca:
                raise ValueError(f"{name} requires a root CA member before it")
            ident = make_identity(role, name, rca[0])
        else:
            deferred.append((role, name))
            continue
        identities[name] = ident
        by_role.setdefault(role, []).append(ident)
    for role, name in deferred:
        issuer_role = ISSUED_BY.get(role)
        issuers = by_role.get(issuer_role, [])
        if not issuers:
            raise ValueError(f"{name} requires an {issuer_role.value if issuer_role else '?'} member")
        ident = make_identity(role, name, issuers[0])
        identities[name] = ident
        by_role.setdefault(role, []).append(ident)

    config = ConsortiumConfig(
        osp_cert=osp.cert,
        members=tuple(
            Member(name=i.name, role=i.role, cert=i.cert)
            for i in (identities[n] for n in names)
            if i.role != AuthorityRole.OSP
        ),
    )

    # Bootstrap: electors and root self-submit their records; the root
    # submits the PG's.  Everything is timestamped at virtual time zero.
    bootstrap_names: List[str] = []
    gccf_txs: List[Transaction] = []
    for ident in (identities[n] for n in names):
        if ident.name in defer_bootstrap:
            continue
        if ident.role in (AuthorityRole.ELECTOR, AuthorityRole.RCA):
            gccf_txs.append(make_add_cert_tx(ident.cert, ident.cert, ident.key, 0))
            bootstrap_names.append(ident.name)
    rcas = [i for i in by_role.get(AuthorityRole.RCA, []) if i.name not in defer_bootstrap]
    for ident in (identities[n] for n in names):
        if ident.name in defer_bootstrap:
            continue
        if ident.role == AuthorityRole.PG and rcas:
            gccf_txs.append(make_add_cert_tx(ident.cert, rcas[0].cert, rcas[0].key, 0))
            bootstrap_names.append(ident.name)

    gpf_txs: List[Transaction] = []
    pgs = [identities[n] for n in names if identities[n].role == AuthorityRole.PG]
    if policies and pgs:
        pg = pgs[0]
        for rule, value in sorted(policies.items()):
            if rule in KNOWN_RULES:
                (entity, rule_name), body_key = KNOWN_RULES[rule]
                record = PolicyRecord(
                    entity=entity, rule_name=rule_name, rule_body={body_key: int(value)},
                    status=PolicyStatus.ALIVE,
                )
            else:
                record = PolicyRecord(
                    entity="Consortium", rule_name=rule, rule_body={"value": value},
                    status=PolicyStatus.ALIVE,
                )
            gpf_txs.append(make_policy_tx(record, pg.cert, pg.key, 0))

    genesis = create_genesis(config, gccf_txs, gpf_txs, osp.key)
    return Deployment(
        seed=seed,
        consortium=config,
        identities=identities,
        osp=osp,
        genesis=genesis,
        gccf_bootstrap_names=tuple(bootstrap_names),
        validity=validity,
        deferred=frozenset(defer_bootstrap),
    )
