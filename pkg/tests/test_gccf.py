"""Certificate chain contract: add, revoke, validate, snapshot."""

from dataclasses import replace
from random import Random

import pytest

from bbtm import gccf
from bbtm.gccf import (
    GccfView,
    ISSUANCE_MATRIX,
    NotAddingVerify,
    NotRevokingVerify,
    TRUST_ANCHOR_ROLES,
    export_gccf,
    make_add_cert_tx,
    validate_cert,
)
from bbtm.identity import (
    AuthorityRole,
    canonical_encode,
    decode_certificate,
    role_of_name,
    verify_certificate_signature,
)
from bbtm.ledger import TxFunction

from helpers import BIG, Bed, make_identity


def reject_reason(exc_info) -> str:
    return exc_info.value.reason


class TestAddCert:
    def test_committed_rca_adds_ica(self):
        bed = Bed()
        ica2 = make_identity("ICA-2", bed.rca, rng=bed.rng)
        bed.add(ica2.cert, bed.rca)
        entry = bed.view.cert_entry(ica2.cert.subject_unique_id)
        assert entry.function == TxFunction.ADD_CERT
        assert decode_certificate(entry.payload) == ica2.cert

    def test_pca_may_not_issue(self):
        bed = Bed()
        pca = make_identity("PCA-1", bed.ica, rng=bed.rng)
        bed.add(pca.cert, bed.ica)
        ra = make_identity("RA-9", pca, rng=bed.rng)
        with pytest.raises(NotAddingVerify) as exc:
            bed.add(ra.cert, pca)
        assert reject_reason(exc) == "role-violation"

    def test_revoked_issuer_rejected(self):
        bed = Bed()
        bed.revoke(bed.ica.cert)
        # Oracle: latest function for the issuer from a world-state scan.
        latest = bed.view.cert_entry(bed.ica.cert.subject_unique_id).function
        assert latest == TxFunction.REVOKE_CERT
        pca = make_identity("PCA-2", bed.ica, rng=bed.rng)
        with pytest.raises(NotAddingVerify) as exc:
            bed.add(pca.cert, bed.ica)
        assert reject_reason(exc) == "revoked-issuer"

    def test_unknown_issuer_rejected(self):
        bed = Bed()
        ghost = make_identity("ICA-7", bed.rca, rng=bed.rng)  # never committed
        pca = make_identity("PCA-3", ghost, rng=bed.rng)
        with pytest.raises(NotAddingVerify) as exc:
            bed.add(pca.cert, ghost)
        assert reject_reason(exc) == "unknown-issuer"

    def test_duplicate_serial_rejected(self):
        bed = Bed()
        dup = make_identity("MA-1", bed.rca, serial=bed.ica.cert.serial_number, rng=bed.rng)
        with pytest.raises(NotAddingVerify) as exc:
            bed.add(dup.cert, bed.rca)
        assert reject_reason(exc) == "duplicate-serial"

    def test_tampered_payload_rejected(self):
        bed = Bed()
        ma = make_identity("MA-2", bed.rca, rng=bed.rng)
        forged = replace(ma.cert, subject_name="MA-3")
        tx = make_add_cert_tx(forged, bed.rca.cert, bed.rca.key, 0)
        with pytest.raises(NotAddingVerify) as exc:
            gccf.apply_tx(bed.view, tx, block_number=5, quorum=2)
        assert reject_reason(exc) == "bad-signature"

    def test_submitter_must_be_issuer(self):
        bed = Bed()
        ma = make_identity("MA-4", bed.rca, rng=bed.rng)
        tx = make_add_cert_tx(ma.cert, bed.pg.cert, bed.pg.key, 0)
        with pytest.raises(NotAddingVerify) as exc:
            gccf.apply_tx(bed.view, tx, block_number=5, quorum=2)
        assert reject_reason(exc) == "role-violation"

    def test_direct_root_add_needs_ballot(self):
        bed = Bed()
        rca2 = make_identity("RCA-2", rng=bed.rng)
        with pytest.raises(NotAddingVerify) as exc:
            bed.add(rca2.cert, bed.electors[0])
        assert reject_reason(exc) == "role-violation"

    def test_direct_elector_add_needs_ballot(self):
        bed = Bed()
        e4 = make_identity("Elector-4", rng=bed.rng)
        with pytest.raises(NotAddingVerify):
            bed.add(e4.cert, bed.electors[0])


class TestRevokeCert:
    def test_pg_revocation_flips_function(self):
        bed = Bed()
        bed.revoke(bed.ica.cert)
        entry = bed.view.cert_entry(bed.ica.cert.subject_unique_id)
        assert entry.function == TxFunction.REVOKE_CERT
        payload = decode_certificate(entry.payload)
        assert payload.serial_number == bed.ica.cert.serial_number
        # Co-signed: the stored record carries the PG's signature.
        assert verify_certificate_signature(payload, bed.pg.cert.subject_public_key)

    def test_non_pg_revocation_rejected(self):
        bed = Bed()
        ra = make_identity("RA-1", bed.ica, rng=bed.rng)
        bed.add(ra.cert, bed.ica)
        with pytest.raises(NotRevokingVerify) as exc:
            bed.revoke(bed.ica.cert, authorizer=ra)
        assert reject_reason(exc) == "not-PG"

    def test_double_revocation_rejected(self):
        bed = Bed()
        bed.revoke(bed.ica.cert)
        with pytest.raises(NotRevokingVerify) as exc:
            bed.revoke(bed.ica.cert)
        assert reject_reason(exc) == "already-revoked"

    def test_unknown_target_rejected(self):
        bed = Bed()
        ghost = make_identity("MA-9", bed.rca, rng=bed.rng)
        with pytest.raises(NotRevokingVerify) as exc:
            bed.revoke(ghost.cert)
        assert reject_reason(exc) == "unknown-target"

    def test_pg_cannot_revoke_ballot_governed_targets(self):
        bed = Bed()
        with pytest.raises(NotRevokingVerify) as exc:
            bed.revoke(bed.rca.cert)
        assert reject_reason(exc) == "not-PG"


def brute_force_validate(view: GccfView, cert, now_s: float) -> bool:
    """Independent oracle: exhaustive path search over the committed graph.

    Builds the issuer digraph over all committed records (revoked included)
    and searches every simple path from the presented record to any
    self-signed anchor-role record, checking the full rule set on each path.
    """
    committed = {}
    for _uid_hex, record, entry in view.iter_certs():
        committed[record.subject_unique_id] = (record, entry)

    start = committed.get(cert.subject_unique_id)
    if start is None or canonical_encode(start[0]) != canonical_encode(cert):
        return False

    def path_ok(path) -> bool:
        for record, entry in path:
            if entry.function != TxFunction.ADD_CERT:
                return False
            if not (record.not_before <= now_s <= record.not_after):
                return False
        for child, parent in zip(path, path[1:]):
            if not verify_certificate_signature(child[0], parent[0].subject_public_key):
                return False
        last = path[-1][0]
        if not (last.subject_unique_id == last.issuer_unique_id):
            return False
        if role_of_name(last.subject_name) not in TRUST_ANCHOR_ROLES:
            return False
        return verify_certificate_signature(last, last.subject_public_key)

    stack = [[start]]
    while stack:
        path = stack.pop()
        record, _entry = path[-1]
        if record.subject_unique_id == record.issuer_unique_id:
            if path_ok(path):
                return True
            continue
        parent = committed.get(record.issuer_unique_id)
        if parent is None:
            continue
        if any(parent[0].subject_unique_id == r.subject_unique_id for r, _ in path):
            continue
        stack.append(path + [parent])
    return False


def random_cert_world(seed: int, max_certs: int = 30):
    """A random committed certificate DAG with revocations and expiries."""
    rng = Random(seed)
    bed = Bed()
    view = bed.view
    now = 5_000.0
    certs = [bed.rca.cert, bed.ica.cert, bed.pg.cert] + [e.cert for e in bed.electors]
    identities = {c.subject_unique_id: i for c, i in [
        (bed.rca.cert, bed.rca), (bed.ica.cert, bed.ica), (bed.pg.cert, bed.pg),
    ] + [(e.cert, e) for e in bed.electors]}
    n = rng.randint(1, max_certs - len(certs))
    roles_by_issuer = {
        AuthorityRole.RCA: ["ICA", "MA", "PG"],
        AuthorityRole.ICA: ["PCA", "RA", "ECA", "LA"],
        AuthorityRole.ELECTOR: [],
        AuthorityRole.PG: [],
    }
    counter = 0
    for _ in range(n):
        issuer_cert = rng.choice(certs)
        issuer = identities.get(issuer_cert.subject_unique_id)
        if issuer is None:
            continue
        options = roles_by_issuer.get(issuer.role, [])
        if not options:
            continue
        counter += 1
        # A slice of certificates is already expired or not yet valid.
        window = rng.random()
        if window < 0.15:
            nb, na = 0, int(now) - rng.randint(1, 1000)
        elif window < 0.25:
            nb, na = int(now) + rng.randint(1, 1000), BIG
        else:
            nb, na = 0, BIG
        child = make_identity(
            f"{rng.choice(options)}-r{seed}x{counter}", issuer,
            not_before=nb, not_after=na, rng=rng,
        )
        bed.inject_committed(child.cert, block_number=counter)
        certs.append(child.cert)
        identities[child.cert.subject_unique_id] = child
    # Random revocations anywhere in the graph.
    for cert in certs:
        if rng.random() < 0.2:
            entry = view.cert_entry(cert.subject_unique_id)
            view.world[gccf.cert_key(cert.subject_unique_id)] = replace(
                entry, function=TxFunction.REVOKE_CERT
            )
    return bed, certs, now


class TestValidateCert:
    def test_ica_under_root_succeeds(self):
        bed = Bed()
        result = validate_cert(bed.view, bed.ica.cert, now_s=100.0)
        assert result.ok
        assert result.path == (bed.ica.cert.serial_number, bed.rca.cert.serial_number)

    def test_revoked_intermediate_breaks_descendants(self):
        bed = Bed()
        pca = make_identity("PCA-1", bed.ica, rng=bed.rng)
        bed.add(pca.cert, bed.ica)
        bed.revoke(bed.ica.cert)
        result = validate_cert(bed.view, pca.cert, now_s=100.0)
        assert not result.ok and result.reason == "revoked-on-path"
        assert brute_force_validate(bed.view, pca.cert, 100.0) is False

    def test_uncommitted_cert_is_missing_link(self):
        bed = Bed()
        ghost = make_identity("MA-5", bed.rca, rng=bed.rng)
        result = validate_cert(bed.view, ghost.cert, now_s=100.0)
        assert not result.ok and result.reason == "missing-link"

    def test_expired_on_path(self):
        bed = Bed()
        short = make_identity("MA-6", bed.rca, not_before=0, not_after=50, rng=bed.rng)
        bed.add(short.cert, bed.rca)
        assert validate_cert(bed.view, short.cert, now_s=49.0).ok
        result = validate_cert(bed.view, short.cert, now_s=51.0)
        assert not result.ok and result.reason == "expired-on-path"

    def test_forged_signature_on_path(self):
        bed = Bed()
        fake = replace(bed.ica.cert, digital_signature=bytes(64))
        bed.inject_committed(fake, block_number=9)
        result = validate_cert(bed.view, fake, now_s=100.0)
        assert not result.ok and result.reason == "bad-signature"
        assert brute_force_validate(bed.view, fake, 100.0) is False

    def test_self_signed_non_anchor_is_not_trusted(self):
        bed = Bed()
        rogue = make_identity("PCA-9", rng=bed.rng)  # self-signed leaf role
        bed.inject_committed(rogue.cert)
        result = validate_cert(bed.view, rogue.cert, now_s=100.0)
        assert not result.ok and result.reason == "missing-link"
        assert brute_force_validate(bed.view, rogue.cert, 100.0) is False

    @pytest.mark.parametrize("seed", range(60))
    def test_oracle_equivalence_random_worlds(self, seed):
        bed, certs, now = random_cert_world(seed)
        for cert in certs:
            expected = brute_force_validate(bed.view, cert, now)
            assert validate_cert(bed.view, cert, now).ok == expected


class TestAccessMatrixFuzz:
    def test_accepted_adds_always_satisfy_matrix(self):
        rng = Random(31337)
        bed = Bed()
        per_role = {}
        for role in AuthorityRole:
            ident = make_identity(f"{role.value}-77", rng=rng)
            bed.inject_committed(ident.cert)
            per_role[role] = ident
        roles = list(AuthorityRole)
        for trial in range(10_000):
            issuer = per_role[rng.choice(roles)]
            subject_role = rng.choice(roles)
            subject = make_identity(f"{subject_role.value}-f{trial}", issuer, rng=rng)
            tx = make_add_cert_tx(subject.cert, issuer.cert, issuer.key, 0)
            allowed = subject_role in ISSUANCE_MATRIX.get(issuer.role, frozenset())
            ballot_governed = subject_role in (AuthorityRole.ELECTOR, AuthorityRole.RCA)
            try:
                gccf.apply_tx(bed.view.copy(), tx, block_number=3, quorum=2)
                committed = True
            except NotAddingVerify as exc:
                committed = False
                assert exc.reason == "role-violation"
            assert committed == (allowed and not ballot_governed)


class TestMonotoneRevocation:
    def test_revoked_serial_never_returns(self):
        bed = Bed()
        bed.revoke(bed.ica.cert)
        retry = replace(bed.ica.cert)  # same serial, same bytes
        tx = make_add_cert_tx(retry, bed.rca.cert, bed.rca.key, 0)
        with pytest.raises(NotAddingVerify) as exc:
            gccf.apply_tx(bed.view, tx, block_number=9, quorum=2)
        assert reject_reason(exc) == "duplicate-serial"
        assert not validate_cert(bed.view, bed.ica.cert, now_s=10.0).ok


class TestExportSnapshot:
    def test_empty_world_zero_certs_version_zero(self):
        snapshot = export_gccf(GccfView(), tip_number=0)
        assert snapshot.version == 0
        assert snapshot.certificates == ()
        assert snapshot.ballots == ()

    def test_revoked_certificate_excluded(self):
        bed = Bed()
        before = export_gccf(bed.view, tip_number=bed.next_block - 1)
        assert any(c.subject_name == "ICA-1" for c in before.certificates)
        bed.revoke(bed.ica.cert)
        after = export_gccf(bed.view, tip_number=bed.next_block - 1)
        assert not any(c.subject_name == "ICA-1" for c in after.certificates)

    def test_snapshot_is_pure_function_of_state(self):
        a, b = Bed(), Bed()
        snap_a = export_gccf(a.view, tip_number=3)
        snap_b = export_gccf(b.view, tip_number=3)
        assert snap_a.encode() == snap_b.encode()

    def test_certificates_sorted_by_role_then_serial(self):
        bed = Bed()
        snapshot = export_gccf(bed.view, tip_number=3)
        keys = [
            (gccf.ROLE_ORDER[role_of_name(c.subject_name)], c.serial_number)
            for c in snapshot.certificates
        ]
        assert keys == sorted(keys)
