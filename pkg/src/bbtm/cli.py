"""Command-line interface.

``network init`` materializes a deployment directory (keys, consortium
config, the three genesis blocks); the ledger, certificate, policy, and
ballot verbs operate on such a directory as a one-node network, committing
one block per mutating command; ``sim run`` executes scenario files on the
in-process simulator and ``metrics report`` post-processes its report.

Exit codes: 0 success, 1 verification or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys
from dataclasses import dataclass
from typing import Dict

from . import ballot as ballot_mod
from . import gccf, gpf, metrics
from .deployment import (
    DEFAULT_NOT_AFTER,
    DEFAULT_NOT_BEFORE,
    Deployment,
    build_deployment,
    derive_bytes,
    expand_node_counts,
)
from .identity import (
    AuthorityRole,
    CertificateError,
    CertificateRecord,
    Identity,
    Subject,
    UID_LEN,
    canonical_encode,
    cert_from_json,
    cert_to_json,
    decode_certificate,
    dump_json,
    generate_keypair,
    issue_certificate,
    role_of_name,
    sha256,
)
from .ledger import (
    Channel,
    LedgerError,
    decode_chain,
    encode_chain,
    infer_channel,
    replay_from_genesis,
    verify_chain,
)
from .node import BlockRefused, Node
from .ordering import ConsortiumConfig, OrderingService, Rejected
from .simulation import ScenarioConfig, Simulation

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

CONSORTIUM_FILE = "consortium.json"
KEYS_FILE = "keys.json"
SYSTEM_BLOCK_FILE = "system.block"
CHAIN_FILES = {Channel.GCCF: "gccf.chain", Channel.GPF: "gpf.chain"}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAIL):
        super().__init__(message)
        self.code = code


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2))


# ---------------------------------------------------------------- deployment


@dataclass
class CliDeployment:
    path: pathlib.Path
    seed: int
    consortium: ConsortiumConfig
    identities: Dict[str, Identity]
    osp_name: str
    node: Node
    orderer: OrderingService
    validity: tuple

    def identity(self, name: str) -> Identity:
        if name not in self.identities:
            raise CliError(f"unknown identity {name!r} in deployment")
        return self.identities[name]

    def save_chains(self) -> None:
        for channel, filename in CHAIN_FILES.items():
            data = encode_chain(self.node.ledger(channel).blocks)
            (self.path / filename).write_bytes(data)

    def register_extra(self, ident: Identity) -> None:
        self.identities[ident.name] = ident
        keys_path = self.path / KEYS_FILE
        payload = json.loads(keys_path.read_text())
        payload.setdefault("extras", {})[ident.name] = {
            "role": ident.role.value,
            "private": ident.key.private_bytes().hex(),
            "cert": cert_to_json(ident.cert),
        }
        keys_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def submit_and_commit(self, submitter: str, tx) -> int:
        """One-node network turn: admit, force-cut, commit, persist."""
        try:
            self.orderer.submit_tx(tx, now_ms=0)
        except Rejected as exc:
            raise CliError(f"rejected: {exc.reason}") from exc
        block = self.orderer.cut_block(tx.channel, now_ms=0, force=True)
        assert block is not None
        try:
            self.orderer.commit_own(tx.channel, block)
        except BlockRefused as exc:  # pragma: no cover - admission prevents this
            raise CliError(f"commit refused: {exc.reason}") from exc
        self.save_chains()
        return block.header.number


def write_deployment(dep: Deployment, out_dir: pathlib.Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": dep.seed,
        "validity": list(dep.validity),
        "bootstrap": list(dep.gccf_bootstrap_names),
        "deferred": sorted(dep.deferred),
        "config": dep.consortium.to_json(),
    }
    (out_dir / CONSORTIUM_FILE).write_bytes(dump_json(meta))
    keys = {
        "keys": {name: ident.key.private_bytes().hex() for name, ident in dep.identities.items()},
        "extras": {},
    }
    (out_dir / KEYS_FILE).write_bytes(dump_json(keys))
    (out_dir / SYSTEM_BLOCK_FILE).write_bytes(dep.genesis.system_block.encode())
    (out_dir / CHAIN_FILES[Channel.GCCF]).write_bytes(encode_chain([dep.genesis.gccf_genesis]))
    (out_dir / CHAIN_FILES[Channel.GPF]).write_bytes(encode_chain([dep.genesis.gpf_genesis]))


def load_deployment(path_str: str) -> CliDeployment:
    path = pathlib.Path(path_str)
    try:
        meta = json.loads((path / CONSORTIUM_FILE).read_text())
        key_data = json.loads((path / KEYS_FILE).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"not a deployment directory: {exc}") from exc
    config = ConsortiumConfig.from_json(meta["config"])
    identities: Dict[str, Identity] = {}
    osp_name = config.osp_cert.subject_name
    identities[osp_name] = Identity(
        name=osp_name,
        role=AuthorityRole.OSP,
        key=generate_keypair(bytes.fromhex(key_data["keys"][osp_name])),
        cert=config.osp_cert,
    )
    for member in config.members:
        identities[member.name] = Identity(
            name=member.name,
            role=member.role,
            key=generate_keypair(bytes.fromhex(key_data["keys"][member.name])),
            cert=member.cert,
        )
    for name, extra in key_data.get("extras", {}).items():
        identities[name] = Identity(
            name=name,
            role=AuthorityRole(extra["role"]),
            key=generate_keypair(bytes.fromhex(extra["private"])),
            cert=cert_from_json(extra["cert"]),
        )

    node = Node(identities[osp_name])
    chains = {}
    for channel, filename in CHAIN_FILES.items():
        try:
            chains[channel] = decode_chain((path / filename).read_bytes())
        except (OSError, LedgerError) as exc:
            raise CliError(f"cannot load {filename}: {exc}") from exc
    # Certificate history first: policy commits authenticate against it.
    try:
        for block in chains[Channel.GCCF]:
            node.commit_block(Channel.GCCF, block)
        for block in chains[Channel.GPF]:
            node.commit_block(Channel.GPF, block)
    except BlockRefused as exc:
        raise CliError(f"deployment chain does not replay: {exc}") from exc
    orderer = OrderingService(config, identities[osp_name], node)
    return CliDeployment(
        path=path,
        seed=meta["seed"],
        consortium=config,
        identities=identities,
        osp_name=osp_name,
        node=node,
        orderer=orderer,
        validity=tuple(meta.get("validity", (DEFAULT_NOT_BEFORE, DEFAULT_NOT_AFTER))),
    )


def read_cert_file(path_str: str) -> CertificateRecord:
    data = pathlib.Path(path_str).read_bytes()
    try:
        if data.lstrip().startswith(b"{"):
            return cert_from_json(json.loads(data.decode("utf-8")))
        return decode_certificate(data)
    except (CertificateError, ValueError) as exc:
        raise CliError(f"cannot read certificate: {exc}") from exc


# ------------------------------------------------------------------ commands


def cmd_network_init(args) -> int:
    try:
        config = json.loads(pathlib.Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_USAGE) from exc
    if "members" in config:
        members = [(AuthorityRole(m["role"]), m["name"]) for m in config["members"]]
    elif "nodes" in config:
        members = expand_node_counts([(n["role"], n["count"]) for n in config["nodes"]])
    else:
        raise CliError("config needs a 'members' or 'nodes' section", EXIT_USAGE)
    validity = tuple(config.get("validity", (DEFAULT_NOT_BEFORE, DEFAULT_NOT_AFTER)))
    dep = build_deployment(
        int(config["seed"]),
        members,
        {str(k): int(v) for k, v in config.get("policies", {}).items()},
        validity=validity,
        defer_bootstrap=frozenset(config.get("defer_bootstrap", ())),
    )
    write_deployment(dep, pathlib.Path(args.out))
    _print_json(
        {
            "deployment": args.out,
            "members": len(dep.consortium.members),
            "gccf_genesis_txs": len(dep.genesis.gccf_genesis.transactions),
            "gpf_genesis_txs": len(dep.genesis.gpf_genesis.transactions),
        }
    )
    return EXIT_OK


def cmd_sim_run(args) -> int:
    try:
        scenario = json.loads(pathlib.Path(args.scenario).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read scenario: {exc}", EXIT_USAGE) from exc
    if args.seed is not None:
        scenario["seed"] = args.seed
    config = ScenarioConfig.from_json(scenario)
    sim = Simulation(config)
    report = sim.run()
    if args.report:
        pathlib.Path(args.report).write_bytes(report.to_json_bytes())
    if args.out:
        sim.export_ledgers(args.out)
    if args.lifecycles:
        pathlib.Path(args.lifecycles).write_text(metrics.lifecycles_to_csv(report.lifecycles))
    summary = {
        "converged": report.converged,
        "stalled": report.stalled,
        "nodes": len(report.nodes),
        "committed_lifecycles": sum(1 for lc in report.lifecycles if lc.commits),
        "rejections": len(report.rejections),
        "end_ms": report.end_ms,
    }
    try:
        import resource

        # Informational only; never part of the deterministic report file.
        summary["peak_rss_kb"] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    except ImportError:  # pragma: no cover - non-POSIX
        pass
    _print_json(summary)
    return EXIT_OK if report.converged and not report.stalled else EXIT_FAIL


def cmd_ledger_verify(args) -> int:
    try:
        blocks = decode_chain(pathlib.Path(args.file).read_bytes())
        ledger = replay_from_genesis(infer_channel(blocks), blocks)
    except (OSError, LedgerError) as exc:
        print(f"verification failed: {exc}")
        return EXIT_FAIL
    fail_at = verify_chain(ledger)
    if fail_at is None:
        _print_json({"ok": True, "height": ledger.height, "head": ledger.head_hash().hex()})
        return EXIT_OK
    _print_json({"ok": False, "fail_at": fail_at})
    return EXIT_FAIL


def cmd_ledger_export(args) -> int:
    dep = load_deployment(args.deployment)
    channel = Channel(args.channel)
    data = encode_chain(dep.node.ledger(channel).blocks)
    pathlib.Path(args.out).write_bytes(data)
    _print_json({"channel": channel.value, "bytes": len(data), "height": dep.node.ledger(channel).height})
    return EXIT_OK


def cmd_ledger_import(args) -> int:
    try:
        blocks = decode_chain(pathlib.Path(args.file).read_bytes())
    except (OSError, LedgerError) as exc:
        print(f"import failed: {exc}")
        return EXIT_FAIL
    channel = Channel(args.channel) if args.channel else infer_channel(blocks)
    try:
        ledger = replay_from_genesis(channel, blocks)
    except LedgerError as exc:
        print(f"import failed: {exc}")
        return EXIT_FAIL
    fail_at = verify_chain(ledger)
    if fail_at is not None:
        _print_json({"ok": False, "fail_at": fail_at})
        return EXIT_FAIL
    if args.deployment:
        dep_path = pathlib.Path(args.deployment)
        (dep_path / CHAIN_FILES[channel]).write_bytes(encode_chain(blocks))
        load_deployment(args.deployment)  # full contract replay as final gate
    _print_json({"ok": True, "channel": channel.value, "height": ledger.height, "head": ledger.head_hash().hex()})
    return EXIT_OK


def cmd_cert_issue(args) -> int:
    dep = load_deployment(args.deployment)
    subject_name = args.subject
    if role_of_name(subject_name) is None:
        raise CliError(f"subject name {subject_name!r} must start with a role prefix", EXIT_USAGE)
    key = generate_keypair(derive_bytes(dep.seed, f"key:{subject_name}", 32))
    uid = derive_bytes(dep.seed, f"uid:{subject_name}", UID_LEN)
    not_before = args.not_before if args.not_before is not None else dep.validity[0]
    not_after = args.not_after if args.not_after is not None else dep.validity[1]
    serial = derive_bytes(
        dep.seed, f"cli-serial:{subject_name}:{dep.node.ledger(Channel.GCCF).height}", 16
    )
    self_signed = args.issuer == subject_name
    if self_signed and args.issuer not in dep.identities:
        issuer_key, issuer_cert = key, None  # minting a new self-signed record
    else:
        issuer = dep.identity(args.issuer)
        issuer_key = issuer.key
        issuer_cert = None if issuer.cert.subject_unique_id == uid else issuer.cert
    try:
        cert = issue_certificate(
            issuer_key,
            issuer_cert,
            Subject(name=subject_name, public_key=key.public_key, unique_id=uid,
                    not_before=not_before, not_after=not_after),
            now_s=not_before,
            serial=serial,
        )
    except CertificateError as exc:
        raise CliError(str(exc)) from exc
    out = pathlib.Path(args.out)
    out.write_bytes(canonical_encode(cert))
    out.with_suffix(out.suffix + ".json").write_bytes(dump_json(cert_to_json(cert)))
    ident = Identity(name=subject_name, role=role_of_name(subject_name), key=key, cert=cert)
    dep.register_extra(ident)
    result = {"cert": args.out, "serial": cert.serial_number.hex(), "submitted": False}
    if args.submit:
        submitter = dep.identity(args.issuer)
        tx = gccf.make_add_cert_tx(cert, submitter.cert, submitter.key, 0)
        block = dep.submit_and_commit(submitter.name, tx)
        result.update({"submitted": True, "block": block})
    _print_json(result)
    return EXIT_OK


def cmd_cert_validate(args) -> int:
    dep = load_deployment(args.deployment)
    cert = read_cert_file(args.cert)
    at = args.at if args.at is not None else cert.not_before
    result = gccf.validate_cert(dep.node.gccf_view, cert, at)
    _print_json(result.to_json())
    return EXIT_OK if result.ok else EXIT_FAIL


def cmd_gccf_export(args) -> int:
    dep = load_deployment(args.deployment)
    quorum = gpf.ballot_quorum(dep.node.gpf_view)
    snapshot = gccf.export_gccf(dep.node.gccf_view, dep.node.ledger(Channel.GCCF).tip_number, quorum)
    base = pathlib.Path(args.out)
    base.with_suffix(".bin").write_bytes(snapshot.encode())
    base.with_suffix(".json").write_bytes(dump_json(snapshot.to_json()))
    _print_json(
        {
            "version": snapshot.version,
            "certificates": len(snapshot.certificates),
            "ballots": len(snapshot.ballots),
            "files": [str(base.with_suffix(".bin")), str(base.with_suffix(".json"))],
        }
    )
    return EXIT_OK


def _pg_identity(dep: CliDeployment) -> Identity:
    for ident in dep.identities.values():
        if ident.role == AuthorityRole.PG:
            return ident
    raise CliError("deployment has no policy generator")


def cmd_policy_add(args) -> int:
    dep = load_deployment(args.deployment)
    pg = dep.identity(args.by) if args.by else _pg_identity(dep)
    try:
        body = json.loads(args.body) if args.body else {}
    except ValueError as exc:
        raise CliError(f"--body must be JSON: {exc}", EXIT_USAGE) from exc
    record = gpf.PolicyRecord(
        entity=args.entity, rule_name=args.rule, rule_body=body, status=gpf.PolicyStatus.ALIVE
    )
    tx = gpf.make_policy_tx(record, pg.cert, pg.key, 0)
    block = dep.submit_and_commit(pg.name, tx)
    _print_json({"committed": True, "block": block, "record": record.to_json()})
    return EXIT_OK


def cmd_policy_revoke(args) -> int:
    dep = load_deployment(args.deployment)
    pg = dep.identity(args.by) if args.by else _pg_identity(dep)
    tx = gpf.make_revoke_policy_tx(dep.node.gpf_view, args.entity, args.rule, pg.cert, pg.key, 0)
    block = dep.submit_and_commit(pg.name, tx)
    _print_json({"committed": True, "block": block})
    return EXIT_OK


def cmd_policy_get(args) -> int:
    dep = load_deployment(args.deployment)
    record = gpf.get_rule(dep.node.gpf_view, args.entity, args.rule)
    if record is None:
        _print_json({"found": False})
        return EXIT_FAIL
    _print_json({"found": True, "record": record.to_json(), "updated_block": record.updated_block})
    return EXIT_OK


def cmd_ballot_endorse(args) -> int:
    dep = load_deployment(args.deployment)
    elector = dep.identity(args.elector)
    target = read_cert_file(args.target_cert)
    etype = ballot_mod.EndorsementType(args.type)
    try:
        endorsement = ballot_mod.create_endorsement(
            elector.key, elector.cert, etype, target, dep.node.gccf_view
        )
    except ballot_mod.BallotError as exc:
        raise CliError(f"endorsement refused: {exc.reason}") from exc
    tx = ballot_mod.make_endorsement_tx(endorsement, target.serial_number, elector.cert, elector.key, 0)
    block = dep.submit_and_commit(elector.name, tx)
    _print_json(
        {"committed": True, "block": block, "endorsement": ballot_mod.endorsement_to_json(endorsement)}
    )
    return EXIT_OK


def cmd_ballot_tally(args) -> int:
    dep = load_deployment(args.deployment)
    target = read_cert_file(args.target_cert)
    etype = ballot_mod.EndorsementType(args.type)
    quorum = gpf.ballot_quorum(dep.node.gpf_view)
    tally = ballot_mod.tally_ballot(
        dep.node.gccf_view, etype, sha256(canonical_encode(target)), quorum
    )
    _print_json(tally.to_json())
    return EXIT_OK


def cmd_ballot_apply(args) -> int:
    dep = load_deployment(args.deployment)
    elector = dep.identity(args.elector)
    target = read_cert_file(args.target_cert)
    etype = ballot_mod.EndorsementType(args.type)
    quorum = gpf.ballot_quorum(dep.node.gpf_view)
    tally = ballot_mod.tally_ballot(
        dep.node.gccf_view, etype, sha256(canonical_encode(target)), quorum
    )
    try:
        tx = ballot_mod.apply_ballot(dep.node.gccf_view, tally, elector.cert, elector.key, 0)
    except ballot_mod.BallotError as exc:
        raise CliError(f"cannot apply ballot: {exc.reason}") from exc
    block = dep.submit_and_commit(elector.name, tx)
    _print_json({"committed": True, "block": block, "ballot": tally.to_json()})
    return EXIT_OK


def cmd_metrics_report(args) -> int:
    try:
        report_obj = json.loads(pathlib.Path(args.report).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read report: {exc}", EXIT_USAGE) from exc
    lifecycles = [metrics.TxLifecycle.from_json(lc) for lc in report_obj["lifecycles"]]
    ledger_sizes = {k: int(v) for k, v in report_obj.get("ledger_sizes", {}).items()}
    try:
        computed = metrics.compute_metrics(lifecycles, ledger_sizes)
    except metrics.MetricsError as exc:
        raise CliError(str(exc)) from exc
    if args.out:
        metrics.export_report(computed, args.format, args.out)
    if args.format == "csv":
        sys.stdout.write(metrics.report_to_csv(computed))
    else:
        sys.stdout.write(metrics.report_to_json_bytes(computed).decode("utf-8"))
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bbtm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    network = sub.add_parser("network", help="deployment setup").add_subparsers(
        dest="subcommand", required=True
    )
    p = network.add_parser("init", help="create a deployment directory from a genesis config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_network_init)

    sim = sub.add_parser("sim", help="simulator").add_subparsers(dest="subcommand", required=True)
    p = sim.add_parser("run", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--report", help="write the full simulation report JSON here")
    p.add_argument("--out", help="export the sequencer's ledger files to this directory")
    p.add_argument("--lifecycles", help="write per-transaction lifecycle CSV here")
    p.set_defaults(func=cmd_sim_run)

    ledger = sub.add_parser("ledger", help="ledger files").add_subparsers(
        dest="subcommand", required=True
    )
    p = ledger.add_parser("verify", help="verify a ledger file end to end")
    p.add_argument("file")
    p.set_defaults(func=cmd_ledger_verify)
    p = ledger.add_parser("export", help="export a deployment channel to a ledger file")
    p.add_argument("--deployment", required=True)
    p.add_argument("--channel", required=True, choices=[c.value for c in Channel])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ledger_export)
    p = ledger.add_parser("import", help="verify a ledger file and optionally install it")
    p.add_argument("file")
    p.add_argument("--deployment")
    p.add_argument("--channel", choices=[c.value for c in Channel])
    p.set_defaults(func=cmd_ledger_import)

    cert = sub.add_parser("cert", help="certificates").add_subparsers(dest="subcommand", required=True)
    p = cert.add_parser("issue", help="issue a certificate from a deployment identity")
    p.add_argument("--deployment", required=True)
    p.add_argument("--issuer", required=True)
    p.add_argument("--subject", required=True, help="subject name with role prefix, e.g. ICA-9")
    p.add_argument("--not-before", type=int, dest="not_before")
    p.add_argument("--not-after", type=int, dest="not_after")
    p.add_argument("--out", required=True)
    p.add_argument("--submit", action="store_true", help="also commit the record on the chain")
    p.set_defaults(func=cmd_cert_issue)
    p = cert.add_parser("validate", help="validate a certificate against the chain of trust")
    p.add_argument("--deployment", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--at", type=float, help="virtual time in seconds (default: the record's not_before)")
    p.set_defaults(func=cmd_cert_validate)

    gccf_cmd = sub.add_parser("gccf", help="certificate chain file").add_subparsers(
        dest="subcommand", required=True
    )
    p = gccf_cmd.add_parser("export", help="export the chain-file snapshot (binary + JSON)")
    p.add_argument("--deployment", required=True)
    p.add_argument("--out", required=True, help="output base path; .bin and .json are appended")
    p.set_defaults(func=cmd_gccf_export)

    policy = sub.add_parser("policy", help="policy rules").add_subparsers(
        dest="subcommand", required=True
    )
    p = policy.add_parser("add")
    p.add_argument("--deployment", required=True)
    p.add_argument("--entity", required=True)
    p.add_argument("--rule", required=True)
    p.add_argument("--body", help="rule body as a JSON object")
    p.add_argument("--by", help="submitting identity (defaults to the PG)")
    p.set_defaults(func=cmd_policy_add)
    p = policy.add_parser("revoke")
    p.add_argument("--deployment", required=True)
    p.add_argument("--entity", required=True)
    p.add_argument("--rule", required=True)
    p.add_argument("--by")
    p.set_defaults(func=cmd_policy_revoke)
    p = policy.add_parser("get")
    p.add_argument("--deployment", required=True)
    p.add_argument("--entity", required=True)
    p.add_argument("--rule", required=True)
    p.set_defaults(func=cmd_policy_get)

    ballot = sub.add_parser("ballot", help="elector ballots").add_subparsers(
        dest="subcommand", required=True
    )
    for verb, func in (("endorse", cmd_ballot_endorse), ("tally", cmd_ballot_tally), ("apply", cmd_ballot_apply)):
        p = ballot.add_parser(verb)
        p.add_argument("--deployment", required=True)
        p.add_argument("--type", required=True, choices=[t.value for t in ballot_mod.EndorsementType])
        p.add_argument("--target-cert", required=True, dest="target_cert")
        if verb != "tally":
            p.add_argument("--elector", required=True)
        p.set_defaults(func=func)

    met = sub.add_parser("metrics", help="performance reports").add_subparsers(
        dest="subcommand", required=True
    )
    p = met.add_parser("report", help="compute metrics from a simulation report")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (LedgerError, CertificateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
