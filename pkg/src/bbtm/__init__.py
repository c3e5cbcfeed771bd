"""Two-channel permissioned ledger for vehicular-PKI trust management.

The package provides the certificate chain channel (GCCF) and policy channel
(GPF) as hash-linked replayable ledgers, smart-contract transitions for the
five ledger functions plus elector ballot voting, a single-sequencer
ordering service, and a deterministic multi-node simulator with a metrics
pipeline.
"""

__version__ = "0.1.0"
