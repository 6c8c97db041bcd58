"""Decentralized telco-resource marketplace, runnable at desk scale.

The package is organized one module per subsystem:

- ``ledger``      permissioned, channel-partitioned, hash-chained replicated log
- ``identity``    DID registry and governed node onboarding
- ``marketplace`` offer / order / contract-state trading APIs over the ledger
- ``contracts``   smart-contract state machine plus the ``scdev`` authoring CLI
- ``discovery``   mixed-data clustering and intent-based offer retrieval
- ``sla``         metric ingestion, rule evaluation, breach prediction, audit
- ``broker``      order-to-controller translation and deployment simulation
- ``node``        per-node composition root: bus, API surface, persistence
- ``harness``     scenario runner and KPI benchmarks over an in-process network

Everything timing-sensitive runs against an injectable clock so multi-node
scenarios are deterministic under a fixed seed.
"""

__version__ = "0.1.0"
