"""Deterministic protocol laboratory for a parallel multi-miner drone-network
blockchain: wire formats, tiered lightweight crypto, ledgers, the ordered
parallel-mining consensus pipeline, and a discrete-event simulation harness."""

__version__ = "0.1.0"
