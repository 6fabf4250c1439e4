"""Run bookkeeping and the four headline metrics.

Every generated transaction ends in exactly one conservation state
(committed, rejected-invalid, dropped-in-transit, or pending-at-end);
the collector enforces single-assignment per transaction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from .engine import US

TxKey = Tuple[int, int]


@dataclass
class MetricsRecord:
    seed: int
    mode: str
    n_uav: int
    malicious_fraction: float
    data_tx_size: int
    adr: Optional[float]                  # None when no attacks were injected
    tbd_mean_s: float
    dec_mean_kj: float
    bto_mean: float
    counters: Dict[str, int]
    committed_keys: FrozenSet[TxKey]
    committed_fingerprint: str
    tbd_samples_s: List[float] = field(repr=False, default_factory=list)

    def csv_row(self) -> Dict[str, str]:
        def fmt(value: float) -> str:
            return f"{value:.6g}"

        return {
            "seed": str(self.seed),
            "mode": self.mode,
            "n_uav": str(self.n_uav),
            "malicious_fraction": fmt(self.malicious_fraction),
            "data_tx_size": str(self.data_tx_size),
            "adr": "na" if self.adr is None else fmt(self.adr),
            "tbd_mean_s": fmt(self.tbd_mean_s),
            "dec_mean_kj": fmt(self.dec_mean_kj),
            "bto_mean": fmt(self.bto_mean),
            "blocks_committed": str(self.counters.get("blocks_committed", 0)),
            "blocks_voided": str(self.counters.get("blocks_voided", 0)),
            "packets_dropped": str(self.counters.get("packets_dropped", 0)),
        }


CSV_COLUMNS = ["seed", "mode", "n_uav", "malicious_fraction", "data_tx_size",
               "adr", "tbd_mean_s", "dec_mean_kj", "bto_mean",
               "blocks_committed", "blocks_voided", "packets_dropped"]


class MetricsCollector:
    def __init__(self) -> None:
        self.counters: Dict[str, int] = {
            "txs_generated": 0,
            "txs_committed": 0,
            "txs_rejected_invalid": 0,
            "txs_dropped_expired": 0,
            "txs_pending_at_end": 0,
            "attacks_injected": 0,
            "attacks_detected": 0,
            "blocks_committed": 0,
            "blocks_voided": 0,
            "packets_dropped": 0,
            "fetch_local": 0,
            "fetch_neighbor": 0,
            "fetch_gcs": 0,
        }
        self._tx_state: Dict[TxKey, str] = {}
        self._tx_created_us: Dict[TxKey, int] = {}
        self.tbd_samples_s: List[float] = []
        self._bto_sum = 0.0
        self._bto_count = 0
        self._committed_keys: Set[TxKey] = set()
        self._committed_digests: List[bytes] = []
        self._attack_detected: Set[int] = set()

    # --- transaction lifecycle ---

    def tx_generated(self, key: TxKey, created_at_us: int) -> None:
        self.counters["txs_generated"] += 1
        self._tx_state[key] = "pending"
        self._tx_created_us[key] = created_at_us

    def _settle(self, key: TxKey, state: str) -> bool:
        if self._tx_state.get(key) != "pending":
            return False
        self._tx_state[key] = state
        return True

    def tx_committed(self, key: TxKey, encoded: bytes, commit_us: int) -> None:
        if not self._settle(key, "committed"):
            return
        self.counters["txs_committed"] += 1
        self._committed_keys.add(key)
        self._committed_digests.append(hashlib.blake2b(encoded, digest_size=16).digest())
        created = self._tx_created_us[key]
        self.tbd_samples_s.append((commit_us - created) / US)

    def tx_rejected(self, key: TxKey) -> None:
        if self._settle(key, "rejected"):
            self.counters["txs_rejected_invalid"] += 1

    def tx_dropped(self, key: TxKey) -> None:
        if self._settle(key, "dropped"):
            self.counters["txs_dropped_expired"] += 1

    # --- attacks ---

    def attack_injected(self) -> int:
        self.counters["attacks_injected"] += 1
        return self.counters["attacks_injected"]

    def attack_detected(self, attack_id: int) -> None:
        if attack_id not in self._attack_detected:
            self._attack_detected.add(attack_id)
            self.counters["attacks_detected"] += 1

    # --- storage overhead ---

    def bto_sample(self, overhead: float) -> None:
        self._bto_sum += overhead
        self._bto_count += 1

    def block_committed(self) -> None:
        self.counters["blocks_committed"] += 1

    def block_voided(self) -> None:
        self.counters["blocks_voided"] += 1

    # --- finalization ---

    def conservation_ok(self) -> bool:
        settled = (self.counters["txs_committed"]
                   + self.counters["txs_rejected_invalid"]
                   + self.counters["txs_dropped_expired"]
                   + self.counters["txs_pending_at_end"])
        return settled == self.counters["txs_generated"]

    def finalize(self, *, seed: int, mode: str, n_uav: int,
                 malicious_fraction: float, data_tx_size: int,
                 consumed_j_per_drone: List[float],
                 packets_dropped: int) -> MetricsRecord:
        self.counters["packets_dropped"] = packets_dropped
        self.counters["txs_pending_at_end"] = sum(
            1 for state in self._tx_state.values() if state == "pending")

        injected = self.counters["attacks_injected"]
        adr = (self.counters["attacks_detected"] / injected) if injected else None
        tbd_mean = (sum(self.tbd_samples_s) / len(self.tbd_samples_s)
                    if self.tbd_samples_s else 0.0)
        dec_mean_kj = (sum(consumed_j_per_drone) / len(consumed_j_per_drone) / 1000.0
                       if consumed_j_per_drone else 0.0)
        bto_mean = self._bto_sum / self._bto_count if self._bto_count else 0.0
        fingerprint = hashlib.blake2b(
            b"".join(sorted(self._committed_digests)), digest_size=16).hexdigest()
        return MetricsRecord(
            seed=seed, mode=mode, n_uav=n_uav,
            malicious_fraction=malicious_fraction, data_tx_size=data_tx_size,
            adr=adr, tbd_mean_s=tbd_mean, dec_mean_kj=dec_mean_kj,
            bto_mean=bto_mean, counters=dict(self.counters),
            committed_keys=frozenset(self._committed_keys),
            committed_fingerprint=fingerprint,
            tbd_samples_s=list(self.tbd_samples_s))
