"""Simulation agents: control authorities (orderer duty), ground stations,
miner stations, and drones.

All cross-agent interaction is message passing over the network model; no
agent touches another's state directly (the shared key registry is the one
read-mostly exception, standing in for key distribution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .. import consensus, crypto, ledger, txbuild, wire
from ..consensus import (
    AssignMessage,
    BlockAckMessage,
    BlockErrorMessage,
    BlockState,
    CommitVerdict,
    HandoffMessage,
    NbrMessage,
    OrderingState,
    TrustEvent,
    VoidMessage,
    commit_check,
    miner_assemble,
    miner_finalize,
    rotate_bo,
    trust_update,
)
from ..crypto import SUITE_S1
from ..ledger import BraPolicy, DroneLedger, FullLedger, Verdict, check_access
from ..wire import AccessClass, Block, BlockTarget, Transaction

from .energy import EnergyCoefficients, EnergyState
from .engine import to_us
from .netmodel import Link, next_leg

TxKey = Tuple[int, int]


@dataclass
class ReportMeta:
    """Parsed form of a data report (the payload carries the same prefix)."""

    x: float
    y: float
    claims: Tuple[int, ...]
    fabricated: Optional[Tuple[int, float, float]] = None  # site_id, x, y
    attack_id: Optional[int] = None


@dataclass
class FetchRequest:
    requester: int
    key: Optional[TxKey]          # None = newest private transaction
    signature: bytes
    attack_id: Optional[int] = None


@dataclass
class FetchResponse:
    key: Optional[TxKey]
    tx: Optional[Transaction]
    status: str                   # ok | denied | not-found


@dataclass
class Packet:
    kind: str
    src: int
    dst: int
    payload: object
    meta: Optional[dict] = None


def report_payload(drone_id: int, x: float, y: float, claims: Sequence[int],
                   size: int) -> bytes:
    prefix = f"rpt|{drone_id}|{x:.1f}|{y:.1f}|" \
             f"{','.join(str(c) for c in claims)}|".encode()
    if len(prefix) >= size:
        return prefix[:size]
    return prefix + bytes(size - len(prefix))


class World:
    """Shared wiring: engine, links, topology, registry, metrics, rng streams."""

    def __init__(self, cfg, sim, net, topo, registry, backend, metrics, rngs):
        self.cfg = cfg
        self.sim = sim
        self.net = net
        self.topo = topo
        self.registry = registry
        self.backend = backend
        self.metrics = metrics
        self.rngs = rngs
        self.agents: Dict[int, object] = {}
        self.malicious: Set[int] = set()
        self.uavn_suite: Dict[int, crypto.CryptoSuite] = {}
        self.uavn_mission_s: Dict[int, float] = {}
        self.gcs_to_tgcs: Dict[int, int] = {}
        self.sim_end_us = to_us(cfg.sim_duration_s)
        self.n_tgcs = len(topo.tgcs_ids)
        self.quorum = consensus.quorum(self.n_tgcs)
        self.roster: List[Tuple[int, str, str]] = []  # (node_id, role, real id)

    # --- role helpers ---

    def energy_for_drone(self) -> EnergyState:
        cfg = self.cfg
        coeffs = EnergyCoefficients(cfg.e_tx_uj_per_byte, cfg.e_rx_uj_per_byte,
                                    cfg.p_flight_w, cfg.initial_energy_j)
        return EnergyState(coeffs, self.sim_end_us)

    def node_roster(self) -> List[Tuple[int, str, str]]:
        return self.roster

    def is_drone(self, node_id: int) -> bool:
        return node_id in self.topo.drone_uavn

    def workload_open(self) -> bool:
        return self.sim.now_us < self.sim_end_us

    def acting_bo(self) -> int:
        now_s = self.sim.now_us / 1e6
        return rotate_bo(self.topo.ca_ids, now_s, self.cfg.t_bo_s)

    def suite_for_uavn(self, uavn_id: int) -> crypto.CryptoSuite:
        if self.cfg.force_s1:
            return SUITE_S1
        return self.uavn_suite[uavn_id]

    # --- message transport ---

    def send(self, src: int, dst: int, kind: str, payload: object,
             size: int, meta: Optional[dict] = None,
             on_expired=None) -> None:
        packet = Packet(kind, src, dst, payload, meta)
        total = size + self.cfg.packet_overhead_bytes
        self.sim.log(str(src), kind, f"to={dst} bytes={total}")
        if self.is_drone(src) or self.is_drone(dst):
            self._send_wireless(packet, total, on_expired)
        else:
            self._send_on_link(self.net.wired(src, dst), packet, total,
                               on_expired, src_drone=False, dst_drone=False)

    def _wireless_hops(self, src: int, dst: int) -> Optional[List[Tuple[Link, int]]]:
        """Hop plan as (link, receiver) pairs, shortest-hop over the current
        link graph; None when no path exists."""
        topo, cfg, now = self.topo, self.cfg, self.sim.now_us
        if self.is_drone(src) and not self.is_drone(dst):
            gcs = dst
            if topo.distance(src, gcs, now) <= cfg.gcs_range_m:
                return [(self.net.links[f"up:{gcs}"], gcs)]
            relay = self._relay_for(src, gcs)
            if relay is None:
                return None
            mesh = self.net.links[f"mesh:{topo.drone_uavn[src]}"]
            return [(mesh, relay), (self.net.links[f"up:{gcs}"], gcs)]
        if not self.is_drone(src) and self.is_drone(dst):
            gcs = src
            if topo.distance(gcs, dst, now) <= cfg.gcs_range_m:
                return [(self.net.links[f"down:{gcs}"], dst)]
            relay = self._relay_for(dst, gcs)
            if relay is None:
                return None
            mesh = self.net.links[f"mesh:{topo.drone_uavn[dst]}"]
            return [(self.net.links[f"down:{gcs}"], relay), (mesh, dst)]
        # drone to drone within one swarm
        uavn = topo.drone_uavn[src]
        mesh = self.net.links[f"mesh:{uavn}"]
        if topo.distance(src, dst, now) <= cfg.uav_range_m:
            return [(mesh, dst)]
        hop_nodes = self._mesh_route(src, dst)
        if hop_nodes is None:
            return None
        return [(mesh, node) for node in hop_nodes]

    def _relay_for(self, drone: int, gcs: int) -> Optional[int]:
        """First active peer bridging an out-of-range drone to its station."""
        now, cfg, topo = self.sim.now_us, self.cfg, self.topo
        for peer in topo.peers_of_drone(drone):
            if self.agents[peer].energy.active \
                    and topo.distance(drone, peer, now) <= cfg.uav_range_m \
                    and topo.distance(peer, gcs, now) <= cfg.gcs_range_m:
                return peer
        return None

    def _mesh_route(self, src: int, dst: int) -> Optional[List[int]]:
        now, cfg, topo = self.sim.now_us, self.cfg, self.topo
        uavn = topo.uavns[topo.drone_uavn[src]]
        frontier = [src]
        parents = {src: src}
        while frontier:
            nxt: List[int] = []
            for node in frontier:
                for peer in uavn.drone_ids:
                    if peer in parents:
                        continue
                    if topo.distance(node, peer, now) <= cfg.uav_range_m:
                        parents[peer] = node
                        if peer == dst:
                            path = [peer]
                            while parents[path[-1]] != path[-1]:
                                path.append(parents[path[-1]])
                            return list(reversed(path))[1:]
                        nxt.append(peer)
            frontier = nxt
        return None

    def _send_wireless(self, packet: Packet, size: int, on_expired) -> None:
        hops = self._wireless_hops(packet.src, packet.dst)
        if hops is None:
            self.net.packets_dropped += 1
            if on_expired is not None:
                on_expired()
            return
        self._send_hop(packet, size, hops, 0, on_expired)

    def _send_hop(self, packet: Packet, size: int, hops, index: int,
                  on_expired) -> None:
        link, receiver = hops[index]
        sender = packet.src if index == 0 else hops[index - 1][1]
        last = index == len(hops) - 1

        def deliver() -> None:
            if self.is_drone(receiver):
                agent = self.agents[receiver]
                agent.energy.account_rx(size, self.sim.now_us)
                if not agent.energy.active and not last:
                    return
            if last:
                self.agents[packet.dst].on_packet(packet)
            else:
                # the relay pays its transmit cost as the next hop's sender
                self._send_hop(packet, size, hops, index + 1, on_expired)

        self._send_on_link(link, packet, size, on_expired,
                           src_drone=self.is_drone(sender),
                           dst_drone=self.is_drone(receiver),
                           deliver_override=deliver,
                           energy_payer=sender if self.is_drone(sender) else None)

    def _send_on_link(self, link: Link, packet: Packet, size: int, on_expired,
                      src_drone: bool, dst_drone: bool,
                      deliver_override=None, energy_payer: Optional[int] = None,
                      attempt: int = 0) -> None:
        if energy_payer is not None:
            payer = self.agents[energy_payer]
            payer.energy.account_tx(size, self.sim.now_us)
            if not payer.energy.active:
                if on_expired is not None:
                    on_expired()
                return

        def deliver() -> None:
            if deliver_override is not None:
                deliver_override()
                return
            self.agents[packet.dst].on_packet(packet)

        if link.send(self.sim, size, deliver):
            return
        if attempt + 1 <= self.cfg.max_retries:
            delay = to_us(self.cfg.retry_backoff_s * (2 ** attempt))
            self.sim.schedule_in(delay, lambda: self._send_on_link(
                link, packet, size, on_expired, src_drone, dst_drone,
                deliver_override, energy_payer, attempt + 1))
        elif on_expired is not None:
            on_expired()

    def broadcast_tgcs(self, src: int, kind: str, payload: object, size: int,
                       include_bo: bool = False, exclude_self: bool = True) -> None:
        for tgcs in self.topo.tgcs_ids:
            if exclude_self and tgcs == src:
                continue
            self.send(src, tgcs, kind, payload, size)
        if include_bo:
            self.send(src, self.acting_bo(), kind, payload, size)


class DroneAgent:
    def __init__(self, world: World, drone_id: int):
        self.w = world
        self.id = drone_id
        cfg = world.cfg
        self.uavn_id = world.topo.drone_uavn[drone_id]
        self.gcs_id = world.topo.gcs_of_drone(drone_id)
        self.malicious = drone_id in world.malicious
        self.ledger = DroneLedger(drone_id, cfg.drone_capacity_bytes,
                                  BraPolicy(cfg.bra_policy))
        self.energy = world.energy_for_drone()
        self.seq = 0
        self.known_refs: List[TxKey] = []
        self._known_set: Set[TxKey] = set()

    @property
    def suite(self) -> crypto.CryptoSuite:
        return self.w.suite_for_uavn(self.uavn_id)

    def _next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def start(self) -> None:
        cfg, sim = self.w.cfg, self.w.sim
        rng = self.w.rngs["workload"]
        sim.schedule_in(to_us(rng.uniform(0, cfg.t3_interval_s)), self._t3_tick)
        if self.malicious:
            atk = self.w.rngs["attack"]
            sim.schedule_in(to_us(atk.uniform(0, cfg.attack_interval_s)),
                            self._attack_tick)
        if cfg.fetch_interval_s > 0:
            sim.schedule_in(to_us(rng.uniform(0, cfg.fetch_interval_s)),
                            self._fetch_tick)
        self._movement_tick()

    # --- movement ---

    def _movement_tick(self) -> None:
        if not self.w.workload_open() or not self.energy.active:
            return
        arrival = next_leg(self.w.topo, self.id, self.w.sim.now_us,
                           self.w.cfg.uav_speed_min, self.w.cfg.uav_speed_max,
                           self.w.rngs["move"])
        if arrival < self.w.sim_end_us:
            self.w.sim.schedule_at(arrival, self._movement_tick)

    # --- data reports ---

    def _t3_tick(self) -> None:
        if not self.w.workload_open() or not self.energy.active:
            return
        self._send_report(fabricated=None, attack_id=None)
        self.w.sim.schedule_in(to_us(self.w.cfg.t3_interval_s), self._t3_tick)

    def _send_report(self, fabricated, attack_id) -> None:
        cfg = self.w.cfg
        now = self.w.sim.now_us
        x, y = self.w.topo.position(self.id, now)
        claims = list(self.w.topo.truth.observed_from(x, y))
        if fabricated is not None:
            claims.append(fabricated[0])
        payload = report_payload(self.id, x, y, claims, cfg.data_tx_size)
        tx = txbuild.build_transaction(
            creator=self.id, tx_seq=self._next_seq(), created_at_us=now,
            suite=SUITE_S1, access_class=AccessClass.PUBLIC, owners=(),
            block_target=BlockTarget.BLOCK_T2, plaintext=payload,
            registry=self.w.registry, backend=self.w.backend)
        self.energy.account_crypto(SUITE_S1, wire.encoded_tx_size(tx), now)
        self.w.metrics.tx_generated(tx.key(), now)
        meta = {"report": ReportMeta(x, y, tuple(claims), fabricated, attack_id)}
        self.w.send(self.id, self.gcs_id, "tx", tx, wire.encoded_tx_size(tx),
                    meta=meta, on_expired=lambda: self.w.metrics.tx_dropped(tx.key()))

    # --- attacks ---

    def _attack_tick(self) -> None:
        if not self.w.workload_open() or not self.energy.active:
            return
        rng = self.w.rngs["attack"]
        peers = self.w.topo.peers_of_drone(self.id)
        if rng.random() < 0.5 and peers:
            attack_id = self.w.metrics.attack_injected()
            target = rng.choice(peers)
            request = FetchRequest(self.id, None,
                                   ledger.sign_access_request(self.id, 0, 0,
                                                              self.w.registry,
                                                              self.w.backend),
                                   attack_id)
            self.w.send(self.id, target, "fetch-req", request, 96)
        else:
            attack_id = self.w.metrics.attack_injected()
            now = self.w.sim.now_us
            x, y = self.w.topo.position(self.id, now)
            fabricated = (1_000_000 + attack_id, x, y)
            self._send_report(fabricated=fabricated, attack_id=attack_id)
        self.w.sim.schedule_in(to_us(self.w.cfg.attack_interval_s), self._attack_tick)

    # --- stored-chain workload ---

    def _fetch_tick(self) -> None:
        if not self.w.workload_open() or not self.energy.active:
            return
        rng = self.w.rngs["fetch"]
        if self.known_refs:
            key = rng.choice(self.known_refs)
            self.fetch_transaction(key)
        self.w.sim.schedule_in(to_us(self.w.cfg.fetch_interval_s), self._fetch_tick)

    def fetch_transaction(self, key: TxKey) -> None:
        """Serve locally when stored; otherwise ask an in-range neighbor that
        owns it, falling back to the ground station's full chain."""
        if self.ledger.has_tx(key):
            self.w.metrics.counters["fetch_local"] += 1
            return
        now = self.w.sim.now_us
        request = FetchRequest(self.id, key,
                               ledger.sign_access_request(self.id, key[0], key[1],
                                                          self.w.registry, self.w.backend))
        for peer in self.w.topo.peers_of_drone(self.id):
            agent = self.w.agents[peer]
            if agent.ledger.has_tx(key) and \
                    self.w.topo.distance(self.id, peer, now) <= self.w.cfg.uav_range_m:
                self.w.send(self.id, peer, "fetch-req", request, 96)
                return
        self.w.send(self.id, self.gcs_id, "fetch-req", request, 96)

    # --- packet handling ---

    def on_packet(self, packet: Packet) -> None:
        if packet.kind == "block-copy":
            self._store_copy(packet.payload)
        elif packet.kind == "fetch-req":
            self._serve_fetch(packet)
        elif packet.kind == "fetch-resp":
            response: FetchResponse = packet.payload
            if response.status == "ok":
                counter = "fetch_gcs" if packet.src == self.gcs_id else "fetch_neighbor"
                self.w.metrics.counters[counter] += 1

    def _store_copy(self, block: Block) -> None:
        try:
            self.ledger.store_block(block)
        except ledger.LedgerError:
            return
        now = self.w.sim.now_us
        for tx in block.transactions:
            self.w.metrics.bto_sample(txbuild.transaction_overhead(tx))
            if self.id in tx.owners:
                if tx.key() not in self._known_set:
                    self._known_set.add(tx.key())
                    self.known_refs.append(tx.key())
                if tx.access_class is not AccessClass.PUBLIC and \
                        self.w.registry.may_open(self.id, tx.owners):
                    suite = crypto.suite_for_class(tx.security_class)
                    self.energy.account_crypto(suite, len(tx.payload), now)

    def _serve_fetch(self, packet: Packet) -> None:
        request: FetchRequest = packet.payload
        if request.key is None:
            self._serve_private_probe(packet, request)
            return
        tx = self.ledger.find_transaction(request.key)
        if tx is None:
            self._respond_fetch(packet.src, FetchResponse(request.key, None, "not-found"))
            return
        decision = check_access(request.requester, request.signature, tx,
                                self.w.registry, self.w.backend)
        if decision.verdict is Verdict.ALLOW:
            self._respond_fetch(packet.src,
                                FetchResponse(tx.key(), tx, "ok"),
                                size=wire.encoded_tx_size(tx))
        else:
            if not self.malicious:
                self._emit_incident(decision.incident, request.attack_id)
            self._respond_fetch(packet.src, FetchResponse(tx.key(), None, "denied"))

    def _serve_private_probe(self, packet: Packet, request: FetchRequest) -> None:
        """A keyless request asks for this drone's private data; the access
        decision follows ownership, not whether a matching transaction
        happens to be stored right now."""
        registry, backend = self.w.registry, self.w.backend
        digest = backend.digest224(
            ledger.access_request_bytes(request.requester, 0, 0))
        genuine = registry.has_node(request.requester) and crypto.verify(
            crypto.SUITE_S1, registry.public_key(request.requester), digest,
            request.signature, backend.digest224)
        allowed = genuine and (request.requester == self.id
                               or registry.is_ca(request.requester))
        if allowed:
            tx = self._newest_private_tx()
            if tx is None:
                self._respond_fetch(packet.src, FetchResponse(None, None, "not-found"))
            else:
                self._respond_fetch(packet.src, FetchResponse(tx.key(), tx, "ok"),
                                    size=wire.encoded_tx_size(tx))
            return
        reason = "unauthorized-access" if genuine else "forgery"
        incident = ledger.IncidentDraft(request.requester, reason, (self.id, 0))
        if not self.malicious:
            self._emit_incident(incident, request.attack_id)
        self._respond_fetch(packet.src, FetchResponse(None, None, "denied"))

    def _newest_private_tx(self) -> Optional[Transaction]:
        newest: Optional[Transaction] = None
        for block in self.ledger.blocks:
            for tx in block.transactions:
                if self.id in tx.owners and tx.access_class is AccessClass.SINGLE:
                    if newest is None or tx.created_at_us > newest.created_at_us:
                        newest = tx
        return newest

    def _respond_fetch(self, dst: int, response: FetchResponse, size: int = 64) -> None:
        self.w.send(self.id, dst, "fetch-resp", response, size)

    def _emit_incident(self, incident: ledger.IncidentDraft,
                       attack_id: Optional[int]) -> None:
        """Security-incident transaction sealed to this drone's station."""
        cfg = self.w.cfg
        now = self.w.sim.now_us
        body = incident.payload()
        plaintext = body + bytes(max(0, cfg.t4_payload_bytes - len(body)))
        tx = txbuild.build_transaction(
            creator=self.id, tx_seq=self._next_seq(), created_at_us=now,
            suite=self.suite, access_class=AccessClass.SINGLE,
            owners=(self.gcs_id,), block_target=BlockTarget.BLOCK_T1,
            plaintext=plaintext, registry=self.w.registry, backend=self.w.backend)
        self.energy.account_crypto(self.suite, wire.encoded_tx_size(tx), now)
        self.w.metrics.tx_generated(tx.key(), now)
        self.w.send(self.id, self.gcs_id, "tx", tx, wire.encoded_tx_size(tx),
                    meta={"incident_attack_id": attack_id},
                    on_expired=lambda: self.w.metrics.tx_dropped(tx.key()))


@dataclass
class ReportRecord:
    created_us: int
    arrived_us: int
    sender: int
    x: float
    y: float
    claims: Tuple[int, ...]
    legit: bool


@dataclass
class Tally:
    miner: Optional[int] = None
    block: Optional[Block] = None
    acks: Set[int] = field(default_factory=set)
    errors: Set[int] = field(default_factory=set)
    committed: bool = False


class GcsAgent:
    def __init__(self, world: World, gcs_id: int):
        self.w = world
        self.id = gcs_id
        self.ca_id = world.topo.gcs_ca[gcs_id]
        self.ledger = FullLedger(world.backend)
        self.trust = consensus.TrustRecord(0.0)
        self.seq = 0
        self.recent_reports: List[ReportRecord] = []
        self._buffered: Dict[int, Block] = {}

    def _next_seq(self) -> int:
        self.seq += 1
        return self.seq

    @property
    def is_tgcs(self) -> bool:
        return self.id in self.w.topo.tgcs_ids

    def start(self) -> None:
        cfg, sim = self.w.cfg, self.w.sim
        rng = self.w.rngs["workload"]
        sim.schedule_in(to_us(rng.uniform(0, cfg.t1_interval_s)), self._t1_tick)
        sim.schedule_in(to_us(rng.uniform(0, cfg.t2_interval_s)), self._t2_tick)

    # --- workload generation ---

    def _t1_tick(self) -> None:
        if not self.w.workload_open():
            return
        now = self.w.sim.now_us
        for drone in self.w.topo.drones_of_gcs(self.id):
            if not self.w.agents[drone].energy.active:
                continue
            suite = self.w.suite_for_uavn(self.w.topo.drone_uavn[drone])
            tx = txbuild.build_transaction(
                creator=self.id, tx_seq=self._next_seq(), created_at_us=now,
                suite=suite, access_class=AccessClass.SINGLE, owners=(drone,),
                block_target=BlockTarget.BLOCK_T1,
                plaintext=bytes(self.w.cfg.command_payload_bytes),
                registry=self.w.registry, backend=self.w.backend)
            self.w.metrics.tx_generated(tx.key(), now)
            self.intake_tx(tx)
        self.w.sim.schedule_in(to_us(self.w.cfg.t1_interval_s), self._t1_tick)

    def _t2_tick(self) -> None:
        if not self.w.workload_open():
            return
        cfg = self.w.cfg
        rng = self.w.rngs["groups"]
        now = self.w.sim.now_us
        my_uavns = [u for u in self.w.topo.uavns if u.gcs_id == self.id]
        if my_uavns:
            uavn = rng.choice(my_uavns)
            size = min(rng.randint(cfg.group_min, cfg.group_max), len(uavn.drone_ids))
            if size >= 2:
                members = tuple(sorted(rng.sample(uavn.drone_ids, size)))
                self.w.registry.group_keygen(self.ca_id, members)
                suite = self.w.suite_for_uavn(uavn.uavn_id)
                tx = txbuild.build_transaction(
                    creator=self.id, tx_seq=self._next_seq(), created_at_us=now,
                    suite=suite, access_class=AccessClass.GROUP, owners=members,
                    block_target=BlockTarget.BLOCK_T1,
                    plaintext=bytes(cfg.command_payload_bytes),
                    registry=self.w.registry, backend=self.w.backend)
                self.w.metrics.tx_generated(tx.key(), now)
                self.intake_tx(tx)
        self.w.sim.schedule_in(to_us(cfg.t2_interval_s), self._t2_tick)

    # --- transaction intake and detection ---

    def intake_tx(self, tx: Transaction) -> None:
        target = self.w.gcs_to_tgcs[self.id]
        if target == self.id:
            self.w.agents[self.id].miner_intake(tx)
        else:
            self.w.send(self.id, target, "tx-forward", tx, wire.encoded_tx_size(tx))

    def on_packet(self, packet: Packet) -> None:
        if packet.kind == "tx":
            self._on_transaction(packet)
        elif packet.kind == "committed-block":
            self.absorb_committed(packet.payload)
        elif packet.kind == "genesis":
            self.absorb_committed(packet.payload)
        elif packet.kind == "fetch-req":
            self._serve_fetch(packet)
        elif packet.kind == "fetch-resp":
            pass

    def _on_transaction(self, packet: Packet) -> None:
        tx: Transaction = packet.payload
        meta = packet.meta or {}
        now = self.w.sim.now_us
        report: Optional[ReportMeta] = meta.get("report")
        if report is not None:
            legit = packet.src not in self.w.malicious
            record = ReportRecord(tx.created_at_us, now, packet.src,
                                  report.x, report.y, report.claims, legit)
            self._prune_reports(now)
            self.recent_reports.append(record)
            if report.fabricated is not None and \
                    self._detect_false(report, tx.created_at_us):
                self.w.sim.log(str(self.id), "detect-false",
                               f"drone={packet.src} attack={report.attack_id}")
                self.w.metrics.attack_detected(report.attack_id)
                self.w.metrics.tx_rejected(tx.key())
                return
        attack_id = meta.get("incident_attack_id")
        if attack_id is not None:
            self.w.metrics.attack_detected(attack_id)
        if packet.src in self.w.topo.ca_ids:
            trust_update(self.trust, TrustEvent.VALID_FORWARD, now / 1e6,
                         self.w.cfg.trust_params)
        self.intake_tx(tx)

    def _prune_reports(self, now: int) -> None:
        # keep a generous margin beyond the corroboration window; the scan
        # itself filters precisely on creation times
        horizon = now - 3 * to_us(self.w.cfg.w_detect_s)
        self.recent_reports = [r for r in self.recent_reports if r.arrived_us >= horizon]

    def _detect_false(self, report: ReportMeta, created_us: int) -> bool:
        """A fabricated claim is caught when a legitimate drone near the
        claimed location delivered a report (that necessarily lacks the
        fabricated site) generated within the corroboration window before
        the suspect one; only reports already delivered can witness."""
        site_id, sx, sy = report.fabricated
        reach = self.w.cfg.r_detect_m
        window = to_us(self.w.cfg.w_detect_s)
        for record in self.recent_reports:
            if not record.legit:
                continue
            if not 0 <= created_us - record.created_us <= window:
                continue
            if site_id in record.claims:
                continue
            if math.hypot(record.x - sx, record.y - sy) <= reach:
                return True
        return False

    def _serve_fetch(self, packet: Packet) -> None:
        request: FetchRequest = packet.payload
        if request.key is None or not self.ledger.has_tx(request.key):
            self.w.send(self.id, packet.src, "fetch-resp",
                        FetchResponse(request.key, None, "not-found"), 64)
            return
        tx = self.ledger.get_tx(request.key)
        decision = check_access(request.requester, request.signature, tx,
                                self.w.registry, self.w.backend)
        if decision.verdict is Verdict.ALLOW:
            self.w.send(self.id, packet.src, "fetch-resp",
                        FetchResponse(tx.key(), tx, "ok"), wire.encoded_tx_size(tx))
        else:
            self.w.send(self.id, packet.src, "fetch-resp",
                        FetchResponse(tx.key(), None, "denied"), 64)

    # --- chain intake ---

    def absorb_committed(self, block: Block) -> None:
        if block.block_id < self.ledger.next_block_id:
            return
        self._buffered[block.block_id] = block
        while self.ledger.next_block_id in self._buffered:
            ready = self._buffered.pop(self.ledger.next_block_id)
            self.ledger.append_block(ready)
            self.distribute_copies(ready)

    def distribute_copies(self, block: Block) -> None:
        """Send a drone-class block to every owner drone under this station,
        exactly once (each drone belongs to exactly one station)."""
        if block.header.block_type is not BlockTarget.BLOCK_T1:
            return
        owners = ledger.ta_owner_ids(block)
        size = wire.encoded_block_size(block)
        for drone in self.w.topo.drones_of_gcs(self.id):
            if drone in owners:
                self.w.send(self.id, drone, "block-copy", block, size)


class TgcsAgent(GcsAgent):
    """A trusted station: everything a station does, plus mining duty."""

    def __init__(self, world: World, gcs_id: int):
        super().__init__(world, gcs_id)
        self.intake: List[Transaction] = []
        self._intake_keys: Set[TxKey] = set()
        self.pending_unassigned: List[consensus.PendingBlock] = []
        self.pending_assigned: Dict[int, consensus.PendingBlock] = {}
        self.tallies: Dict[int, Tally] = {}
        self._blocks_buffered: Dict[int, Block] = {}
        self._voted: Set[int] = set()
        self._asm_armed = False

    def start(self) -> None:
        super().start()
        self._arm_assembly(self.w.rngs["workload"].uniform(
            0, self.w.cfg.assembly_interval_s))

    def miner_intake(self, tx: Transaction) -> None:
        key = tx.key()
        if key in self._intake_keys or self.ledger.has_tx(key):
            return
        self._intake_keys.add(key)
        self.intake.append(tx)
        self._arm_assembly(self.w.cfg.assembly_interval_s)

    def on_packet(self, packet: Packet) -> None:
        if packet.kind == "tx-forward":
            self.miner_intake(packet.payload)
        elif packet.kind == "assign":
            self._on_assign(packet.payload)
        elif packet.kind == "block":
            self._on_block(packet.payload)
        elif packet.kind == "ack":
            self._on_vote(packet.payload, is_ack=True)
        elif packet.kind == "block-error":
            self._on_vote(packet.payload, is_ack=False)
        elif packet.kind == "void":
            self._on_void(packet.payload)
        else:
            super().on_packet(packet)

    # --- assembly and the id pipeline ---

    def _arm_assembly(self, delay_s: float) -> None:
        if self._asm_armed:
            return
        self._asm_armed = True
        self.w.sim.schedule_in(to_us(delay_s), self._assembly_tick)

    def _assembly_tick(self) -> None:
        self._asm_armed = False
        cfg = self.w.cfg
        backlog = len(self.pending_unassigned) + len(self.pending_assigned)
        if self.intake and backlog < cfg.max_pending_blocks:
            batch, overflow = self._take_batch()
            valid = [tx for tx in batch if self._tx_valid(tx)]
            self.intake = overflow
            self._intake_keys = {tx.key() for tx in overflow}
            new_pending = miner_assemble(self.id, valid, self.w.sim.now_us,
                                         self.w.backend)
            if new_pending:
                self.pending_unassigned.extend(new_pending)
                nbr = NbrMessage(self.id, self.w.sim.now_us, len(new_pending))
                self.w.send(self.id, self.w.acting_bo(), "nbr", nbr,
                            len(nbr.encode()))
        if self.intake or self.w.workload_open():
            self._arm_assembly(cfg.assembly_interval_s)

    def _take_batch(self) -> Tuple[List[Transaction], List[Transaction]]:
        cfg = self.w.cfg
        ordered = sorted(self.intake, key=lambda t: (t.created_at_us, t.creator, t.tx_seq))
        batch: List[Transaction] = []
        sizes = {BlockTarget.BLOCK_T1: 0, BlockTarget.BLOCK_T2: 0}
        counts = {BlockTarget.BLOCK_T1: 0, BlockTarget.BLOCK_T2: 0}
        overflow: List[Transaction] = []
        for tx in ordered:
            size = wire.encoded_tx_size(tx)
            target = tx.block_target
            if counts[target] + 1 > cfg.max_txs_per_block or \
                    sizes[target] + size > cfg.max_block_bytes:
                overflow.append(tx)
            else:
                counts[target] += 1
                sizes[target] += size
                batch.append(tx)
        return batch, overflow

    def _tx_valid(self, tx: Transaction) -> bool:
        if self.ledger.has_tx(tx.key()):
            return False
        if not txbuild.verify_transaction(tx, self.w.registry, self.w.backend):
            self.w.metrics.tx_rejected(tx.key())
            return False
        return True

    def _on_assign(self, message: AssignMessage) -> None:
        for assignment in message.assignments:
            tally = self.tallies.setdefault(assignment.block_id, Tally())
            tally.miner = assignment.tgcs_id
            if assignment.tgcs_id == self.id and self.pending_unassigned:
                pending = self.pending_unassigned.pop(0)
                pending.assign_id(assignment.block_id)
                self.pending_assigned[assignment.block_id] = pending
        self._try_finalize()
        self._check_quorums()

    def _try_finalize(self) -> None:
        next_id = self.ledger.next_block_id
        pending = self.pending_assigned.get(next_id)
        if pending is None or pending.state is not BlockState.AWAITING_PREDECESSOR:
            return
        if next_id == 0:
            return
        predecessor = self.ledger.blocks[next_id - 1]
        block = miner_finalize(pending, predecessor, self.w.backend)
        size = wire.encoded_block_size(block)
        self.w.broadcast_tgcs(self.id, "block", block, size)
        tally = self.tallies.setdefault(block.block_id, Tally())
        tally.miner = self.id
        tally.block = block
        tally.acks.add(self.id)  # the miner's implicit acknowledgment
        # the orderer tracks commits through the vote stream; the miner's
        # own vote must reach it even when no other validators exist
        ack = BlockAckMessage(block.block_id, self.id)
        self.w.send(self.id, self.w.acting_bo(), "ack", ack, len(ack.encode()))
        self._check_quorums()

    # --- validation votes ---

    def _on_block(self, block: Block) -> None:
        if block.block_id < self.ledger.next_block_id:
            return
        self._blocks_buffered[block.block_id] = block
        tally = self.tallies.setdefault(block.block_id, Tally())
        tally.block = block
        tally.miner = block.header.miner
        tally.acks.add(block.header.miner)
        self._vote_ready()
        self._check_quorums()

    def _vote_ready(self) -> None:
        next_id = self.ledger.next_block_id
        block = self._blocks_buffered.get(next_id)
        if block is None or next_id in self._voted:
            return
        issues = ledger.validate_block(next_id, self.ledger.tip_digest, block,
                                       self.w.registry, self.w.backend,
                                       seen_tx=self.ledger.has_tx)
        self._voted.add(next_id)
        if issues:
            vote = BlockErrorMessage(next_id, self.id,
                                     consensus.ERROR_CODES[issues[0].code])
            kind = "block-error"
            self.tallies.setdefault(next_id, Tally()).errors.add(self.id)
        else:
            vote = BlockAckMessage(next_id, self.id)
            kind = "ack"
            self.tallies.setdefault(next_id, Tally()).acks.add(self.id)
        self.w.broadcast_tgcs(self.id, kind, vote, len(vote.encode()),
                              include_bo=True)
        self._check_quorums()

    def _on_vote(self, message, is_ack: bool) -> None:
        tally = self.tallies.setdefault(message.block_id, Tally())
        (tally.acks if is_ack else tally.errors).add(message.tgcs_id)
        if tally.miner is not None:
            tally.acks.add(tally.miner)
        self._check_quorums()

    def _check_quorums(self) -> None:
        while True:
            next_id = self.ledger.next_block_id
            tally = self.tallies.get(next_id)
            if tally is None or tally.committed or tally.block is None:
                return
            verdict = commit_check(len(tally.acks), len(tally.errors), self.w.n_tgcs)
            if verdict is CommitVerdict.COMMITTED:
                self._commit(next_id, tally)
            else:
                return

    def _commit(self, block_id: int, tally: Tally) -> None:
        tally.committed = True
        block = tally.block
        now = self.w.sim.now_us
        self.w.sim.log(str(self.id), "commit",
                       f"block={block_id} miner={block.header.miner} "
                       f"txs={len(block.transactions)}")
        self.ledger.append_block(block)
        self._blocks_buffered.pop(block_id, None)
        trust_update(self.trust, TrustEvent.VALID_BLOCK_PARTICIPATION, now / 1e6,
                     self.w.cfg.trust_params)
        if block.header.miner == self.id:
            self.w.metrics.block_committed()
            for tx in block.transactions:
                self.w.metrics.tx_committed(tx.key(), wire.encode_transaction(tx), now)
            self.pending_assigned.pop(block_id, None)
            size = wire.encoded_block_size(block)
            for gcs in self.w.topo.gcs_ids:
                if gcs not in self.w.topo.tgcs_ids:
                    self.w.send(self.id, gcs, "committed-block", block, size)
        self.distribute_copies(block)
        self._try_finalize()
        self._vote_ready()

    # --- void recovery ---

    def _on_void(self, message: VoidMessage) -> None:
        if message.block_id < self.ledger.next_block_id:
            return  # stale: that id already committed here
        voided = self.pending_assigned.pop(message.block_id, None)
        if voided is not None:
            voided.advance(BlockState.VOIDED)
            # the transactions must be re-requested under a fresh id
            for tx in voided.transactions:
                if tx.key() not in self._intake_keys and not self.ledger.has_tx(tx.key()):
                    self._intake_keys.add(tx.key())
                    self.intake.append(tx)
            self._arm_assembly(0.0)
        renumbered: Dict[int, consensus.PendingBlock] = {}
        for bid, pending in sorted(self.pending_assigned.items()):
            if bid > message.block_id:
                pending.block_id = bid - 1
                renumbered[bid - 1] = pending
            else:
                renumbered[bid] = pending
        self.pending_assigned = renumbered
        for bid in sorted(self.tallies):
            if bid > message.block_id and not self.tallies[bid].committed:
                self.tallies[bid - 1] = self.tallies.pop(bid)
        self._try_finalize()


class CaAgent:
    def __init__(self, world: World, ca_id: int):
        self.w = world
        self.id = ca_id
        self.seq = 0
        self.ordering: Optional[OrderingState] = None
        self.tallies: Dict[int, Tally] = {}
        self._window_armed = False
        self._void_armed: Set[int] = set()
        self._nbr_stash: List[NbrMessage] = []  # requests awaiting handoff

    def _next_seq(self) -> int:
        self.seq += 1
        return self.seq

    @property
    def my_gcs_ids(self) -> List[int]:
        return [g for g in self.w.topo.gcs_ids if self.w.topo.gcs_ca[g] == self.id]

    def start(self) -> None:
        cfg, sim = self.w.cfg, self.w.sim
        sim.schedule_in(to_us(self.w.rngs["workload"].uniform(0, cfg.t5_interval_s)),
                        self._t5_tick)
        if self.w.acting_bo() == self.id:
            self.ordering = OrderingState(next_block_id=1,
                                          sequential=cfg.mode == "sequential")
            self._emit_genesis()
            self._arm_window()
        if len(self.w.topo.ca_ids) > 1:
            sim.schedule_at(to_us(cfg.t_bo_s), self._rotation_tick)

    # --- genesis ---

    def _emit_genesis(self) -> None:
        txs = []
        for node_id, role, real in self.w.node_roster():
            public = self.w.registry.public_key(node_id)
            payload = txbuild.registration_payload(node_id, role, real, public)
            txs.append(txbuild.build_transaction(
                creator=self.id, tx_seq=self._next_seq(), created_at_us=0,
                suite=SUITE_S1, access_class=AccessClass.PUBLIC, owners=(),
                block_target=BlockTarget.BLOCK_T2, plaintext=payload,
                registry=self.w.registry, backend=self.w.backend))
        genesis = wire.build_block(0, BlockTarget.BLOCK_T2, self.id, 0,
                                   consensus.genesis_prev_hash(), txs,
                                   self.w.backend.digest224)
        size = wire.encoded_block_size(genesis)
        for gcs in self.w.topo.gcs_ids:
            self.w.send(self.id, gcs, "genesis", genesis, size)

    # --- authority commands ---

    def _t5_tick(self) -> None:
        if not self.w.workload_open():
            return
        now = self.w.sim.now_us
        for gcs in self.my_gcs_ids:
            tx = txbuild.build_transaction(
                creator=self.id, tx_seq=self._next_seq(), created_at_us=now,
                suite=SUITE_S1, access_class=AccessClass.SINGLE, owners=(gcs,),
                block_target=BlockTarget.BLOCK_T2,
                plaintext=bytes(self.w.cfg.command_payload_bytes),
                registry=self.w.registry, backend=self.w.backend)
            self.w.metrics.tx_generated(tx.key(), now)
            self.w.send(self.id, gcs, "tx", tx, wire.encoded_tx_size(tx))
        self.w.sim.schedule_in(to_us(self.w.cfg.t5_interval_s), self._t5_tick)

    # --- orderer duty ---

    def _arm_window(self) -> None:
        if self._window_armed or self.ordering is None:
            return
        self._window_armed = True
        self.w.sim.schedule_in(to_us(self.w.cfg.t_bis_s), self._window_tick)

    def _window_tick(self) -> None:
        self._window_armed = False
        if self.ordering is None:
            return
        assignments = self.ordering.window_close()
        if assignments:
            message = AssignMessage(tuple(assignments))
            for tgcs in self.w.topo.tgcs_ids:
                self.w.send(self.id, tgcs, "assign", message, len(message.encode()))
            for assignment in assignments:
                self.tallies.setdefault(assignment.block_id,
                                        Tally()).miner = assignment.tgcs_id
                self._maybe_arm_void(assignment.block_id)
        if self.w.workload_open() or self.ordering.pending or self.ordering.assignments:
            self._arm_window()

    def on_packet(self, packet: Packet) -> None:
        if packet.kind == "nbr":
            if self.ordering is not None:
                self.ordering.receive_nbr(packet.payload)
                self._arm_window()
            elif self.w.acting_bo() == self.id:
                # duty has rotated here but the state is still in flight
                self._nbr_stash.append(packet.payload)
            else:
                self.w.send(self.id, self.w.acting_bo(), "nbr", packet.payload,
                            len(packet.payload.encode()))
        elif packet.kind == "ack":
            self._on_vote(packet.payload, is_ack=True)
        elif packet.kind == "block-error":
            self._on_vote(packet.payload, is_ack=False)
        elif packet.kind == "bo-handoff":
            self.ordering = OrderingState.decode(packet.payload.state_bytes)
            for nbr in self._nbr_stash:
                self.ordering.receive_nbr(nbr)
            self._nbr_stash.clear()
            self._arm_window()

    def _on_vote(self, message, is_ack: bool) -> None:
        tally = self.tallies.setdefault(message.block_id, Tally())
        (tally.acks if is_ack else tally.errors).add(message.tgcs_id)
        if tally.miner is not None:
            tally.acks.add(tally.miner)
        if tally.committed:
            return
        verdict = commit_check(len(tally.acks), len(tally.errors), self.w.n_tgcs)
        if verdict is CommitVerdict.COMMITTED:
            tally.committed = True
            if self.ordering is not None:
                self.ordering.on_commit(message.block_id)
                self._maybe_arm_void(message.block_id + 1)
                self._arm_window()
        elif verdict is CommitVerdict.REJECTED and self.ordering is not None:
            self._void(message.block_id)

    def _maybe_arm_void(self, block_id: int) -> None:
        """Watch an assignment whose predecessor has committed; if it fails
        to commit within the finalize timeout it is voided."""
        if self.ordering is None or block_id not in self.ordering.assignments:
            return
        if self.ordering.committed_watermark != block_id - 1:
            return
        if block_id in self._void_armed:
            return
        self._void_armed.add(block_id)
        self.w.sim.schedule_in(to_us(self.w.cfg.t_blk_s),
                               lambda: self._void_check(block_id))

    def _void_check(self, block_id: int) -> None:
        self._void_armed.discard(block_id)
        if self.ordering is None:
            return
        if block_id in self.ordering.assignments and \
                self.ordering.committed_watermark == block_id - 1:
            self._void(block_id)

    def _void(self, block_id: int) -> None:
        if self.ordering.apply_void(block_id) is None:
            return
        self.w.metrics.block_voided()
        message = VoidMessage(block_id)
        for tgcs in self.w.topo.tgcs_ids:
            self.w.send(self.id, tgcs, "void", message, len(message.encode()))
        for bid in sorted(self.tallies):
            if bid > block_id and not self.tallies[bid].committed:
                self.tallies[bid - 1] = self.tallies.pop(bid)
        self._arm_window()

    # --- rotation ---

    def _rotation_tick(self) -> None:
        now_s = self.w.sim.now_us / 1e6
        acting = self.w.acting_bo()
        if self.ordering is not None and acting != self.id:
            handoff = HandoffMessage(self.ordering.encode())
            self.w.send(self.id, acting, "bo-handoff", handoff,
                        len(handoff.encode()))
            self.ordering = None
        if self.w.workload_open():
            next_boundary = (int(now_s // self.w.cfg.t_bo_s) + 1) * self.w.cfg.t_bo_s
            self.w.sim.schedule_at(to_us(next_boundary), self._rotation_tick)
