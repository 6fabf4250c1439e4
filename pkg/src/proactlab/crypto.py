"""Tiered lightweight cryptography: SPONGENT hashes, suite selection, keys.

Two sponge-hash variants back everything else:

  SPONGENT-88   b=88,  rate 8,  capacity 80,  45 rounds,  11-byte digest
  SPONGENT-224  b=240, rate 16, capacity 224, 120 rounds, 28-byte digest

Signing and sealing are deliberately simulation-grade: byte sizes and
processing costs are faithful to the tier (signature = key_bits/4 bytes,
sealing overhead = 8-byte nonce + tag), but confidentiality is enforced by
the key registry's possession lists rather than computational hardness.
Real public-key primitives can be slotted in behind the same suite
interface.

Digest computation is pluggable (`HashBackend`): the `spongent` backend is
the protocol definition; the `simulated` backend produces size-identical
digests at simulation speed for large scenario runs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple


class CryptoError(Exception):
    """Base class for crypto-layer failures."""


class AccessDeniedError(CryptoError):
    """Caller lacks possession of the key needed to open a payload."""


class TamperedError(CryptoError):
    """Sealed payload failed its integrity tag check."""


class UnsupportedTierError(CryptoError):
    """No suite covers the requested (class, mission duration) pair."""


class HashVariant(IntEnum):
    """Hash function identifiers; the value doubles as the wire hash_id."""

    SPONGENT_88 = 1
    SPONGENT_224 = 2


class SecurityClass(IntEnum):
    """Wire security level of a transaction."""

    S1 = 1
    S2_C1 = 2
    S2_C2 = 3


class SecurityLevel(IntEnum):
    """Caller-facing security requirement; the tier is picked by duration."""

    S1 = 1
    S2 = 2


SBOX = (0xE, 0xD, 0xB, 0x0, 0x2, 0x1, 0x4, 0xF, 0x7, 0xA, 0x8, 0x5, 0x9, 0xC, 0x3, 0x6)

# state bits, rate bits, digest bits, rounds, LFSR width, LFSR taps, LFSR seed
_SPONGENT_PARAMS = {
    HashVariant.SPONGENT_88: (88, 8, 88, 45, 6, (5, 4), 0x05),
    HashVariant.SPONGENT_224: (240, 16, 224, 120, 7, (6, 5), 0x01),
}

DIGEST_LEN = {HashVariant.SPONGENT_88: 11, HashVariant.SPONGENT_224: 28}


def _lfsr_states(width: int, taps: Tuple[int, int], seed: int, rounds: int) -> List[int]:
    states = []
    value = seed
    mask = (1 << width) - 1
    for _ in range(rounds):
        states.append(value)
        feedback = ((value >> taps[0]) & 1) ^ ((value >> taps[1]) & 1)
        value = ((value << 1) | feedback) & mask
    return states


def _reverse_bits(value: int, width: int) -> int:
    out = 0
    for _ in range(width):
        out = (out << 1) | (value & 1)
        value >>= 1
    return out


class Spongent:
    """Table-driven SPONGENT permutation and hash.

    The state is held as a little-endian integer: byte 0 of a message or
    digest corresponds to the least-significant state bits.  The S-box and
    bit-permutation layers are fused into one per-byte scatter table.
    """

    def __init__(self, variant: HashVariant, sbox: Sequence[int] = SBOX):
        bits, rate, digest_bits, rounds, lw, lt, ls = _SPONGENT_PARAMS[variant]
        self.variant = variant
        self.state_bytes = bits // 8
        self.rate_bytes = rate // 8
        self.digest_bytes = digest_bits // 8
        sbox8 = [sbox[v & 0xF] | (sbox[v >> 4] << 4) for v in range(256)]
        positions = [j * bits // 4 % (bits - 1) for j in range(bits - 1)] + [bits - 1]
        scatter: List[List[int]] = []
        for i in range(self.state_bytes):
            table = []
            for v in range(256):
                sub = sbox8[v]
                acc = 0
                for j in range(8):
                    if (sub >> j) & 1:
                        acc |= 1 << positions[8 * i + j]
                table.append(acc)
            scatter.append(table)
        self._scatter = scatter
        self._round_consts = [
            rc | (_reverse_bits(rc, lw) << (bits - lw))
            for rc in _lfsr_states(lw, lt, ls, rounds)
        ]

    def permute(self, state: int) -> int:
        n = self.state_bytes
        scatter = self._scatter
        for rc in self._round_consts:
            state ^= rc
            data = state.to_bytes(n, "little")
            acc = 0
            for i in range(n):
                acc |= scatter[i][data[i]]
            state = acc
        return state

    def digest(self, message: bytes) -> bytes:
        rate = self.rate_bytes
        padded = message + b"\x80" + b"\x00" * (-(len(message) + 1) % rate)
        state = 0
        rate_mask = (1 << (8 * rate)) - 1
        for off in range(0, len(padded), rate):
            state ^= int.from_bytes(padded[off:off + rate], "little")
            state = self.permute(state)
        out = bytearray()
        while len(out) < self.digest_bytes:
            out += (state & rate_mask).to_bytes(rate, "little")
            if len(out) < self.digest_bytes:
                state = self.permute(state)
        return bytes(out[: self.digest_bytes])


_INSTANCES: Dict[HashVariant, Spongent] = {}


def spongent(variant: HashVariant, message: bytes) -> bytes:
    """SPONGENT digest of ``message`` under the given variant."""
    inst = _INSTANCES.get(variant)
    if inst is None:
        inst = _INSTANCES[variant] = Spongent(variant)
    return inst.digest(message)


def spongent224(message: bytes) -> bytes:
    return spongent(HashVariant.SPONGENT_224, message)


DigestFn = Callable[[bytes], bytes]


class HashBackend:
    """Pluggable digest provider; digests keep the variant's exact length."""

    name = "abstract"

    def digest(self, variant: HashVariant, message: bytes) -> bytes:
        raise NotImplementedError

    def digest224(self, message: bytes) -> bytes:
        return self.digest(HashVariant.SPONGENT_224, message)


class SpongentBackend(HashBackend):
    name = "spongent"

    def digest(self, variant: HashVariant, message: bytes) -> bytes:
        return spongent(variant, message)


class SimulatedBackend(HashBackend):
    """Size-faithful stand-in used for large simulation runs."""

    name = "simulated"

    def digest(self, variant: HashVariant, message: bytes) -> bytes:
        return hashlib.blake2b(
            message, digest_size=DIGEST_LEN[variant], person=b"sim-spongent"
        ).digest()


SPONGENT_BACKEND = SpongentBackend()
SIMULATED_BACKEND = SimulatedBackend()
_BACKENDS = {b.name: b for b in (SPONGENT_BACKEND, SIMULATED_BACKEND)}


def get_backend(name: str) -> HashBackend:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise CryptoError(f"unknown hash backend {name!r}") from None


@dataclass(frozen=True)
class SuiteCost:
    """Per-suite processing-energy coefficients in microjoules."""

    uj_per_byte: float
    uj_per_op: float


@dataclass(frozen=True)
class CryptoSuite:
    suite_id: int  # doubles as the wire enc_id for sealed transactions
    security_class: SecurityClass
    key_bits: int
    hash_variant: HashVariant
    cost: SuiteCost

    @property
    def signature_len(self) -> int:
        return self.key_bits // 4

    @property
    def tag_len(self) -> int:
        return DIGEST_LEN[self.hash_variant]

    @property
    def enc_par(self) -> str:
        return f"key_bits={self.key_bits}"

    @property
    def hash_par(self) -> str:
        rounds = 45 if self.hash_variant is HashVariant.SPONGENT_88 else 120
        return f"rounds={rounds}"


SUITE_S2_C1 = CryptoSuite(1, SecurityClass.S2_C1, 64, HashVariant.SPONGENT_88, SuiteCost(0.05, 5.0))
SUITE_S2_C2 = CryptoSuite(2, SecurityClass.S2_C2, 128, HashVariant.SPONGENT_88, SuiteCost(0.1, 10.0))
SUITE_S1 = CryptoSuite(3, SecurityClass.S1, 256, HashVariant.SPONGENT_224, SuiteCost(0.4, 40.0))

SUITES_BY_CLASS = {
    SecurityClass.S1: SUITE_S1,
    SecurityClass.S2_C1: SUITE_S2_C1,
    SecurityClass.S2_C2: SUITE_S2_C2,
}

# Temporary-security tier boundaries, in mission seconds.
SHORT_MISSION_MAX_S = 600.0
LONG_MISSION_MAX_S = 3600.0


def select_suite(level: SecurityLevel, mission_duration_s: float) -> CryptoSuite:
    """Pick the cipher/hash tier for a security level and mission length.

    Permanent-security data always gets the 256-bit tier.  Temporary
    security uses the 64-bit tier below ten minutes and the 128-bit tier up
    to one hour; longer missions have no supported tier.
    """
    if level is SecurityLevel.S1:
        return SUITE_S1
    if mission_duration_s <= 0:
        raise UnsupportedTierError("mission duration must be positive for S2")
    if mission_duration_s < SHORT_MISSION_MAX_S:
        return SUITE_S2_C1
    if mission_duration_s <= LONG_MISSION_MAX_S:
        return SUITE_S2_C2
    raise UnsupportedTierError(
        f"no S2 tier covers missions of {mission_duration_s:.0f}s (max {LONG_MISSION_MAX_S:.0f}s)"
    )


def suite_for_class(security_class: SecurityClass) -> CryptoSuite:
    return SUITES_BY_CLASS[security_class]


def _expand(seed: bytes, length: int, digest224: DigestFn) -> bytes:
    """Counter-mode expansion: block 0 is the plain digest, later blocks
    append a 32-bit counter, so outputs up to one digest stay a plain
    truncation."""
    out = bytearray(digest224(seed))
    counter = 1
    while len(out) < length:
        out += digest224(seed + struct.pack("<I", counter))
        counter += 1
    return bytes(out[:length])


def sign(suite: CryptoSuite, creator_public: bytes, digest: bytes,
         digest224: DigestFn = spongent224) -> bytes:
    """Signature = first signature_len bytes of the keyed digest expansion.

    ``digest`` must be the suite-variant hash of the signed content; any
    verifier recomputes with the claimed creator's registered public key.
    """
    return _expand(creator_public + digest, suite.signature_len, digest224)


def verify(suite: CryptoSuite, claimed_creator_public: bytes, digest: bytes,
           signature: bytes, digest224: DigestFn = spongent224) -> bool:
    if len(signature) != suite.signature_len:
        return False
    expected = sign(suite, claimed_creator_public, digest, digest224)
    return expected == signature


NONCE_LEN = 8


def seal(suite: CryptoSuite, recipient_public: bytes, nonce: bytes, plaintext: bytes,
         digest224: DigestFn = spongent224) -> bytes:
    """Seal ``plaintext`` to a public key: nonce || ciphertext || tag."""
    if not plaintext:
        raise CryptoError("cannot seal an empty payload")
    if len(nonce) != NONCE_LEN:
        raise CryptoError(f"nonce must be {NONCE_LEN} bytes")
    stream = _keystream(recipient_public, nonce, len(plaintext), digest224)
    ciphertext = bytes(p ^ s for p, s in zip(plaintext, stream))
    tag = digest224(recipient_public + nonce + ciphertext)[: suite.tag_len]
    return nonce + ciphertext + tag


def open_sealed(suite: CryptoSuite, recipient_public: bytes, sealed: bytes,
                digest224: DigestFn = spongent224) -> bytes:
    """Inverse of seal(); raises TamperedError if the tag does not match."""
    if len(sealed) < NONCE_LEN + 1 + suite.tag_len:
        raise TamperedError("sealed payload too short")
    nonce = sealed[:NONCE_LEN]
    ciphertext = sealed[NONCE_LEN:len(sealed) - suite.tag_len]
    tag = sealed[len(sealed) - suite.tag_len:]
    expected = digest224(recipient_public + nonce + ciphertext)[: suite.tag_len]
    if expected != tag:
        raise TamperedError("sealed payload failed its tag check")
    stream = _keystream(recipient_public, nonce, len(ciphertext), digest224)
    return bytes(c ^ s for c, s in zip(ciphertext, stream))


def sealed_len(suite: CryptoSuite, plaintext_len: int) -> int:
    return NONCE_LEN + plaintext_len + suite.tag_len


def _keystream(public: bytes, nonce: bytes, length: int, digest224: DigestFn) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += digest224(public + nonce + struct.pack("<I", counter))
        counter += 1
    return bytes(out[:length])


PUBLIC_KEY_LEN = 28
PRIVATE_SEED_LEN = 32


@dataclass(frozen=True)
class KeyPair:
    holder: int
    private_seed: bytes
    public_key: bytes


@dataclass
class GroupKey:
    group_id: int
    members: FrozenSet[int]
    pair: KeyPair


class KeyRegistry:
    """Key pairs plus the possession lists that gate open().

    A single-owner payload is openable only by its owner and a CA; a group
    payload only by the group's members and a CA.  Attacker capability is a
    simulation parameter: agents without possession simply may not invoke
    open_for().
    """

    def __init__(self, digest224: DigestFn = spongent224, key_seed: bytes = b""):
        self._digest224 = digest224
        self._key_seed = key_seed
        self._nodes: Dict[int, KeyPair] = {}
        self._cas: set[int] = set()
        self._groups: Dict[FrozenSet[int], GroupKey] = {}
        self._next_group_id = 0x8000_0000

    def _derive_pair(self, holder: int, label: bytes) -> KeyPair:
        seed = hashlib.blake2b(
            self._key_seed + label + struct.pack("<Q", holder),
            digest_size=PRIVATE_SEED_LEN,
        ).digest()
        return KeyPair(holder, seed, self._digest224(seed))

    def register_node(self, node_id: int, is_ca: bool = False) -> KeyPair:
        if node_id in self._nodes:
            raise CryptoError(f"node {node_id} already registered")
        pair = self._derive_pair(node_id, b"node")
        self._nodes[node_id] = pair
        if is_ca:
            self._cas.add(node_id)
        return pair

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def is_ca(self, node_id: int) -> bool:
        return node_id in self._cas

    @property
    def ca_ids(self) -> FrozenSet[int]:
        return frozenset(self._cas)

    def public_key(self, node_id: int) -> bytes:
        try:
            return self._nodes[node_id].public_key
        except KeyError:
            raise CryptoError(f"node {node_id} has no registered key") from None

    def key_pair(self, node_id: int) -> KeyPair:
        return self._nodes[node_id]

    def group_keygen(self, ca_id: int, members: Iterable[int]) -> GroupKey:
        """CA-issued group key pair; every member and the CA may open."""
        member_set = frozenset(members)
        if not member_set:
            raise CryptoError("group must have at least one member")
        if ca_id not in self._cas:
            raise CryptoError(f"node {ca_id} is not a registered CA")
        existing = self._groups.get(member_set)
        if existing is not None:
            return existing
        group_id = self._next_group_id
        self._next_group_id += 1
        group = GroupKey(group_id, member_set, self._derive_pair(group_id, b"group"))
        self._groups[member_set] = group
        return group

    def group_key(self, members: Iterable[int]) -> Optional[GroupKey]:
        return self._groups.get(frozenset(members))

    def sealing_key(self, owners: Sequence[int]) -> KeyPair:
        """Key pair a creator seals to: the owner's for single ownership,
        the group's for shared ownership."""
        if len(owners) == 1:
            return self._nodes[owners[0]]
        group = self._groups.get(frozenset(owners))
        if group is None:
            raise CryptoError(f"no group key registered for members {sorted(owners)}")
        return group.pair

    def may_open(self, agent_id: int, owners: Sequence[int]) -> bool:
        if not owners:
            return True  # public payloads are not sealed
        return agent_id in owners or agent_id in self._cas

    def open_for(self, agent_id: int, suite: CryptoSuite, owners: Sequence[int],
                 sealed: bytes) -> bytes:
        if not self.may_open(agent_id, owners):
            raise AccessDeniedError(
                f"node {agent_id} lacks possession of the key for owners {sorted(owners)}"
            )
        return open_sealed(suite, self.sealing_key(tuple(owners)).public_key,
                           sealed, self._digest224)
