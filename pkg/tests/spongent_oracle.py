"""Bit-level reference model of the SPONGENT-88 and SPONGENT-224 hashes.

This module exists only to generate and defend the pinned digest vectors:
it follows the published construction literally (state as a list of bits,
round-constant LFSR stepped per round, 4-bit S-box on each nibble, the
generalized PRESENT bit permutation, 10* padding) and shares no code with
the production implementation in proactlab.crypto.

Conventions (fixed here and mirrored by the production code):
  * bit 0 of the state is the least-significant ("rightmost") bit;
  * byte i of a byte string maps to state bits 8i..8i+7 (little-endian);
  * the round-constant LFSR value is XORed into the low bits, its
    bit-reversal into the high bits of the state;
  * padding appends 0x80 then zero bytes up to the rate boundary.

The LFSR initial values satisfy the designers' stated property that the
register holds the all-ones state after the final round; see
test_spongent.py::test_lfsr_terminates_all_ones.
"""

SBOX = [0xE, 0xD, 0xB, 0x0, 0x2, 0x1, 0x4, 0xF, 0x7, 0xA, 0x8, 0x5, 0x9, 0xC, 0x3, 0x6]

# state bits, rate bits, digest bits, rounds, LFSR width, LFSR taps, LFSR seed
PARAMS = {
    88: (88, 8, 88, 45, 6, (5, 4), 0x05),
    224: (240, 16, 224, 120, 7, (6, 5), 0x01),
}


def lfsr_sequence(width, taps, seed, rounds):
    """Fibonacci LFSR states used as round constants, one per round."""
    values = []
    state = seed
    mask = (1 << width) - 1
    for _ in range(rounds):
        values.append(state)
        feedback = ((state >> taps[0]) & 1) ^ ((state >> taps[1]) & 1)
        state = ((state << 1) | feedback) & mask
    return values


def bytes_to_bits(data):
    return [(byte >> j) & 1 for byte in data for j in range(8)]


def bits_to_bytes(bits):
    assert len(bits) % 8 == 0
    out = bytearray()
    for i in range(0, len(bits), 8):
        out.append(sum(bits[i + j] << j for j in range(8)))
    return bytes(out)


def permute(state, b, rounds, lfsr_width, lfsr_taps, lfsr_seed):
    constants = lfsr_sequence(lfsr_width, lfsr_taps, lfsr_seed, rounds)
    for rc in constants:
        # counter into the low bits, its bit-reversal into the high bits
        for k in range(lfsr_width):
            bit = (rc >> k) & 1
            state[k] ^= bit
            state[b - 1 - k] ^= bit
        # S-box on every 4-bit nibble (bit 4n is the nibble's LSB)
        for n in range(b // 4):
            val = (state[4 * n]
                   | state[4 * n + 1] << 1
                   | state[4 * n + 2] << 2
                   | state[4 * n + 3] << 3)
            sub = SBOX[val]
            state[4 * n] = sub & 1
            state[4 * n + 1] = (sub >> 1) & 1
            state[4 * n + 2] = (sub >> 2) & 1
            state[4 * n + 3] = (sub >> 3) & 1
        # bit j moves to position j*b/4 mod (b-1); bit b-1 is fixed
        moved = [0] * b
        for j in range(b - 1):
            moved[(j * b // 4) % (b - 1)] = state[j]
        moved[b - 1] = state[b - 1]
        state = moved
    return state


def spongent_oracle(variant, message):
    b, rate, digest_bits, rounds, lw, lt, ls = PARAMS[variant]
    rate_bytes = rate // 8
    padded = bytearray(message)
    padded.append(0x80)
    while len(padded) % rate_bytes:
        padded.append(0x00)

    state = [0] * b
    for off in range(0, len(padded), rate_bytes):
        block_bits = bytes_to_bits(padded[off:off + rate_bytes])
        for k in range(rate):
            state[k] ^= block_bits[k]
        state = permute(state, b, rounds, lw, lt, ls)

    out_bits = []
    while len(out_bits) < digest_bits:
        out_bits.extend(state[:rate])
        if len(out_bits) < digest_bits:
            state = permute(state, b, rounds, lw, lt, ls)
    return bits_to_bytes(out_bits[:digest_bits])
