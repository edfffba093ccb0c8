import hashlib
import hmac
import random
import struct

import pytest

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from vssd.channel import (Endpoint, MAC_LEN, MacVerificationFailed,
                          MalformedPayload, MalformedPlaintext, NONCE_LEN,
                          ReplayRejected, ResponseMessage, ResponseStatus,
                          SEQ_LEN, decode_command, decode_response,
                          encode_command, encode_response, open_envelope, seal)
from vssd.policy import CommandKind, PolicyCommand, PolicyParams

KEY = bytes(range(32))
NONCE = bytes(range(16))

# Computed once with the reference construction below and frozen here.
GOLDEN_HEX = (
    "00000046000102030405060708090a0b0c0d0e0f0000000000000007"
    "da9ffa0c6160c68eceaf0ad961f94e8d"
    "71425f2a82c260ff9852ca6d9cbffbe85868b3e396fcfeaee098f5aa0220")


def reference_seal(payload, key, seq, nonce):
    """Independent construction of the wire format, kept deliberately
    separate from the implementation under test."""
    k_enc = hmac.new(key, b"vssd-enc", hashlib.sha256).digest()
    k_mac = hmac.new(key, b"vssd-mac", hashlib.sha256).digest()
    enc = Cipher(algorithms.AES(k_enc), modes.CTR(nonce)).encryptor()
    ct = enc.update(payload) + enc.finalize()
    head = (struct.pack(">I", NONCE_LEN + SEQ_LEN + len(ct) + MAC_LEN)
            + nonce + struct.pack(">Q", seq) + ct)
    return head + hmac.new(k_mac, head, hashlib.sha256).digest()


class TestWireFormat:
    def test_golden_envelope(self):
        env = seal(b"attack at dawn", KEY, 7, NONCE)
        assert env.hex() == GOLDEN_HEX
        assert reference_seal(b"attack at dawn", KEY, 7, NONCE).hex() == GOLDEN_HEX

    def test_roundtrip(self):
        payload, seq = open_envelope(bytes.fromhex(GOLDEN_HEX), KEY)
        assert payload == b"attack at dawn"
        assert seq == 7

    def test_random_roundtrips(self):
        rng = random.Random(1)
        for _ in range(200):
            payload = bytes(rng.randrange(256)
                            for _ in range(rng.randint(1, 300)))
            key = bytes(rng.randrange(256) for _ in range(32))
            nonce = bytes(rng.randrange(256) for _ in range(16))
            seq = rng.randrange(1, 2 ** 63)
            got, got_seq = open_envelope(seal(payload, key, seq, nonce), key)
            assert (got, got_seq) == (payload, seq)

    def test_empty_payload_refused(self):
        with pytest.raises(MalformedPayload):
            seal(b"", KEY, 1, NONCE)

    def test_key_and_nonce_validation(self):
        with pytest.raises(ValueError):
            seal(b"x", b"short", 1, NONCE)
        with pytest.raises(ValueError):
            seal(b"x", KEY, 1, b"short")
        with pytest.raises(ValueError):
            open_envelope(bytes.fromhex(GOLDEN_HEX), b"short")


class TestTamperRejection:
    def test_every_single_bit_flip_fails_verification(self):
        env = bytearray.fromhex(GOLDEN_HEX)
        for byte_i in range(len(env)):
            for bit in range(8):
                env[byte_i] ^= 1 << bit
                with pytest.raises(MacVerificationFailed):
                    open_envelope(bytes(env), KEY)
                env[byte_i] ^= 1 << bit
        # and the pristine copy still opens
        assert open_envelope(bytes(env), KEY)[0] == b"attack at dawn"

    def test_truncation_fails(self):
        env = bytes.fromhex(GOLDEN_HEX)
        for cut in range(len(env)):
            with pytest.raises(MacVerificationFailed):
                open_envelope(env[:cut], KEY)

    def test_extension_fails(self):
        env = bytes.fromhex(GOLDEN_HEX)
        with pytest.raises(MacVerificationFailed):
            open_envelope(env + b"\x00", KEY)

    def test_wrong_key_fails(self):
        env = bytes.fromhex(GOLDEN_HEX)
        other = bytes(32)
        with pytest.raises(MacVerificationFailed):
            open_envelope(env, other)

    def test_authentic_but_inconsistent_length_is_malformed(self):
        # verification order: the MAC is checked before the length field is
        # trusted, so a correctly MACed envelope with a bad length is a
        # broken peer, not an attack
        k_mac = hmac.new(KEY, b"vssd-mac", hashlib.sha256).digest()
        head = struct.pack(">I", 999) + NONCE + struct.pack(">Q", 1) + b"\xee"
        env = head + hmac.new(k_mac, head, hashlib.sha256).digest()
        with pytest.raises(MalformedPayload):
            open_envelope(env, KEY)


class TestEndpoint:
    def make_pair(self):
        return (Endpoint(KEY, rng=random.Random(10)),
                Endpoint(KEY, rng=random.Random(20)))

    def test_command_roundtrip(self):
        a, b = self.make_pair()
        cmd = PolicyCommand(CommandKind.CREATE, "/etc/passwd",
                            PolicyParams(86400.0, 3600.0, 4))
        assert decode_command(b.open(a.seal(encode_command(cmd)))) == cmd

    def test_response_roundtrip(self):
        a, b = self.make_pair()
        resp = ResponseMessage(ResponseStatus.DUPLICATE_POLICY, "already set")
        assert decode_response(a.open(b.seal(encode_response(resp)))) == resp

    def test_replay_of_captured_envelope_rejected(self):
        a, b = self.make_pair()
        env = a.seal(b"one")
        assert b.open(env) == b"one"
        with pytest.raises(ReplayRejected):
            b.open(env)

    def test_stale_sequence_rejected_even_in_fresh_envelope(self):
        a, b = self.make_pair()
        first = a.seal(b"one")
        second = a.seal(b"two")
        assert b.open(second) == b"two"
        with pytest.raises(ReplayRejected):
            b.open(first)

    def test_sequence_numbers_start_at_one_and_climb(self):
        a, _ = self.make_pair()
        _, seq1 = open_envelope(a.seal(b"x"), KEY)
        _, seq2 = open_envelope(a.seal(b"x"), KEY)
        assert (seq1, seq2) == (1, 2)

    def test_state_round_trip(self):
        a, b = self.make_pair()
        b.open(a.seal(b"x"))
        c = Endpoint(KEY)
        c.restore_state(b.to_state())
        assert c.last_accepted == b.last_accepted
        with pytest.raises(ReplayRejected):
            c.open(seal(b"y", KEY, 1, NONCE))


class TestPlaintextCodec:
    def test_delete_has_no_params(self):
        raw = encode_command(PolicyCommand(CommandKind.DELETE, "/a"))
        cmd = decode_command(raw)
        assert cmd.kind is CommandKind.DELETE and cmd.params is None

    def test_garbage_plaintext_is_malformed(self):
        for raw in (b"\xff\xfe", b"{}", b'{"kind":"create"}', b"[]"):
            with pytest.raises(MalformedPlaintext):
                decode_command(raw)
        with pytest.raises(MalformedPlaintext):
            decode_response(b"nope")

    def test_unknown_kind_is_malformed(self):
        with pytest.raises(MalformedPlaintext):
            decode_command(b'{"kind":"explode","path":"/a"}')
