"""Authenticated-encryption channel for policy commands.

Only the host-side policy manager and the device share the 32-byte device
key; nothing running with mere OS privileges can mint or alter a command.

Envelope wire format (big-endian), documented for replay tooling:

    u32  body length
    body = nonce(16) || seq(8) || ciphertext || mac(32)

The payload is encrypted with AES-256-CTR and the MAC is HMAC-SHA256 over
everything that precedes it on the wire (length Prefix, nonce, sequence,
ciphertext) — encrypt-then-MAC, and the MAC is always verified before any
other byte of the envelope is interpreted. Flipping any single bit
anywhere in an envelope fails verification. Both directions carry a
monotonically increasing sequence number; a receiver rejects a sequence
number it has already accepted, so captured envelopes cannot be replayed.

Encryption and MAC subkeys are derived from the device key with HMAC so
the two primitives never share key material.
"""

import hmac
import hashlib
import json
import os
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .policy import CommandKind, PolicyCommand, PolicyParams

KEY_LEN = 32
NONCE_LEN = 16
MAC_LEN = 32
SEQ_LEN = 8


class ChannelError(Exception):
    pass


class MalformedPayload(ChannelError):
    """seal() refused the plaintext (empty)."""


class MacVerificationFailed(ChannelError):
    pass


class MalformedPlaintext(ChannelError):
    """Envelope authentic but the decrypted bytes don't decode."""


class ReplayRejected(ChannelError):
    pass


def check_key(key: bytes):
    if not isinstance(key, (bytes, bytearray)) or len(key) != KEY_LEN:
        raise ValueError(f"device key must be {KEY_LEN} bytes")


def _subkeys(key: bytes):
    enc = hmac.new(key, b"vssd-enc", hashlib.sha256).digest()
    mac = hmac.new(key, b"vssd-mac", hashlib.sha256).digest()
    return enc, mac


def _ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    cipher = Cipher(algorithms.AES(key), modes.CTR(nonce))
    enc = cipher.encryptor()
    return enc.update(data) + enc.finalize()


def seal(payload: bytes, key: bytes, seq: int, nonce: Optional[bytes] = None) -> bytes:
    check_key(key)
    if not payload:
        raise MalformedPayload("empty payload")
    if nonce is None:
        nonce = os.urandom(NONCE_LEN)
    if len(nonce) != NONCE_LEN:
        raise ValueError("bad nonce length")
    k_enc, k_mac = _subkeys(key)
    ct = _ctr(k_enc, nonce, payload)
    blen = NONCE_LEN + SEQ_LEN + len(ct) + MAC_LEN
    head = struct.pack(">I", blen) + nonce + struct.pack(">Q", seq) + ct
    tag = hmac.new(k_mac, head, hashlib.sha256).digest()
    return head + tag


def open_envelope(envelope: bytes, key: bytes):
    """Verify and decrypt. Returns (payload, seq). Raises MacVerificationFailed
    on any tamper, truncation or wrong key."""
    check_key(key)
    if len(envelope) < 4 + NONCE_LEN + SEQ_LEN + 1 + MAC_LEN:
        raise MacVerificationFailed("truncated envelope")
    k_enc, k_mac = _subkeys(key)
    tag = envelope[-MAC_LEN:]
    want = hmac.new(k_mac, envelope[:-MAC_LEN], hashlib.sha256).digest()
    if not hmac.compare_digest(tag, want):
        raise MacVerificationFailed("tag mismatch")
    # authenticated from here on; framing problems mean a broken peer
    (blen,) = struct.unpack(">I", envelope[:4])
    if blen != len(envelope) - 4:
        raise MalformedPayload("envelope length field disagrees with size")
    nonce = envelope[4:4 + NONCE_LEN]
    (seq,) = struct.unpack(">Q", envelope[4 + NONCE_LEN:4 + NONCE_LEN + SEQ_LEN])
    ct = envelope[4 + NONCE_LEN + SEQ_LEN:-MAC_LEN]
    return _ctr(k_enc, nonce, ct), seq


class ResponseStatus(Enum):
    SUCCESS = "success"
    DUPLICATE_POLICY = "duplicate-policy"
    NOT_FOUND = "not-found"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class ResponseMessage:
    status: ResponseStatus
    detail: str = ""


# plaintext codec: compact JSON, rejected as MalformedPlaintext if undecodable

def encode_command(cmd: PolicyCommand) -> bytes:
    doc = {"kind": cmd.kind.value, "path": cmd.path}
    if cmd.params is not None:
        doc["rt"] = cmd.params.retention_s
        doc["bc"] = cmd.params.backup_cycle_s
        doc["v"] = cmd.params.max_versions
    return json.dumps(doc, separators=(",", ":")).encode()


def decode_command(raw: bytes) -> PolicyCommand:
    try:
        doc = json.loads(raw.decode())
        kind = CommandKind(doc["kind"])
        params = None
        if kind is not CommandKind.DELETE:
            params = PolicyParams(float(doc["rt"]), float(doc["bc"]), int(doc["v"]))
        return PolicyCommand(kind, doc["path"], params)
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
        raise MalformedPlaintext(str(e))


def encode_response(resp: ResponseMessage) -> bytes:
    return json.dumps({"status": resp.status.value, "detail": resp.detail},
                      separators=(",", ":")).encode()


def decode_response(raw: bytes) -> ResponseMessage:
    try:
        doc = json.loads(raw.decode())
        return ResponseMessage(ResponseStatus(doc["status"]), doc.get("detail", ""))
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
        raise MalformedPlaintext(str(e))


class Endpoint:
    """One side of the channel: owns the key, a send counter and the highest
    sequence number accepted so far."""

    def __init__(self, key: bytes, rng=None):
        check_key(key)
        self._key = bytes(key)
        self._rng = rng            # random.Random for reproducible nonces, else urandom
        self.send_seq = 0
        self.last_accepted = 0     # receive side; sequence numbers start at 1

    def _nonce(self):
        if self._rng is None:
            return os.urandom(NONCE_LEN)
        return self._rng.getrandbits(NONCE_LEN * 8).to_bytes(NONCE_LEN, "big")

    def seal(self, payload: bytes) -> bytes:
        self.send_seq += 1
        return seal(payload, self._key, self.send_seq, self._nonce())

    def open(self, envelope: bytes) -> bytes:
        payload, seq = open_envelope(envelope, self._key)
        if seq <= self.last_accepted:
            raise ReplayRejected(f"seq {seq} already seen")
        self.last_accepted = seq
        return payload

    def to_state(self):
        return {"send_seq": self.send_seq, "last_accepted": self.last_accepted}

    def restore_state(self, state):
        self.send_seq = state["send_seq"]
        self.last_accepted = state["last_accepted"]
