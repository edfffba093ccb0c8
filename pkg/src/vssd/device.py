"""Single-threaded device front end.

One Device owns the flash array, the versioning FTL, the policy table and
the device side of the sealed channel, and serves the six request kinds a
host can queue:

    WRITE lba payload [pbset]     ordinary data path, piggyback optional
    READ lba
    POLICY envelope               sealed command; MAC checked before use
    RECOVER request
    GC now
    STATS

A text serialization of the request surface is provided for replay files:
one request per line, fields space-separated, bytes hex-encoded, e.g.

    WRITE 7 68690a /docs/a.txt:8192
    READ 7
    POLICY 0000004a<hex envelope>
    GC 86400
    STATS

Requests never blindly trust the host: policy envelopes that fail MAC or
replay checks are rejected outright and change nothing.
"""

from dataclasses import dataclass
from typing import Optional

from . import channel
from .channel import Endpoint, ResponseMessage, ResponseStatus
from .flash import FlashDevice, FlashGeometry, Piggyback, Ppa
from .ftl import GcReport, VersionedFtl
from .policy import DuplicatePolicy, PolicyNotFound, PolicyTable
from . import recovery as _recovery


@dataclass(frozen=True)
class DeviceStats:
    geometry: str
    host_pages_written: int
    nand_pages_programmed: int
    gc_invocations: int
    relocations: int
    ov_pages_resident: int
    live_pages: int
    free_pages: int
    erase_total: int
    policies: int
    device_full_events: int

    @property
    def write_amplification(self) -> float:
        if self.host_pages_written == 0:
            return 1.0
        return self.nand_pages_programmed / self.host_pages_written

    def dump_text(self) -> str:
        lines = [f"geometry: {self.geometry}"]
        for name in ("host_pages_written", "nand_pages_programmed",
                     "gc_invocations", "relocations", "ov_pages_resident",
                     "live_pages", "free_pages", "erase_total", "policies",
                     "device_full_events"):
            lines.append(f"{name}: {getattr(self, name)}")
        lines.append(f"write_amplification: {self.write_amplification:.6f}")
        return "\n".join(lines)


class Device:
    def __init__(self, geometry: FlashGeometry = FlashGeometry(), *,
                 key: bytes, uniform_retention_s: Optional[float] = None):
        self.flash = FlashDevice(geometry)
        self.policies = PolicyTable()
        self.ftl = VersionedFtl(self.flash, self.policies, uniform_retention_s)
        self.endpoint = Endpoint(key)

    # data path ---------------------------------------------------------

    def write(self, lba: int, payload: bytes, pbset: Optional[Piggyback],
              now: float) -> Ppa:
        return self.ftl.device_write(lba, payload, pbset, now)

    def read(self, lba: int) -> bytes:
        return self.ftl.device_read(lba)

    # sealed policy path --------------------------------------------------

    def policy_request(self, envelope: bytes, now: float) -> bytes:
        """Open a sealed policy command, apply it, return a sealed response.

        MacVerificationFailed / ReplayRejected raise to the caller: an
        unauthenticated peer gets no sealed answer and the table is
        untouched. Authentic-but-garbled plaintext earns a sealed error.
        """
        payload = self.endpoint.open(envelope)   # may raise, table untouched
        try:
            cmd = channel.decode_command(payload)
        except channel.MalformedPlaintext as e:
            return self.endpoint.seal(channel.encode_response(
                ResponseMessage(ResponseStatus.MALFORMED, str(e))))
        try:
            # watermark the event with the write serial so the entitlement
            # sweep can order it against writes at the same instant
            outcome = self.policies.apply_command(cmd, now,
                                                  stamp=self.ftl.serial)
        except DuplicatePolicy as e:
            return self.endpoint.seal(channel.encode_response(
                ResponseMessage(ResponseStatus.DUPLICATE_POLICY, str(e))))
        except PolicyNotFound as e:
            return self.endpoint.seal(channel.encode_response(
                ResponseMessage(ResponseStatus.NOT_FOUND, str(e))))
        if outcome.purge_path is not None:
            self.ftl.purge_file(outcome.purge_path)
        return self.endpoint.seal(channel.encode_response(
            ResponseMessage(ResponseStatus.SUCCESS)))

    # recovery / maintenance ---------------------------------------------

    def recover(self, request, now: float):
        return _recovery.recover(self.ftl, request, now)

    def gc(self, now: float) -> GcReport:
        return self.ftl.garbage_collect(now)

    def stats(self) -> DeviceStats:
        g = self.flash.geometry
        return DeviceStats(
            geometry=f"{g.blocks}x{g.pages_per_block}x{g.page_size}",
            host_pages_written=self.ftl.host_pages_written,
            nand_pages_programmed=self.flash.programmed_total,
            gc_invocations=self.ftl.gc_invocations,
            relocations=self.ftl.relocations,
            ov_pages_resident=self.ftl.ov_pages_resident(),
            live_pages=self.ftl.live_pages(),
            free_pages=self.ftl.free_pages(),
            erase_total=sum(self.flash.erase_counts),
            policies=len(self.policies),
            device_full_events=self.ftl.device_full_events,
        )


# ---------------------------------------------------------------------------
# replay-file serialization of the request surface


def format_request(kind: str, *fields) -> str:
    return " ".join([kind.upper()] + [str(f) for f in fields])


def format_write(lba: int, payload: bytes, pbset: Optional[Piggyback]) -> str:
    tag = "-" if pbset is None else f"{pbset.path}:{pbset.offset}"
    return format_request("WRITE", lba, payload.hex() or "-", tag)


def parse_request(line: str):
    """Parse one replay line into (kind, args dict). Raises ValueError."""
    parts = line.strip().split()
    if not parts:
        raise ValueError("empty request line")
    kind = parts[0].upper()
    if kind == "WRITE":
        if len(parts) != 4:
            raise ValueError("WRITE lba payloadhex pbset|-")
        lba = int(parts[1])
        payload = b"" if parts[2] == "-" else bytes.fromhex(parts[2])
        pbset = None
        if parts[3] != "-":
            path, _, off = parts[3].rpartition(":")
            pbset = Piggyback(path, int(off))
        return kind, {"lba": lba, "payload": payload, "pbset": pbset}
    if kind == "READ":
        return kind, {"lba": int(parts[1])}
    if kind == "POLICY":
        return kind, {"envelope": bytes.fromhex(parts[1])}
    if kind == "GC":
        return kind, {"now": float(parts[1])}
    if kind == "STATS":
        return kind, {}
    if kind == "RECOVER":
        raise ValueError("RECOVER replay lines are built programmatically")
    raise ValueError(f"unknown request kind {kind!r}")
