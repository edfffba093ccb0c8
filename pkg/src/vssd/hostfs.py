"""Host filesystem shim: page-granular files over the device, with the
piggyback tagging a cooperating kernel would do — and the switchboard an
attacker with host privileges could flip.

Each (path, file offset) extent maps to one logical block address, chosen
monotonically and never reused, so a path's extents are stable for the
life of the simulation. Every benign write sends the device a piggyback
tag (path, offset); the interpose flags simulate host-level compromise:

    drop_pbset              writes go out untagged (device sees no policy)
    tamper_payload          page contents corrupted in transit
    tamper_lba              write redirected to a neighboring block address
    tamper_policy_envelope  sealed policy traffic gets one bit flipped

None of these touch the device key: host compromise can mangle traffic
but cannot mint authentic policy commands.
"""

from dataclasses import dataclass
from typing import Optional

from .flash import Piggyback


class HostFsError(Exception):
    pass


class UnknownFile(HostFsError):
    pass


class HoleRead(HostFsError):
    pass


class FsCorrupted(HostFsError):
    pass


class UnalignedIo(HostFsError):
    pass


@dataclass
class InterposeConfig:
    drop_pbset: bool = False
    tamper_payload: bool = False
    tamper_lba: bool = False
    tamper_policy_envelope: bool = False


class FileTable:
    """path -> ordered extents. Allocation is monotone; nothing is reused."""

    def __init__(self):
        self._extents = {}    # path -> {offset: lba}
        self._next_lba = 0

    def lba_for(self, path: str, offset: int, allocate: bool):
        ext = self._extents.setdefault(path, {})
        lba = ext.get(offset)
        if lba is None:
            if not allocate:
                return None
            lba = self._next_lba
            self._next_lba += 1
            ext[offset] = lba
        return lba

    def extents(self, path: str):
        ext = self._extents.get(path)
        if ext is None:
            return []
        return sorted(ext.items())

    def knows(self, path: str) -> bool:
        return path in self._extents

    def paths(self):
        return sorted(self._extents)

    def to_state(self):
        return {"next_lba": self._next_lba,
                "extents": {p: sorted(e.items()) for p, e in self._extents.items()}}

    @classmethod
    def from_state(cls, state):
        t = cls()
        t._next_lba = state["next_lba"]
        t._extents = {p: {off: lba for off, lba in pairs}
                      for p, pairs in state["extents"].items()}
        return t


class HostFs:
    def __init__(self, device, interpose: Optional[InterposeConfig] = None):
        self.device = device
        self.table = FileTable()
        self.interpose = interpose or InterposeConfig()
        self.metadata_corrupted = False

    @property
    def page_size(self):
        return self.device.flash.geometry.page_size

    def _check_aligned(self, offset: int, length: int):
        ps = self.page_size
        if offset < 0 or offset % ps:
            raise UnalignedIo(f"offset {offset} not page aligned")
        if length <= 0 or length % ps:
            raise UnalignedIo(f"length {length} not a page multiple")

    # ------------------------------------------------------------------

    def fs_write(self, path: str, offset: int, data: bytes, now: float):
        """Page-aligned write-through. Returns the LBAs written, in order."""
        self._check_aligned(offset, len(data))
        ps = self.page_size
        lbas = []
        for i in range(0, len(data), ps):
            page_off = offset + i
            chunk = data[i:i + ps]
            lba = self.table.lba_for(path, page_off, allocate=True)
            send_lba = lba
            if self.interpose.tamper_lba:
                send_lba = lba + 1
            send_chunk = chunk
            if self.interpose.tamper_payload:
                send_chunk = bytes(b ^ 0x5A for b in chunk)
            pbset = None if self.interpose.drop_pbset else Piggyback(path, page_off)
            self.device.write(send_lba, send_chunk, pbset, now)
            lbas.append(send_lba)
        return lbas

    def fs_read(self, path: str, offset: int, length: int) -> bytes:
        self._check_aligned(offset, length)
        if not self.table.knows(path):
            raise UnknownFile(path)
        ps = self.page_size
        out = []
        for i in range(0, length, ps):
            lba = self.table.lba_for(path, offset + i, allocate=False)
            if lba is None:
                raise HoleRead(f"{path} offset {offset + i}")
            try:
                out.append(self.device.read(lba))
            except Exception:
                raise HoleRead(f"{path} offset {offset + i}: no device data")
        return b"".join(out)

    def get_lba_list(self, path: str):
        """[(offset, lba)] for the recovery ioctl. Empty when the path is
        unknown; FsCorrupted once filesystem metadata is gone (attack 4)."""
        if self.metadata_corrupted:
            raise FsCorrupted("file metadata unavailable")
        return self.table.extents(path)

    def submit_policy(self, envelope: bytes, now: float) -> bytes:
        """Route a sealed policy command to the device, through whatever a
        compromised host would do to it."""
        if self.interpose.tamper_policy_envelope and len(envelope) > 4:
            i = len(envelope) - 1   # flip one bit inside the MAC tag
            envelope = envelope[:i] + bytes([envelope[i] ^ 0x01]) + envelope[i + 1:]
        return self.device.policy_request(envelope, now)

    def corrupt_metadata(self):
        self.metadata_corrupted = True

    def restore_metadata(self):
        self.metadata_corrupted = False

    # ------------------------------------------------------------------

    def to_state(self):
        ic = self.interpose
        return {"table": self.table.to_state(),
                "interpose": [ic.drop_pbset, ic.tamper_payload, ic.tamper_lba,
                              ic.tamper_policy_envelope],
                "metadata_corrupted": self.metadata_corrupted}

    @classmethod
    def from_state(cls, device, state):
        fs = cls(device, InterposeConfig(*state["interpose"]))
        fs.table = FileTable.from_state(state["table"])
        fs.metadata_corrupted = state["metadata_corrupted"]
        return fs
