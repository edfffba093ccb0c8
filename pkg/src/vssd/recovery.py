"""File recovery from retained page versions.

Recovery answers "give me this file as of time T" (or "N versions back")
by walking each logical page's version chain and picking, per file offset,
the newest still-entitled version written at or before the target. A
version that lapsed (retention expired, capped out, coalesced, or its
policy deleted) is unrecoverable even if the page physically survives;
conversely an offset the file did not have at T is simply omitted.

The host normally supplies the file's LBA list. When it cannot (filesystem
metadata destroyed), a NULL list triggers an exhaustive scan: every
programmed page's OOB is examined block-major, page-minor, and pages whose
piggybacked path matches byte-for-byte stand in for the lost list. Offsets
always come from the per-page OOB tag, never from host bookkeeping.

Per-offset selection with a VERSION target counts entitled old versions
per chain, so offsets may land on different write times; the image then
carries a mixed_versions warning.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from .flash import Ppa
from .ftl import VersionedFtl


class RecoveryError(Exception):
    pass


class RecoveryNotPossible(RecoveryError):
    def __init__(self, path, failed_offsets, note=""):
        self.path = path
        self.failed_offsets = list(failed_offsets)
        self.note = note
        msg = f"{path}: unrecoverable offsets {self.failed_offsets}"
        if note:
            msg = f"{path}: {note}"
        super().__init__(msg)


class FileUnknown(RecoveryError):
    pass


class EmptyImage(RecoveryError):
    pass


class TargetKind(Enum):
    TIME = "time"
    VERSION = "version"


@dataclass(frozen=True)
class RecoveryTarget:
    kind: TargetKind
    value: float

    @classmethod
    def at_time(cls, t: float):
        return cls(TargetKind.TIME, float(t))

    @classmethod
    def versions_back(cls, n: int):
        if n < 0:
            raise ValueError("ordinal must be >= 0 (0 selects the live copy)")
        return cls(TargetKind.VERSION, int(n))


@dataclass(frozen=True)
class RecoveryRequest:
    path: str
    target: RecoveryTarget
    # [(file_offset, lba)] from the host, or None to force an OOB scan
    lba_list: Optional[List[Tuple[int, int]]] = None


@dataclass
class RecoveredImage:
    path: str
    target: RecoveryTarget
    chunks: List[Tuple[int, bytes]] = field(default_factory=list)
    provenance: List[Tuple[int, Ppa, float]] = field(default_factory=list)
    mixed_versions: bool = False
    via_scan: bool = False

    def offsets(self):
        return [off for off, _ in self.chunks]

    def chunk_at(self, offset):
        for off, data in self.chunks:
            if off == offset:
                return data
        return None

    def total_bytes(self):
        return sum(len(d) for _, d in self.chunks)


def exhaustive_scan(ftl: VersionedFtl, path: str):
    """OOB-only discovery of a file's pages. Returns [(lba, chain-head ppa)]
    sorted by lba; the head is the newest write serial per logical page."""
    heads = {}
    for ppa in ftl.flash.iter_programmed():
        _, oob = ftl.flash.read_page(ppa)
        if oob.pbset is None or oob.pbset.path != path:
            continue
        cur = heads.get(oob.lpa)
        if cur is None or oob.serial > cur[0]:
            heads[oob.lpa] = (oob.serial, ppa)
    return [(lpa, head) for lpa, (_, head) in sorted(heads.items())]


def _collect_offset_groups(ftl: VersionedFtl, path: str, lbas):
    """Group a file's pages by their OOB-recorded offset, write order kept."""
    groups = {}
    for lba in lbas:
        for ppa in ftl.chains.get(lba, ()):
            info = ftl.pages[ppa]
            if info.pbset is None or info.pbset.path != path:
                continue
            groups.setdefault(info.pbset.offset, []).append((info.serial, ppa))
    for versions in groups.values():
        versions.sort()
    return groups


def recover(ftl: VersionedFtl, request: RecoveryRequest, now: float) -> RecoveredImage:
    path = request.path
    via_scan = request.lba_list is None
    if via_scan:
        lbas = [lpa for lpa, _ in exhaustive_scan(ftl, path)]
    else:
        lbas = sorted({lba for _, lba in request.lba_list})

    groups = _collect_offset_groups(ftl, path, lbas)
    # Offsets the device has ever seen a tagged write for. These outlive the
    # pages, so a fully collected offset still counts as part of the file
    # (and fails the recovery) instead of silently vanishing from the image.
    known = {off: wt for (p, off), wt in ftl.first_tagged.items() if p == path}
    if not groups and not known:
        raise FileUnknown(path)

    image = RecoveredImage(path, request.target, via_scan=via_scan)
    failed = []
    cache = {}
    times_seen = set()

    for offset in sorted(set(groups) | set(known)):
        versions = groups.get(offset, ())   # [(serial, ppa)] ascending
        choice = None
        if request.target.kind is TargetKind.TIME:
            t = request.target.value
            cands = [ppa for serial, ppa in versions
                     if ftl.pages[ppa].written_at <= t]
            if not cands:
                if known.get(offset, float("inf")) <= t:
                    failed.append(offset)   # existed by t, nothing survived
                continue   # offset did not exist at t: omitted, not zeroed
            for ppa in reversed(cands):
                if ftl.version_eligibility(ppa, now, cache):
                    choice = ppa
                    break
        else:
            n = int(request.target.value)
            live = [ppa for _, ppa in versions
                    if ftl.pages[ppa].invalidated_at is None]
            if n == 0:
                choice = live[-1] if live else None
            else:
                hops = 0
                for _, ppa in reversed(versions):
                    info = ftl.pages[ppa]
                    if info.invalidated_at is None:
                        continue
                    if ftl.version_eligibility(ppa, now, cache):
                        hops += 1
                        if hops == n:
                            choice = ppa
                            break
        if choice is None:
            failed.append(offset)
            continue
        payload, _ = ftl.flash.read_page(choice)
        info = ftl.pages[choice]
        image.chunks.append((offset, payload))
        image.provenance.append((offset, choice, info.written_at))
        times_seen.add(info.written_at)

    if failed:
        raise RecoveryNotPossible(path, failed)
    if not image.chunks:
        raise RecoveryNotPossible(path, [], note="no content at the target")
    image.mixed_versions = (request.target.kind is TargetKind.VERSION
                            and len(times_seen) > 1)
    return image


def apply_recovery(hostfs, image: RecoveredImage, now: float) -> int:
    """Write a recovered image back through the ordinary filesystem path.

    The rewrite is versioned like any other write (the pre-recovery state
    stays reachable). Returns pages written."""
    if not image.chunks:
        raise EmptyImage(image.path)
    pages = 0
    for offset, data in image.chunks:
        hostfs.fs_write(image.path, offset, data, now)
        pages += 1
    return pages
