"""Versioning flash translation layer.

Out-of-place writes keep superseded pages on flash. A device-RAM preserve
bitmap (one bit per physical page) marks pages whose old versions a policy
may still need; garbage collection sorts every examined page into one of
three classes:

  VALID    the live copy of its logical page — always relocated
  INVALID  reclaimable — no preserve bit, or its policy judgment lapsed
  OV_PAGE  superseded but still wanted — relocated, never erased

The bitmap bit is set at write time (piggyback tag present and a policy in
force — or the device runs in uniform-retention mode), cleared when a
block erases, when a judgment lapses, or when a policy delete purges the
file's versions. Bits are never set after the fact.

Allocation keeps at least one block's worth of free pages in reserve so a
victim's survivors can always be relocated; a host write that would eat
into the reserve triggers collection first and surfaces DeviceFull only
when no victim would free anything.

Chain bookkeeping (per-LPA version lists, back pointers, the live map) is
device-RAM state, rebuilt from OOB write serials on mount; the on-flash
back pointer is a point-in-time snapshot, authoritative truth lives here.
"""

import bisect
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .flash import FlashDevice, OobRecord, PageState, PathTooLong, Piggyback, Ppa
from .policy import ChainVersion, PolicyParams, PolicyTable, surviving_versions


class FtlError(Exception):
    pass


class DeviceFull(FtlError):
    pass


class NoVictimGain(DeviceFull):
    """Best victim would free zero pages."""


class UnmappedLba(FtlError):
    pass


class ClassifyFreePage(FtlError):
    pass


class PageClass(Enum):
    VALID = "valid"
    INVALID = "invalid"
    OV_PAGE = "ov"


@dataclass
class PageInfo:
    """Device-RAM lifecycle record for one programmed page."""
    lpa: int
    written_at: float
    serial: int
    pbset: Optional[Piggyback]
    versioned: bool                       # preserve bit value at birth
    invalidated_at: Optional[float] = None
    invalidated_by: Optional[int] = None  # serial of the superseding write


@dataclass(frozen=True)
class GcReport:
    victim_block: int
    relocated_valid: int
    relocated_ov: int
    reclaimed_invalid: int
    reclaimed_expired: int

    @property
    def pages_examined(self):
        return (self.relocated_valid + self.relocated_ov +
                self.reclaimed_invalid + self.reclaimed_expired)

    @property
    def gain(self):
        return self.reclaimed_invalid + self.reclaimed_expired


class VersionedFtl:
    def __init__(self, flash: FlashDevice, policies: PolicyTable,
                 uniform_retention_s: Optional[float] = None):
        self.flash = flash
        self.policies = policies
        # uniform mode: every piggybacked write versioned under this fixed
        # retention, the policy table is not consulted
        self.uniform_retention_s = uniform_retention_s
        g = flash.geometry
        self.map = {}                 # lpa -> live Ppa
        self.pages = {}               # Ppa -> PageInfo
        self.chains = {}              # lpa -> [Ppa] ascending write serial
        self.preserve_bits = set()    # the bitmap; membership == bit set
        # (path, offset) -> earliest tagged write time. Outlives the pages
        # themselves so recovery can tell "not written yet at T" apart from
        # "written but no version survived".
        self.first_tagged = {}
        self.frontier_block = None
        self.frontier_next = 0
        self.free_blocks = list(range(g.blocks))
        self.serial = 0
        self.host_pages_written = 0
        self.gc_invocations = 0
        self.relocations = 0
        self.device_full_events = 0

    # ------------------------------------------------------------------
    # space accounting

    def free_pages(self) -> int:
        g = self.flash.geometry
        n = len(self.free_blocks) * g.pages_per_block
        if self.frontier_block is not None:
            n += g.pages_per_block - self.frontier_next
        return n

    def _alloc(self) -> Ppa:
        g = self.flash.geometry
        if self.frontier_block is None or self.frontier_next >= g.pages_per_block:
            if not self.free_blocks:
                raise DeviceFull("no free block for frontier")
            self.frontier_block = self.free_blocks.pop(0)
            self.frontier_next = 0
        ppa = Ppa(self.frontier_block, self.frontier_next)
        self.frontier_next += 1
        return ppa

    def _ensure_host_room(self, now: float):
        # keep one block's worth of pages free so GC relocation always fits
        reserve = self.flash.geometry.pages_per_block
        while self.free_pages() < reserve + 1:
            self.garbage_collect(now)   # NoVictimGain propagates as DeviceFull

    # ------------------------------------------------------------------
    # host write / read

    def device_write(self, lba: int, payload: bytes, pbset: Optional[Piggyback],
                     now: float) -> Ppa:
        if lba < 0:
            raise UnmappedLba(f"negative lba {lba}")
        if pbset is not None and \
                len(pbset.path.encode()) > self.flash.geometry.max_path_len:
            raise PathTooLong(pbset.path)
        try:
            self._ensure_host_room(now)
        except DeviceFull:
            self.device_full_events += 1
            raise

        previous = self.map.get(lba)
        if self.uniform_retention_s is not None:
            versioned = pbset is not None
        else:
            versioned = pbset is not None and self.policies.lookup(pbset.path) is not None

        self.serial += 1
        if pbset is not None:
            oob = OobRecord(lpa=lba, serial=self.serial, written_at=now,
                            back_ptr=previous, pbset=pbset)
        else:
            oob = OobRecord(lpa=lba, serial=self.serial)

        ppa = self._alloc()
        self.flash.program_page(ppa, payload, oob)

        self.pages[ppa] = PageInfo(lba, now, self.serial, pbset, versioned)
        if pbset is not None:
            self.first_tagged.setdefault((pbset.path, pbset.offset), now)
        if previous is not None:
            self.pages[previous].invalidated_at = now
            self.pages[previous].invalidated_by = self.serial
        self.map[lba] = ppa
        self.chains.setdefault(lba, []).append(ppa)
        if versioned:
            self.preserve_bits.add(ppa)
        self.host_pages_written += 1
        return ppa

    def device_read(self, lba: int) -> bytes:
        ppa = self.map.get(lba)
        if ppa is None:
            raise UnmappedLba(str(lba))
        payload, _ = self.flash.read_page(ppa)
        return payload

    # ------------------------------------------------------------------
    # judgment

    def _history_for(self, path: str):
        if self.uniform_retention_s is not None:
            return [], PolicyParams(self.uniform_retention_s, 0.0, 0)
        return self.policies.history(path), None

    def _judge_chain(self, lpa: int, path: str, now: float, cache: dict):
        key = (lpa, path)
        hit = cache.get(key)
        if hit is not None:
            return hit
        versions = []
        for ppa in self.chains.get(lpa, ()):
            info = self.pages[ppa]
            if info.pbset is None or info.pbset.path != path:
                continue
            if info.invalidated_at is None:
                continue   # live head is not judged
            versions.append(ChainVersion(ppa, info.written_at,
                                         info.invalidated_at, info.versioned,
                                         info.invalidated_by))
        history, fallback = self._history_for(path)
        verdicts = surviving_versions(versions, history, now, fallback)
        cache[key] = verdicts
        return verdicts

    def _classify(self, ppa: Ppa, now: float, cache: dict) -> PageClass:
        info = self.pages.get(ppa)
        if info is None:
            if self.flash.page_state(ppa) is PageState.FREE:
                raise ClassifyFreePage(str(ppa))
            raise AssertionError(f"programmed page {ppa} without lifecycle record")
        if info.invalidated_at is None:
            return PageClass.VALID
        if ppa not in self.preserve_bits:
            return PageClass.INVALID
        verdict = self._judge_chain(info.lpa, info.pbset.path, now, cache)[ppa]
        if verdict.preserve:
            return PageClass.OV_PAGE
        self.preserve_bits.discard(ppa)   # lapsed for good; bit never returns
        return PageClass.INVALID

    def classify_page(self, ppa: Ppa, now: float) -> PageClass:
        return self._classify(ppa, now, {})

    def version_eligibility(self, ppa: Ppa, now: float, cache=None) -> bool:
        """Is this superseded page's version still recoverable?"""
        info = self.pages[ppa]
        if info.invalidated_at is None:
            return True
        if not info.versioned:
            return False
        verdicts = self._judge_chain(info.lpa, info.pbset.path, now,
                                     cache if cache is not None else {})
        return verdicts[ppa].preserve

    # ------------------------------------------------------------------
    # garbage collection

    def _candidate_blocks(self):
        g = self.flash.geometry
        free = set(self.free_blocks)
        out = []
        for b in range(g.blocks):
            if b in free:
                continue
            if b == self.frontier_block and self.frontier_next < g.pages_per_block:
                continue   # never collect the block being filled
            out.append(b)
        return out

    def garbage_collect(self, now: float) -> GcReport:
        cache = {}
        best_block, best_gain = None, 0
        bit_snapshot = {}
        victims = {}
        for b in self._candidate_blocks():
            gain = 0
            classes = []
            for pg in self.flash.programmed_pages(b):
                ppa = Ppa(b, pg)
                bit_snapshot[ppa] = ppa in self.preserve_bits
                cls = self._classify(ppa, now, cache)
                classes.append((ppa, cls))
                if cls is PageClass.INVALID:
                    gain += 1
            victims[b] = classes
            if gain > best_gain:   # strict: ties resolve to the lowest index
                best_block, best_gain = b, gain

        if best_block is None:
            raise NoVictimGain("no block frees any page")

        relocated_valid = relocated_ov = reclaimed_invalid = reclaimed_expired = 0
        doomed = []
        for ppa, cls in victims[best_block]:
            if cls is PageClass.INVALID:
                if bit_snapshot[ppa]:
                    reclaimed_expired += 1
                else:
                    reclaimed_invalid += 1
                doomed.append(ppa)
                continue
            self._relocate(ppa, now)
            if cls is PageClass.VALID:
                relocated_valid += 1
            else:
                relocated_ov += 1

        for ppa in doomed:
            info = self.pages.pop(ppa)
            self.chains[info.lpa].remove(ppa)
            self.preserve_bits.discard(ppa)

        self.flash.erase_block(best_block)
        # erase clears every bit of the block; survivors were re-registered
        # at their new addresses by _relocate
        for pg in range(self.flash.geometry.pages_per_block):
            self.preserve_bits.discard(Ppa(best_block, pg))
        bisect.insort(self.free_blocks, best_block)
        if best_block == self.frontier_block:
            # a fully written frontier was collected; next alloc opens fresh
            self.frontier_block = None
            self.frontier_next = 0
        self.gc_invocations += 1
        return GcReport(best_block, relocated_valid, relocated_ov,
                        reclaimed_invalid, reclaimed_expired)

    def _relocate(self, old: Ppa, now: float):
        info = self.pages[old]
        payload, _ = self.flash.read_page(old)
        chain = self.chains[info.lpa]
        idx = chain.index(old)
        new = self._alloc()
        if info.pbset is not None:
            back = chain[idx - 1] if idx > 0 else None
            oob = OobRecord(lpa=info.lpa, serial=info.serial,
                            written_at=info.written_at, back_ptr=back,
                            pbset=info.pbset)
        else:
            oob = OobRecord(lpa=info.lpa, serial=info.serial)
        self.flash.program_page(new, payload, oob)
        chain[idx] = new
        self.pages[new] = info
        del self.pages[old]
        if info.invalidated_at is None:
            self.map[info.lpa] = new
        if old in self.preserve_bits:
            self.preserve_bits.discard(old)
            self.preserve_bits.add(new)
        self.relocations += 1

    # ------------------------------------------------------------------
    # policy purge and bookkeeping

    def purge_file(self, path: str) -> int:
        """Clear preserve bits of every superseded page tagged with this path."""
        cleared = 0
        for ppa in list(self.preserve_bits):
            info = self.pages[ppa]
            if info.invalidated_at is None:
                continue   # live pages follow filesystem deletion, not policy
            if info.pbset is not None and info.pbset.path == path:
                self.preserve_bits.discard(ppa)
                cleared += 1
        return cleared

    def ov_pages_resident(self) -> int:
        return sum(1 for ppa in self.preserve_bits
                   if self.pages[ppa].invalidated_at is not None)

    def live_pages(self) -> int:
        return len(self.map)

    # ------------------------------------------------------------------
    # persistence support (flash bytes handled by the image module)

    def to_state(self):
        return {
            "uniform_retention_s": self.uniform_retention_s,
            "frontier_block": self.frontier_block,
            "frontier_next": self.frontier_next,
            "free_blocks": list(self.free_blocks),
            "serial": self.serial,
            "host_pages_written": self.host_pages_written,
            "gc_invocations": self.gc_invocations,
            "relocations": self.relocations,
            "device_full_events": self.device_full_events,
            "preserve_bits": sorted([p.block, p.page] for p in self.preserve_bits),
            "first_tagged": sorted([path, off, wt]
                                   for (path, off), wt in self.first_tagged.items()),
            "overlay": {f"{p.block}:{p.page}": [i.written_at, i.invalidated_at,
                                                i.versioned, i.invalidated_by]
                        for p, i in self.pages.items()},
        }

    @classmethod
    def from_state(cls, flash: FlashDevice, policies: PolicyTable, state):
        ftl = cls(flash, policies, state["uniform_retention_s"])
        ftl.frontier_block = state["frontier_block"]
        ftl.frontier_next = state["frontier_next"]
        ftl.free_blocks = list(state["free_blocks"])
        ftl.serial = state["serial"]
        ftl.host_pages_written = state["host_pages_written"]
        ftl.gc_invocations = state["gc_invocations"]
        ftl.relocations = state["relocations"]
        ftl.device_full_events = state["device_full_events"]
        ftl.preserve_bits = {Ppa(b, p) for b, p in state["preserve_bits"]}
        ftl.first_tagged = {(path, off): wt
                            for path, off, wt in state["first_tagged"]}
        # rebuild chains/map from OOB write serials, overlay RAM-only fields
        overlay = state["overlay"]
        recs = []
        for ppa in flash.iter_programmed():
            _, oob = flash.read_page(ppa)
            wt, inv, versioned, inv_by = overlay[f"{ppa.block}:{ppa.page}"]
            ftl.pages[ppa] = PageInfo(oob.lpa, wt, oob.serial, oob.pbset,
                                      versioned, inv, inv_by)
            recs.append((oob.lpa, oob.serial, ppa))
        recs.sort(key=lambda r: (r[0], r[1]))
        for lpa, _, ppa in recs:
            ftl.chains.setdefault(lpa, []).append(ppa)
        for lpa, chain in ftl.chains.items():
            ftl.map[lpa] = chain[-1]
            assert ftl.pages[chain[-1]].invalidated_at is None
        return ftl
