"""Raw NAND flash model: blocks of program-once pages with per-page OOB records.

Pages are programmed out of place and only whole blocks erase. Every
programmed page carries an out-of-band record next to its payload; the
record is written together with the page and never changes afterwards.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional


class FlashError(Exception):
    pass


class AddressOutOfRange(FlashError):
    pass


class ProgramOnProgrammedPage(FlashError):
    pass


class ReadFreePage(FlashError):
    pass


class PathTooLong(FlashError):
    pass


class PageState(Enum):
    FREE = "free"
    PROGRAMMED = "programmed"


class Ppa(NamedTuple):
    """Physical page address."""
    block: int
    page: int


@dataclass(frozen=True)
class FlashGeometry:
    blocks: int = 64
    pages_per_block: int = 64
    page_size: int = 4096       # payload bytes per page
    max_path_len: int = 256     # longest file path the OOB will hold

    def __post_init__(self):
        if self.blocks < 2:
            raise ValueError("need at least 2 blocks (one stays free for GC)")
        if self.pages_per_block < 1 or self.page_size < 1:
            raise ValueError("bad geometry")

    @property
    def total_pages(self):
        return self.blocks * self.pages_per_block


@dataclass(frozen=True)
class Piggyback:
    """File tag a cooperating filesystem attaches to each page write."""
    path: str
    offset: int

    def __post_init__(self):
        if not self.path:
            raise ValueError("empty piggyback path")
        if self.offset < 0:
            raise ValueError("negative piggyback offset")


@dataclass(frozen=True)
class OobRecord:
    """Per-page out-of-band metadata, fixed at program time.

    When no piggyback tag accompanies the write, only the logical address
    (and the device write serial) is recorded: written_at stays unset and
    back_ptr must be none.
    """
    lpa: int
    serial: int
    written_at: Optional[float] = None
    back_ptr: Optional[Ppa] = None
    pbset: Optional[Piggyback] = None

    def __post_init__(self):
        if self.pbset is None and self.back_ptr is not None:
            raise ValueError("back pointer without piggyback tag")
        if self.pbset is None and self.written_at is not None:
            raise ValueError("timestamp without piggyback tag")


class FlashDevice:
    def __init__(self, geometry: FlashGeometry = FlashGeometry()):
        self.geometry = geometry
        n = geometry.blocks
        p = geometry.pages_per_block
        self._state = [[PageState.FREE] * p for _ in range(n)]
        self._payload = [[None] * p for _ in range(n)]
        self._oob = [[None] * p for _ in range(n)]
        self.erase_counts = [0] * n
        self.programmed_total = 0   # lifetime program ops, never reset

    def _check(self, ppa: Ppa):
        g = self.geometry
        if not (0 <= ppa.block < g.blocks and 0 <= ppa.page < g.pages_per_block):
            raise AddressOutOfRange(f"{ppa} outside {g.blocks}x{g.pages_per_block}")

    def page_state(self, ppa: Ppa) -> PageState:
        self._check(ppa)
        return self._state[ppa.block][ppa.page]

    def program_page(self, ppa: Ppa, payload: bytes, oob: OobRecord):
        self._check(ppa)
        if self._state[ppa.block][ppa.page] is not PageState.FREE:
            raise ProgramOnProgrammedPage(f"{ppa} already programmed")
        if len(payload) > self.geometry.page_size:
            raise ValueError(f"payload {len(payload)}B > page size {self.geometry.page_size}B")
        if oob.pbset is not None and len(oob.pbset.path.encode()) > self.geometry.max_path_len:
            raise PathTooLong(f"piggyback path over {self.geometry.max_path_len} bytes")
        self._state[ppa.block][ppa.page] = PageState.PROGRAMMED
        self._payload[ppa.block][ppa.page] = bytes(payload)
        self._oob[ppa.block][ppa.page] = oob
        self.programmed_total += 1

    def read_page(self, ppa: Ppa):
        self._check(ppa)
        if self._state[ppa.block][ppa.page] is PageState.FREE:
            raise ReadFreePage(f"{ppa} is free")
        return self._payload[ppa.block][ppa.page], self._oob[ppa.block][ppa.page]

    def erase_block(self, block: int):
        if not (0 <= block < self.geometry.blocks):
            raise AddressOutOfRange(f"block {block}")
        p = self.geometry.pages_per_block
        self._state[block] = [PageState.FREE] * p
        self._payload[block] = [None] * p
        self._oob[block] = [None] * p
        self.erase_counts[block] += 1

    def programmed_pages(self, block: int):
        """Page indexes of this block that currently hold data, ascending."""
        if not (0 <= block < self.geometry.blocks):
            raise AddressOutOfRange(f"block {block}")
        return [i for i, s in enumerate(self._state[block]) if s is PageState.PROGRAMMED]

    def iter_programmed(self):
        """All programmed pages, block-major then page-minor. Deterministic."""
        for b in range(self.geometry.blocks):
            for p in range(self.geometry.pages_per_block):
                if self._state[b][p] is PageState.PROGRAMMED:
                    yield Ppa(b, p)
