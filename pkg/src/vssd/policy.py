"""Per-file versioning policies and the preservation judgment.

A policy gives three knobs for one file path:

  retention_s    how long a superseded version stays recoverable, counted
                 from the moment it was invalidated (not written). 0 means
                 keep forever.
  backup_cycle_s granularity bound. A version that lived as the current
                 data for less than one cycle is coalesced away: only
                 versions that survived at least backup_cycle_s as live
                 data are retained. 0 keeps every version.
  max_versions   cap on retained old versions per logical page chain,
                 newest first. 0 means unlimited.

Judgment layers:

  is_preservable(meta, entry, now) is the pure one-shot kernel: given one
  superseded page's metadata and the policy in force, decide PRESERVE or
  RECLAIM with a reason.

  surviving_versions(...) sweeps a whole chain across the recorded policy
  history. Entitlement is sticky: the first moment a version is judged
  reclaimable under the policy then in force, it is lost for good, even if
  a later policy change would have spared it. That makes the outcome
  independent of when garbage collection actually ran, which is what keeps
  device recovery and the brute-force oracle in exact agreement.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional


class PolicyError(Exception):
    pass


class DuplicatePolicy(PolicyError):
    pass


class PolicyNotFound(PolicyError):
    pass


class JudgedLivePage(PolicyError):
    """is_preservable was asked about a page that is still live."""


@dataclass(frozen=True)
class PolicyParams:
    retention_s: float
    backup_cycle_s: float = 0.0
    max_versions: int = 0

    def __post_init__(self):
        if self.retention_s < 0 or self.backup_cycle_s < 0 or self.max_versions < 0:
            raise ValueError("policy knobs must be >= 0")


@dataclass(frozen=True)
class PolicyEntry:
    path: str
    params: PolicyParams
    created_at: float


class CommandKind(Enum):
    CREATE = "create"
    CHANGE = "change"
    DELETE = "delete"


@dataclass(frozen=True)
class PolicyCommand:
    kind: CommandKind
    path: str
    params: Optional[PolicyParams] = None

    def __post_init__(self):
        if self.kind is CommandKind.DELETE:
            if self.params is not None:
                raise ValueError("delete carries no parameters")
        elif self.params is None:
            raise ValueError(f"{self.kind.value} needs parameters")


@dataclass(frozen=True)
class ApplyOutcome:
    # path whose retained versions must be purged, only set for DELETE
    purge_path: Optional[str] = None


class Reason(Enum):
    NO_POLICY = "no-policy"
    EXPIRED = "expired"
    VERSION_CAP = "version-cap"
    COALESCED = "coalesced"
    WITHIN_POLICY = "within-policy"


@dataclass(frozen=True)
class PreserveVerdict:
    preserve: bool
    reason: Reason


@dataclass(frozen=True)
class PageVersionMeta:
    """What the judgment kernel needs to know about one superseded page."""
    written_at: float
    invalidated_at: Optional[float]
    chain_depth: int    # newer retained old versions of the same chain


def is_preservable(meta: PageVersionMeta, entry: Optional[PolicyEntry],
                   now: float) -> PreserveVerdict:
    """One-shot judgment of a superseded page under one policy at one instant."""
    if meta.invalidated_at is None:
        raise JudgedLivePage("page is still live")
    if entry is None:
        return PreserveVerdict(False, Reason.NO_POLICY)
    p = entry.params
    # retention clock starts when the version was superseded; comparison strict
    if p.retention_s > 0 and now - meta.invalidated_at > p.retention_s:
        return PreserveVerdict(False, Reason.EXPIRED)
    if p.max_versions > 0 and meta.chain_depth >= p.max_versions:
        return PreserveVerdict(False, Reason.VERSION_CAP)
    # lifetime as live data shorter than one backup cycle -> coalesced
    if p.backup_cycle_s > 0 and meta.invalidated_at - meta.written_at < p.backup_cycle_s:
        return PreserveVerdict(False, Reason.COALESCED)
    return PreserveVerdict(True, Reason.WITHIN_POLICY)


class PolicyTable:
    """Device-resident path -> policy map, plus the event history per path.

    The history (time, params-or-None, stamp) is what the device itself
    witnessed through the sealed channel; None marks a delete. It drives
    the sticky entitlement sweep.

    The stamp is the caller's write-serial watermark at the moment the
    command was applied. Wall-clock time alone cannot order a policy event
    against a write that landed at the same instant, and that ordering can
    decide a version's fate (a superseded page starts counting against the
    old parameters the moment the write lands). A None stamp means no
    watermark was taken; ties then resolve as if the event came first.
    """

    def __init__(self):
        self._entries = {}   # path -> PolicyEntry
        self._history = {}   # path -> list[(time, PolicyParams | None, stamp)]

    def apply_command(self, cmd: PolicyCommand, now: float,
                      stamp: Optional[int] = None) -> ApplyOutcome:
        path = cmd.path
        if cmd.kind is CommandKind.CREATE:
            if path in self._entries:
                raise DuplicatePolicy(path)
            self._entries[path] = PolicyEntry(path, cmd.params, now)
            self._history.setdefault(path, []).append((now, cmd.params, stamp))
            return ApplyOutcome()
        if cmd.kind is CommandKind.CHANGE:
            if path not in self._entries:
                raise PolicyNotFound(path)
            self._entries[path] = PolicyEntry(path, cmd.params, now)
            self._history[path].append((now, cmd.params, stamp))
            return ApplyOutcome()
        # DELETE
        if path not in self._entries:
            raise PolicyNotFound(path)
        del self._entries[path]
        self._history[path].append((now, None, stamp))
        return ApplyOutcome(purge_path=path)

    def lookup(self, path: str) -> Optional[PolicyEntry]:
        # byte-exact match only, no normalization
        return self._entries.get(path)

    def history(self, path: str):
        return list(self._history.get(path, ()))

    def paths(self):
        return sorted(self._entries)

    def __len__(self):
        return len(self._entries)

    def dump_text(self) -> str:
        """Stable line format: path <TAB> retention_s backup_cycle_s max_versions created_at"""
        lines = []
        for path in self.paths():
            e = self._entries[path]
            p = e.params
            lines.append(f"{path}\t{p.retention_s:g} {p.backup_cycle_s:g} "
                         f"{p.max_versions} {e.created_at:g}")
        return "\n".join(lines)

    # persistence helpers -------------------------------------------------

    def to_state(self):
        return {
            "entries": {p: [e.params.retention_s, e.params.backup_cycle_s,
                            e.params.max_versions, e.created_at]
                        for p, e in self._entries.items()},
            "history": {p: [[t, None if pp is None else
                             [pp.retention_s, pp.backup_cycle_s, pp.max_versions],
                             stamp]
                            for t, pp, stamp in evs]
                        for p, evs in self._history.items()},
        }

    @classmethod
    def from_state(cls, state):
        t = cls()
        for p, (rt, bc, v, created) in state["entries"].items():
            t._entries[p] = PolicyEntry(p, PolicyParams(rt, bc, v), created)
        for p, evs in state["history"].items():
            t._history[p] = [(tm, None if pp is None else PolicyParams(*pp), stamp)
                             for tm, pp, stamp in evs]
        return t


@dataclass(frozen=True)
class ChainVersion:
    """One superseded version of a chain, as fed to the entitlement sweep."""
    key: object                # caller's handle (a PPA, an oracle index, ...)
    written_at: float
    invalidated_at: float
    versioned: bool            # carried a piggyback tag under a live policy at write
    inv_serial: Optional[int] = None   # write serial that superseded it


def _normalize_history(history):
    """Accept (time, params) pairs as stampless (time, params, None) entries."""
    out = []
    for entry in history:
        if len(entry) == 2:
            out.append((entry[0], entry[1], None))
        else:
            out.append(tuple(entry))
    return out


def _params_in_force(history, t, fallback):
    """Policy parameters at instant t; fallback covers the no-history case
    (the uniform-retention device mode where every page is implicitly under
    one constant policy)."""
    current = None if fallback is None else fallback
    for et, params, _stamp in history:
        if et <= t:
            current = params
        else:
            break
    return current


def surviving_versions(versions, history, now, fallback: Optional[PolicyParams] = None):
    """Sticky entitlement sweep over one chain.

    versions: ChainVersion list, oldest first (ascending write order).
    history:  [(time, PolicyParams | None, stamp)] in arrival order, as
              recorded by the policy table for this chain's file path.
    fallback: constant parameters to assume when history is empty (uniform
              mode); None means "no policy" outside recorded history.

    Returns {key: PreserveVerdict} for every version. A version, once
    reclaimable at any instant between its invalidation and `now` under
    the parameters then in force, stays reclaimed.

    Under a fixed policy all four reasons are monotone (a verdict never
    flips back), so it suffices to evaluate at each policy-event boundary
    (with the outgoing parameters) and once at `now`.

    A boundary judges the interval that ends at its event, so it covers the
    versions superseded before that event. "Before" is decided by time and,
    when a write shares the event's timestamp, by the recorded stamps: the
    version participates when its superseding write-serial is at or below
    the event's watermark. Without stamps a same-instant write counts as
    after the event.
    """
    history = _normalize_history(history)
    verdicts = {}
    lost = {}   # key -> Reason, sticky
    for v in versions:
        if not v.versioned:
            lost[v.key] = Reason.NO_POLICY

    # (boundary index | None for the final at-now evaluation, instant)
    eval_points = [(i, t) for i, (t, _, _) in enumerate(history) if t <= now]
    eval_points.append((None, now))

    for idx, at in eval_points:
        if idx is not None:
            # boundary: close the interval *before* this event. Earlier
            # entries at the same timestamp still belong to that interval,
            # so the outgoing parameters come from everything recorded
            # before this event, in arrival order.
            prior = history[:idx]
            params = _params_in_force(prior, at, fallback)
            stamp = history[idx][2]
        else:
            params = _params_in_force(history, at, fallback)
            stamp = None

        entry = None
        if params is not None:
            entry = PolicyEntry("", params, 0.0)

        depth = 0
        for v in reversed(versions):            # newest first
            if idx is not None:
                judged_here = v.invalidated_at < at or (
                    v.invalidated_at == at
                    and stamp is not None and v.inv_serial is not None
                    and v.inv_serial <= stamp)
                if not judged_here:
                    continue
            else:
                if not (v.invalidated_at <= at):
                    continue
            if v.key in lost:
                continue
            meta = PageVersionMeta(v.written_at, v.invalidated_at, depth)
            verdict = is_preservable(meta, entry, at)
            if verdict.preserve:
                depth += 1
            else:
                lost[v.key] = verdict.reason

    for v in versions:
        if v.key in lost:
            verdicts[v.key] = PreserveVerdict(False, lost[v.key])
        else:
            verdicts[v.key] = PreserveVerdict(True, Reason.WITHIN_POLICY)
    return verdicts
