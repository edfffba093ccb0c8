"""Brute-force shadow oracle.

The oracle never looks inside the device. It keeps its own append-only log
of every write and every accepted policy event (in submission order), and
answers "what should recovery of this file at time T return?" by direct
enumeration over that log:

  - a version's retention window opens when the next write to the same
    file offset lands (that is its invalidation instant);
  - a version is entitled at `now` unless some instant between its
    invalidation and `now` judged it reclaimable under the policy then in
    force: no policy / retention elapsed (strict) / more retained newer
    versions than the cap / lifetime as live data shorter than one backup
    cycle. Once reclaimable, gone for good;
  - recovery to T picks, per offset, the newest tagged version written at
    or before T that is live or entitled; an offset with no tagged version
    by T simply isn't part of the file yet; an offset whose candidates all
    lapsed makes the whole file unrecoverable at T.

Device recovery must agree with this byte for byte, for any order and
timing of garbage collection.
"""

from dataclasses import dataclass
from typing import Optional

from .policy import PolicyParams


@dataclass(frozen=True)
class WriteRec:
    op_seq: int
    time: float
    data: bytes
    tagged: bool            # piggyback set was attached


class ShadowOracle:
    def __init__(self, uniform_retention_s: Optional[float] = None):
        self.uniform_retention_s = uniform_retention_s
        self._ops = 0
        self._writes = {}          # path -> offset -> [WriteRec]
        self._policy_events = {}   # path -> [(op_seq, time, params|None)]

    # logging ------------------------------------------------------------

    def note_write(self, path: str, offset: int, data: bytes, time: float,
                   tagged: bool = True):
        self._ops += 1
        recs = self._writes.setdefault(path, {}).setdefault(offset, [])
        recs.append(WriteRec(self._ops, time, bytes(data), tagged))

    def note_policy(self, path: str, params: Optional[PolicyParams], time: float):
        """Record an accepted CREATE/CHANGE (params) or DELETE (None)."""
        self._ops += 1
        self._policy_events.setdefault(path, []).append((self._ops, time, params))

    def paths(self):
        return sorted(self._writes)

    def first_write_time(self, path):
        per = self._writes.get(path, {})
        return min((recs[0].time for recs in per.values()), default=None)

    # entitlement ----------------------------------------------------------

    def _params_at_op(self, path: str, op_seq: int):
        """Policy in force when operation op_seq was submitted."""
        if self.uniform_retention_s is not None:
            return PolicyParams(self.uniform_retention_s, 0.0, 0)
        current = None
        for ev_seq, _, params in self._policy_events.get(path, ()):
            if ev_seq < op_seq:
                current = params
            else:
                break
        return current

    def _params_at_time(self, events, t):
        if self.uniform_retention_s is not None:
            return PolicyParams(self.uniform_retention_s, 0.0, 0)
        current = None
        for _, ev_t, params in events:
            if ev_t <= t:
                current = params
        return current

    def _entitled(self, path: str, recs, now: float):
        """Sticky entitlement for one offset's superseded versions.

        Returns the set of op_seqs still recoverable at `now`. Evaluates the
        reclaim test at each policy boundary (with the outgoing parameters,
        over the versions superseded before the event) and once at `now`.
        A write sharing an event's timestamp is ordered by operation
        sequence, the same order the device reconstructs from its write
        serials.
        """
        versions = []   # (rec, invalidated_at, inv_op, versioned)
        for i, rec in enumerate(recs[:-1]):
            nxt = recs[i + 1]
            versioned = rec.tagged and self._params_at_op(path, rec.op_seq) is not None
            versions.append((rec, nxt.time, nxt.op_seq, versioned))

        events = self._policy_events.get(path, ())
        # (event index | None for the final at-now evaluation, instant)
        moments = [(i, t) for i, (_, t, _) in enumerate(events) if t <= now]
        moments.append((None, now))

        lost = set()
        for rec, _, _, versioned in versions:
            if not versioned:
                lost.add(rec.op_seq)

        for idx, at in moments:
            if idx is not None:
                params = self._params_at_time(events[:idx], at)
                ev_seq = events[idx][0]
            else:
                params = self._params_at_time(events, at)
                ev_seq = None
            depth = 0
            for rec, inv, inv_op, versioned in reversed(versions):
                if idx is not None:
                    judged_here = inv < at or (inv == at and inv_op < ev_seq)
                    if not judged_here:
                        continue
                elif not (inv <= at):
                    continue
                if rec.op_seq in lost:
                    continue
                reclaim = False
                if params is None:
                    reclaim = True
                elif params.retention_s > 0 and at - inv > params.retention_s:
                    reclaim = True
                elif params.max_versions > 0 and depth >= params.max_versions:
                    reclaim = True
                elif params.backup_cycle_s > 0 and inv - rec.time < params.backup_cycle_s:
                    reclaim = True
                if reclaim:
                    lost.add(rec.op_seq)
                else:
                    depth += 1

        return {rec.op_seq for rec, _, _, v in versions if rec.op_seq not in lost}

    # recovery ground truth -------------------------------------------------

    def recover_at(self, path: str, t: float, now: float):
        """("ok", {offset: bytes}) or ("fail", why)."""
        per_file = self._writes.get(path)
        if not per_file:
            return ("fail", "unknown file")
        chunks = {}
        for offset in sorted(per_file):
            recs = per_file[offset]
            tagged = [r for r in recs if r.tagged]
            if not tagged:
                continue   # never visible to device-side recovery
            cands = [r for r in tagged if r.time <= t]
            if not cands:
                continue   # offset newer than t: omitted
            entitled = self._entitled(path, recs, now)
            live_seq = recs[-1].op_seq
            choice = None
            for r in reversed(cands):
                if r.op_seq == live_seq or r.op_seq in entitled:
                    choice = r
                    break
            if choice is None:
                return ("fail", f"offset {offset} lapsed")
            chunks[offset] = choice.data
        if not chunks:
            return ("fail", "no content at target")
        return ("ok", chunks)
