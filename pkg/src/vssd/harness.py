"""Simulation harness: virtual clock, an assembled host+device world, and
the oracle comparison used by the acceptance checks.

Everything is driven by a virtual clock and explicit seeds; two runs with
the same script and seed produce identical state and reports.
"""

import hashlib
import random
import re
from dataclasses import dataclass
from typing import Optional

from . import channel
from .channel import ResponseStatus
from .device import Device
from .flash import FlashGeometry
from .hostfs import FsCorrupted, HostFs
from .oracle import ShadowOracle
from .policy import CommandKind, PolicyCommand, PolicyParams
from .recovery import RecoveryError, RecoveryRequest, RecoveryTarget


class ClockError(Exception):
    pass


class SimClock:
    """Monotone virtual time, seconds. Never consults the wall clock."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)

    def advance(self, seconds: float):
        if seconds < 0:
            raise ClockError("time does not run backwards")
        self.now += seconds
        return self.now


_DUR = re.compile(r"^(\d+(?:\.\d+)?)([smhd]?)$")
_SCALE = {"": 1.0, "s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0}


def parse_duration(tok: str) -> float:
    """'3d' / '12h' / '45m' / '30s' / bare seconds / 'day2'."""
    tok = tok.strip().lower()
    if tok.startswith("day"):
        return float(tok[3:]) * 86400.0
    m = _DUR.match(tok)
    if not m:
        raise ValueError(f"bad duration {tok!r}")
    return float(m.group(1)) * _SCALE[m.group(2)]


def derive_key(seed: int) -> bytes:
    return hashlib.sha256(b"vssd-device-key:" + str(seed).encode()).digest()


@dataclass(frozen=True)
class MetricsReport:
    host_pages_written: int
    nand_pages_programmed: int
    write_amplification: float
    gc_invocations: int
    ov_pages_resident: int
    relocations: int
    device_full_events: int


class Sim:
    """One host+device world: device, filesystem shim, the host's policy
    manager endpoint (the only other holder of the device key), a shadow
    oracle and the clock."""

    def __init__(self, geometry: Optional[FlashGeometry] = None, seed: int = 0,
                 uniform_retention_s: Optional[float] = None):
        self.seed = seed
        key = derive_key(seed)
        self.clock = SimClock()
        self.device = Device(geometry or FlashGeometry(), key=key,
                             uniform_retention_s=uniform_retention_s)
        self.fs = HostFs(self.device)
        self.spm = channel.Endpoint(key, rng=random.Random(seed ^ 0x5EA1))
        self.oracle = ShadowOracle(uniform_retention_s)
        self._forge_rng = random.Random(seed ^ 0xF043E)

    @property
    def now(self):
        return self.clock.now

    @property
    def page_size(self):
        return self.device.flash.geometry.page_size

    # policy management ----------------------------------------------------

    def _submit(self, cmd: PolicyCommand):
        env = self.spm.seal(channel.encode_command(cmd))
        resp_env = self.fs.submit_policy(env, self.now)
        resp = channel.decode_response(self.spm.open(resp_env))
        if resp.status is ResponseStatus.SUCCESS:
            params = None if cmd.kind is CommandKind.DELETE else cmd.params
            self.oracle.note_policy(cmd.path, params, self.now)
        return resp

    def policy_create(self, path, retention_s, backup_cycle_s=0.0, max_versions=0):
        return self._submit(PolicyCommand(
            CommandKind.CREATE, path,
            PolicyParams(retention_s, backup_cycle_s, max_versions)))

    def policy_change(self, path, retention_s, backup_cycle_s=0.0, max_versions=0):
        return self._submit(PolicyCommand(
            CommandKind.CHANGE, path,
            PolicyParams(retention_s, backup_cycle_s, max_versions)))

    def policy_delete(self, path):
        return self._submit(PolicyCommand(CommandKind.DELETE, path))

    def forge_policy(self, cmd: PolicyCommand) -> bool:
        """Attempt a policy command without the device key (attacker move).
        Returns True when the device rejected it."""
        wrong_key = self._forge_rng.getrandbits(256).to_bytes(32, "big")
        env = channel.seal(channel.encode_command(cmd), wrong_key, seq=1)
        try:
            self.fs.submit_policy(env, self.now)
        except channel.MacVerificationFailed:
            return True
        return False

    # data path -------------------------------------------------------------

    def write_file(self, path, offset, data, note_oracle=True):
        self.fs.fs_write(path, offset, data, self.now)
        if note_oracle:
            ps = self.page_size
            tagged = not self.fs.interpose.drop_pbset
            for i in range(0, len(data), ps):
                self.oracle.note_write(path, offset + i, data[i:i + ps],
                                       self.now, tagged)

    def recover_file(self, path, target: RecoveryTarget, force_scan=False):
        pairs = None
        if not force_scan:
            try:
                pairs = self.fs.get_lba_list(path)
            except FsCorrupted:
                pairs = None   # metadata gone: fall back to the OOB scan
        return self.device.recover(RecoveryRequest(path, target, pairs), self.now)

    # metrics ----------------------------------------------------------------

    def metrics(self, since: Optional[dict] = None) -> MetricsReport:
        s = self.device.stats()
        base = since or {}
        host = s.host_pages_written - base.get("host_pages_written", 0)
        nand = s.nand_pages_programmed - base.get("nand_pages_programmed", 0)
        return MetricsReport(
            host_pages_written=host,
            nand_pages_programmed=nand,
            write_amplification=(nand / host) if host else 1.0,
            gc_invocations=s.gc_invocations - base.get("gc_invocations", 0),
            ov_pages_resident=s.ov_pages_resident,
            relocations=s.relocations - base.get("relocations", 0),
            device_full_events=s.device_full_events - base.get("device_full_events", 0),
        )

    def counter_snapshot(self) -> dict:
        s = self.device.stats()
        return {k: getattr(s, k) for k in
                ("host_pages_written", "nand_pages_programmed", "gc_invocations",
                 "relocations", "device_full_events")}


def probe_device(sim: Sim, path: str, t: float):
    """Device-side answer for one (path, time) probe, oracle-comparable."""
    try:
        image = sim.recover_file(path, RecoveryTarget.at_time(t))
    except RecoveryError:
        return ("fail",)
    return ("ok", dict(image.chunks))


def oracle_check(sim: Sim, probes) -> list:
    """Compare device recovery with the shadow oracle for (path, t) probes.
    Returns mismatch descriptions; empty means full agreement."""
    mismatches = []
    for path, t in probes:
        want = sim.oracle.recover_at(path, t, sim.now)
        got = probe_device(sim, path, t)
        if want[0] == "fail":
            if got[0] != "fail":
                mismatches.append(f"{path}@{t}: oracle fail, device ok")
        else:
            if got[0] != "ok":
                mismatches.append(f"{path}@{t}: oracle ok, device fail ({want[1] and len(want[1])} offsets)")
            elif got[1] != want[1]:
                mismatches.append(f"{path}@{t}: content mismatch")
    return mismatches
