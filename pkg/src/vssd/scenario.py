"""Scripted scenarios: a small line-oriented language for driving a simulated
world through writes, policy changes, host-side attacks and recovery checks,
plus the built-in demonstration scenarios.

Script grammar (one statement per line, '#' comments):

    mode uniform <retention>           # optional, first statement only
    clock +<duration>                  # 3d / 12h / 45m / 30s / bare seconds
    policy create <path> <rt> <bc> <v>
    policy change <path> <rt> <bc> <v>
    policy delete <path>
    write <path> <offset> <length> <pattern>
    attack <flag> on|off               # drop_pbset / tamper_payload /
                                       # tamper_lba / corrupt_fs
    forge-policy create|change <path> <rt> <bc> <v>
    forge-policy delete <path>
    gc
    recover <path> time <t> expect ok|fail [pattern <tok>]
    recover <path> version <n> expect ok|fail [pattern <tok>]
    assert-ov-count <n>
    assert-read <path> <offset> <length> pattern <tok>

Pattern tokens name deterministic page-block content, so any aligned slice
of a named pattern can be regenerated and compared byte for byte.
"""

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional

from .flash import FlashGeometry
from .channel import ResponseStatus
from .harness import MetricsReport, Sim, parse_duration
from .policy import CommandKind, PolicyCommand, PolicyParams
from .recovery import RecoveryError, RecoveryTarget


class ScenarioParseError(Exception):
    def __init__(self, line_no, msg):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class ScenarioRunError(Exception):
    pass


_ATTACK_FLAGS = ("drop_pbset", "tamper_payload", "tamper_lba", "corrupt_fs")


def pattern_bytes(tok: str, path: str, offset: int, length: int,
                  block: int = 4096) -> bytes:
    """Deterministic content for (pattern, path, file position). Generated
    block-by-block so partial or per-page slices agree with the full write."""
    out = bytearray()
    pos = offset
    end = offset + length
    while pos < end:
        idx = pos // block
        digest = hashlib.sha256(f"{tok}|{path}|{idx}".encode()).digest()
        reps = (block + len(digest) - 1) // len(digest)
        data = (digest * reps)[:block]
        lo = pos - idx * block
        hi = min(end - idx * block, block)
        out.extend(data[lo:hi])
        pos = idx * block + hi
    return bytes(out)


@dataclass
class Step:
    verb: str
    args: tuple
    line_no: int
    raw: str


def _need(parts, n, line_no, usage):
    if len(parts) != n:
        raise ScenarioParseError(line_no, f"expected: {usage}")


def parse_script(text: str):
    """Returns (uniform_retention_or_None, [Step])."""
    steps: List[Step] = []
    uniform_rt = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        verb = parts[0]
        if verb == "mode":
            if steps or uniform_rt is not None:
                raise ScenarioParseError(line_no, "mode must be the first statement")
            _need(parts, 3, line_no, "mode uniform <retention>")
            if parts[1] != "uniform":
                raise ScenarioParseError(line_no, f"unknown mode {parts[1]!r}")
            uniform_rt = parse_duration(parts[2])
            continue
        try:
            step = _parse_statement(verb, parts, line_no, line)
        except ScenarioParseError:
            raise
        except ValueError as e:
            raise ScenarioParseError(line_no, str(e))
        steps.append(step)
    return uniform_rt, steps


def _parse_statement(verb, parts, line_no, raw) -> Step:
    if verb == "clock":
        _need(parts, 2, line_no, "clock +<duration>")
        if not parts[1].startswith("+"):
            raise ScenarioParseError(line_no, "clock steps forward: clock +<duration>")
        return Step("clock", (parse_duration(parts[1][1:]),), line_no, raw)

    if verb == "policy":
        if len(parts) >= 2 and parts[1] == "delete":
            _need(parts, 3, line_no, "policy delete <path>")
            return Step("policy", (CommandKind.DELETE, parts[2], None), line_no, raw)
        _need(parts, 6, line_no, "policy create|change <path> <rt> <bc> <v>")
        kind = {"create": CommandKind.CREATE, "change": CommandKind.CHANGE}.get(parts[1])
        if kind is None:
            raise ScenarioParseError(line_no, f"unknown policy action {parts[1]!r}")
        params = PolicyParams(parse_duration(parts[3]), parse_duration(parts[4]),
                              int(parts[5]))
        return Step("policy", (kind, parts[2], params), line_no, raw)

    if verb == "write":
        _need(parts, 5, line_no, "write <path> <offset> <length> <pattern>")
        return Step("write", (parts[1], int(parts[2]), int(parts[3]), parts[4]),
                    line_no, raw)

    if verb == "attack":
        _need(parts, 3, line_no, "attack <flag> on|off")
        if parts[1] not in _ATTACK_FLAGS:
            raise ScenarioParseError(line_no, f"unknown attack flag {parts[1]!r}")
        if parts[2] not in ("on", "off"):
            raise ScenarioParseError(line_no, "attack state must be on or off")
        return Step("attack", (parts[1], parts[2] == "on"), line_no, raw)

    if verb == "forge-policy":
        if len(parts) >= 2 and parts[1] == "delete":
            _need(parts, 3, line_no, "forge-policy delete <path>")
            return Step("forge", (CommandKind.DELETE, parts[2], None), line_no, raw)
        _need(parts, 6, line_no, "forge-policy create|change <path> <rt> <bc> <v>")
        kind = {"create": CommandKind.CREATE, "change": CommandKind.CHANGE}.get(parts[1])
        if kind is None:
            raise ScenarioParseError(line_no, f"unknown forge action {parts[1]!r}")
        params = PolicyParams(parse_duration(parts[3]), parse_duration(parts[4]),
                              int(parts[5]))
        return Step("forge", (kind, parts[2], params), line_no, raw)

    if verb == "gc":
        _need(parts, 1, line_no, "gc")
        return Step("gc", (), line_no, raw)

    if verb == "recover":
        if len(parts) < 6 or parts[2] not in ("time", "version") or parts[4] != "expect":
            raise ScenarioParseError(
                line_no, "recover <path> time|version <x> expect ok|fail [pattern <tok>]")
        if parts[2] == "time":
            target = RecoveryTarget.at_time(parse_duration(parts[3]))
        else:
            target = RecoveryTarget.versions_back(int(parts[3]))
        if parts[5] not in ("ok", "fail"):
            raise ScenarioParseError(line_no, "expectation must be ok or fail")
        pattern = None
        rest = parts[6:]
        if rest:
            if len(rest) != 2 or rest[0] != "pattern":
                raise ScenarioParseError(line_no, "trailing clause must be: pattern <tok>")
            if parts[5] == "fail":
                raise ScenarioParseError(line_no, "pattern only applies to expect ok")
            pattern = rest[1]
        return Step("recover", (parts[1], target, parts[5] == "ok", pattern),
                    line_no, raw)

    if verb == "assert-ov-count":
        _need(parts, 2, line_no, "assert-ov-count <n>")
        return Step("ovcount", (int(parts[1]),), line_no, raw)

    if verb == "assert-read":
        _need(parts, 6, line_no, "assert-read <path> <offset> <length> pattern <tok>")
        if parts[4] != "pattern":
            raise ScenarioParseError(line_no, "assert-read needs a pattern clause")
        return Step("read", (parts[1], int(parts[2]), int(parts[3]), parts[5]),
                    line_no, raw)

    raise ScenarioParseError(line_no, f"unknown statement {verb!r}")


@dataclass
class ScenarioResult:
    name: str
    lines: List[str] = field(default_factory=list)
    passed: bool = True
    metrics: Optional[MetricsReport] = None

    def check(self, ok: bool, desc: str):
        self.lines.append(("ok - " if ok else "FAIL - ") + desc)
        if not ok:
            self.passed = False

    def dump_text(self) -> str:
        out = [f"scenario {self.name}"]
        out.extend(self.lines)
        if self.metrics is not None:
            m = self.metrics
            out.append(f"metrics host={m.host_pages_written} nand={m.nand_pages_programmed}"
                       f" waf={m.write_amplification:.3f} gc={m.gc_invocations}"
                       f" ov={m.ov_pages_resident} full={m.device_full_events}")
        out.append("result " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(out) + "\n"


def run_script(text: str, name: str = "script", seed: int = 0,
               geometry: Optional[FlashGeometry] = None):
    """Parse and execute a scenario. Returns (ScenarioResult, Sim)."""
    uniform_rt, steps = parse_script(text)
    sim = Sim(geometry=geometry, seed=seed, uniform_retention_s=uniform_rt)
    result = ScenarioResult(name=name)
    for step in steps:
        _run_step(sim, step, result)
    result.metrics = sim.metrics()
    return result, sim


def _run_step(sim: Sim, step: Step, result: ScenarioResult):
    if step.verb == "clock":
        sim.clock.advance(step.args[0])

    elif step.verb == "policy":
        kind, path, params = step.args
        resp = sim._submit(PolicyCommand(kind, path, params))
        if resp.status is not ResponseStatus.SUCCESS:
            raise ScenarioRunError(
                f"line {step.line_no}: policy command refused: {resp.status.value}")

    elif step.verb == "write":
        path, offset, length, tok = step.args
        data = pattern_bytes(tok, path, offset, length, sim.page_size)
        sim.write_file(path, offset, data)

    elif step.verb == "attack":
        flag, enable = step.args
        if flag == "corrupt_fs":
            if enable:
                sim.fs.corrupt_metadata()
            else:
                sim.fs.restore_metadata()
        else:
            setattr(sim.fs.interpose, flag, enable)

    elif step.verb == "forge":
        kind, path, params = step.args
        rejected = sim.forge_policy(PolicyCommand(kind, path, params))
        result.check(rejected, f"forged policy {kind.value} {path} rejected")

    elif step.verb == "gc":
        from .ftl import NoVictimGain
        try:
            sim.device.gc(sim.now)
        except NoVictimGain:
            pass

    elif step.verb == "recover":
        path, target, expect_ok, pattern = step.args
        desc = f"recover {path} {target.kind.value} {target.value}"
        try:
            image = sim.recover_file(path, target)
        except RecoveryError as e:
            result.check(not expect_ok, f"{desc} -> refused ({type(e).__name__})")
            return
        if not expect_ok:
            result.check(False, f"{desc} -> unexpectedly succeeded")
            return
        if pattern is None:
            result.check(True, f"{desc} -> {len(image.chunks)} chunks")
            return
        bad = []
        for offset, data in image.chunks:
            want = pattern_bytes(pattern, path, offset, len(data), sim.page_size)
            if data != want:
                bad.append(offset)
        result.check(not bad,
                     f"{desc} -> {len(image.chunks)} chunks, pattern {pattern}"
                     + (f" (mismatch at {bad})" if bad else ""))

    elif step.verb == "ovcount":
        want = step.args[0]
        got = sim.device.stats().ov_pages_resident
        result.check(got == want, f"ov-count {got} (want {want})")

    elif step.verb == "read":
        path, offset, length, tok = step.args
        data = sim.fs.fs_read(path, offset, length)
        want = pattern_bytes(tok, path, offset, length, sim.page_size)
        result.check(data == want, f"read {path}@{offset}+{length} pattern {tok}")

    else:  # pragma: no cover - parser owns the verb set
        raise ScenarioRunError(f"unhandled verb {step.verb}")


# Built-in demonstration scenarios. Two baseline stories (a device without
# per-file versioning loses data; one with it recovers), then six host-side
# attack drills. All run on the default geometry in selective mode.

FIG2A = """\
# One fixed 3-day retention for every write. The malware overwrites both
# files on day 3 and lies low; by detection on day 7 the window has lapsed
# for every old version, so neither file can be brought back.
mode uniform 3d
write /docs/secure.txt 0 4096 v1
write /tmp/temp.txt 0 4096 t1
clock +1d
write /docs/secure.txt 0 4096 v2
write /tmp/temp.txt 0 4096 t2
clock +2d
write /docs/secure.txt 0 4096 evil
write /tmp/temp.txt 0 4096 evil
clock +4d
recover /docs/secure.txt time 2d expect fail
recover /tmp/temp.txt time 2d expect fail
assert-ov-count 4
"""

FIG2B = """\
# Same timeline, but retention is spent where it matters: a 5-day policy on
# the one file worth protecting. Its day-1 state survives the day-3 attack
# through detection on day 7; the unprotected scratch file does not, and
# only the protected file's two old versions occupy space.
policy create /docs/secure.txt 5d 0 0
write /docs/secure.txt 0 4096 v1
write /tmp/temp.txt 0 4096 t1
clock +1d
write /docs/secure.txt 0 4096 v2
write /tmp/temp.txt 0 4096 t2
clock +2d
write /docs/secure.txt 0 4096 evil
write /tmp/temp.txt 0 4096 evil
clock +4d
recover /docs/secure.txt time 2d expect ok pattern v2
recover /tmp/temp.txt time 2d expect fail
assert-ov-count 2
"""

ATTACK1 = """\
# Ransomware encrypts a protected document; time-based recovery returns the
# pre-attack content.
policy create /work/report.doc 7d 0 0
write /work/report.doc 0 8192 clean
clock +2d
write /work/report.doc 0 8192 ransom
clock +1d
recover /work/report.doc time 1d expect ok pattern clean
"""

ATTACK2 = """\
# Malware first tries to strip the file's policy (forged command, no key),
# then wipes the file. The policy stands and the wipe is reversible.
policy create /vault/keys.db 10d 0 0
write /vault/keys.db 0 4096 secret
clock +1d
forge-policy delete /vault/keys.db
write /vault/keys.db 0 4096 wiped
clock +1h
recover /vault/keys.db version 1 expect ok pattern secret
"""

ATTACK3 = """\
# Version-cap pressure: rapid overwrites age old versions out of a capped
# policy while an uncapped one keeps everything.
policy create /a/capped.bin 30d 0 2
policy create /a/open.bin 30d 0 0
write /a/capped.bin 0 4096 g0
write /a/open.bin 0 4096 g0
clock +1h
write /a/capped.bin 0 4096 g1
write /a/open.bin 0 4096 g1
clock +1h
write /a/capped.bin 0 4096 g2
write /a/open.bin 0 4096 g2
clock +1h
write /a/capped.bin 0 4096 g3
write /a/open.bin 0 4096 g3
clock +1h
recover /a/capped.bin version 1 expect ok pattern g2
recover /a/capped.bin version 2 expect ok pattern g1
recover /a/capped.bin version 3 expect fail
recover /a/open.bin version 3 expect ok pattern g0
"""

ATTACK4 = """\
# Host filesystem metadata is destroyed; recovery falls back to scanning
# page tags on the device and still finds both versions.
policy create /srv/db.sqlite 14d 0 0
write /srv/db.sqlite 0 8192 base
clock +6h
write /srv/db.sqlite 0 8192 upd
clock +6h
attack corrupt_fs on
recover /srv/db.sqlite version 1 expect ok pattern base
recover /srv/db.sqlite version 0 expect ok pattern upd
attack corrupt_fs off
"""

ATTACK5 = """\
# A compromised driver corrupts write payloads in flight. The stored live
# copy is garbage, but the pre-attack version recovers byte for byte.
policy create /home/photo.jpg 7d 0 0
write /home/photo.jpg 0 4096 original
clock +1d
attack tamper_payload on
write /home/photo.jpg 0 4096 overwrite
attack tamper_payload off
clock +1h
recover /home/photo.jpg time 12h expect ok pattern original
recover /home/photo.jpg version 1 expect ok pattern original
"""

ATTACK6 = """\
# A hostile driver strips version tags from its own writes. Untagged writes
# are invisible to recovery, but the clean tagged version survives.
policy create /etc/config.ini 7d 0 0
write /etc/config.ini 0 4096 good
clock +1d
attack drop_pbset on
write /etc/config.ini 0 4096 rogue
attack drop_pbset off
clock +1h
recover /etc/config.ini version 1 expect ok pattern good
recover /etc/config.ini time 25h expect ok pattern good
"""

SCENARIOS = {
    "fig2a": FIG2A,
    "fig2b": FIG2B,
    "attack1": ATTACK1,
    "attack2": ATTACK2,
    "attack3": ATTACK3,
    "attack4": ATTACK4,
    "attack5": ATTACK5,
    "attack6": ATTACK6,
}


def list_scenarios():
    return sorted(SCENARIOS)


def run_builtin(name: str, seed: int = 0):
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}")
    return run_script(SCENARIOS[name], name=name, seed=seed)
