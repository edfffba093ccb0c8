"""Synthetic workloads: a parameter sweep measuring write amplification as
versioning coverage grows, and a randomized differential driver that replays
mixed traffic while an independent shadow oracle watches every recovery.

The sweep compares two device modes over the same op stream:

  selective  only files covered by a policy are versioned
  uniform    the device versions every tagged write under one retention

Rows are deterministic for a given seed.
"""

import math
import random
from dataclasses import dataclass
from typing import List, Optional

from .flash import FlashGeometry
from .ftl import DeviceFull
from .harness import Sim, oracle_check
from .scenario import pattern_bytes

KIND_FILE_PAGES = {"big": 80, "small": 8}
# Clock step per overwrite op, sized so the in-retention version window
# stays well under the device's spare area for either file size.
KIND_STEP_S = {"big": 480.0, "small": 48.0}
DEFAULT_RETENTION_S = 3600.0
DEFAULT_RAW_BW_MBPS = 65.0


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str                     # "big" or "small"
    capacity_ratio: float         # fraction of usable pages pre-filled
    versioning_ratio: float       # fraction of files given a policy
    op_count: Optional[int] = None  # whole-file overwrites; None = auto
    rng_seed: int = 0
    retention_s: float = DEFAULT_RETENTION_S

    def __post_init__(self):
        if self.kind not in KIND_FILE_PAGES:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if not (0.0 <= self.capacity_ratio <= 1.0):
            raise ValueError("capacity_ratio must be in [0, 1]")
        if not (0.0 <= self.versioning_ratio <= 1.0):
            raise ValueError("versioning_ratio must be in [0, 1]")


@dataclass(frozen=True)
class WorkloadRow:
    mode: str
    kind: str
    capacity_ratio: float
    versioning_ratio: float
    ops_completed: int
    host_pages: int
    nand_pages: int
    write_amplification: float
    gc_invocations: int
    ov_pages_resident: int
    device_full_events: int
    est_throughput_mbps: float


CSV_FIELDS = [f.strip() for f in (
    "mode,kind,capacity_ratio,versioning_ratio,ops_completed,host_pages,"
    "nand_pages,write_amplification,gc_invocations,ov_pages_resident,"
    "device_full_events,est_throughput_mbps").split(",")]


def _auto_ops(kind: str, geometry: FlashGeometry) -> int:
    # aim for roughly 4x the device's physical capacity in host writes
    total = geometry.blocks * geometry.pages_per_block
    return max(8, (4 * total) // KIND_FILE_PAGES[kind])


def run_workload(spec: WorkloadSpec, mode: str,
                 geometry: Optional[FlashGeometry] = None,
                 raw_bw_mbps: float = DEFAULT_RAW_BW_MBPS) -> WorkloadRow:
    if mode not in ("selective", "uniform"):
        raise ValueError(f"unknown mode {mode!r}")
    geometry = geometry or FlashGeometry()
    file_pages = KIND_FILE_PAGES[spec.kind]
    step_s = KIND_STEP_S[spec.kind]
    usable = geometry.blocks * geometry.pages_per_block - 2 * geometry.pages_per_block
    n_files = max(1, int(spec.capacity_ratio * usable) // file_pages)
    op_count = spec.op_count if spec.op_count is not None else _auto_ops(spec.kind, geometry)

    sim = Sim(geometry=geometry, seed=spec.rng_seed,
              uniform_retention_s=spec.retention_s if mode == "uniform" else None)
    paths = [f"/data/{spec.kind}{i:04d}" for i in range(n_files)]

    if mode == "selective":
        covered = math.ceil(spec.versioning_ratio * n_files)
        for path in paths[:covered]:
            sim.policy_create(path, spec.retention_s)

    page = bytes(geometry.page_size)
    blob = page * file_pages
    for path in paths:
        sim.write_file(path, 0, blob, note_oracle=False)

    base = sim.counter_snapshot()
    rng = random.Random(spec.rng_seed)
    done = 0
    for _ in range(op_count):
        sim.clock.advance(step_s)
        path = paths[rng.randrange(n_files)]
        try:
            sim.write_file(path, 0, blob, note_oracle=False)
        except DeviceFull:
            # let the retention window drain, then try once more
            sim.clock.advance(spec.retention_s)
            try:
                sim.write_file(path, 0, blob, note_oracle=False)
            except DeviceFull:
                break
        done += 1

    m = sim.metrics(since=base)
    return WorkloadRow(
        mode=mode,
        kind=spec.kind,
        capacity_ratio=spec.capacity_ratio,
        versioning_ratio=spec.versioning_ratio,
        ops_completed=done,
        host_pages=m.host_pages_written,
        nand_pages=m.nand_pages_programmed,
        write_amplification=m.write_amplification,
        gc_invocations=m.gc_invocations,
        ov_pages_resident=m.ov_pages_resident,
        device_full_events=m.device_full_events,
        est_throughput_mbps=raw_bw_mbps / m.write_amplification if m.write_amplification else raw_bw_mbps,
    )


def sweep_grid(kinds, modes, capacities, ratios, seed: int = 0,
               op_count: Optional[int] = None,
               geometry: Optional[FlashGeometry] = None,
               raw_bw_mbps: float = DEFAULT_RAW_BW_MBPS) -> List[WorkloadRow]:
    rows = []
    for kind in kinds:
        for cap in capacities:
            for ratio in ratios:
                for mode in modes:
                    spec = WorkloadSpec(kind=kind, capacity_ratio=cap,
                                        versioning_ratio=ratio,
                                        op_count=op_count, rng_seed=seed)
                    rows.append(run_workload(spec, mode, geometry=geometry,
                                             raw_bw_mbps=raw_bw_mbps))
    return rows


# Randomized differential driver: mixed writes, clock jumps, live policy
# edits and deletions, with every step mirrored into the shadow oracle.

DIFF_FILES = 24
DIFF_FILE_PAGES = 4


def differential_run(op_count: int, probe_count: int, seed: int,
                     policy_style: str = "mixed",
                     fixed_rt: Optional[float] = None,
                     uniform: bool = False,
                     geometry: Optional[FlashGeometry] = None,
                     instrument=None):
    """Drive a random op stream, then probe random (path, time) recoveries
    against the oracle. Returns (sim, probes, mismatches).

    `instrument`, if given, is called with the freshly built Sim before any
    traffic, so tests can hook internals (e.g. watch every collection)."""
    sim = Sim(geometry=geometry, seed=seed,
              uniform_retention_s=fixed_rt if uniform else None)
    if instrument is not None:
        instrument(sim)
    rng = random.Random(seed)
    page_size = sim.page_size
    paths = [f"/d/f{i:02d}" for i in range(DIFF_FILES)]

    policied = set()
    if not uniform:
        if policy_style == "all":
            if fixed_rt is None:
                raise ValueError("policy_style='all' needs fixed_rt")
            for path in paths:
                sim.policy_create(path, fixed_rt)
                policied.add(path)
        else:
            for i, path in enumerate(paths):
                m = i % 4
                if m == 0:
                    continue
                if m == 1:
                    sim.policy_create(path, 30 * 86400.0)
                elif m == 2:
                    sim.policy_create(path, 7200.0)
                elif i % 8 == 7:
                    sim.policy_create(path, 86400.0, 1800.0, 0)
                else:
                    sim.policy_create(path, 86400.0, 0.0, 3)
                policied.add(path)

    gen = 0
    mutate_allowed = policy_style == "mixed" and not uniform
    for _ in range(op_count):
        r = rng.random()
        if r < 0.80:
            path = paths[rng.randrange(DIFF_FILES)]
            off = rng.randrange(DIFF_FILE_PAGES) * page_size
            data = pattern_bytes(f"g{gen}", path, off, page_size, page_size)
            gen += 1
            try:
                sim.write_file(path, off, data)
            except DeviceFull:
                sim.clock.advance(7200.0)
                try:
                    sim.write_file(path, off, data)
                except DeviceFull:
                    continue
        elif r < 0.90:
            sim.clock.advance(60.0 + rng.random() * 7200.0)
        elif r < 0.95:
            if mutate_allowed:
                path = paths[rng.randrange(DIFF_FILES)]
                roll = rng.random()
                if path not in policied:
                    if roll < 0.5:
                        sim.policy_create(path, rng.choice((7200.0, 86400.0)))
                        policied.add(path)
                elif roll < 0.25:
                    sim.policy_delete(path)
                    policied.discard(path)
                elif roll < 0.7:
                    sim.policy_change(path, rng.choice((7200.0, 86400.0, 30 * 86400.0)))
                else:
                    sim.policy_change(path, 86400.0, 0.0, rng.choice((2, 3, 0)))
        else:
            from .ftl import NoVictimGain
            try:
                sim.device.gc(sim.now)
            except NoVictimGain:
                pass

    probes = []
    for _ in range(probe_count):
        path = paths[rng.randrange(DIFF_FILES)]
        probes.append((path, rng.random() * sim.now))
    mismatches = oracle_check(sim, probes)
    return sim, probes, mismatches
