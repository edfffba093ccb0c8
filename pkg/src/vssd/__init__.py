"""Deterministic simulator of a policy-versioned SSD.

The device retains superseded page versions according to per-file policies
installed over an authenticated channel, survives host-level compromise of
the filesystem and driver, and recovers files by time or version ordinal
from its own out-of-band page records.
"""

from .flash import FlashDevice, FlashGeometry, OobRecord, PageState, Piggyback, Ppa
from .policy import (ChainVersion, CommandKind, PolicyCommand, PolicyParams,
                     PolicyTable, PreserveVerdict, Reason, is_preservable,
                     surviving_versions)
from .channel import Endpoint, ResponseMessage, ResponseStatus
from .ftl import DeviceFull, GcReport, NoVictimGain, PageClass, VersionedFtl
from .device import Device, DeviceStats
from .recovery import (RecoveredImage, RecoveryNotPossible, RecoveryRequest,
                       RecoveryTarget, apply_recovery, exhaustive_scan)
from .hostfs import HostFs, InterposeConfig
from .oracle import ShadowOracle
from .harness import MetricsReport, Sim, SimClock, oracle_check, parse_duration
from .scenario import SCENARIOS, ScenarioResult, pattern_bytes, run_builtin, run_script
from .workload import WorkloadRow, WorkloadSpec, differential_run, run_workload, sweep_grid
from .image import load_image, save_image

__version__ = "0.1.0"

__all__ = [
    "ChainVersion", "CommandKind", "Device", "DeviceFull", "DeviceStats",
    "Endpoint", "FlashDevice", "FlashGeometry", "GcReport", "HostFs",
    "InterposeConfig", "MetricsReport", "NoVictimGain", "OobRecord",
    "PageClass", "PageState", "Piggyback", "PolicyCommand", "PolicyParams",
    "PolicyTable", "Ppa", "PreserveVerdict", "Reason", "RecoveredImage",
    "RecoveryNotPossible", "RecoveryRequest", "RecoveryTarget", "SCENARIOS",
    "ScenarioResult", "ShadowOracle", "Sim", "SimClock", "VersionedFtl",
    "WorkloadRow", "WorkloadSpec", "apply_recovery", "differential_run",
    "exhaustive_scan", "is_preservable", "load_image", "oracle_check",
    "parse_duration", "pattern_bytes", "run_builtin", "run_script",
    "run_workload", "save_image", "surviving_versions",
]
