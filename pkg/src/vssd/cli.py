"""Command line front end.

Operates on a persistent world image (--image, default device.img): a fresh
world comes from `init`, every other verb loads the image, acts, and saves
it back when it changed something. Durations accept 30s / 45m / 12h / 3d /
day2 / bare seconds.

Exit codes:
    0   success
    2   usage / malformed arguments
    10  duplicate policy
    11  policy not found
    12  message authentication failed
    13  stale (replayed) policy sequence
    20  recovery not possible (versions lapsed)
    21  file unknown / content unavailable
    30  device full, nothing reclaimable
    40  scenario check failed
    41  scenario script parse error
    50  image file missing or malformed
"""

import argparse
import sys

from . import channel, image as image_mod, report as report_mod, scenario as scenario_mod
from .channel import ResponseStatus
from .flash import FlashGeometry
from .ftl import DeviceFull, NoVictimGain
from .harness import Sim, parse_duration
from .hostfs import FsCorrupted, HostFsError, UnalignedIo, UnknownFile
from .image import ImageError
from .recovery import (FileUnknown, RecoveryNotPossible, RecoveryRequest,
                       RecoveryTarget, apply_recovery)
from .scenario import ScenarioParseError, pattern_bytes
from .workload import DEFAULT_RAW_BW_MBPS, sweep_grid

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DUPLICATE = 10
EXIT_NOT_FOUND = 11
EXIT_MAC = 12
EXIT_REPLAY = 13
EXIT_UNRECOVERABLE = 20
EXIT_UNKNOWN_FILE = 21
EXIT_FULL = 30
EXIT_SCENARIO_FAIL = 40
EXIT_SCENARIO_PARSE = 41
EXIT_IMAGE = 50

_STATUS_EXIT = {
    ResponseStatus.SUCCESS: EXIT_OK,
    ResponseStatus.DUPLICATE_POLICY: EXIT_DUPLICATE,
    ResponseStatus.NOT_FOUND: EXIT_NOT_FOUND,
    ResponseStatus.MALFORMED: EXIT_USAGE,
}


def _parse_geometry(text: str) -> FlashGeometry:
    parts = text.lower().split("x")
    if len(parts) not in (3, 4):
        raise ValueError("geometry must be BLOCKSxPAGESxPAGESIZE[xMAXPATH]")
    return FlashGeometry(*(int(p) for p in parts))


def _load(args) -> Sim:
    try:
        return image_mod.load_image(args.image)
    except FileNotFoundError:
        raise ImageError(f"{args.image}: no such image (run `vssd init` first)")


def _advance(sim, args):
    if getattr(args, "advance", None):
        sim.clock.advance(parse_duration(args.advance))
        return True
    return False


# ---------------------------------------------------------------- handlers


def cmd_init(args):
    geometry = _parse_geometry(args.geometry)
    uniform = parse_duration(args.uniform) if args.uniform else None
    sim = Sim(geometry=geometry, seed=args.seed, uniform_retention_s=uniform)
    image_mod.save_image(sim, args.image)
    mode = f"uniform retention {uniform:g}s" if uniform else "selective (policy table)"
    print(f"initialized {args.image}: {geometry.blocks}x{geometry.pages_per_block}"
          f"x{geometry.page_size}, {mode}, seed {args.seed}")
    return EXIT_OK


def cmd_write(args):
    sim = _load(args)
    _advance(sim, args)
    if args.data_hex is not None:
        data = bytes.fromhex(args.data_hex)
    else:
        data = pattern_bytes(args.pattern, args.path, args.offset, args.length,
                             sim.page_size)
    sim.write_file(args.path, args.offset, data)
    image_mod.save_image(sim, args.image)
    print(f"wrote {len(data)} bytes to {args.path}@{args.offset} at t={sim.now:g}")
    return EXIT_OK


def cmd_read(args):
    sim = _load(args)
    data = sim.fs.fs_read(args.path, args.offset, args.length)
    sys.stdout.write(data.hex() + "\n")
    return EXIT_OK


def cmd_policy(args):
    sim = _load(args)
    changed = _advance(sim, args)
    if args.action == "list":
        text = sim.device.policies.dump_text()
        print(text if text else "(no policies)")
        if changed:
            image_mod.save_image(sim, args.image)
        return EXIT_OK
    if args.action == "create":
        resp = sim.policy_create(args.path, parse_duration(args.retention),
                                 parse_duration(args.cycle), args.cap)
    elif args.action == "change":
        resp = sim.policy_change(args.path, parse_duration(args.retention),
                                 parse_duration(args.cycle), args.cap)
    else:
        resp = sim.policy_delete(args.path)
    image_mod.save_image(sim, args.image)
    if resp.status is ResponseStatus.SUCCESS:
        print(f"policy {args.action} {args.path}: ok")
    else:
        print(f"policy {args.action} {args.path}: {resp.status.value}"
              + (f" ({resp.detail})" if resp.detail else ""), file=sys.stderr)
    return _STATUS_EXIT[resp.status]


def cmd_recover(args):
    sim = _load(args)
    changed = _advance(sim, args)
    if args.time is not None:
        target = RecoveryTarget.at_time(parse_duration(args.time))
    else:
        target = RecoveryTarget.versions_back(args.version)
    image = sim.recover_file(args.path, target, force_scan=args.scan)

    route = "oob-scan" if image.via_scan else "lba-list"
    print(f"recovered {args.path} ({target.kind.value} {target.value:g}) via {route}:")
    for (offset, data), (_, ppa, wt) in zip(image.chunks, image.provenance):
        print(f"  offset {offset:>10}  {len(data):>6} B  written t={wt:g}"
              f"  page {ppa.block}:{ppa.page}")
    print(f"  total {image.total_bytes()} bytes in {len(image.chunks)} chunks")
    if image.mixed_versions:
        print("  note: chunks come from different write times")

    if args.out:
        size = max(off + len(d) for off, d in image.chunks)
        buf = bytearray(size)
        for off, d in image.chunks:
            buf[off:off + len(d)] = d
        with open(args.out, "wb") as fh:
            fh.write(bytes(buf))
        print(f"  image written to {args.out} ({size} bytes, holes zero-filled)")

    if args.apply:
        pages = apply_recovery(sim.fs, image, sim.now)
        print(f"  applied back through the filesystem ({pages} pages rewritten)")
        changed = True
    if changed:
        image_mod.save_image(sim, args.image)
    return EXIT_OK


def cmd_scenario(args):
    if args.action == "list":
        for name in scenario_mod.list_scenarios():
            print(name)
        return EXIT_OK
    if args.script:
        with open(args.script) as fh:
            text = fh.read()
        name = args.script
    else:
        if args.name not in scenario_mod.SCENARIOS:
            print(f"unknown scenario {args.name!r}; see `vssd scenario list`",
                  file=sys.stderr)
            return EXIT_USAGE
        text = scenario_mod.SCENARIOS[args.name]
        name = args.name
    result, sim = scenario_mod.run_script(text, name=name, seed=args.seed)
    sys.stdout.write(result.dump_text())
    if args.save_image:
        image_mod.save_image(sim, args.save_image)
        print(f"world saved to {args.save_image}")
    return EXIT_OK if result.passed else EXIT_SCENARIO_FAIL


def _floats(text):
    return [float(x) for x in text.split(",") if x != ""]


def cmd_sweep(args):
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    modes = ["selective", "uniform"] if args.modes == "both" else \
        [m.strip() for m in args.modes.split(",") if m.strip()]
    rows = sweep_grid(kinds, modes, _floats(args.capacities), _floats(args.ratios),
                      seed=args.seed, op_count=args.ops, raw_bw_mbps=args.raw_bw)
    import os
    os.makedirs(args.out, exist_ok=True)
    csv_path = report_mod.write_csv(rows, os.path.join(args.out, "sweep.csv"))
    figures = report_mod.render_figures(rows, args.out)
    print(f"{len(rows)} rows -> {csv_path}")
    for p in figures:
        print(f"figure -> {p}")
    return EXIT_OK


def cmd_gc(args):
    sim = _load(args)
    _advance(sim, args)
    rep = sim.device.gc(sim.now)
    image_mod.save_image(sim, args.image)
    print(f"collected block {rep.victim_block}: reclaimed {rep.reclaimed_invalid}"
          f" stale + {rep.reclaimed_expired} lapsed, relocated {rep.relocated_valid}"
          f" live + {rep.relocated_ov} retained")
    return EXIT_OK


def cmd_stats(args):
    sim = _load(args)
    print(sim.device.stats().dump_text())
    print(f"clock: {sim.now:g}")
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser():
    p = argparse.ArgumentParser(prog="vssd",
                                description="policy-versioned SSD simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, advance=True):
        sp.add_argument("--image", default="device.img", help="world image file")
        if advance:
            sp.add_argument("--advance", help="move the clock before acting (e.g. 3d)")

    sp = sub.add_parser("init", help="create a fresh world image")
    sp.add_argument("--image", default="device.img")
    sp.add_argument("--geometry", default="64x64x4096")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--uniform", help="version every tagged write under this retention")
    sp.set_defaults(fn=cmd_init)

    sp = sub.add_parser("write", help="write pattern data through the filesystem")
    common(sp)
    sp.add_argument("path")
    sp.add_argument("offset", type=int)
    sp.add_argument("length", type=int)
    sp.add_argument("--pattern", default="data")
    sp.add_argument("--data-hex", help="explicit payload (page-aligned)")
    sp.set_defaults(fn=cmd_write)

    sp = sub.add_parser("read", help="read live file content (hex to stdout)")
    common(sp, advance=False)
    sp.add_argument("path")
    sp.add_argument("offset", type=int)
    sp.add_argument("length", type=int)
    sp.set_defaults(fn=cmd_read)

    sp = sub.add_parser("policy", help="manage versioning policies")
    common(sp)
    sp.add_argument("action", choices=["create", "change", "delete", "list"])
    sp.add_argument("path", nargs="?")
    sp.add_argument("--retention", default="0")
    sp.add_argument("--cycle", default="0")
    sp.add_argument("--cap", type=int, default=0)
    sp.set_defaults(fn=cmd_policy)

    sp = sub.add_parser("recover", help="recover a file version")
    common(sp)
    sp.add_argument("path")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--time", help="file as of this clock time (e.g. 2d)")
    g.add_argument("--version", type=int, help="N versions back (0 = live)")
    sp.add_argument("--scan", action="store_true",
                    help="ignore host metadata, scan page tags")
    sp.add_argument("--out", help="write the recovered bytes to a file")
    sp.add_argument("--apply", action="store_true",
                    help="write the recovered image back through the filesystem")
    sp.set_defaults(fn=cmd_recover)

    sp = sub.add_parser("scenario", help="run scripted scenarios")
    sp.add_argument("action", choices=["run", "list"])
    sp.add_argument("name", nargs="?")
    sp.add_argument("--script", help="run a script file instead of a built-in")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--save-image", help="save the end state to this image file")
    sp.set_defaults(fn=cmd_scenario)

    sp = sub.add_parser("sweep", help="run the workload grid, emit CSV + figures")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--kinds", default="big,small")
    sp.add_argument("--modes", default="both")
    sp.add_argument("--ratios", default="0,0.25,0.5,0.75,1")
    sp.add_argument("--capacities", default="0.25,0.5,0.75")
    sp.add_argument("--ops", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--raw-bw", type=float, default=DEFAULT_RAW_BW_MBPS)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("gc", help="run one garbage collection pass")
    common(sp)
    sp.set_defaults(fn=cmd_gc)

    sp = sub.add_parser("stats", help="print device statistics")
    common(sp, advance=False)
    sp.set_defaults(fn=cmd_stats)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd == "policy" and args.action != "list" and not args.path:
        parser.error("policy create/change/delete need a path")
    if args.cmd == "scenario" and args.action == "run" \
            and not args.name and not args.script:
        parser.error("scenario run needs a name or --script")
    try:
        return args.fn(args)
    except ScenarioParseError as e:
        print(f"scenario parse error: {e}", file=sys.stderr)
        return EXIT_SCENARIO_PARSE
    except channel.MacVerificationFailed as e:
        print(f"authentication failure: {e}", file=sys.stderr)
        return EXIT_MAC
    except channel.ReplayRejected as e:
        print(f"replay rejected: {e}", file=sys.stderr)
        return EXIT_REPLAY
    except RecoveryNotPossible as e:
        print(f"recovery not possible: {e}", file=sys.stderr)
        return EXIT_UNRECOVERABLE
    except (FileUnknown, UnknownFile) as e:
        print(f"unknown file: {e}", file=sys.stderr)
        return EXIT_UNKNOWN_FILE
    except NoVictimGain as e:
        print(f"nothing reclaimable: {e}", file=sys.stderr)
        return EXIT_FULL
    except DeviceFull as e:
        print(f"device full: {e}", file=sys.stderr)
        return EXIT_FULL
    except FsCorrupted as e:
        print(f"filesystem metadata unavailable: {e} (try --scan)", file=sys.stderr)
        return EXIT_UNKNOWN_FILE
    except (UnalignedIo, ValueError) as e:
        print(f"bad arguments: {e}", file=sys.stderr)
        return EXIT_USAGE
    except HostFsError as e:
        print(str(e), file=sys.stderr)
        return EXIT_UNKNOWN_FILE
    except ImageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_IMAGE


if __name__ == "__main__":
    sys.exit(main())
