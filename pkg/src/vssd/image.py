"""World images: one binary file holding the full simulated state, so the
command line can operate on a persistent device across invocations.

Layout:  magic  "VSSDIMG\\x01"
         u32    header length (big endian)
         JSON   header (geometry, clock, key, tables, page index)
         blob   page payloads, back to back, located by header offsets

The shadow oracle is deliberately not part of the image: it is test
instrumentation, not device or host state.
"""

import json
import random
import struct

from .channel import Endpoint
from .device import Device
from .flash import FlashGeometry, OobRecord, Piggyback, Ppa
from .ftl import VersionedFtl
from .harness import Sim
from .hostfs import HostFs
from .policy import PolicyTable

MAGIC = b"VSSDIMG\x01"
FORMAT_VERSION = 1


class ImageError(Exception):
    pass


def _oob_doc(oob: OobRecord):
    return {
        "lpa": oob.lpa,
        "serial": oob.serial,
        "wt": oob.written_at,
        "back": None if oob.back_ptr is None else [oob.back_ptr.block, oob.back_ptr.page],
        "pb": None if oob.pbset is None else [oob.pbset.path, oob.pbset.offset],
    }


def _oob_from(doc) -> OobRecord:
    return OobRecord(
        lpa=doc["lpa"],
        serial=doc["serial"],
        written_at=doc["wt"],
        back_ptr=None if doc["back"] is None else Ppa(*doc["back"]),
        pbset=None if doc["pb"] is None else Piggyback(*doc["pb"]),
    )


def save_image(sim: Sim, path: str) -> str:
    dev = sim.device
    g = dev.flash.geometry
    blobs = []
    page_index = []
    blob_off = 0
    for ppa in dev.flash.iter_programmed():
        payload, oob = dev.flash.read_page(ppa)
        page_index.append([ppa.block, ppa.page, _oob_doc(oob), blob_off, len(payload)])
        blobs.append(payload)
        blob_off += len(payload)

    header = {
        "version": FORMAT_VERSION,
        "seed": sim.seed,
        "clock_now": sim.clock.now,
        "geometry": [g.blocks, g.pages_per_block, g.page_size, g.max_path_len],
        "key": dev.endpoint._key.hex(),
        "uniform_retention_s": dev.ftl.uniform_retention_s,
        "flash": {
            "erase_counts": list(dev.flash.erase_counts),
            "programmed_total": dev.flash.programmed_total,
            "pages": page_index,
        },
        "ftl": dev.ftl.to_state(),
        "policy": dev.policies.to_state(),
        "dev_endpoint": dev.endpoint.to_state(),
        "spm_endpoint": sim.spm.to_state(),
        "fs": sim.fs.to_state(),
    }
    raw = json.dumps(header, separators=(",", ":"), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">I", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    return path


def load_image(path: str) -> Sim:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise ImageError(f"{path}: not a device image")
    (hlen,) = struct.unpack(">I", data[len(MAGIC):len(MAGIC) + 4])
    hstart = len(MAGIC) + 4
    if hstart + hlen > len(data):
        raise ImageError(f"{path}: truncated header")
    try:
        header = json.loads(data[hstart:hstart + hlen])
    except ValueError as e:
        raise ImageError(f"{path}: bad header: {e}")
    if header.get("version") != FORMAT_VERSION:
        raise ImageError(f"{path}: unsupported image version {header.get('version')}")

    blob_base = hstart + hlen
    geometry = FlashGeometry(*header["geometry"])
    key = bytes.fromhex(header["key"])
    seed = header["seed"]

    sim = Sim(geometry=geometry, seed=seed,
              uniform_retention_s=header["uniform_retention_s"])
    sim.clock.now = header["clock_now"]
    dev: Device = sim.device
    if dev.endpoint._key != key:
        # image created under a different key derivation input: honor the image
        dev.endpoint = Endpoint(key)

    fl = header["flash"]
    for block, page, oob_doc, off, length in fl["pages"]:
        lo = blob_base + off
        hi = lo + length
        if hi > len(data):
            raise ImageError(f"{path}: truncated payload section")
        dev.flash.program_page(Ppa(block, page), data[lo:hi], _oob_from(oob_doc))
    dev.flash.erase_counts[:] = fl["erase_counts"]
    dev.flash.programmed_total = fl["programmed_total"]

    dev.policies = PolicyTable.from_state(header["policy"])
    dev.ftl = VersionedFtl.from_state(dev.flash, dev.policies, header["ftl"])
    dev.endpoint.restore_state(header["dev_endpoint"])

    spm_state = header["spm_endpoint"]
    # fresh nonce stream, keyed off where the counter got to, so reloaded
    # worlds never reuse a (nonce, sequence) pair from before the save
    sim.spm = Endpoint(key, rng=random.Random((seed ^ 0x5EA1)
                                              + spm_state["send_seq"] * 1000003))
    sim.spm.restore_state(spm_state)
    sim.fs = HostFs.from_state(dev, header["fs"])
    return sim
