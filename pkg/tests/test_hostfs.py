import pytest

from vssd.device import Device
from vssd.flash import FlashDevice, FlashGeometry
from vssd.hostfs import (FileTable, FsCorrupted, HoleRead, HostFs,
                         InterposeConfig, UnalignedIo, UnknownFile)

PS = 64


class RecordingDevice:
    """Device stand-in that remembers exactly what crossed the bus."""

    def __init__(self):
        self.flash = FlashDevice(
            FlashGeometry(blocks=4, pages_per_block=4, page_size=PS))
        self.writes = []
        self.store = {}
        self.envelopes = []

    def write(self, lba, payload, pbset, now):
        self.writes.append((lba, payload, pbset, now))
        self.store[lba] = payload

    def read(self, lba):
        return self.store[lba]

    def policy_request(self, envelope, now):
        self.envelopes.append(envelope)
        return b"ack"


def page(fill, n=1):
    return bytes([fill]) * (PS * n)


class TestFileTable:
    def test_allocation_is_monotone_and_stable(self):
        t = FileTable()
        a = t.lba_for("/x", 0, allocate=True)
        b = t.lba_for("/x", PS, allocate=True)
        c = t.lba_for("/y", 0, allocate=True)
        assert (a, b, c) == (0, 1, 2)
        assert t.lba_for("/x", 0, allocate=True) == 0
        assert t.lba_for("/x", 2 * PS, allocate=False) is None
        assert t.extents("/x") == [(0, 0), (PS, 1)]
        assert t.paths() == ["/x", "/y"]
        assert not t.knows("/z")

    def test_state_round_trip(self):
        t = FileTable()
        t.lba_for("/x", 0, True)
        t.lba_for("/x", PS, True)
        u = FileTable.from_state(t.to_state())
        assert u.extents("/x") == t.extents("/x")
        # allocation counter restored: no lba reuse after reload
        assert u.lba_for("/new", 0, True) == 2


class TestBenignIo:
    def test_multi_page_write_tags_each_page(self):
        dev = RecordingDevice()
        fs = HostFs(dev)
        fs.fs_write("/f", PS, page(1) + page(2), now=5.0)
        assert [(w[0], w[1][0], w[2].path, w[2].offset, w[3])
                for w in dev.writes] == \
            [(0, 1, "/f", PS, 5.0), (1, 2, "/f", 2 * PS, 5.0)]

    def test_read_back_through_real_device(self):
        dev = Device(FlashGeometry(blocks=8, pages_per_block=4, page_size=PS),
                     key=bytes(32))
        fs = HostFs(dev)
        fs.fs_write("/f", 0, page(7, 3), now=1.0)
        fs.fs_write("/f", PS, page(9), now=2.0)
        assert fs.fs_read("/f", 0, 3 * PS) == page(7) + page(9) + page(7)

    def test_alignment_enforced(self):
        fs = HostFs(RecordingDevice())
        for offset, data in ((1, page(0)), (-PS, page(0)), (0, b"short"),
                             (0, b"")):
            with pytest.raises(UnalignedIo):
                fs.fs_write("/f", offset, data, now=0.0)
        fs.fs_write("/f", 0, page(0), now=0.0)
        with pytest.raises(UnalignedIo):
            fs.fs_read("/f", 0, PS - 1)

    def test_read_errors(self):
        fs = HostFs(RecordingDevice())
        with pytest.raises(UnknownFile):
            fs.fs_read("/nope", 0, PS)
        fs.fs_write("/f", 2 * PS, page(1), now=0.0)
        with pytest.raises(HoleRead):
            fs.fs_read("/f", 0, PS)   # hole before the written extent

    def test_lba_list_for_recovery(self):
        fs = HostFs(RecordingDevice())
        fs.fs_write("/f", 3 * PS, page(1), now=0.0)
        fs.fs_write("/f", 0, page(2), now=1.0)
        assert fs.get_lba_list("/f") == [(0, 1), (3 * PS, 0)]
        assert fs.get_lba_list("/unknown") == []


class TestInterpose:
    def test_drop_pbset_strips_tags_only(self):
        dev = RecordingDevice()
        fs = HostFs(dev, InterposeConfig(drop_pbset=True))
        fs.fs_write("/f", 0, page(3), now=0.0)
        lba, payload, pbset, _ = dev.writes[0]
        assert pbset is None
        assert (lba, payload) == (0, page(3))

    def test_tamper_payload_flips_data_in_transit(self):
        dev = RecordingDevice()
        fs = HostFs(dev, InterposeConfig(tamper_payload=True))
        fs.fs_write("/f", 0, page(0x00), now=0.0)
        assert dev.writes[0][1] == bytes([0x5A]) * PS
        assert dev.writes[0][2].path == "/f"   # tag still present

    def test_tamper_lba_redirects_the_write(self):
        dev = RecordingDevice()
        fs = HostFs(dev, InterposeConfig(tamper_lba=True))
        fs.fs_write("/f", 0, page(1), now=0.0)
        assert dev.writes[0][0] == 1          # allocated 0, sent 1
        assert fs.table.extents("/f") == [(0, 0)]
        with pytest.raises(HoleRead):
            fs.fs_read("/f", 0, PS)           # the real lba never got data

    def test_tamper_policy_envelope_flips_one_bit(self):
        dev = RecordingDevice()
        fs = HostFs(dev, InterposeConfig(tamper_policy_envelope=True))
        env = b"\x00" * 40
        fs.submit_policy(env, now=0.0)
        sent = dev.envelopes[0]
        assert len(sent) == 40
        assert sent[:-1] == env[:-1]
        assert sent[-1] == 0x01

    def test_clean_submit_passes_through(self):
        dev = RecordingDevice()
        fs = HostFs(dev)
        env = b"\x10" * 40
        assert fs.submit_policy(env, now=0.0) == b"ack"
        assert dev.envelopes == [env]


class TestMetadataCorruption:
    def test_corrupt_then_restore(self):
        fs = HostFs(RecordingDevice())
        fs.fs_write("/f", 0, page(1), now=0.0)
        fs.corrupt_metadata()
        with pytest.raises(FsCorrupted):
            fs.get_lba_list("/f")
        fs.restore_metadata()
        assert fs.get_lba_list("/f") == [(0, 0)]

    def test_state_round_trip_keeps_flags(self):
        dev = RecordingDevice()
        fs = HostFs(dev, InterposeConfig(drop_pbset=True, tamper_lba=True))
        fs.fs_write("/f", 0, page(1), now=0.0)
        fs.corrupt_metadata()
        twin = HostFs.from_state(dev, fs.to_state())
        assert twin.interpose == fs.interpose
        assert twin.metadata_corrupted is True
        assert twin.table.extents("/f") == fs.table.extents("/f")
