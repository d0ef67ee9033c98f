"""Classic pcap container I/O, little-endian, linktype Ethernet."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

from .packet import RawFrame

PCAP_MAGIC = 0xA1B2C3D4
_GLOBAL = struct.Struct("<IHHiIII")
_RECORD = struct.Struct("<IIII")
VERSION_MAJOR = 2
VERSION_MINOR = 4
SNAPLEN = 65535
LINKTYPE_ETHERNET = 1


class PcapError(Exception):
    """Base class for pcap container problems."""


class BadMagic(PcapError):
    """File does not start with the little-endian classic pcap magic."""


class TruncatedRecord(PcapError):
    """File ends mid-header or mid-record, or a record contradicts itself."""


def global_header() -> bytes:
    return _GLOBAL.pack(PCAP_MAGIC, VERSION_MAJOR, VERSION_MINOR, 0, 0, SNAPLEN, LINKTYPE_ETHERNET)


def write_pcap(path: str | Path, frames: Iterable[RawFrame]) -> None:
    with open(path, "wb") as fh:
        fh.write(global_header())
        for frame in frames:
            fh.write(_RECORD.pack(frame.ts_sec, frame.ts_usec, frame.capture_len, frame.orig_len))
            fh.write(frame.data)


def read_pcap(path: str | Path) -> list[RawFrame]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _GLOBAL.size:
        raise TruncatedRecord(f"{path}: {len(blob)} octets is shorter than a pcap global header")
    magic = int.from_bytes(blob[:4], "little")
    if magic != PCAP_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{PCAP_MAGIC:08x} little-endian")
    frames: list[RawFrame] = []
    offset = _GLOBAL.size
    while offset < len(blob):
        if offset + _RECORD.size > len(blob):
            raise TruncatedRecord(f"{path}: record header cut short at offset {offset}")
        ts_sec, ts_usec, incl_len, orig_len = _RECORD.unpack_from(blob, offset)
        offset += _RECORD.size
        if offset + incl_len > len(blob):
            raise TruncatedRecord(f"{path}: record body cut short at offset {offset}")
        if orig_len < incl_len:
            raise TruncatedRecord(f"{path}: record claims orig_len {orig_len} < incl_len {incl_len}")
        frames.append(RawFrame(blob[offset : offset + incl_len], orig_len, ts_sec, ts_usec))
        offset += incl_len
    return frames
