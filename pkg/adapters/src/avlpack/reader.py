"""Independent byte-level parser used by ``verify``.

Deliberately shares no code with the writers: it re-derives the layout from
the format definition so a writer bug cannot hide behind a matching reader
bug.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path


class MalformedFile(ValueError):
    pass


@dataclass(frozen=True)
class FileReport:
    kind: str  # "AVLD" | "AVLF"
    count: int
    dim: int
    sha256: str

    def summary(self) -> str:
        return f"OK count={self.count} dim={self.dim} sha256={self.sha256}"


def inspect(path: str | Path) -> FileReport:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise MalformedFile(f"{path}: too short for a magic field")
    magic = data[:4]
    if magic == b"AVLD":
        if len(data) < 20:
            raise MalformedFile(f"{path}: AVLD header needs 20 bytes")
        version, count, dim = struct.unpack_from("<IQI", data, 4)
        payload = len(data) - 20
        expected = count * dim * 4
        kind = "AVLD"
    elif magic == b"AVLF":
        if len(data) < 16:
            raise MalformedFile(f"{path}: AVLF header needs 16 bytes")
        version, count, dim = struct.unpack_from("<III", data, 4)
        payload = len(data) - 16
        expected = count * 12 + count * dim * 4
        kind = "AVLF"
    else:
        raise MalformedFile(f"{path}: unknown magic {magic!r}")
    if version != 1:
        raise MalformedFile(f"{path}: unsupported version {version}")
    if count < 0 or dim < 0 or (kind == "AVLD" and (count < 1 or dim < 1)):
        raise MalformedFile(f"{path}: implausible count/dim {count}/{dim}")
    if payload != expected:
        raise MalformedFile(
            f"{path}: payload is {payload} bytes, format requires {expected}"
        )
    return FileReport(
        kind=kind,
        count=count,
        dim=dim,
        sha256=hashlib.sha256(data).hexdigest(),
    )
