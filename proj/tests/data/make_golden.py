"""Writes golden.clab byte by byte with struct, independent of the C++ writer."""
import struct
from pathlib import Path

rows = [[1.0, 0.0], [0.0, -1.0], [0.6, 0.8]]
labels = [0, 1, 7]

out = bytearray(b"CLAB1")
out += struct.pack("<QQB", len(rows), len(rows[0]), 1)
for r in rows:
    out += struct.pack("<%dd" % len(r), *r)
out += struct.pack("<%dI" % len(labels), *labels)
Path(__file__).with_name("golden.clab").write_bytes(bytes(out))
