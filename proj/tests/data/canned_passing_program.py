#!/usr/bin/env python3
# Copyright 2026 The simjudge Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Write a small, structurally valid MP4 file to the path given as argv[1].

The file carries an H.264 sample description and empty sample payloads, so it
parses as a 640x360 video of FRAMES frames at FPS frames per second without any
codec library.
"""

import struct
import sys

WIDTH, HEIGHT = 640, 360
FPS = 30
FRAMES = 60
SAMPLE_BYTES = 16


def box(kind, payload=b""):
    return struct.pack(">I4s", 8 + len(payload), kind) + payload


def full_box(kind, version, flags, payload=b""):
    return box(kind, struct.pack(">I", (version << 24) | flags) + payload)


MATRIX = struct.pack(">9I", 0x00010000, 0, 0, 0, 0x00010000, 0, 0, 0, 0x40000000)


def movie(mdat_offset):
    mvhd = full_box(b"mvhd", 0, 0, struct.pack(">IIII", 0, 0, FPS, FRAMES)
                    + struct.pack(">IH", 0x00010000, 0x0100) + bytes(10)
                    + MATRIX + bytes(24) + struct.pack(">I", 2))
    tkhd = full_box(b"tkhd", 0, 3, struct.pack(">IIIII", 0, 0, 1, 0, FRAMES) + bytes(8)
                    + struct.pack(">hhhH", 0, 0, 0, 0) + MATRIX
                    + struct.pack(">II", WIDTH << 16, HEIGHT << 16))
    mdhd = full_box(b"mdhd", 0, 0, struct.pack(">IIIIHH", 0, 0, FPS, FRAMES, 0x55C4, 0))
    hdlr = full_box(b"hdlr", 0, 0, struct.pack(">I4s", 0, b"vide") + bytes(12) + b"VideoHandler\0")
    vmhd = full_box(b"vmhd", 0, 1, bytes(8))
    dinf = box(b"dinf", full_box(b"dref", 0, 0, struct.pack(">I", 1) + full_box(b"url ", 0, 1)))
    sps, pps = b"\x67\x42\x00\x1e\xab\x40\x50\x1e\xc8", b"\x68\xce\x3c\x80"
    avcc = box(b"avcC", bytes([1, 0x42, 0, 0x1E, 0xFF, 0xE1]) + struct.pack(">H", len(sps)) + sps
               + b"\x01" + struct.pack(">H", len(pps)) + pps)
    avc1 = box(b"avc1", bytes(6) + struct.pack(">H", 1) + bytes(16)
               + struct.pack(">HHIIIH", WIDTH, HEIGHT, 0x00480000, 0x00480000, 0, 1)
               + bytes(32) + struct.pack(">Hh", 0x18, -1) + avcc)
    stsd = full_box(b"stsd", 0, 0, struct.pack(">I", 1) + avc1)
    stts = full_box(b"stts", 0, 0, struct.pack(">III", 1, FRAMES, 1))
    stsc = full_box(b"stsc", 0, 0, struct.pack(">IIII", 1, 1, FRAMES, 1))
    stsz = full_box(b"stsz", 0, 0, struct.pack(">II", SAMPLE_BYTES, FRAMES))
    stco = full_box(b"stco", 0, 0, struct.pack(">II", 1, mdat_offset))
    stbl = box(b"stbl", stsd + stts + stsc + stsz + stco)
    minf = box(b"minf", vmhd + dinf + stbl)
    trak = box(b"trak", tkhd + box(b"mdia", mdhd + hdlr + minf))
    return box(b"moov", mvhd + trak)


def main():
    if len(sys.argv) < 2:
        print("usage: program.py <output.mp4>", file=sys.stderr)
        return 2
    ftyp = box(b"ftyp", b"isom" + struct.pack(">I", 512) + b"isomiso2avc1mp41")
    moov_size = len(movie(0))
    moov = movie(len(ftyp) + moov_size + 8)
    mdat = box(b"mdat", bytes(SAMPLE_BYTES * FRAMES))
    with open(sys.argv[1], "wb") as f:
        f.write(ftyp + moov + mdat)
    print(f"wrote {FRAMES} frames at {FPS} fps")
    return 0


if __name__ == "__main__":
    sys.exit(main())
