#!/usr/bin/env python3
"""Self-contained NIfTI-1 reader/writer used to cross-check the C++ I/O.

Implements the single-file NIfTI-1 layout directly from the field table with
only the standard library, so it shares no code with the implementation under
test.

Commands:
  write_ref PATH            write a 4x3x2 int16 reference volume, values 0..23
  read PATH OUT             dump dims/spacing/values of PATH as text
  gzip SRC DST              gzip a file (for .nii.gz read tests)
"""

import gzip
import struct
import sys

DT_UINT8, DT_INT16, DT_FLOAT32 = 2, 4, 16
FMT = {DT_UINT8: "B", DT_INT16: "h", DT_FLOAT32: "f"}


def write_ref(path):
    dims = (4, 3, 2)
    pixdim = (1.5, 2.0, 2.5)
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)                  # sizeof_hdr
    struct.pack_into("<8h", hdr, 40, 3, *dims, 1, 1, 1, 1)  # dim
    struct.pack_into("<h", hdr, 70, DT_INT16)            # datatype
    struct.pack_into("<h", hdr, 72, 16)                  # bitpix
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, 1.0, 1.0, 1.0, 1.0)  # pixdim
    struct.pack_into("<f", hdr, 108, 352.0)              # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)                # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)                # scl_inter
    struct.pack_into("<4s", hdr, 344, b"n+1\0")          # magic
    n = dims[0] * dims[1] * dims[2]
    payload = struct.pack("<%dh" % n, *range(n))         # x-fastest 0..23
    with open(path, "wb") as f:
        f.write(bytes(hdr) + b"\0\0\0\0" + payload)


def read(path, out_path):
    raw = open(path, "rb").read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if struct.unpack_from("<i", raw, 0)[0] != 348:
        raise SystemExit("bad sizeof_hdr")
    if raw[344:347] != b"n+1":
        raise SystemExit("bad magic")
    dim = struct.unpack_from("<8h", raw, 40)
    datatype = struct.unpack_from("<h", raw, 70)[0]
    pixdim = struct.unpack_from("<8f", raw, 76)
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    scl_slope = struct.unpack_from("<f", raw, 112)[0]
    scl_inter = struct.unpack_from("<f", raw, 116)[0]
    nx, ny, nz = dim[1], dim[2], dim[3]
    n = nx * ny * nz
    values = struct.unpack_from("<%d%s" % (n, FMT[datatype]), raw, vox_offset)
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        values = [scl_slope * v + scl_inter for v in values]
    with open(out_path, "w") as f:
        f.write("dims %d %d %d\n" % (nx, ny, nz))
        f.write("spacing %r %r %r\n" % (pixdim[1], pixdim[2], pixdim[3]))
        f.write("values " + " ".join("%r" % float(v) for v in values) + "\n")


def main():
    cmd = sys.argv[1]
    if cmd == "write_ref":
        write_ref(sys.argv[2])
    elif cmd == "read":
        read(sys.argv[2], sys.argv[3])
    elif cmd == "gzip":
        with open(sys.argv[2], "rb") as src, gzip.open(sys.argv[3], "wb") as dst:
            dst.write(src.read())
    else:
        raise SystemExit("unknown command " + cmd)


if __name__ == "__main__":
    main()
