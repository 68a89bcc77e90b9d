#!/usr/bin/env python3
"""One-time generator for the committed NIfTI-1 reference fixtures.

Builds the 348-byte header directly from the published NIfTI-1 field table
(offsets below), independent of the C++ reader/writer. Emits a little-endian
file, its byte-swapped big-endian twin, and expected.json with the values a
conforming reader must report.
"""
import json
import struct
import sys

DIM = (4, 4, 4)            # x, y, z
PIXDIM = (1.5, 2.0, 2.5)   # x, y, z in mm
ORIGIN = (-10.0, 5.0, 2.5) # x, y, z in mm


def header(endian):
    h = bytearray(348)
    struct.pack_into(endian + "i", h, 0, 348)                    # sizeof_hdr
    struct.pack_into(endian + "8h", h, 40, 3, *DIM, 1, 1, 1, 1)  # dim
    struct.pack_into(endian + "h", h, 70, 16)                    # datatype
    struct.pack_into(endian + "h", h, 72, 32)                    # bitpix
    struct.pack_into(endian + "8f", h, 76, 1.0, *PIXDIM, 0, 0, 0, 0)  # pixdim
    struct.pack_into(endian + "f", h, 108, 352.0)                # vox_offset
    struct.pack_into(endian + "f", h, 112, 1.0)                  # scl_slope
    struct.pack_into(endian + "f", h, 116, 0.0)                  # scl_inter
    struct.pack_into(endian + "h", h, 254, 1)                    # sform_code
    struct.pack_into(endian + "4f", h, 280, PIXDIM[0], 0, 0, ORIGIN[0])
    struct.pack_into(endian + "4f", h, 296, 0, PIXDIM[1], 0, ORIGIN[1])
    struct.pack_into(endian + "4f", h, 312, 0, 0, PIXDIM[2], ORIGIN[2])
    h[344:348] = b"n+1\x00"
    return bytes(h)


def payload(endian):
    n = DIM[0] * DIM[1] * DIM[2]
    values = [0.25 * i - 3.0 for i in range(n)]
    return struct.pack(endian + f"{n}f", *values), values


def main(out_dir):
    for endian, name in (("<", "ref_4x4x4_le.nii"), (">", "ref_4x4x4_be.nii")):
        data, values = payload(endian)
        with open(f"{out_dir}/{name}", "wb") as f:
            f.write(header(endian))
            f.write(b"\x00" * 4)  # extender
            f.write(data)
    expected = {
        "dim_xyz": list(DIM),
        "pixdim_xyz": list(PIXDIM),
        "origin_xyz": list(ORIGIN),
        "values": values,
    }
    with open(f"{out_dir}/ref_4x4x4_expected.json", "w") as f:
        json.dump(expected, f, indent=1)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
