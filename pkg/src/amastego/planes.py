"""AEC1 binary plane dumps (costs, gradients, feature matrices).

Layout, little-endian: ``b"AEC1"``, u32 height, u32 width, then one or more
height*width planes of float64 in row-major order.
"""

import struct

import numpy as np

MAGIC = b"AEC1"
_HDR = struct.Struct("<4sII")


def dump_planes(*planes: np.ndarray) -> bytes:
    if not planes:
        raise ValueError("need at least one plane")
    shape = np.shape(planes[0])
    if len(shape) != 2 or any(np.shape(p) != shape for p in planes):
        raise ValueError("planes must be equally shaped 2-D arrays")
    out = [_HDR.pack(MAGIC, shape[0], shape[1])]
    out += [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in planes]
    return b"".join(out)


def load_planes(data: bytes) -> list[np.ndarray]:
    if len(data) < _HDR.size:
        raise ValueError("truncated AEC1 header")
    magic, h, w = _HDR.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("bad AEC1 magic")
    body = memoryview(data)[_HDR.size:]
    plane_bytes = 8 * h * w
    if plane_bytes == 0 or len(body) % plane_bytes:
        raise ValueError("AEC1 body is not a whole number of planes")
    arr = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return list(arr.reshape(-1, h, w))
