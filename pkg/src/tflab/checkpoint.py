"""Binary trajectory checkpoints.

Layout (little-endian):
    magic   5 bytes  b"TFLAB"
    version u32      currently 1
    d       u32      spatial dimension (2: scalar vorticity state, 3: velocity)
    M       u32      per-axis resolution
    N       u32      Galerkin radius, 0 when absent
    delta   f64
    nu      f64
    t       f64
    seed    u64
    stream  u64
    counter u64
    payload f64 pairs (re, im) per retained mode in the grid's lexicographic
            mode order; d=3 stores the 3 components consecutively per mode.

load(save(state)) restores the field bit-exactly along with the RNG stream
position, so a resumed run continues identically.
"""

from __future__ import annotations

import struct

import numpy as np

from .dynamics import SpdeState
from .fields import VelocityField, VorticityField2D
from .forcing import RngStream
from .grid import make_grid

MAGIC = b"TFLAB"
VERSION = 1
_HEADER = struct.Struct("<5sIIII3d3Q")


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(state: SpdeState, path) -> None:
    g = state.field.grid
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        g.dim,
        g.size,
        0 if state.galerkin_n is None else int(state.galerkin_n),
        float(state.delta),
        float(state.nu),
        float(state.t),
        state.stream.seed,
        state.stream.stream,
        state.stream.counter,
    )
    if g.dim == 2:
        flat = state.field.coeffs.ravel()[g.mode_flat]
    else:
        comps = state.field.coeffs.reshape(3, -1)[:, g.mode_flat]
        flat = comps.T.ravel()  # components minor, mode-major
    payload = np.empty(2 * flat.size, dtype="<f8")
    payload[0::2] = flat.real
    payload[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_checkpoint(path) -> SpdeState:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, dim, size, radius, delta, nu, t, seed, stream, counter = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if dim not in (2, 3):
        raise CheckpointError(f"bad dimension {dim}")
    grid = make_grid(dim, size)
    ncomp = 1 if dim == 2 else 3
    expected = _HEADER.size + 16 * ncomp * grid.n_active
    if len(raw) != expected:
        raise CheckpointError(
            f"payload size mismatch: got {len(raw)} bytes, expected {expected}"
        )
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    flat = payload[0::2] + 1j * payload[1::2]
    if dim == 2:
        coeffs = grid.zeros()
        coeffs.ravel()[grid.mode_flat] = flat
        field = VorticityField2D(grid, coeffs)
    else:
        coeffs = np.zeros((3,) + grid.shape, dtype=np.complex128)
        per_mode = flat.reshape(grid.n_active, 3).T
        flatview = coeffs.reshape(3, -1)
        flatview[:, grid.mode_flat] = per_mode
        field = VelocityField(grid, coeffs)
    return SpdeState(
        field=field,
        t=t,
        nu=nu,
        delta=delta,
        galerkin_n=None if radius == 0 else radius,
        stream=RngStream(seed, stream, counter),
    )
