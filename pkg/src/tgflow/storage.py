"""Trajectory container format, provenance sidecars and CSV export.

Binary layout (all little-endian):

    bytes 0..15   magic  b"TGFLOWTRAJECTORY"
    u32           format version (currently 1)
    u32           basis max_mode M
    u32           collocation grid_size
    u32           number of time steps N_t
    u8            kind tag (index into trajectory.KINDS), 3 pad bytes
    f64           alpha1
    f64           dt
    payload       row-major float64 coefficients, (N_t + 1) x M^2
    u32           CRC32 over the payload bytes

A sidecar JSON `<path>.json` records provenance: config hash, seed and code
version.  All writes go through a temp file in the destination directory
followed by an atomic rename, so a killed run never leaves a readable
half-written trajectory.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

from . import __version__
from .errors import ChecksumFailed, MagicMismatch, UnknownKind, VersionUnsupported
from .spectral import build_basis
from .trajectory import KINDS, Trajectory

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "save_trajectory",
    "load_trajectory",
    "atomic_write_bytes",
    "atomic_write_text",
    "norms_csv",
    "cost_history_csv",
]

MAGIC = b"TGFLOWTRAJECTORY"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<IIIIB3xdd")


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write bytes via temp file + rename in the destination directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_trajectory(
    path: str,
    traj: Trajectory,
    config_hash: str | None = None,
    seed: int | None = None,
) -> None:
    """Serialize a trajectory and its provenance sidecar atomically."""
    payload = np.ascontiguousarray(traj.coeffs, dtype="<f8").tobytes()
    header = _HEADER.pack(
        FORMAT_VERSION,
        traj.basis.max_mode,
        traj.basis.grid_size,
        traj.n_steps,
        KINDS.index(traj.kind),
        traj.basis.alpha1,
        traj.dt,
    )
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    atomic_write_bytes(path, MAGIC + header + payload + crc)
    sidecar = {
        "config_hash": config_hash,
        "seed": seed,
        "code_version": __version__,
        "format_version": FORMAT_VERSION,
        "kind": traj.kind,
    }
    atomic_write_text(path + ".json", json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_trajectory(path: str) -> Trajectory:
    """Read a trajectory file, verifying magic, version and payload CRC32."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < len(MAGIC) + _HEADER.size + 4 or blob[: len(MAGIC)] != MAGIC:
        raise MagicMismatch(f"{path} is not a trajectory file")
    off = len(MAGIC)
    version, max_mode, grid_size, n_steps, kind_idx, alpha1, dt = _HEADER.unpack_from(blob, off)
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    if kind_idx >= len(KINDS):
        raise UnknownKind(f"{path} carries unknown kind tag {kind_idx}")
    off += _HEADER.size
    n_modes = max_mode * max_mode
    n_bytes = (n_steps + 1) * n_modes * 8
    if len(blob) != off + n_bytes + 4:
        raise ChecksumFailed(f"{path} is truncated or padded")
    payload = blob[off : off + n_bytes]
    (crc_stored,) = struct.unpack_from("<I", blob, off + n_bytes)
    if (zlib.crc32(payload) & 0xFFFFFFFF) != crc_stored:
        raise ChecksumFailed(f"{path} fails its payload CRC32 check")
    coeffs = np.frombuffer(payload, dtype="<f8").reshape(n_steps + 1, n_modes).copy()
    basis = build_basis(max_mode, alpha1, grid_size)
    times = dt * np.arange(n_steps + 1)
    return Trajectory(times, coeffs, basis, KINDS[kind_idx])


def _fmt(x: float) -> str:
    """Shortest representation that round-trips the float64 exactly."""
    return repr(float(x))


def norms_csv(traj: Trajectory) -> str:
    """Time series of spatial norms of a trajectory, one row per node."""
    from .spectral import norms

    kinds = ("L2", "V", "W", "H1", "H2", "H3")
    lines = ["t," + ",".join(k.lower() for k in kinds)]
    for k in range(traj.times.size):
        f = traj.field(k)
        row = [_fmt(traj.times[k])] + [_fmt(norms(f, kind)) for kind in kinds]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def cost_history_csv(report) -> str:
    """Per-iteration optimizer record as CSV."""
    lines = ["iteration,cost,step_size,grad_norm,grad_mapping,constraint_active"]
    for i, cost in enumerate(report.cost):
        step = report.step_size[i] if i < len(report.step_size) else 0.0
        lines.append(
            ",".join(
                [
                    str(i),
                    _fmt(cost),
                    _fmt(step),
                    _fmt(report.grad_norm[i]),
                    _fmt(report.grad_mapping[i]),
                    str(int(report.constraint_active[i])),
                ]
            )
        )
    return "\n".join(lines) + "\n"
