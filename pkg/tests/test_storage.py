import json
import os
import struct

import numpy as np
import pytest

from conftest import random_traj
from tgflow import build_basis
from tgflow.errors import ChecksumFailed, GridMismatch, MagicMismatch, VersionUnsupported
from tgflow.storage import (
    MAGIC,
    atomic_write_bytes,
    cost_history_csv,
    load_trajectory,
    norms_csv,
    save_trajectory,
)
from tgflow.trajectory import check_same_grid, time_grid


@pytest.fixture
def traj(basis, rng):
    return random_traj(basis, time_grid(0.5, 12), rng, kind="state")


def test_roundtrip_bitwise(tmp_path, traj):
    path = str(tmp_path / "t.traj")
    save_trajectory(path, traj, config_hash="abc", seed=7)
    back = load_trajectory(path)
    assert np.array_equal(back.coeffs, traj.coeffs)
    assert back.kind == traj.kind
    assert back.basis.compatible(traj.basis)
    assert np.allclose(back.times, traj.times, rtol=0, atol=1e-15)


def test_sidecar_provenance(tmp_path, traj):
    path = str(tmp_path / "t.traj")
    save_trajectory(path, traj, config_hash="deadbeef", seed=42)
    with open(path + ".json") as handle:
        side = json.load(handle)
    assert side["config_hash"] == "deadbeef"
    assert side["seed"] == 42
    assert side["code_version"]


def test_truncated_file_fails_checksum(tmp_path, traj):
    path = str(tmp_path / "t.traj")
    save_trajectory(path, traj)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-5])
    with pytest.raises(ChecksumFailed):
        load_trajectory(path)


def test_corrupted_payload_fails_checksum(tmp_path, traj):
    path = str(tmp_path / "t.traj")
    save_trajectory(path, traj)
    blob = bytearray(open(path, "rb").read())
    blob[60] ^= 0xFF
    open(path, "wb").write(bytes(blob))
    with pytest.raises(ChecksumFailed):
        load_trajectory(path)


def test_magic_mismatch(tmp_path, traj):
    path = str(tmp_path / "t.traj")
    save_trajectory(path, traj)
    blob = open(path, "rb").read()
    open(path, "wb").write(b"NOTTHERIGHTMAGIC" + blob[16:])
    with pytest.raises(MagicMismatch):
        load_trajectory(path)


def test_version_unsupported(tmp_path, traj):
    path = str(tmp_path / "t.traj")
    save_trajectory(path, traj)
    blob = bytearray(open(path, "rb").read())
    blob[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
    open(path, "wb").write(bytes(blob))
    with pytest.raises(VersionUnsupported):
        load_trajectory(path)


def test_basis_mismatch_detected_downstream(tmp_path, rng, basis):
    other = build_basis(3, basis.alpha1)
    t_other = random_traj(other, time_grid(0.5, 12), rng)
    path = str(tmp_path / "o.traj")
    save_trajectory(path, t_other)
    loaded = load_trajectory(path)
    t_main = random_traj(basis, time_grid(0.5, 12), rng)
    with pytest.raises(GridMismatch):
        check_same_grid(t_main, loaded)


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = str(tmp_path / "out.bin")

    def broken_replace(src, dst):
        raise OSError("simulated crash before rename")

    monkeypatch.setattr(os, "replace", broken_replace)
    with pytest.raises(OSError):
        atomic_write_bytes(target, b"half-written payload")
    assert not os.path.exists(target)
    assert all(not name.startswith(".tmp-") for name in os.listdir(tmp_path))


def test_norms_csv_roundtrips_floats(traj):
    text = norms_csv(traj)
    lines = text.strip().split("\n")
    assert lines[0].startswith("t,")
    cells = lines[1].split(",")
    assert float(cells[0]) == traj.times[0]
    from tgflow.spectral import norms

    assert float(cells[2]) == norms(traj.field(0), "V")


def test_cost_history_csv_shape():
    class R:
        cost = [1.0, 0.5]
        step_size = [0.1]
        grad_norm = [2.0, 1.0]
        grad_mapping = [2.0, 1.0]
        constraint_active = [False, True]

    text = cost_history_csv(R())
    lines = text.strip().split("\n")
    assert len(lines) == 3
    assert lines[2].endswith(",1")
    assert float(lines[1].split(",")[1]) == 1.0
