"""Time-indexed coefficient trajectories and their space-time pairings.

A Trajectory stores one Field per node of a uniform time grid as a single
(N_t + 1, n_modes) coefficient matrix.  The Crank-Nicolson solvers sample
interval midpoints by averaging adjacent nodes, so the natural space-time
quadrature here is the midpoint rule over node-averaged values; that choice
makes the discrete duality and gradient identities exact.  The admissible-ball
norm uses trapezoidal node weights instead, which are strictly positive and
hence define a genuine norm on node values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, UnknownKind
from .spectral import Field, SpectralBasis

__all__ = ["Trajectory", "KINDS", "time_grid", "zeros_like", "constant_control"]

KINDS = ("state", "linearized", "adjoint", "control", "target")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields at the nodes of a uniform time grid, tagged by role."""

    times: np.ndarray        # (N_t + 1,)
    coeffs: np.ndarray       # (N_t + 1, n_modes)
    basis: SpectralBasis
    kind: str = "state"

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown trajectory kind {self.kind!r}")
        if self.times.ndim != 1 or self.coeffs.shape != (self.times.size, self.basis.n_modes):
            raise GridMismatch(
                f"coefficients {self.coeffs.shape} do not match "
                f"{self.times.size} nodes x {self.basis.n_modes} modes"
            )
        dt = np.diff(self.times)
        if self.times.size < 2 or np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-12):
            raise GridMismatch("times must be strictly increasing and uniform")

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    def field(self, k: int) -> Field:
        return Field(self.coeffs[k], self.basis)

    def midpoints(self) -> np.ndarray:
        """Interval midpoint coefficients by node averaging, shape (N_t, n_modes)."""
        return 0.5 * (self.coeffs[:-1] + self.coeffs[1:])

    def reversed(self, kind: str | None = None) -> "Trajectory":
        """Same node values traversed backward on the same forward time grid."""
        return Trajectory(self.times, self.coeffs[::-1].copy(), self.basis, kind or self.kind)

    def with_kind(self, kind: str) -> "Trajectory":
        return Trajectory(self.times, self.coeffs, self.basis, kind)


def time_grid(horizon: float, n_steps: int) -> np.ndarray:
    if horizon <= 0 or n_steps < 1:
        raise ValueError("need horizon > 0 and n_steps >= 1")
    return np.linspace(0.0, horizon, n_steps + 1)


def zeros_like(traj: Trajectory, kind: str) -> Trajectory:
    return Trajectory(traj.times, np.zeros_like(traj.coeffs), traj.basis, kind)


def constant_control(field: Field, times: np.ndarray) -> Trajectory:
    coeffs = np.tile(field.coeffs, (times.size, 1))
    return Trajectory(times, coeffs, field.basis, "control")


def check_same_grid(a: Trajectory, b: Trajectory) -> None:
    if not a.basis.compatible(b.basis):
        raise GridMismatch("trajectories live on incompatible bases")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=1e-12):
        raise GridMismatch("trajectories live on different time grids")


def pair_l2l2_mid(a: Trajectory, b: Trajectory) -> float:
    """Midpoint-rule space-time pairing int_0^T (a, b)_{L2(D)} dt."""
    check_same_grid(a, b)
    am, bm = a.midpoints(), b.midpoints()
    per_interval = np.sum(am * bm / a.basis.vmult, axis=1)
    return float(a.dt * np.sum(per_interval))


def norm_l2l2_mid(a: Trajectory) -> float:
    return float(np.sqrt(max(pair_l2l2_mid(a, a), 0.0)))


def _trap_weights(n_nodes: int, dt: float) -> np.ndarray:
    w = np.full(n_nodes, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def norm_l2h1_trap(a: Trajectory) -> float:
    """Trapezoidal L2(0,T; H1) norm of node values, used for the admissible ball."""
    b = a.basis
    mult = (1.0 + b.lam) / b.vmult
    per_node = np.sum(a.coeffs ** 2 * mult, axis=1)
    w = _trap_weights(a.times.size, a.dt)
    return float(np.sqrt(np.sum(w * per_node)))


def sup_norm(a: Trajectory, kind: str) -> float:
    """sup over nodes of a spatial coefficient norm (V, W, L2, H1..H3)."""
    from .spectral import norms

    return max(norms(a.field(k), kind) for k in range(a.times.size))
