"""Backward adjoint equation solved through its time-reversed weak form.

The adjoint state p carries terminal data p(T) = 0 and satisfies, for every
test function phi in the basis span,

    (-d/dt v(p), phi) + 2 nu (Dp, Dphi) - b(phi, p, v(y)) + b(p, phi, v(y))
      + b(p, y, v(phi)) - b(y, p, v(phi))
      + (alpha1 + alpha2)(A(y)A(p) + A(p)A(y), grad phi)
      + beta (|A(y)|^2 A(p), grad phi)
      + 2 beta ((A(p):A(y)) A(y), grad phi) = (f, phi).

Substituting q(t) = p(T - t) gives a forward problem with reversed
coefficients ybar(t) = y(T - t), which is advanced by the same
Crank-Nicolson/midpoint scheme as the other solvers and re-reversed.  The
spatial form above is the exact transpose of the linearized form, term by
term, under the grid quadrature pairing, so the discrete duality

    sum_k dt (psi_mid, p_mid) = sum_k dt (f_mid, z_mid)

holds to fixed-point tolerance; `check_duality` reports both sides.
"""

from __future__ import annotations

import numpy as np

from .params import ModelParams
from .spectral import (
    Field,
    SpectralBasis,
    matmul_grid,
    strain,
    tensor_dot,
    to_coeffs,
    to_grid,
    trilinear_b,
)
from .state import _cn_factors, _fixed_point
from .trajectory import Trajectory, check_same_grid

__all__ = ["solve_adjoint", "check_duality", "adjoint_form"]


class _FrozenAdjointState:
    """Grid quantities of a frozen (reversed) state midpoint."""

    def __init__(self, basis: SpectralBasis, coeffs: np.ndarray):
        self.basis = basis
        self.vel = to_grid(Field(coeffs, basis))
        self.jac = basis.jacobian(self.vel)
        self.a = strain(basis, self.vel, self.jac)
        self.a_sq = tensor_dot(self.a, self.a)
        self.v_grid = to_grid(Field(coeffs * basis.vmult, basis))
        self.jac_v = basis.jacobian(self.v_grid)


def adjoint_rhs_terms(
    frozen: _FrozenAdjointState, params: ModelParams, q_coeffs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Explicit terms of the reversed adjoint ODE at a frozen state.

    Returns (inner, outer): the coefficient ODE reads
    ds/dt = (-nu lam s + inner + c(f)) / vmult + outer, where inner collects
    the terms tested against phi and outer the two tested against v(phi).
    """
    basis = frozen.basis
    vel_q = to_grid(Field(q_coeffs, basis))
    jac_q = basis.jacobian(vel_q)
    a_q = jac_q + np.swapaxes(jac_q, 0, 1)

    # -b(phi, q, v(ybar)) and +b(q, phi, v(ybar)) move to the right-hand side as
    # +((grad q)^T v(ybar), phi) and +((q . grad) v(ybar), phi)
    g1 = np.einsum("ljxy,lxy->jxy", jac_q, frozen.v_grid)
    g2 = np.einsum("jxy,ijxy->ixy", vel_q, frozen.jac_v)
    inner_grid = g1 + g2

    t_sum = np.zeros_like(frozen.a)
    coef = params.alpha1 + params.alpha2
    if coef != 0.0:
        t_sum = t_sum + coef * (matmul_grid(frozen.a, a_q) + matmul_grid(a_q, frozen.a))
    if params.beta != 0.0:
        t_sum = t_sum + params.beta * frozen.a_sq * a_q
        t_sum = t_sum + 2.0 * params.beta * tensor_dot(a_q, frozen.a) * frozen.a
    inner_grid = inner_grid + basis.tensor_divergence(t_sum)
    inner = to_coeffs(basis, inner_grid).coeffs

    # +b(q, ybar, v(phi)) - b(ybar, q, v(phi)) contribute through v(phi)
    phi1 = np.einsum("jxy,ijxy->ixy", vel_q, frozen.jac)
    phi2 = np.einsum("jxy,ijxy->ixy", frozen.vel, jac_q)
    outer = to_coeffs(basis, phi2 - phi1).coeffs
    return inner, outer


def solve_adjoint(y_traj: Trajectory, f: Trajectory, params: ModelParams) -> Trajectory:
    """Solve the adjoint equation with source f; returns p with p(T) = 0."""
    check_same_grid(y_traj, f)
    basis = y_traj.basis
    dt = y_traj.dt
    numer, denom = _cn_factors(basis, params, dt)

    ybar = y_traj.coeffs[::-1]
    fbar = f.coeffs[::-1]
    y_mid = 0.5 * (ybar[:-1] + ybar[1:])
    f_mid = 0.5 * (fbar[:-1] + fbar[1:])

    coeffs = np.zeros((y_traj.times.size, basis.n_modes))
    q = coeffs[0]
    for k in range(y_traj.n_steps):
        frozen = _FrozenAdjointState(basis, y_mid[k])
        src = f_mid[k] / basis.vmult

        def explicit(mid, frozen=frozen, src=src):
            inner, outer = adjoint_rhs_terms(frozen, params, mid)
            return inner / basis.vmult + src + outer

        guess = 2.0 * coeffs[k] - coeffs[k - 1] if k > 0 else None
        q = _fixed_point(q, explicit, numer, denom, dt, step=k, guess=guess)
        coeffs[k + 1] = q
    return Trajectory(y_traj.times.copy(), coeffs[::-1].copy(), basis, "adjoint")


def check_duality(
    y_traj: Trajectory, psi: Trajectory, f: Trajectory, params: ModelParams
) -> tuple[float, float, float]:
    """Evaluate both sides of int (psi, p) dt = int (f, z) dt and their gap.

    z is solved from psi by the linearized module, p from f here; the
    integrals use the scheme's midpoint quadrature.  Returns (lhs, rhs, gap)
    with gap relative to the larger magnitude.
    """
    from .linearized import solve_linearized
    from .trajectory import pair_l2l2_mid

    check_same_grid(y_traj, psi)
    check_same_grid(y_traj, f)
    z = solve_linearized(y_traj, psi, params)
    p = solve_adjoint(y_traj, f, params)
    lhs = pair_l2l2_mid(psi, p)
    rhs = pair_l2l2_mid(f, z)
    gap = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30)
    return lhs, rhs, gap


def adjoint_form(y: Field, p: Field, phi: Field, params: ModelParams) -> float:
    """Spatial weak form a*(p, phi) of the adjoint equation at frozen y.

    Transposition check: a*(p, z) equals the linearized module's a(z, p).
    """
    basis = y.basis
    v_y = Field(y.coeffs * basis.vmult, basis)
    v_phi = Field(phi.coeffs * basis.vmult, basis)
    visc = params.nu * float(np.sum(p.coeffs * phi.coeffs * basis.lam / basis.vmult))
    conv = (
        -trilinear_b(phi, p, v_y)
        + trilinear_b(p, phi, v_y)
        + trilinear_b(p, y, v_phi)
        - trilinear_b(y, p, v_phi)
    )
    a_y = strain(basis, to_grid(y))
    a_p = strain(basis, to_grid(p))
    grad_phi = basis.jacobian(to_grid(phi))
    t_sum = np.zeros_like(a_y)
    coef = params.alpha1 + params.alpha2
    if coef != 0.0:
        t_sum = t_sum + coef * (matmul_grid(a_y, a_p) + matmul_grid(a_p, a_y))
    if params.beta != 0.0:
        t_sum = t_sum + params.beta * tensor_dot(a_y, a_y) * a_p
        t_sum = t_sum + 2.0 * params.beta * tensor_dot(a_p, a_y) * a_y
    tensors = basis.quad(np.einsum("ijxy,ijxy->xy", t_sum, grad_phi))
    return visc + conv + tensors
