"""Time integration of the nonlinear state equation with energy diagnostics.

The equation is advanced in its divergence form

    d/dt v(y) = P [ nu Lap y - (y . grad) y + div N(y) + div S(y) + U ],

projected onto the div-free basis.  Testing against the unit-V-norm modes
turns this into coefficient ODEs

    da_i/dt = ( -nu lam_i a_i + c_i(F(y)) + c_i(U) ) / (1 + alpha1 lam_i),

where c_i is the basis projection of the nonlinear force F and the control.
One step is Crank-Nicolson on the diagonal viscous part with the nonlinear
terms evaluated at the interval midpoint (y_k + y_{k+1}) / 2, resolved by
fixed-point iteration.  Controls are sampled at midpoints by averaging
adjacent nodes.

Because every projection is an exact quadrature pairing, the scheme satisfies
a discrete V-norm energy identity per step,

    ||y_{k+1}||_V^2 - ||y_k||_V^2
        = dt [ -4 nu ||D y_m||_2^2 - beta int |A(y_m)|^4 + 2 (U_m, y_m) ],

with y_m the converged midpoint; the cubic term is nonpositive by quadrature
of a pointwise nonnegative integrand, which is the dissipation mechanism the
continuous H1 estimate rests on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FixedPointDiverged, GridMismatch
from .params import ModelParams
from .spectral import (
    Field,
    SpectralBasis,
    nonnewtonian_tensor,
    norms,
    strain,
    tensor_dot,
    to_coeffs,
    to_grid,
)
from .trajectory import Trajectory, check_same_grid

__all__ = [
    "EnergyReport",
    "step_state",
    "solve_state",
    "energy_report",
    "energy_balance_residuals",
    "manufactured_control",
    "suggested_dt",
    "FP_TOL",
    "FP_MAX_ITER",
]

FP_TOL = 1e-10
FP_MAX_ITER = 50


@dataclass(frozen=True)
class EnergyReport:
    """Per-node diagnostics of a state trajectory.

    h1, h2, h3        : Sobolev norms ||y(t_k)||_{H1,H2,H3}
    strain_quartic    : int_D |A(y(t_k))|^4 dx
    dissipation       : cumulative 4 nu int_0^{t_k} ||D y||_2^2 ds (midpoint rule)
    gamma             : sup_k ||y(t_k)||_{H3}, fed to the uniqueness diagnostics
    """

    times: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    strain_quartic: np.ndarray
    dissipation: np.ndarray
    gamma: float


def state_rhs_coeffs(
    basis: SpectralBasis, params: ModelParams, y_coeffs: np.ndarray, s_term_sign: float = 1.0
) -> np.ndarray:
    """Projection coefficients of F(y) = -(y.grad)y + div N(y) + div S(y).

    s_term_sign is a fault-injection hook for mutation tests of the energy
    check; it must stay +1.0 in production paths.
    """
    vel = to_grid(Field(y_coeffs, basis))
    jac = basis.jacobian(vel)
    a = strain(basis, vel, jac)
    conv = np.einsum("jxy,ijxy->ixy", vel, jac)
    stress = nonnewtonian_tensor(params, basis, vel, jac, a)
    if params.beta != 0.0:
        stress = stress + (s_term_sign * params.beta) * tensor_dot(a, a) * a
    rhs = -conv + basis.tensor_divergence(stress)
    return to_coeffs(basis, rhs).coeffs


def _cn_factors(basis: SpectralBasis, params: ModelParams, dt: float):
    imp = 0.5 * dt * params.nu * basis.lam / basis.vmult
    return 1.0 - imp, 1.0 + imp


def _fixed_point(
    a_prev: np.ndarray, explicit, numer, denom, dt: float, step: int | None, guess=None
):
    """Solve a_new = (numer a_prev + dt explicit(mid)) / denom by iteration."""
    a_new = a_prev.copy() if guess is None else guess.copy()
    residuals = []
    for _ in range(FP_MAX_ITER):
        mid = 0.5 * (a_prev + a_new)
        with np.errstate(over="ignore", invalid="ignore"):
            a_next = (numer * a_prev + dt * explicit(mid)) / denom
        if not np.all(np.isfinite(a_next)):
            raise FixedPointDiverged(
                "midpoint iteration produced non-finite values; dt is too large",
                step=step,
                residuals=residuals,
            )
        scale = max(float(np.max(np.abs(a_next))), 1e-30)
        res = float(np.max(np.abs(a_next - a_new))) / scale
        residuals.append(res)
        a_new = a_next
        if res <= FP_TOL:
            return a_new
    raise FixedPointDiverged(
        f"midpoint iteration did not reach {FP_TOL} in {FP_MAX_ITER} iterations "
        f"(last residuals {residuals[-3:]}); dt is too large",
        step=step,
        residuals=residuals,
    )


def step_state(
    y_n: Field,
    u_half: Field,
    dt: float,
    params: ModelParams,
    step: int | None = None,
    guess: np.ndarray | None = None,
) -> Field:
    """One Crank-Nicolson/midpoint step of the state equation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    y_n._check(u_half)
    basis = y_n.basis
    numer, denom = _cn_factors(basis, params, dt)
    u_term = u_half.coeffs / basis.vmult

    def explicit(mid):
        return state_rhs_coeffs(basis, params, mid) / basis.vmult + u_term

    return Field(_fixed_point(y_n.coeffs, explicit, numer, denom, dt, step, guess), basis)


def solve_state(
    y0: Field, control: Trajectory, params: ModelParams
) -> tuple[Trajectory, EnergyReport]:
    """Integrate the state over the control's time grid; store every node."""
    basis = y0.basis
    if not basis.compatible(control.basis):
        raise GridMismatch("initial state and control live on incompatible bases")
    n_steps = control.n_steps
    dt = control.dt
    u_mid = control.midpoints()
    coeffs = np.empty((n_steps + 1, basis.n_modes))
    coeffs[0] = y0.coeffs
    y = y0
    for k in range(n_steps):
        guess = 2.0 * coeffs[k] - coeffs[k - 1] if k > 0 else None
        y = step_state(y, Field(u_mid[k], basis), dt, params, step=k, guess=guess)
        coeffs[k + 1] = y.coeffs
    traj = Trajectory(control.times.copy(), coeffs, basis, "state")
    return traj, energy_report(traj, params)


def energy_report(traj: Trajectory, params: ModelParams) -> EnergyReport:
    basis = traj.basis
    n_nodes = traj.times.size
    h1 = np.empty(n_nodes)
    h2 = np.empty(n_nodes)
    h3 = np.empty(n_nodes)
    quartic = np.empty(n_nodes)
    for k in range(n_nodes):
        f = traj.field(k)
        h1[k] = norms(f, "H1")
        h2[k] = norms(f, "H2")
        h3[k] = norms(f, "H3")
        a = strain(basis, to_grid(f))
        quartic[k] = basis.quad(tensor_dot(a, a) ** 2)
    # 2 ||D y||_2^2 = sum lam a^2 / (1 + alpha1 lam) for V-normalized modes
    mids = traj.midpoints()
    dstrain_sq = 0.5 * np.sum(mids ** 2 * basis.lam / basis.vmult, axis=1)
    dissipation = np.concatenate([[0.0], np.cumsum(4.0 * params.nu * dstrain_sq * traj.dt)])
    return EnergyReport(
        times=traj.times.copy(),
        h1=h1,
        h2=h2,
        h3=h3,
        strain_quartic=quartic,
        dissipation=dissipation,
        gamma=float(np.max(h3)),
    )


def energy_balance_residuals(
    traj: Trajectory, control: Trajectory, params: ModelParams, s_term_sign: float = 1.0
) -> np.ndarray:
    """Per-step residual of the discrete V-norm energy identity.

    Returns r_k = ||y_{k+1}||_V^2 - ||y_k||_V^2 + dt (4 nu ||D y_m||^2
    + beta int |A(y_m)|^4 (* s_term_sign) - 2 (U_m, y_m)); the solver makes
    r_k vanish to fixed-point tolerance, and dropping the control term turns
    the identity into the dissipation inequality.
    """
    check_same_grid(traj, control)
    basis = traj.basis
    dt = traj.dt
    y_mid = traj.midpoints()
    u_mid = control.midpoints()
    res = np.empty(traj.n_steps)
    for k in range(traj.n_steps):
        v_incr = float(np.sum(traj.coeffs[k + 1] ** 2) - np.sum(traj.coeffs[k] ** 2))
        # 4 nu ||D y_m||_2^2 = 2 nu sum lam a^2 / (1 + alpha1 lam)
        dvisc = 2.0 * params.nu * float(np.sum(y_mid[k] ** 2 * basis.lam / basis.vmult))
        a = strain(basis, to_grid(Field(y_mid[k], basis)))
        quartic = basis.quad(tensor_dot(a, a) ** 2)
        work = float(np.sum(u_mid[k] * y_mid[k] / basis.vmult))
        res[k] = v_incr + dt * (dvisc + s_term_sign * params.beta * quartic - 2.0 * work)
    return res


def manufactured_control(
    basis: SpectralBasis,
    params: ModelParams,
    times: np.ndarray,
    mode_index: int,
    g,
    gprime,
) -> tuple[Trajectory, Trajectory]:
    """Control forcing the exact single-mode solution y*(t) = g(t) h_{mode_index}.

    Substituting y* into the projected equation leaves the residual

        c_i(U) = (g' D_i + nu lam_i g) delta_{i,mode} - c_i(F(y*)),

    so the semi-discrete Galerkin solution is y* exactly and the fully
    discrete error isolates the time discretization.  Returns (U, y*) as
    node trajectories.
    """
    n_nodes = times.size
    u = np.empty((n_nodes, basis.n_modes))
    ystar = np.zeros((n_nodes, basis.n_modes))
    for k, t in enumerate(times):
        gk = float(g(t))
        ystar[k, mode_index] = gk
        u[k] = -state_rhs_coeffs(basis, params, ystar[k])
        u[k, mode_index] += (
            float(gprime(t)) * basis.vmult[mode_index] + params.nu * basis.lam[mode_index] * gk
        )
    return (
        Trajectory(times, u, basis, "control"),
        Trajectory(times, ystar, basis, "state"),
    )


def suggested_dt(y0: Field, params: ModelParams) -> float:
    """Step-size heuristic dt <= 0.5 / (nu lam_max + ||y0||_{H3})."""
    lam_max = float(np.max(y0.basis.lam))
    return 0.5 / (params.nu * lam_max + norms(y0, "H3") + 1e-12)
