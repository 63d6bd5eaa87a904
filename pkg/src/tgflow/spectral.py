"""Divergence-free trigonometric basis on the square and pseudo-spectral operators.

Domain and basis
----------------
The flow domain is the square D = [0, pi]^2 with free-slip (Navier) walls:
no penetration, y . eta = 0, and zero tangential stress, (eta . D(y)) . tau = 0.
Each basis velocity comes from a stream function psi_mn = sin(m x) sin(n y),

    h_mn = (d psi/dy, -d psi/dx) = s_mn (n sin(m x) cos(n y), -m cos(m x) sin(n y)),

so it is exactly divergence-free and satisfies both wall conditions on all four
edges.  The modes are eigenfunctions of the (vector) Laplacian with eigenvalue
lambda = m^2 + n^2, which makes every constant-coefficient operator used here
mode-diagonal.  The scale s_mn normalizes each mode to unit V-norm, where

    (u, z)_V = (u, z) + 2 alpha1 (Du, Dz),        D = symmetric gradient,
    (u, z)_W = (u, z)_V + (P v(u), P v(z)),       v(u) = u - alpha1 Lap u,

P being the Leray projection.  On a mode, v acts as multiplication by
D_mn = 1 + alpha1 lambda, hence (h, h)_W = mu (h, h)_V with mu = 2 + alpha1 lambda.

Grids and transforms
--------------------
All pointwise work happens on the even/odd periodic extension of the square to
[0, 2pi)^2, sampled on P x P points with P = 2 * grid_size.  Every quantity in
the pipeline (velocity components, strain entries, their products) extends to a
genuine trigonometric polynomial on the torus, so one real FFT serves for all
derivatives, and integrals over D of parity-matched products are exactly
(pi^2 / P^2) * sum over the extended grid.

Nonlinear products are formed pointwise on the grid and projected back onto the
basis by exact quadrature pairing with the analytic mode arrays; the 2/3-rule
mask is available for grid-level intermediates and is subsumed by that
projection (the mask keeps every basis mode whenever grid_size >= 3M/2).
For the cubic stress to be alias-free, grid_size >= 2M + 2 is recommended;
the default 4M matches that comfortably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from .errors import ShapeMismatch, UnknownKind
from .params import ModelParams

__all__ = [
    "SpectralBasis",
    "Field",
    "TensorGridField",
    "ConstitutiveTerms",
    "build_basis",
    "default_grid_size",
    "min_grid_size",
    "to_grid",
    "to_coeffs",
    "dealias",
    "invert_modified_stokes",
    "apply_modified_stokes",
    "trilinear_b",
    "constitutive_terms",
    "norms",
    "set_fft_workers",
]

_FFT_WORKERS = 1

NORM_KINDS = ("L2", "V", "W", "H1", "H2", "H3", "W14")


def set_fft_workers(n: int) -> None:
    """Set the worker count for FFT calls. n = 1 (default) is bitwise deterministic."""
    global _FFT_WORKERS
    if n < 1:
        raise ValueError("worker count must be >= 1")
    _FFT_WORKERS = int(n)


def min_grid_size(max_mode: int) -> int:
    """Smallest legal collocation resolution: the 2/3-rule bound ceil(3M/2)."""
    return math.ceil(1.5 * max_mode)


def default_grid_size(max_mode: int) -> int:
    """Default resolution 4M: alias-free for the cubic stress (needs >= 2M + 2)."""
    return 4 * max_mode


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Divergence-free free-slip basis truncated at max_mode per axis.

    modes, lam and mu are aligned arrays over the M^2 modes in lexicographic
    (m, n) order.  h1 / h2 hold the velocity components of every normalized
    mode on the extended P x P grid (P = 2 * grid_size) and back both the
    synthesis (to_grid) and the projection (to_coeffs) as plain contractions.
    """

    max_mode: int
    alpha1: float
    grid_size: int
    modes: np.ndarray          # (n_modes, 2) int
    lam: np.ndarray            # (n_modes,) Stokes eigenvalue m^2 + n^2
    mu: np.ndarray             # (n_modes,) W/V eigenratio 2 + alpha1 lam
    vmult: np.ndarray          # (n_modes,) 1 + alpha1 lam, the action of v
    h1: np.ndarray = field(repr=False)   # (n_modes, P, P)
    h2: np.ndarray = field(repr=False)   # (n_modes, P, P)
    kx: np.ndarray = field(repr=False)   # (P, 1) integer wavenumbers
    ky: np.ndarray = field(repr=False)   # (1, P//2 + 1) rfft wavenumbers
    dealias_mask: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def n_ext(self) -> int:
        """Points per axis of the extended periodic grid."""
        return 2 * self.grid_size

    @property
    def quad_weight(self) -> float:
        """Weight turning an extended-grid sum into an integral over [0, pi]^2."""
        return math.pi ** 2 / self.n_ext ** 2

    def compatible(self, other: "SpectralBasis") -> bool:
        return (
            self.max_mode == other.max_mode
            and self.grid_size == other.grid_size
            and self.alpha1 == other.alpha1
        )

    # -- grid calculus helpers ------------------------------------------------

    def rfft2(self, g: np.ndarray) -> np.ndarray:
        return sp_fft.rfft2(g, axes=(-2, -1), workers=_FFT_WORKERS)

    def irfft2(self, gh: np.ndarray) -> np.ndarray:
        P = self.n_ext
        return sp_fft.irfft2(gh, s=(P, P), axes=(-2, -1), workers=_FFT_WORKERS)

    def dx(self, g: np.ndarray) -> np.ndarray:
        return self.irfft2(1j * self.kx * self.rfft2(g))

    def dy(self, g: np.ndarray) -> np.ndarray:
        return self.irfft2(1j * self.ky * self.rfft2(g))

    def grad_scalar(self, g: np.ndarray) -> np.ndarray:
        """(2, P, P) gradient of a scalar grid field."""
        gh = self.rfft2(g)
        return self.irfft2(np.stack([1j * self.kx * gh, 1j * self.ky * gh]))

    def jacobian(self, vel: np.ndarray) -> np.ndarray:
        """J[i, j] = d_j vel_i for a (2, P, P) velocity; returns (2, 2, P, P)."""
        vh = self.rfft2(vel)
        return self.irfft2(
            np.stack([1j * self.kx * vh, 1j * self.ky * vh], axis=1)
        )

    def tensor_divergence(self, t: np.ndarray) -> np.ndarray:
        """Row-wise divergence (div T)_i = sum_j d_j T[..., i, j] over the grid.

        Accepts any leading batch axes before the trailing (2, 2, P, P).
        """
        th = self.rfft2(t)
        out = 1j * self.kx * th[..., :, 0, :, :] + 1j * self.ky * th[..., :, 1, :, :]
        return self.irfft2(out)

    def divergence(self, vel: np.ndarray) -> np.ndarray:
        vh = self.rfft2(vel)
        return self.irfft2(1j * self.kx * vh[0] + 1j * self.ky * vh[1])

    def curl(self, vel: np.ndarray) -> np.ndarray:
        """Scalar curl d1 u2 - d2 u1 of a (2, P, P) velocity."""
        vh = self.rfft2(vel)
        return self.irfft2(1j * self.kx * vh[1] - 1j * self.ky * vh[0])

    def curl_scalar(self, g: np.ndarray) -> np.ndarray:
        """Perpendicular gradient (d2 g, -d1 g) of a scalar, the 2D curl."""
        gh = self.rfft2(g)
        return np.stack([self.irfft2(1j * self.ky * gh), self.irfft2(-1j * self.kx * gh)])

    def quad(self, g: np.ndarray) -> float:
        """Integral over [0, pi]^2 of a parity-even scalar grid field."""
        return float(np.sum(g) * self.quad_weight)

    def pair_velocity(self, g: np.ndarray, w: np.ndarray) -> float:
        """L2 inner product over D of two (2, P, P) velocity grids."""
        return float(np.sum(g * w) * self.quad_weight)


@dataclass(frozen=True, eq=False)
class Field:
    """A divergence-free velocity as coefficients in a SpectralBasis.

    Coefficients refer to the unit-V-norm modes, so the V inner product of two
    fields is the plain dot product of their coefficient vectors.
    """

    coeffs: np.ndarray
    basis: SpectralBasis

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape != (self.basis.n_modes,):
            raise ShapeMismatch(
                f"expected {self.basis.n_modes} coefficients, got {self.coeffs.shape}"
            )

    def _check(self, other: "Field") -> None:
        if self.basis is not other.basis and not self.basis.compatible(other.basis):
            raise ShapeMismatch("fields live on incompatible bases")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, a: float) -> "Field":
        return Field(self.coeffs * float(a), self.basis)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(-self.coeffs, self.basis)


@dataclass(frozen=True)
class TensorGridField:
    """A symmetric 2x2 tensor sampled on the extended grid, shape (2, 2, P, P)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 4 or self.values.shape[:2] != (2, 2):
            raise ShapeMismatch(f"expected (2, 2, P, P) tensor, got {self.values.shape}")

    @property
    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.values[0, 1] - self.values[1, 0])))


@dataclass(frozen=True)
class ConstitutiveTerms:
    """Strain and stress quantities of a state y, evaluated pseudo-spectrally.

    a      : A(y) = grad y + (grad y)^T
    a_sq   : |A|^2 pointwise
    s      : cubic stress beta |A|^2 A
    n      : alpha1 (y . grad A + J^T A + A J) + alpha2 A^2
    div_s  : Leray-projected divergence of s, as a Field
    div_n  : Leray-projected divergence of n, as a Field
    curl_v : scalar curl of the modified velocity v(y)
    """

    a: TensorGridField
    a_sq: np.ndarray
    s: TensorGridField
    n: TensorGridField
    div_s: Field
    div_n: Field
    curl_v: np.ndarray


def build_basis(max_mode: int, alpha1: float, grid_size: int | None = None) -> SpectralBasis:
    """Construct the basis with M^2 modes, 1 <= m, n <= max_mode.

    grid_size defaults to 4 * max_mode and must be at least ceil(3M/2).
    """
    if max_mode < 1:
        raise ValueError("max_mode must be >= 1")
    if alpha1 < 0:
        raise ValueError("alpha1 must be >= 0")
    if grid_size is None:
        grid_size = default_grid_size(max_mode)
    if grid_size < min_grid_size(max_mode):
        raise ValueError(
            f"grid_size {grid_size} below dealiasing minimum {min_grid_size(max_mode)}"
        )

    P = 2 * grid_size
    x = 2.0 * math.pi * np.arange(P) / P
    X = x[:, None]
    Y = x[None, :]

    modes = np.array([(m, n) for m in range(1, max_mode + 1) for n in range(1, max_mode + 1)])
    lam = (modes[:, 0] ** 2 + modes[:, 1] ** 2).astype(float)
    vmult = 1.0 + alpha1 * lam
    mu = 1.0 + vmult

    n_modes = modes.shape[0]
    h1 = np.empty((n_modes, P, P))
    h2 = np.empty((n_modes, P, P))
    for i, (m, n) in enumerate(modes):
        # unit V-norm: ||h_raw||_V^2 = (1 + alpha1 lam) lam pi^2 / 4
        s = 1.0 / math.sqrt(vmult[i] * lam[i] * math.pi ** 2 / 4.0)
        h1[i] = s * n * np.sin(m * X) * np.cos(n * Y)
        h2[i] = -s * m * np.cos(m * X) * np.sin(n * Y)

    kx = np.fft.fftfreq(P, d=1.0 / P)[:, None]
    ky = np.fft.rfftfreq(P, d=1.0 / P)[None, :]
    kcut = P // 3  # 2/3 of the Nyquist wavenumber P/2
    mask = (np.abs(kx) <= kcut) & (ky <= kcut)

    return SpectralBasis(
        max_mode=int(max_mode),
        alpha1=float(alpha1),
        grid_size=int(grid_size),
        modes=modes,
        lam=lam,
        mu=mu,
        vmult=vmult,
        h1=h1,
        h2=h2,
        kx=kx,
        ky=ky,
        dealias_mask=mask,
    )


def to_grid(f: Field) -> np.ndarray:
    """Synthesize a Field to its (2, P, P) extended-grid velocity values."""
    b = f.basis
    g1 = np.einsum("i,ixy->xy", f.coeffs, b.h1)
    g2 = np.einsum("i,ixy->xy", f.coeffs, b.h2)
    return np.stack([g1, g2])


def to_coeffs(basis: SpectralBasis, vel: np.ndarray) -> Field:
    """Project a (2, P, P) velocity grid onto the div-free basis.

    This is the L2-orthogonal (equivalently V-orthogonal) projection onto the
    span: c_i = (1 + alpha1 lam_i) (vel, h_i)_{L2(D)}, evaluated by exact grid
    quadrature.  Content beyond the 2/3 mask never reaches the coefficients,
    so dealiasing is built in.
    """
    P = basis.n_ext
    if vel.shape != (2, P, P):
        raise ShapeMismatch(f"expected velocity grid of shape (2, {P}, {P}), got {vel.shape}")
    pair = np.einsum("ixy,xy->i", basis.h1, vel[0]) + np.einsum("ixy,xy->i", basis.h2, vel[1])
    return Field(basis.vmult * basis.quad_weight * pair, basis)


def dealias(basis: SpectralBasis, g: np.ndarray) -> np.ndarray:
    """Apply the sharp 2/3-rule spectral cutoff to a scalar grid field."""
    return basis.irfft2(basis.dealias_mask * basis.rfft2(g))


def apply_modified_stokes(f: Field, alpha1: float) -> Field:
    """Apply (I - alpha1 P Lap): multiply mode i by 1 + alpha1 lam_i."""
    return Field(f.coeffs * (1.0 + alpha1 * f.basis.lam), f.basis)


def invert_modified_stokes(f: Field, alpha1: float) -> Field:
    """Solve h - alpha1 Lap h + grad pi = f on the span: divide by 1 + alpha1 lam."""
    if alpha1 < 0:
        raise ValueError("alpha1 must be >= 0")
    return Field(f.coeffs / (1.0 + alpha1 * f.basis.lam), f.basis)


def trilinear_b(phi: Field, z: Field, y: Field) -> float:
    """Convective form b(phi, z, y) = integral of (phi . grad z) . y over D."""
    phi._check(z)
    phi._check(y)
    b = phi.basis
    gp = to_grid(phi)
    gy = to_grid(y)
    jz = b.jacobian(to_grid(z))
    adv = np.einsum("jxy,ijxy->ixy", gp, jz)
    return b.pair_velocity(adv, gy)


def strain(basis: SpectralBasis, vel: np.ndarray, jac: np.ndarray | None = None) -> np.ndarray:
    """A(y) = J + J^T on the grid, shape (2, 2, P, P)."""
    if jac is None:
        jac = basis.jacobian(vel)
    return jac + np.swapaxes(jac, 0, 1)


def tensor_partials(basis: SpectralBasis, t: np.ndarray) -> np.ndarray:
    """Stacked (d_x T, d_y T) of a (2, 2, P, P) tensor, shape (2, 2, 2, P, P)."""
    th = basis.rfft2(t)
    return basis.irfft2(np.stack([1j * basis.kx * th, 1j * basis.ky * th]))


def advect_tensor(
    basis: SpectralBasis, vel: np.ndarray, t: np.ndarray, partials: np.ndarray | None = None
) -> np.ndarray:
    """(vel . grad) T componentwise; T symmetric (2, 2, P, P)."""
    if partials is None:
        partials = tensor_partials(basis, t)
    return vel[0] * partials[0] + vel[1] * partials[1]


def matmul_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise 2x2 matrix product of (2, 2, P, P) tensors."""
    return np.einsum("ikxy,kjxy->ijxy", a, b)


def tensor_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise Frobenius contraction A : B of (2, 2, P, P) tensors."""
    return np.einsum("ijxy,ijxy->xy", a, b)


def nonnewtonian_tensor(
    params: ModelParams,
    basis: SpectralBasis,
    vel: np.ndarray,
    jac: np.ndarray,
    a: np.ndarray,
) -> np.ndarray:
    """N(y) = alpha1 (y . grad A + J^T A + A J) + alpha2 A^2."""
    jt_a = matmul_grid(np.swapaxes(jac, 0, 1), a)
    a_j = matmul_grid(a, jac)
    out = params.alpha1 * (advect_tensor(basis, vel, a) + jt_a + a_j)
    if params.alpha2 != 0.0:
        out = out + params.alpha2 * matmul_grid(a, a)
    return out


def constitutive_terms(y: Field, params: ModelParams) -> ConstitutiveTerms:
    """Evaluate A, S, N, their projected divergences and curl v(y) for a state."""
    b = y.basis
    vel = to_grid(y)
    jac = b.jacobian(vel)
    a = strain(b, vel, jac)
    a_sq = tensor_dot(a, a)
    s = params.beta * a_sq * a
    n = nonnewtonian_tensor(params, b, vel, jac, a)
    div_s = to_coeffs(b, b.tensor_divergence(s))
    div_n = to_coeffs(b, b.tensor_divergence(n))
    v_grid = to_grid(Field(y.coeffs * b.vmult, b))
    return ConstitutiveTerms(
        a=TensorGridField(a),
        a_sq=a_sq,
        s=TensorGridField(s),
        n=TensorGridField(n),
        div_s=div_s,
        div_n=div_n,
        curl_v=b.curl(v_grid),
    )


def _h_multiplier(lam: np.ndarray, order: int) -> np.ndarray:
    out = np.ones_like(lam)
    p = np.ones_like(lam)
    for _ in range(order):
        p = p * lam
        out = out + p
    return out


def norms(y: Field, kind: str) -> float:
    """Norm of a Field.

    Sobolev kinds use per-mode multipliers (modes are Laplacian
    eigenfunctions); W14 uses grid quadrature with the componentwise
    convention ||u||_{W14}^2 = sum_i ||u_i||_{W14}^2 and
    ||f||_{W14}^4 = int f^4 + (|grad f|^2)^2 dx.
    """
    b = y.basis
    c2 = y.coeffs ** 2
    if kind == "V":
        return math.sqrt(float(np.sum(c2)))
    if kind == "L2":
        return math.sqrt(float(np.sum(c2 / b.vmult)))
    if kind == "W":
        return math.sqrt(float(np.sum(c2 * b.mu)))
    if kind in ("H1", "H2", "H3"):
        order = int(kind[1])
        mult = _h_multiplier(b.lam, order) / b.vmult
        return math.sqrt(float(np.sum(c2 * mult)))
    if kind == "W14":
        vel = to_grid(y)
        jac = b.jacobian(vel)
        total = 0.0
        for i in range(2):
            grad_sq = jac[i, 0] ** 2 + jac[i, 1] ** 2
            fourth = b.quad(vel[i] ** 4) + b.quad(grad_sq ** 2)
            total += math.sqrt(fourth)
        return math.sqrt(total)
    raise UnknownKind(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
