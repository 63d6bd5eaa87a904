"""Fluid material parameters and their thermodynamic admissibility check.

The third grade model carries four constants: the viscosity nu, the two
material moduli alpha1, alpha2 and the cubic-stress modulus beta.
Compatibility with thermodynamics requires

    nu >= 0,  alpha1 >= 0,  beta >= 0,  |alpha1 + alpha2| <= sqrt(24 nu beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NegativeModulus, NonAdmissible

__all__ = ["ModelParams", "validate_params"]


@dataclass(frozen=True)
class ModelParams:
    """Validated fluid constants. Construct through :func:`validate_params`."""

    nu: float
    alpha1: float
    alpha2: float
    beta: float

    @property
    def alpha_sum(self) -> float:
        return self.alpha1 + self.alpha2


def validate_params(nu: float, alpha1: float, alpha2: float, beta: float) -> ModelParams:
    """Check admissibility and return a frozen parameter set.

    Raises NegativeModulus if nu, alpha1 or beta is negative, NonAdmissible
    if |alpha1 + alpha2| exceeds sqrt(24 nu beta), naming the violated
    inequality in the message.
    """
    values = (nu, alpha1, alpha2, beta)
    if not all(math.isfinite(v) for v in values):
        raise NonAdmissible(f"parameters must be finite, got {values}")
    if nu < 0:
        raise NegativeModulus(f"nu = {nu} violates nu >= 0")
    if alpha1 < 0:
        raise NegativeModulus(f"alpha1 = {alpha1} violates alpha1 >= 0")
    if beta < 0:
        raise NegativeModulus(f"beta = {beta} violates beta >= 0")
    bound = math.sqrt(24.0 * nu * beta)
    if abs(alpha1 + alpha2) > bound:
        raise NonAdmissible(
            f"|alpha1 + alpha2| = {abs(alpha1 + alpha2)} violates "
            f"|alpha1 + alpha2| <= sqrt(24 nu beta) = {bound}"
        )
    return ModelParams(float(nu), float(alpha1), float(alpha2), float(beta))
