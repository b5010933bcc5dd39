from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Optional

from xsigma.utils import conjugate


@dataclass(frozen=True)
class ModelParams:
    """
    Exponents of the coupled system.

    All closed-form exponent arithmetic in the package reads from this
    object, so a single instance describes one point of the parameter space.

    Parameters
    ----------
    sigma : float
        Order of the fractional Laplacian, sigma > 0.
    dim : float
        Space dimension n. Real values are accepted for formula evaluation;
        simulations require an integer in {1, 2, 3}.
    p : float
        Exponent of |v|^p in the first equation, p > 1.
    q : float
        Exponent of |u|^q in the second equation, q > 1.
    eps_slack : float
        Small positive slack entering the loss-of-decay exponents.
    sigma_bar_choice : float
        Value used for sigma_bar when sigma is an integer, in (0, 1).
    """

    sigma: float
    dim: float
    p: float
    q: float
    eps_slack: float = 0.01
    sigma_bar_choice: float = 0.5

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}.")
        if not self.dim > 0:
            raise ValueError(f"dim must be positive, got {self.dim}.")
        if not (self.p > 1 and self.q > 1):
            raise ValueError(f"p and q must exceed 1, got p={self.p}, q={self.q}.")
        if not self.eps_slack > 0:
            raise ValueError(f"eps_slack must be positive, got {self.eps_slack}.")
        if not 0 < self.sigma_bar_choice < 1:
            raise ValueError(
                f"sigma_bar_choice must lie in (0, 1), got {self.sigma_bar_choice}."
            )

    @property
    def p_conj(self) -> float:
        return conjugate(self.p)

    @property
    def q_conj(self) -> float:
        return conjugate(self.q)

    @property
    def scale(self) -> float:
        """n / (2 sigma), the threshold the blow-up ratios are compared to."""
        return self.dim / (2.0 * self.sigma)

    @property
    def p_crit(self) -> float:
        return 1.0 + 2.0 * self.sigma / self.dim

    @property
    def q_crit(self) -> Optional[float]:
        if self.dim <= self.sigma:
            return None
        return 1.0 + 2.0 * self.sigma / (self.dim - self.sigma)

    @property
    def p0(self) -> float:
        return -1.0 + 4.0 * self.sigma / self.dim

    @property
    def q0(self) -> Optional[float]:
        if self.dim <= self.sigma:
            return None
        return (self.dim + 2.0 * self.sigma) / (2.0 * (self.dim - self.sigma))

    @property
    def sigma_is_integer(self) -> bool:
        return float(self.sigma).is_integer()

    @property
    def sigma_bar(self) -> float:
        """Fractional part of sigma, or ``sigma_bar_choice`` for integer sigma."""
        if self.sigma_is_integer:
            return self.sigma_bar_choice
        return self.sigma - math.floor(self.sigma)

    @property
    def spatial_dim(self) -> int:
        """Integer dimension for simulations."""
        if not float(self.dim).is_integer() or int(self.dim) not in (1, 2, 3):
            raise ValueError(
                f"Simulations require dim in {{1, 2, 3}}, got {self.dim}."
            )
        return int(self.dim)

    def replace(self, **changes: Any) -> "ModelParams":
        """Return a copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def __repr__(self) -> str:
        return (
            f"ModelParams(sigma={self.sigma}, dim={self.dim}, p={self.p}, "
            f"q={self.q}, eps_slack={self.eps_slack})"
        )
