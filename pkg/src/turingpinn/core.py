"""Model parameters, grids and patterns for the two-species reaction-diffusion system.

The model evolves two concentrations ``u`` and ``v``::

    du/dt = D1*D2*lap(u) + alpha*u*(1 - r1*v**2) + v*(1 - r2*u)
    dv/dt = D2*lap(v)    + beta*v*(1 + (alpha*r1/beta)*u*v) + u*(gamma + r2*v)

with ``gamma = -alpha``.  Everything is dimensionless and float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

PDE_NAMES = ("d1", "d2", "alpha", "beta", "r1")
"""Parameters that can be inferred.  ``r2`` is always fixed and ``gamma`` is tied to ``alpha``."""


class ParameterError(ValueError):
    """Raised when a parameter set violates the model's invariants."""


@dataclass(frozen=True)
class RDParams:
    d1: float
    d2: float
    alpha: float
    beta: float
    r1: float
    r2: float

    def __post_init__(self) -> None:
        for name in ("d1", "d2", "alpha", "beta", "r1", "r2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.beta == 0.0:
            raise ParameterError("beta must be non-zero (it divides alpha*r1 in the v equation)")

    @property
    def gamma(self) -> float:
        return -self.alpha

    def with_values(self, **changes: float) -> "RDParams":
        if "gamma" in changes:
            raise ParameterError("gamma is tied to -alpha and cannot be set directly")
        return replace(self, **changes)

    def trainable_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PDE_NAMES], dtype=np.float64)

    @classmethod
    def from_trainable_vector(cls, vec: np.ndarray, r2: float) -> "RDParams":
        d1, d2, alpha, beta, r1 = (float(x) for x in vec)
        return cls(d1=d1, d2=d2, alpha=alpha, beta=beta, r1=r1, r2=r2)

    def as_dict(self) -> dict[str, float]:
        return {
            "d1": self.d1,
            "d2": self.d2,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "r1": self.r1,
            "r2": self.r2,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RDParams":
        if "gamma" in data and float(data["gamma"]) != -float(data["alpha"]):
            raise ParameterError(f"gamma={data['gamma']} is not -alpha={-float(data['alpha'])}")
        try:
            return cls(**{k: data[k] for k in ("d1", "d2", "alpha", "beta", "r1", "r2")})
        except KeyError as exc:
            raise ParameterError(f"missing parameter {exc.args[0]!r}") from None


_PATTERNS = {
    "P": RDParams(d1=0.516, d2=2.0, alpha=0.899, beta=-0.91, r1=3.50, r2=0.0),
    "Q": RDParams(d1=0.300, d2=2.0, alpha=0.700, beta=-0.75, r1=3.50, r2=0.0),
    "R": RDParams(d1=0.516, d2=2.0, alpha=0.899, beta=-0.91, r1=0.02, r2=0.2),
}

PATTERN_IDS = tuple(_PATTERNS)


def params_for_pattern(name: str) -> RDParams:
    try:
        return _PATTERNS[name.upper()]
    except KeyError:
        raise KeyError(f"unknown pattern {name!r}; expected one of {', '.join(_PATTERNS)}") from None


def reaction_rhs(u, v, lap_u, lap_v, p: RDParams):
    """Time derivatives of ``u`` and ``v``; works on scalars and arrays alike."""
    du = p.d1 * p.d2 * lap_u + p.alpha * u * (1.0 - p.r1 * v * v) + v * (1.0 - p.r2 * u)
    dv = p.d2 * lap_v + p.beta * v * (1.0 + (p.alpha * p.r1 / p.beta) * u * v) + u * (p.gamma + p.r2 * v)
    return du, dv


@dataclass(frozen=True)
class GridSpec:
    """Vertex-centred uniform grid: node ``i`` sits at ``x_min + i*dx``."""

    nx: int = 50
    ny: int = 50
    x_min: float = -30.0
    x_max: float = 30.0
    y_min: float = -30.0
    y_max: float = 30.0

    def __post_init__(self) -> None:
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("grid bounds must be increasing")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(ny, nx)``; rows are y, so a C-order ravel is index ``iy*nx + ix``."""
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def x(self) -> np.ndarray:
        # linspace pins the last node to x_max exactly, which keeps CSV round-trips stable
        return np.linspace(self.x_min, self.x_max, self.nx)

    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x(), self.y())

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(nx*ny, 2)`` array in row-major order."""
        xx, yy = self.mesh()
        return np.column_stack([xx.ravel(), yy.ravel()])

    def edge_indices(self) -> np.ndarray:
        iy, ix = np.divmod(np.arange(self.size), self.nx)
        on_edge = (ix == 0) | (ix == self.nx - 1) | (iy == 0) | (iy == self.ny - 1)
        return np.flatnonzero(on_edge)

    def refined(self, factor: int) -> "GridSpec":
        return replace(self, nx=(self.nx - 1) * factor + 1, ny=(self.ny - 1) * factor + 1)

    def as_dict(self) -> dict[str, Any]:
        return {"nx": self.nx, "ny": self.ny, "x_min": self.x_min, "x_max": self.x_max,
                "y_min": self.y_min, "y_max": self.y_max}


@dataclass(frozen=True, eq=False)
class Pattern:
    """Paired ``u``/``v`` fields on a grid, stored as ``(ny, nx)`` float64 arrays."""

    grid: GridSpec
    u: np.ndarray
    v: np.ndarray
    provenance: dict[str, Any] | None = field(default=None)

    def __post_init__(self) -> None:
        u = np.array(self.u, dtype=np.float64).reshape(self.grid.shape)
        v = np.array(self.v, dtype=np.float64).reshape(self.grid.shape)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("pattern fields must be finite")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def same_fields(self, other: "Pattern") -> bool:
        return (self.grid == other.grid and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v))
