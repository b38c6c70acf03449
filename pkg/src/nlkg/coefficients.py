"""Cubic nonlinearity coefficients beta0 + beta(x)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("zero", "gaussian", "sech2")


@dataclass(frozen=True)
class CoefficientProfile:
    """Constant coefficient ``beta0`` plus a localized even profile beta(x).

    ``family`` is one of ``zero``, ``gaussian`` (A exp(-x^2/l^2)) or
    ``sech2`` (A sech^2(x/l)).
    """

    beta0: float = 0.0
    family: str = "zero"
    amplitude: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown beta family {self.family!r}; expected one of {FAMILIES}")
        if self.family != "zero" and not self.width > 0:
            raise ValueError("beta width must be positive")

    @property
    def is_linear(self) -> bool:
        return self.beta0 == 0 and (self.family == "zero" or self.amplitude == 0)

    def beta(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "zero":
            return np.zeros_like(x)
        s = x / self.width
        if self.family == "gaussian":
            return self.amplitude * np.exp(-s * s)
        return self.amplitude / np.cosh(s) ** 2

    def dbeta(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "zero":
            return np.zeros_like(x)
        s = x / self.width
        if self.family == "gaussian":
            return -2.0 * s / self.width * self.amplitude * np.exp(-s * s)
        return -2.0 * self.amplitude * np.tanh(s) / np.cosh(s) ** 2 / self.width

    def total(self, x) -> np.ndarray:
        """beta0 + beta(x)."""
        return self.beta0 + self.beta(x)

    def samples(self, grid) -> np.ndarray:
        return self.total(grid.x)

    def label(self) -> str:
        if self.family == "zero":
            return "zero"
        return f"{self.family}(A={self.amplitude:g},l={self.width:g})"

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "family": self.family,
                "amplitude": self.amplitude, "width": self.width}
