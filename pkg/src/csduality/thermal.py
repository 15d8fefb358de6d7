"""Grand-canonical free-fermion state (T, mu) shared by the thermal modules."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ThermalState:
    """Temperature T > 0 and chemical potential mu."""

    T: float
    mu: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be > 0")

    def n(self, p):
        """Fermi occupation 1/(1 + exp((p^2 - mu)/T))."""
        return fermi_n(self, p)

    def momentum_cutoff(self, digits=16.0):
        """|p| beyond which n(p) < 10^-digits."""
        return math.sqrt(max(self.mu, 0.0) + self.T * digits * math.log(10.0))


def fermi_n(s: ThermalState, p):
    x = (np.asarray(p, dtype=float) ** 2 - s.mu) / s.T
    out = 0.5 * (1.0 - np.tanh(0.5 * x))
    return float(out) if out.ndim == 0 else out
